# herding/__init__.py