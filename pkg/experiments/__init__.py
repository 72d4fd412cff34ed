# experiments/__init__.py