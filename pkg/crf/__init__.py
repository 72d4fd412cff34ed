# crf/__init__.py