# Makes CFOIE a package for absolute imports
__version__ = "0.1.0"
