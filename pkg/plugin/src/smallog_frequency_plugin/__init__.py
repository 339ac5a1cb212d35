from .predictor import cli, plugin_main

__all__ = ["cli", "plugin_main"]
__version__ = "0.1.0"
