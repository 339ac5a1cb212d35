import sys

from .predictor import cli

sys.exit(cli())
