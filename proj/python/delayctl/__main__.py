import sys

from . import run_cli

sys.exit(run_cli(sys.argv[1:]))
