"""Module entry point: ``python -m rkex``."""

import sys

from rkex.cli import main

if __name__ == "__main__":
    sys.exit(main())
