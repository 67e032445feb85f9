"""Allow ``python -m hallucheck`` as an alias for the console script."""

import sys

from hallucheck.cli import main

if __name__ == "__main__":
    sys.exit(main())
