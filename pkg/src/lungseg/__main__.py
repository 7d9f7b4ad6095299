"""Allow ``python -m lungseg`` alongside the ``lungseg`` console script."""

import sys

from .cli import main

sys.exit(main())
