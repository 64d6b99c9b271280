"""Allow `python -m semantic_auction`."""

import sys

from .cli import main

sys.exit(main())
