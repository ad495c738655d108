"""``python -m spatial_sis``."""

import sys

from .cli import main

sys.exit(main())
