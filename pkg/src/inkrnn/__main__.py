"""``python3 -m inkrnn``."""

import sys

from .cli import main

sys.exit(main())
