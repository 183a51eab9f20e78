"""
Allows running the experiment harness with ``python -m pyenksgd``.
"""

import sys
from pyenksgd.cli import main

sys.exit(main())
