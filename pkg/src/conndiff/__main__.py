from __future__ import annotations

import sys

from conndiff.cli import main

sys.exit(main())
