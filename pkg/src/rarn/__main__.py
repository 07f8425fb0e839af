import sys

from rarn.cli import main

sys.exit(main())
