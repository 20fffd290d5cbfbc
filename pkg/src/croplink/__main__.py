import sys

from croplink.cli import main

sys.exit(main())
