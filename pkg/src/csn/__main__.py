import sys

from csn.cli import main

sys.exit(main())
