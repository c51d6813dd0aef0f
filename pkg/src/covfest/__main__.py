import sys

from covfest.cli import main

sys.exit(main())
