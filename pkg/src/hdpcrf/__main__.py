import sys

from hdpcrf.cli import main

sys.exit(main())
