import sys

from flatcap.cli import main

sys.exit(main())
