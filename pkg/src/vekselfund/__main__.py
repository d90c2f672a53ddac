import sys

from vekselfund.cli import main

sys.exit(main())
