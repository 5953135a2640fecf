import sys

from admkit.cli import main

sys.exit(main())
