import sys

from crosskit.cli import main

sys.exit(main())
