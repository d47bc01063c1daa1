import sys

from S2CLinkTools.cli import main

sys.exit(main())
