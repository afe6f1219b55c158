import sys

from histseg.cli import main

sys.exit(main())
