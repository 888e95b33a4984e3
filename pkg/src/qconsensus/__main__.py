import sys

from qconsensus.cli import main

sys.exit(main())
