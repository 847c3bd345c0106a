import sys

from inverse_ibm.cli import main

sys.exit(main())
