import sys

from rlvr_dynamics.cli import main

sys.exit(main())
