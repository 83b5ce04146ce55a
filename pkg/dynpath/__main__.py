import sys

from dynpath.main import main

sys.exit(main())
