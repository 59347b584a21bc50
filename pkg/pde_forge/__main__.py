import sys

from pde_forge.main import main

sys.exit(main())
