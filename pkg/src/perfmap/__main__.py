import sys

from perfmap.harness.cli import main

sys.exit(main())
