import sys

from proxyaudit.cli import main

sys.exit(main())
