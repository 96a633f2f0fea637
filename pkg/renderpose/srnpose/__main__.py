#Main for the command line
import sys

from srnpose.cli.commands import main

if __name__ == '__main__':
    sys.exit(main())
