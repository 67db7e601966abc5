# main.py: atwflow entry point (python main.py run --scenario scenarios/cross.json)
import sys

from cli import main

if __name__ == "__main__":
    sys.exit(main())
