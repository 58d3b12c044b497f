# FormalCity.py
import sys

from formal_city_cli import main


if __name__ == "__main__":
    sys.exit(main())
