"""
Process entry point: `python run.py simulate|analyze|serve|client ...`
"""
import sys

from app.cli import main

if __name__ == "__main__":
    sys.exit(main())
