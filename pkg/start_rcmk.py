#!/usr/bin/env python
"""
Run the rcmk command from a source checkout
"""
import sys
import os

# Add the project root to Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from rconvmk.cli.main import main
from rconvmk.config import settings

if __name__ == "__main__":
    print(f"🚀 Starting {settings.APP_NAME} v{settings.APP_VERSION}", file=sys.stderr)
    print(f"📂 Data: {settings.DATA_DIR}  Runs: {settings.OUTPUT_DIR}", file=sys.stderr)
    main()
