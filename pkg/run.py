#!/usr/bin/env python3
"""
Development runner: ``python run.py simulate --config configs/qpsk_ber_simulate.json``.
"""

import sys

from src.main import main

if __name__ == "__main__":
    sys.exit(main())
