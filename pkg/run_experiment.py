#!/usr/bin/env python3
"""
Run a registered experiment.

Examples:
    python3 run_experiment.py --list
    python3 run_experiment.py input_restriction --train-first
    python3 run_experiment.py noise --config configs/desk.cfg --seed 1
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from src.experiments.cli import main

if __name__ == "__main__":
    sys.exit(main())
