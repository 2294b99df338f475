#!/usr/bin/env python3
"""Run the desk-scale sweep preset and print where the artifacts went."""

import sys
from pathlib import Path

from cplab.cli import main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "desk_scale.yaml"

if __name__ == "__main__":
    sys.exit(main(["run", "--config", str(CONFIG), *sys.argv[1:]]))
