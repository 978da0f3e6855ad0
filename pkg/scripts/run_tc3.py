#!/usr/bin/env python3
"""Stable focus / stable node equilibrium trajectories."""
import sys

from heterodimer_ldg.cli import main

if __name__ == "__main__":
    sys.exit(main(["tc3", "--outdir", "out/tc3", *sys.argv[1:]]))
