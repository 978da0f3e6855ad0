#!/usr/bin/env python3
"""Diffusion-regime snapshots on the quadrant domain (variants 1-4)."""
import sys

from heterodimer_ldg.cli import main

if __name__ == "__main__":
    rc = 0
    for variant in (1, 2, 3, 4):
        rc |= main(["tc4", "--variant", str(variant),
                    "--outdir", f"out/tc4_{variant}", *sys.argv[1:]])
    sys.exit(rc)
