#!/usr/bin/env python3
"""Traveling-wave convergence sweep and the long bounded run."""
import sys

from heterodimer_ldg.cli import main

if __name__ == "__main__":
    rc = main(["tc2-conv", "--outdir", "out/tc2_conv", *sys.argv[1:]])
    rc |= main(["tc2-long", "--outdir", "out/tc2_long"])
    sys.exit(rc)
