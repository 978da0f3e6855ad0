#!/usr/bin/env python3
"""Mesh- and degree-convergence studies for the manufactured solution."""
import sys

from heterodimer_ldg.cli import main

if __name__ == "__main__":
    rc = main(["tc1-h", "--outdir", "out/tc1_h", *sys.argv[1:]])
    rc |= main(["tc1-p", "--outdir", "out/tc1_p", "--degrees", "1,2,3,4,5"])
    sys.exit(rc)
