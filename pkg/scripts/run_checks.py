#!/usr/bin/env python3
"""Operator/model property sweep (also available as the check subcommand)."""
import sys

from heterodimer_ldg.cli import main

if __name__ == "__main__":
    sys.exit(main(["check", *sys.argv[1:]]))
