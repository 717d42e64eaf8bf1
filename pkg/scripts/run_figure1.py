#!/usr/bin/env python3
"""Run the bundled ring-graph demo and drop its artifacts in ./figure1_run."""

import sys

from gntk.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "figure1_run"
    sys.exit(main(["run", "--preset", "figure1", "--out", out]))
