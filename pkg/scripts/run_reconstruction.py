#!/usr/bin/env python3
"""Reconstruct the potential from the boundary trace with the shipped
configuration.

Builds the synthetic instance (true potential, initial state, noiseless
or noisy trace data), then runs the adjoint-gradient descent from the
configured initial guess and writes the result JSON and CSV.  Extra
flags are forwarded to the CLI, so --seed and --output-dir work here
too.
"""

import sys
from pathlib import Path

from carleman_lab import cli

DEFAULT_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "default.ini"


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--config" not in argv:
        argv = ["--config", str(DEFAULT_CONFIG)] + argv
    return cli.main(["invert"] + argv)


if __name__ == "__main__":
    sys.exit(main())
