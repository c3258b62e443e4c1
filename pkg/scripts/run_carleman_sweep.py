#!/usr/bin/env python3
"""Run the Carleman constant sweep with the shipped configuration.

The sweep certifies the epsilon-pair of weights, evaluates the
inequality ratio for every (field, s, lambda) triple, and writes the
table, summary, and ratio plot into the config's output directory.
Extra flags are forwarded to the CLI, so --seed, --n, and --output-dir
work here too.
"""

import sys
from pathlib import Path

from carleman_lab import cli

DEFAULT_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "carleman.ini"


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--config" not in argv:
        argv = ["--config", str(DEFAULT_CONFIG)] + argv
    return cli.main(["carleman-sweep"] + argv)


if __name__ == "__main__":
    sys.exit(main())
