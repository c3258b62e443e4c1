#!/usr/bin/env python3
"""Run the Lipschitz stability sweep with the shipped configuration.

Certifies the instance's Carleman weight, then draws seeded smooth
perturbations of the potential, solves the forward problem for each,
and records the ratio of potential distance to boundary-trace distance.
Artifacts: records CSV, summary JSON (with the hypothesis report), and
a log-log scatter with the fitted slope.  Extra flags are forwarded to
the CLI, so --seed, --n, and --output-dir work here too.
"""

import sys
from pathlib import Path

from carleman_lab import cli

DEFAULT_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "default.ini"


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--config" not in argv:
        argv = ["--config", str(DEFAULT_CONFIG)] + argv
    return cli.main(["stability"] + argv)


if __name__ == "__main__":
    sys.exit(main())
