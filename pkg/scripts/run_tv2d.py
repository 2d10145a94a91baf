#!/usr/bin/env python3
"""2-d anisotropic TV scale space with spectral filtering."""

import argparse
import logging
import sys
from pathlib import Path

from spectralpath import experiments


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(Path(__file__).with_name("tv2d.ini")))
    ap.add_argument("--output", help="override the output directory")
    ap.add_argument("--size", type=int, help="override the synthetic image size")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    cfg = experiments.load_config(args.config)
    if args.output:
        cfg.output = args.output
    if args.size:
        cfg.size = args.size
    report, _ = experiments.run_tv2d(cfg)
    for tag in ("a1", "a2"):
        if tag not in report.values:
            continue
        v = report.values[tag]
        print(f"[{tag}] extinction {v['extinction_cap']:.5g}  identity err {v['identity_max_err']:.1e}  "
              f"complementarity {v['complementarity_max_err']:.1e}  atoms {v['atoms']}  "
              f"converged {v['converged']}")
    print(f"runtime {report.values['runtime_s']:.1f} s")
    for k, ok in report.checks.items():
        print(f"  {k:28s} {'ok' if ok else 'FAIL'}")
    print(f"files in {cfg.output}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
