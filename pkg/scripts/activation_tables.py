"""Tabulate f(x) and f'(x) for every activation, ready for external plotting.

    python scripts/activation_tables.py --out results/curves
"""
import argparse
from pathlib import Path

from pltanh import cli

CURVES = [
    ("pltanh", 0.01, (-5.0, 5.0)),
    ("pltanh", 0.01, (-150.0, 150.0)),  # wide enough to show the crossover near 100
    ("pltanh", 0.4, (-5.0, 5.0)),
    ("relu", 0.01, (-5.0, 5.0)),
    ("lrelu", 0.01, (-5.0, 5.0)),
    ("alrelu", 0.01, (-5.0, 5.0)),
    ("tanh", 0.01, (-5.0, 5.0)),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--out", default="results/curves")
    ap.add_argument("--samples", type=int, default=1001)
    args = ap.parse_args()
    for kind, alpha, (lo, hi) in CURVES:
        path = Path(args.out) / f"{kind}_a{alpha:g}_{lo:g}_{hi:g}.csv"
        argv = ["plot-activation", "--kind", kind, "--alpha", str(alpha), "--range", str(lo), str(hi),
                "--samples", str(args.samples), "--out", str(path)]
        if cli.main(argv) != 0:
            raise SystemExit(f"failed: {' '.join(argv)}")


if __name__ == "__main__":
    main()
