"""Print result CSVs written by ``pltanh run`` as a Markdown table.

    python scripts/summarize_results.py results/mnist.csv results/fashion_mnist.csv
"""
import argparse

from pltanh.cli import read_csv

COLUMNS = ("macro_precision", "accuracy", "macro_recall", "auc", "macro_f1")


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("csv", nargs="+")
    args = ap.parse_args()
    print("| dataset | activation | alpha | " + " | ".join(COLUMNS) + " | seconds | seed |")
    print("|" + "---|" * (len(COLUMNS) + 5))
    for path in args.csv:
        for r in read_csv(path):
            cells = [f"{100 * getattr(r, c):.2f}%" for c in COLUMNS]
            print(f"| {r.dataset} | {r.activation} | {r.alpha:g} | " + " | ".join(cells) + f" | {r.seconds:.0f} | {r.seed} |")


if __name__ == "__main__":
    main()
