"""MNIST-format stand-in built from scikit-learn's bundled digits.

Writes the 1,797 8x8 digit images, upscaled 3x and zero-padded to 28x28, as
IDX files under ``<root>/mnist/`` and runs the normal ``run`` command on them.
Handy for exercising the full IDX -> 5-fold -> CSV pipeline offline.

    python scripts/digits_proxy.py --root data_proxy --epochs 10
"""
import argparse
import tempfile
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits

from pltanh import cli
from pltanh import data as D


def write_idx(root: Path) -> int:
    bunch = load_digits()
    img = np.kron(bunch.images / 16.0, np.ones((1, 3, 3)))
    img = np.pad(img, ((0, 0), (2, 2), (2, 2)))
    pixels = np.round(img * 255).astype(np.uint8)
    d = root / "mnist"
    d.mkdir(parents=True, exist_ok=True)
    (d / "train-images-idx3-ubyte").write_bytes(D.encode_idx_images(pixels))
    (d / "train-labels-idx1-ubyte").write_bytes(D.encode_idx_labels(bunch.target))
    return len(bunch.target)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--root", default="data_proxy", help="where to write the IDX files")
    ap.add_argument("--out", default="results/digits_proxy", help="result path prefix")
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--batch-size", type=int, default=128)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--activations", default="pltanh,relu,lrelu,alrelu")
    args = ap.parse_args()

    root = Path(args.root).resolve()
    n = write_idx(root)
    print(f"wrote {n} digit images to {root / 'mnist'}")
    text = (
        f"dataset = mnist\ndata_root = {root}\nactivations = {args.activations}\n"
        f"epochs = {args.epochs}\nbatch_size = {args.batch_size}\nseed = {args.seed}\n"
        f"output = {Path(args.out).resolve()}\n"
    )
    with tempfile.NamedTemporaryFile("w", suffix=".cfg", delete=False) as fh:
        fh.write(text)
    print(",".join(cli.CSV_HEADER))
    raise SystemExit(cli.main(["run", "--config", fh.name]))


if __name__ == "__main__":
    main()
