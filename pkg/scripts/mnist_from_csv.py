"""Convert a CSV MNIST sample (784 pixel columns + trailing label) to IDX files.

Used to build src/qmlp/datasets/mnist5k from the 5000-sample subset distributed with
mlxtend (mlxtend/data/data/mnist_5k.csv.gz). The CSV is sorted by label, so
rows are shuffled with a fixed seed before the train/test split.

    python scripts/mnist_from_csv.py mnist_5k.csv.gz src/qmlp/datasets/mnist5k --test 1000
"""
import argparse
import gzip
import io
from pathlib import Path

import numpy as np

from qmlp.data import write_idx


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("csv")
    parser.add_argument("out_dir")
    parser.add_argument("--test", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    raw = Path(args.csv).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    table = np.loadtxt(io.BytesIO(raw), delimiter=",")
    pixels = table[:, :-1].astype(np.uint8).reshape(-1, 28, 28)
    labels = table[:, -1].astype(np.uint8)

    order = np.random.default_rng(args.seed).permutation(len(labels))
    pixels, labels = pixels[order], labels[order]
    n_test = args.test

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(pixels[:-n_test], labels[:-n_test],
              out / "train-images-idx3-ubyte.gz", out / "train-labels-idx1-ubyte.gz")
    write_idx(pixels[-n_test:], labels[-n_test:],
              out / "t10k-images-idx3-ubyte.gz", out / "t10k-labels-idx1-ubyte.gz")
    print(f"wrote {len(labels) - n_test} train / {n_test} test images to {out}")


if __name__ == "__main__":
    main()
