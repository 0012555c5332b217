#!/usr/bin/env python3
"""Writes the bundled CSV datasets (Fisher iris, 8x8 handwritten digits)."""

import argparse
import csv
import pathlib

from sklearn import datasets


def write(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=pathlib.Path(__file__).resolve().parent.parent / "data",
                    type=pathlib.Path)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    iris = datasets.load_iris()
    names = ["sepal_length", "sepal_width", "petal_length", "petal_width"]
    write(args.out / "iris.csv", names + ["species"],
          [[f"{v:g}" for v in x] + [iris.target_names[y]] for x, y in zip(iris.data, iris.target)])

    digits = datasets.load_digits()
    header = [f"p{i}" for i in range(digits.data.shape[1])] + ["digit"]
    write(args.out / "digits.csv", header,
          [[str(int(v)) for v in x] + [str(y)] for x, y in zip(digits.data, digits.target)])


if __name__ == "__main__":
    main()
