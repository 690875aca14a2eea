#!/usr/bin/env python3
"""Write IDX train/test files from a CSV of MNIST digits.

Each CSV row holds 784 pixel bytes followed by the class label. The default
source is the 5,000-image subset bundled with the ``mlxtend`` wheel; pass
``--fetch`` to pull that wheel from the package index with pip.

The split is stratified: ``--test-per-class`` images of each class go to the
test files, the rest to the train files, after a seeded shuffle.
"""

import argparse
import gzip
import io
import random
import struct
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

MLXTEND_MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def fetch_mlxtend_csv() -> bytes:
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q",
             "mlxtend", "-d", tmp],
            check=True)
        wheel = next(Path(tmp).glob("mlxtend-*.whl"))
        with zipfile.ZipFile(wheel) as z:
            return z.read(MLXTEND_MEMBER)


def read_rows(raw: bytes):
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    rows = []
    for line in io.StringIO(raw.decode("ascii")):
        line = line.strip()
        if not line:
            continue
        values = [int(float(v)) for v in line.split(",")]
        if len(values) != 785:
            raise ValueError(f"expected 785 columns, got {len(values)}")
        rows.append((bytes(values[:784]), values[784]))
    return rows


def write_idx(path: Path, rows):
    n = len(rows)
    with open(path.with_name(path.name + "-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        for pixels, _ in rows:
            f.write(pixels)
    with open(path.with_name(path.name + "-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(bytes(label for _, label in rows))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--csv", type=Path, help="CSV or CSV.gz source")
    ap.add_argument("--fetch", action="store_true",
                    help="download the mlxtend wheel and use its subset")
    ap.add_argument("--out", type=Path, default=Path("data/mnist5k"))
    ap.add_argument("--test-per-class", type=int, default=100)
    ap.add_argument("--seed", type=int, default=20240)
    args = ap.parse_args()

    if args.csv:
        raw = args.csv.read_bytes()
    elif args.fetch:
        raw = fetch_mlxtend_csv()
    else:
        ap.error("one of --csv or --fetch is required")

    rows = read_rows(raw)
    rng = random.Random(args.seed)
    rng.shuffle(rows)
    taken = [0] * 10
    train, test = [], []
    for row in rows:
        label = row[1]
        if taken[label] < args.test_per_class:
            taken[label] += 1
            test.append(row)
        else:
            train.append(row)

    args.out.mkdir(parents=True, exist_ok=True)
    write_idx(args.out / "train", train)
    write_idx(args.out / "t10k", test)
    print(f"wrote {len(train)} train / {len(test)} test images to {args.out}")


if __name__ == "__main__":
    main()
