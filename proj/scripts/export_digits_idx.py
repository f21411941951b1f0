#!/usr/bin/env python3
"""Export the sklearn digits set (1797 8x8 images, intensities 0..16) as
IDX ubyte files, rescaled to 0..255. Deterministic byte-for-byte."""

import argparse
import pathlib
import struct

import numpy as np
from sklearn.datasets import load_digits


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="data", type=pathlib.Path)
    args = ap.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    digits = load_digits()
    images = np.rint(digits.images / 16.0 * 255.0).astype(np.uint8)
    labels = digits.target.astype(np.uint8)
    n, rows, cols = images.shape

    img_path = args.out_dir / "digits-images-idx3-ubyte"
    with open(img_path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, n, rows, cols))
        f.write(images.tobytes())

    lab_path = args.out_dir / "digits-labels-idx1-ubyte"
    with open(lab_path, "wb") as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(labels.tobytes())

    def fnv1a64(data: bytes) -> int:
        h = 0xCBF29CE484222325
        for b in data:
            h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
        return h

    for p in (img_path, lab_path):
        print(f"{p}: {p.stat().st_size} bytes, fnv1a64=0x{fnv1a64(p.read_bytes()):016x}")


if __name__ == "__main__":
    main()
