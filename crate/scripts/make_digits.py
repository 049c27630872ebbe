#!/usr/bin/env python3
"""Build the bundled digit data in the UCI optical-digits text formats.

The original UCI files are not redistributable from here, so this script
converts the 5000-sample MNIST subset shipped with mlxtend (BSD-3) into the
same two layouts the `smcae` loaders read:

  *-orig.{tra,tes}   32x32 0/1 bitmaps, 32 rows of '0'/'1' then " <label>"
  *.{tra,tes}        64 comma-separated 4x4 block counts (0..16) + label

Like the UCI bitmaps, each digit is size-normalised: the grayscale 28x28
image is cropped to its ink bounding box, resampled (aspect ratio kept) so
its longer side spans 30 pixels, centred in a 32x32 frame and thresholded
at 128.
The split is stratified: 1917 test rows, the rest train, fixed seed.

Usage: python3 scripts/make_digits.py path/to/mlxtend-*.whl data/
"""
import gzip
import random
import sys
import zipfile
from pathlib import Path

from PIL import Image

SIDE = 32
SPAN = 30


def load(wheel):
    with zipfile.ZipFile(wheel) as z:
        raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()
    rows = []
    for line in raw.strip().splitlines():
        vals = [int(float(v)) for v in line.split(",")]
        rows.append((vals[:-1], vals[-1]))
    return rows


def to_bitmap(pixels):
    img = Image.frombytes("L", (28, 28), bytes(pixels))
    box = img.point(lambda v: 255 if v >= 128 else 0).getbbox()
    if box is None:
        return [[0] * SIDE for _ in range(SIDE)]
    crop = img.crop(box)
    w, h = crop.size
    scale = SPAN / max(w, h)
    nw, nh = max(1, round(w * scale)), max(1, round(h * scale))
    crop = crop.resize((nw, nh), Image.BILINEAR)
    frame = Image.new("L", (SIDE, SIDE), 0)
    frame.paste(crop, ((SIDE - nw) // 2, (SIDE - nh) // 2))
    data = frame.tobytes()
    return [[1 if data[r * SIDE + c] >= 128 else 0 for c in range(SIDE)] for r in range(SIDE)]


def block_counts(bm):
    out = []
    for br in range(8):
        for bc in range(8):
            out.append(sum(bm[br * 4 + i][bc * 4 + j] for i in range(4) for j in range(4)))
    return out


def split(rows, n_test=1917, seed=20150601):
    rng = random.Random(seed)
    by_class = {}
    for idx, (_, lab) in enumerate(rows):
        by_class.setdefault(lab, []).append(idx)
    classes = sorted(by_class)
    base, extra = divmod(n_test, len(classes))
    test = set()
    for i, lab in enumerate(classes):
        idxs = by_class[lab][:]
        rng.shuffle(idxs)
        take = base + (1 if i < extra else 0)
        test.update(idxs[:take])
    train_idx = [i for i in range(len(rows)) if i not in test]
    test_idx = sorted(test)
    rng.shuffle(train_idx)
    rng.shuffle(test_idx)
    return train_idx, test_idx


def main():
    wheel, out_dir = sys.argv[1], Path(sys.argv[2])
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = load(wheel)
    train_idx, test_idx = split(rows)
    for ext, idxs in (("tra", train_idx), ("tes", test_idx)):
        bitmaps = [(to_bitmap(rows[i][0]), rows[i][1]) for i in idxs]
        with open(out_dir / f"digits-orig.{ext}", "w", newline="\n") as f:
            f.write("Handwritten digit bitmaps (32x32), converted from the mlxtend MNIST subset.\n")
            f.write("Each image: ink box of the 28x28 grayscale scaled to span 30 px, centred, thresholded at 128.\n")
            f.write(f"Instances: {len(bitmaps)}\n")
            for bm, lab in bitmaps:
                for r in bm:
                    f.write("".join(str(v) for v in r) + "\n")
                f.write(f" {lab}\n")
        with open(out_dir / f"digits.{ext}", "w", newline="\n") as f:
            for bm, lab in bitmaps:
                f.write(",".join(str(v) for v in block_counts(bm)) + f",{lab}\n")
        print(ext, len(idxs))


if __name__ == "__main__":
    main()
