"""Regenerate the 128x128 grayscale PGM test set from scikit-image sample data.

Rule: convert to 8-bit luminance, take the centered square crop of side
min(height, width), then box-filter resample to 128x128 (PIL Image.BOX).
"""
import os
import sys

import numpy as np
from PIL import Image
from skimage import color, data, img_as_ubyte

# name in the output set -> skimage loader
SOURCES = [
    ("camera", data.camera),
    ("astronaut", data.astronaut),
    ("chelsea", data.chelsea),
    ("coffee", data.coffee),
    ("brick", data.brick),
    ("grass", data.grass),
    ("gravel", data.gravel),
    ("rocket", data.rocket),
    ("coins", data.coins),
    ("motorcycle", data.stereo_motorcycle),
]

SIZE = 128


def to_gray_u8(img):
    if isinstance(img, tuple):
        img = img[0]
    img = np.asarray(img)
    if img.ndim == 3:
        img = color.rgb2gray(img[..., :3])
    return img_as_ubyte(img)


def center_square(img):
    h, w = img.shape
    s = min(h, w)
    top = (h - s) // 2
    left = (w - s) // 2
    return img[top : top + s, left : left + s]


def write_pgm(path, arr):
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(arr.astype(np.uint8).tobytes())


def main(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    for name, loader in SOURCES:
        gray = center_square(to_gray_u8(loader()))
        small = Image.fromarray(gray).resize((SIZE, SIZE), Image.BOX)
        write_pgm(os.path.join(out_dir, name + ".pgm"), np.asarray(small))
        print(name)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/symfilt/tests/data/standard")
