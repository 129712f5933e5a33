#!/usr/bin/env python3
"""Build IDX image/label files from the digits bundled in the npm `mnist` package.

The npm package (cazala/mnist, v1.1.0) ships 10,000 MNIST digits as JSON arrays of
pixel intensities divided by 255 and rounded to three decimals. Rounding error is at
most 0.0005, so multiplying by 255 and rounding recovers the original bytes exactly.

Usage:
    scripts/mnist_from_npm.py [OUT_DIR]

OUT_DIR defaults to data/mnist. The npm tarball is fetched with `npm pack` into a
temporary directory. Output files:
    OUT_DIR/images-idx3-ubyte
    OUT_DIR/labels-idx1-ubyte
"""

import json
import pathlib
import struct
import subprocess
import sys
import tarfile
import tempfile

PACKAGE = "mnist@1.1.0"


def main() -> int:
    out_dir = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "data/mnist")
    out_dir.mkdir(parents=True, exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", PACKAGE], cwd=tmp, check=True, capture_output=True)
        tarball = next(pathlib.Path(tmp).glob("mnist-*.tgz"))
        with tarfile.open(tarball) as tar:
            tar.extractall(tmp)
        digits_dir = pathlib.Path(tmp) / "package" / "src" / "digits"

        images = []
        labels = []
        for digit in range(10):
            data = json.loads((digits_dir / f"{digit}.json").read_text())["data"]
            if len(data) % 784 != 0:
                raise SystemExit(f"digit {digit}: {len(data)} values is not a multiple of 784")
            for start in range(0, len(data), 784):
                pixels = bytes(min(255, max(0, round(v * 255))) for v in data[start : start + 784])
                images.append(pixels)
                labels.append(digit)

    count = len(images)
    with open(out_dir / "images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, count, 28, 28))
        for pixels in images:
            f.write(pixels)
    with open(out_dir / "labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, count))
        f.write(bytes(labels))

    print(f"wrote {count} images to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
