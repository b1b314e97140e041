#!/usr/bin/env python3
"""Build a small MNIST subset in IDX format from the `mnist` npm package.

The package ships roughly 1000 digits per class as JSON arrays of floats in
[0, 1]. Pixels are rounded back to bytes. Run with --fetch to download the
package with `npm pack`, or point --package at an unpacked copy.
"""
import argparse
import hashlib
import json
import pathlib
import struct
import subprocess
import sys
import tarfile
import tempfile


def fetch(dest: pathlib.Path) -> pathlib.Path:
    subprocess.run(["npm", "pack", "mnist@1.1.0", "--silent"], cwd=dest, check=True, stdout=subprocess.DEVNULL)
    tgz = next(dest.glob("mnist-*.tgz"))
    with tarfile.open(tgz) as tar:
        tar.extractall(dest)
    return dest / "package"


def load_class(package: pathlib.Path, digit: int, count: int) -> list[bytes]:
    flat = json.loads((package / "src" / "digits" / f"{digit}.json").read_text())["data"]
    n = len(flat) // 784
    if n < count:
        sys.exit(f"class {digit} has only {n} images")
    out = []
    for i in range(count):
        px = flat[i * 784 : (i + 1) * 784]
        out.append(bytes(min(255, max(0, round(v * 255))) for v in px))
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--package", type=pathlib.Path, help="unpacked npm package directory")
    ap.add_argument("--fetch", action="store_true", help="download the package with npm")
    ap.add_argument("--per-class", type=int, default=200)
    ap.add_argument("--classes", type=int, nargs="+", default=list(range(10)))
    ap.add_argument("--out", type=pathlib.Path, default=pathlib.Path("data"))
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        package = args.package
        if args.fetch:
            package = fetch(pathlib.Path(tmp))
        if package is None:
            sys.exit("need --package or --fetch")

        images, labels = [], []
        # Interleave classes so a prefix of the file is still stratified.
        per_class = {c: load_class(package, c, args.per_class) for c in args.classes}
        for i in range(args.per_class):
            for c in args.classes:
                images.append(per_class[c][i])
                labels.append(c)

    args.out.mkdir(parents=True, exist_ok=True)
    img_path = args.out / "mnist-subset-images-idx3-ubyte"
    lbl_path = args.out / "mnist-subset-labels-idx1-ubyte"
    img_path.write_bytes(struct.pack(">IIII", 0x803, len(images), 28, 28) + b"".join(images))
    lbl_path.write_bytes(struct.pack(">II", 0x801, len(labels)) + bytes(labels))
    for p in (img_path, lbl_path):
        print(hashlib.sha256(p.read_bytes()).hexdigest(), p)


if __name__ == "__main__":
    main()
