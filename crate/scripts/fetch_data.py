#!/usr/bin/env python3
"""Rebuild the bundled datasets under data/ from package-registry sources.

MNIST (10000 digits): npm package `mnist` (cazala), written out as IDX files.
Pendigits (10992 rows): PyPI package `keel-ds`, file penbased.dat, written as CSV.
Scene is not redistributed by any registry package; convert the Mulan
scene.arff yourself with `scripts/arff_to_csv.py`.
"""
import io
import json
import os
import struct
import subprocess
import sys
import tarfile
import tempfile
import zipfile

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")


def fetch_mnist(tmp):
    subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True,
                   stdout=subprocess.DEVNULL)
    tgz = [f for f in os.listdir(tmp) if f.startswith("mnist-") and f.endswith(".tgz")][0]
    images, labels = [], []
    with tarfile.open(os.path.join(tmp, tgz)) as tar:
        for digit in range(10):
            raw = tar.extractfile(f"package/src/digits/{digit}.json").read()
            data = json.loads(raw)["data"]
            n = len(data) // 784
            for k in range(n):
                px = data[k * 784:(k + 1) * 784]
                images.append(bytes(min(255, max(0, round(v * 255))) for v in px))
                labels.append(digit)
    out = os.path.join(ROOT, "mnist")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(img)
    with open(os.path.join(out, "labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))
    print(f"mnist: {len(images)} images")


def fetch_pendigits(tmp):
    subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "-q",
                    "-d", tmp, "keel-ds==0.2.5"], check=True)
    whl = [f for f in os.listdir(tmp) if f.startswith("keel_ds")][0]
    with zipfile.ZipFile(os.path.join(tmp, whl)) as z:
        text = z.read("keel_ds/data/balanced/raw/penbased.dat").decode()
    rows = [line.split(",") for line in text.splitlines() if line.strip()]
    out = os.path.join(ROOT, "pendigits")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "pendigits.csv"), "w") as f:
        f.write(",".join([f"x{i}" for i in range(16)] + ["digit"]) + "\n")
        for r in rows:
            f.write(",".join(c.strip() for c in r) + "\n")
    with open(os.path.join(out, "pendigits.schema"), "w") as f:
        f.write("# 16 pen coordinates, one 10-way class column\n")
        f.write("* = feature\n")
        f.write("digit = class\n")
    print(f"pendigits: {len(rows)} rows")


if __name__ == "__main__":
    with tempfile.TemporaryDirectory() as tmp:
        fetch_mnist(tmp)
        fetch_pendigits(tmp)
