#!/usr/bin/env python3
"""Convert a dense Mulan-style multi-label ARFF file to CSV plus a schema.

usage: arff_to_csv.py scene.arff n_labels out_dir

The last `n_labels` attributes are taken as binary labels (Mulan convention
for scene.arff: 294 numeric features followed by 6 labels).
"""
import os
import sys


def main(path, n_labels, out_dir):
    names, rows, in_data = [], [], False
    with open(path) as f:
        for line in f:
            s = line.strip()
            if not s or s.startswith("%"):
                continue
            low = s.lower()
            if low.startswith("@attribute"):
                names.append(s.split()[1].strip("'\""))
            elif low.startswith("@data"):
                in_data = True
            elif in_data:
                rows.append([c.strip() for c in s.split(",")])
    base = os.path.splitext(os.path.basename(path))[0]
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, base + ".csv"), "w") as f:
        f.write(",".join(names) + "\n")
        for r in rows:
            f.write(",".join(r) + "\n")
    with open(os.path.join(out_dir, base + ".schema"), "w") as f:
        f.write("* = feature\n")
        for n in names[-n_labels:]:
            f.write(f"{n} = label\n")
    print(f"{base}: {len(rows)} rows, {len(names) - n_labels} features, {n_labels} labels")


if __name__ == "__main__":
    main(sys.argv[1], int(sys.argv[2]), sys.argv[3])
