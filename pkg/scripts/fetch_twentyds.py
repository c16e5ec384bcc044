#!/usr/bin/env python3
"""Fetch Twenty Datasets benchmarks and convert them for `arfkit bench`.

Downloads the comma-separated binary files and writes
<data-dir>/<name>.{train,valid,test}.csv plus <name>.schema.json, the layout
`arfkit bench twentyds --data-dir <data-dir>` reads. Needs network access.
"""

import argparse
import os
import sys
import urllib.request

import numpy as np

from arfkit.tabular import CATEGORICAL, Column, Dataset, Schema, save_csv, save_schema

BASE_URL = ("https://raw.githubusercontent.com/UCLA-StarAI/"
            "Density-Estimation-Datasets/master/datasets")

NAMES = ("nltcs", "msnbc", "kdd", "plants", "audio", "jester", "netflix",
         "accidents", "retail", "pumsb_star", "dna", "kosarek", "msweb",
         "book", "tmovie", "cwebkb", "cr52", "c20ng", "bbc", "ad")

# upstream directory names where they differ from the usual short names
REPO_ALIAS = {"audio": "baudio", "netflix": "bnetflix", "retail": "tretail"}

# row/column counts asserted after conversion (others are checked for
# internal consistency only)
KNOWN_SHAPES = {"nltcs": {"train": (16181, 16), "valid": (2157, 16),
                          "test": (3236, 16)}}

SPLITS = ("train", "valid", "test")


def _download(url: str) -> bytes:
    with urllib.request.urlopen(url, timeout=60) as resp:
        return resp.read()


def _parse(raw: bytes, name: str, split: str) -> np.ndarray:
    rows = [line.split(",") for line in raw.decode("ascii").split()]
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise SystemExit(f"{name}.{split}: ragged rows (widths {sorted(widths)})")
    arr = np.array(rows, dtype=np.int64)
    if not np.isin(arr, (0, 1)).all():
        raise SystemExit(f"{name}.{split}: non-binary cell found")
    return arr


def fetch_one(name: str, data_dir: str, base_url: str) -> None:
    repo = REPO_ALIAS.get(name, name)
    parts = {}
    for split in SPLITS:
        url = f"{base_url}/{repo}/{repo}.{split}.data"
        print(f"  {url}")
        parts[split] = _parse(_download(url), name, split)
    d = parts["train"].shape[1]
    for split in SPLITS:
        if parts[split].shape[1] != d:
            raise SystemExit(f"{name}: column count differs across splits")
        want = KNOWN_SHAPES.get(name, {}).get(split)
        if want is not None and parts[split].shape != want:
            raise SystemExit(f"{name}.{split}: shape {parts[split].shape}, "
                             f"expected {want}")
    schema = Schema(tuple(Column(f"v{j + 1}", CATEGORICAL, ("0", "1"))
                          for j in range(d)))
    save_schema(schema, os.path.join(data_dir, f"{name}.schema.json"))
    for split in SPLITS:
        ds = Dataset(schema, [parts[split][:, j].copy() for j in range(d)])
        save_csv(ds, os.path.join(data_dir, f"{name}.{split}.csv"))
    shapes = " ".join(f"{split}={parts[split].shape[0]}" for split in SPLITS)
    print(f"  {name}: d={d} {shapes}")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("names", nargs="*", default=["nltcs"],
                    help="datasets to fetch (default: nltcs); 'all' for every one")
    ap.add_argument("--data-dir", default="data/twentyds")
    ap.add_argument("--base-url", default=BASE_URL)
    args = ap.parse_args(argv)
    names = NAMES if args.names == ["all"] else args.names
    unknown = sorted(set(names) - set(NAMES))
    if unknown:
        ap.error(f"unknown datasets: {', '.join(unknown)}")
    os.makedirs(args.data_dir, exist_ok=True)
    for name in names:
        print(f"fetching {name}")
        fetch_one(name, args.data_dir, args.base_url)
    print(f"done; point arfkit at it with --data-dir {args.data_dir} "
          f"or ARFKIT_DATA={args.data_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
