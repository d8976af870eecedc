#!/usr/bin/env python3
"""MammoUnify - sample dataset creator

Writes small synthetic datasets in the native CBIS-DDSM, TOMPEI-CMMD and
VinDr-Mammo layouts (metadata CSVs plus PNG/DICOM images), with laterality and
intensity defects injected so the harmonizer has something to fix. Also writes
a matching config.yaml next to the datasets.

Usage:
  python create_sample_dataset.py
  python create_sample_dataset.py --out ./sample_data --patients 12 --seed 3

Env vars:
  SAMPLE_ROOT     default ./sample_data
"""

from __future__ import annotations

import argparse
import os

import yaml

from mammounify.synthetic import write_cbis_sample, write_tompei_sample, write_vindr_sample

HERE = os.path.dirname(os.path.abspath(__file__))
SAMPLE_ROOT = os.environ.get("SAMPLE_ROOT", os.path.join(HERE, "sample_data"))


def main() -> None:
    parser = argparse.ArgumentParser(description="Write synthetic sample datasets")
    parser.add_argument("--out", default=SAMPLE_ROOT)
    parser.add_argument("--patients", type=int, default=10, help="Patients (VinDr: studies) per dataset")
    parser.add_argument("--height", type=int, default=192)
    parser.add_argument("--width", type=int, default=128)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    size = (args.height, args.width)
    roots = {name: os.path.join(args.out, name) for name in ("cbis", "tompei", "vindr")}

    # fixed seeds per dataset for a deterministic demo
    files = {
        "cbis": write_cbis_sample(roots["cbis"], patients=args.patients, size=size, seed=args.seed),
        "tompei": write_tompei_sample(roots["tompei"], patients=args.patients, size=size, seed=args.seed + 1),
        "vindr": write_vindr_sample(roots["vindr"], studies=args.patients, size=size, seed=args.seed + 2),
    }

    config = {
        "output_root": "./mammounify_out",
        "workers": 1,
        "datasets": {
            name: {"root": name, "files": [os.path.basename(p) for p in paths]}
            for name, paths in files.items()
        },
    }
    config_path = os.path.join(args.out, "config.yaml")
    with open(config_path, "w", encoding="utf-8") as f:
        yaml.safe_dump(config, f, sort_keys=False)

    print("Sample datasets written:")
    for name, paths in files.items():
        print(f"  {name:<7}: {roots[name]} ({len(paths)} metadata file(s))")
    print(f"  config : {config_path}")
    print()
    print("Next:")
    print(f"  python run.py --config {config_path} harmonize --dataset cbis")


if __name__ == "__main__":
    main()
