#!/usr/bin/env python3
"""MammoUnify - command-line launcher

Harmonizes mammography datasets (CBIS-DDSM, TOMPEI-CMMD, VinDr-Mammo) into one
patient-level store, audits it for bias, and injects controlled defects.

Usage:
    python run.py --config config.yaml harmonize --dataset cbis
    python run.py --config config.yaml audit --dataset cbis
    python run.py inject --store out/cbis --out out/cbis_p30 --p 0.3 --seed 7
    python run.py --config config.yaml harmonize --from-store out/cbis_p30 --out out/cbis_restored
    python run.py validate --store out/cbis_restored --sample all

Env vars:
  DEBUG=1              DEBUG logging
  WORKERS              worker processes (overrides the config file)
  MAMMO_OUTPUT_ROOT    output root (overrides the config file)

Exit codes: 0 ok, 2 config error, 3 input-data error, 4 validation failure, 5 internal.
"""

import sys

from mammounify.cli import main

if __name__ == "__main__":
    sys.exit(main())
