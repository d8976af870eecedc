#!/usr/bin/env python3
"""MammoUnify - published reference number check

Compares audit outputs of the real datasets with the published reference values:
  - CBIS-DDSM mass row (breast level): total 537, Benign 266, Malignant 271 (exact)
  - CBIS-DDSM laterality-flip rate  ~0.28 (+/- 0.03)
  - VinDr-Mammo intensity-flip rate ~0.23 (+/- 0.03)

Run after:
  python run.py --config config.yaml harmonize --dataset cbis
  python run.py --config config.yaml audit --dataset cbis
  (same for vindr)

Usage:
  python check_reference_numbers.py --audit-root ./mammounify_out/audit

Checks whose audit files are missing are reported as skipped, not failed.
Exit code 0 when nothing failed, 4 otherwise.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Any, Dict, List, Optional, Tuple

from mammounify.errors import EXIT_OK, EXIT_VALIDATION

CBIS_MASS_ROW = {"total": 537, "Benign": 266, "Malignant": 271}
RATE_TOLERANCE = 0.03
REFERENCE_RATES = [
    ("cbis", "laterality_flip_rate", 0.28),
    ("vindr", "intensity_flip_rate", 0.23),
]


def _load(path: str) -> Optional[Dict[str, Any]]:
    if not os.path.isfile(path):
        return None
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def check_mass_row(audit_root: str) -> Tuple[str, str]:
    table = _load(os.path.join(audit_root, "cbis", "abnormality_diagnosis.json"))
    if table is None:
        return "SKIP", "cbis/abnormality_diagnosis.json not found"
    row = table["row_labels"].index("mass")
    cells = dict(zip(table["col_labels"], table["cells"][row]))
    got = {"total": table["row_totals"][row], "Benign": cells.get("Benign", 0), "Malignant": cells.get("Malignant", 0)}
    status = "PASS" if got == CBIS_MASS_ROW else "FAIL"
    return status, f"CBIS mass row {got} (expected {CBIS_MASS_ROW})"


def check_rate(audit_root: str, dataset: str, key: str, expected: float) -> Tuple[str, str]:
    rates = _load(os.path.join(audit_root, dataset, "corruption_rates.json"))
    if rates is None:
        return "SKIP", f"{dataset}/corruption_rates.json not found"
    got = float(rates[key])
    status = "PASS" if abs(got - expected) <= RATE_TOLERANCE else "FAIL"
    return status, f"{dataset} {key} {got:.4f} (expected {expected:.2f} +/- {RATE_TOLERANCE})"


def main() -> int:
    parser = argparse.ArgumentParser(description="Check audit outputs against published reference numbers")
    parser.add_argument("--audit-root", default=os.path.join(".", "mammounify_out", "audit"))
    args = parser.parse_args()

    results: List[Tuple[str, str]] = [check_mass_row(args.audit_root)]
    for dataset, key, expected in REFERENCE_RATES:
        results.append(check_rate(args.audit_root, dataset, key, expected))

    for status, message in results:
        print(f"[{status}] {message}")
    failed = sum(1 for s, _ in results if s == "FAIL")
    skipped = sum(1 for s, _ in results if s == "SKIP")
    print(f"\n{len(results) - failed - skipped} passed, {failed} failed, {skipped} skipped")
    return EXIT_VALIDATION if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
