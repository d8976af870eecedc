"""Corruption injector: re-introduce laterality and intensity defects into a clean store.

Selection is a seeded permutation of keys sorted lexicographically, so the
affected set depends only on (seed, fractions, store contents). Intensity and
laterality draws use independent child streams of the seed.
"""

from __future__ import annotations

import json
import logging
import math
import os
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from tqdm import tqdm

from mammounify.config import INTENSITY_SCOPES, LATERALITY_SCOPES, InjectionScopes
from mammounify.errors import ConfigError, StoreError
from mammounify.image_io import read_image, write_image
from mammounify.model import UnifiedRecord, format_image_key
from mammounify.pipeline import invert_intensity, mirror_horizontal
from mammounify.store import MANIFEST, StoreManifest, read_store

log = logging.getLogger(__name__)

PLAN_FILE = "injection_plan.json"
MAX_SEED = (1 << 64) - 1


@dataclass(frozen=True)
class InjectionPlan:
    seed: int
    intensity_fraction: float
    laterality_fraction: float
    intensity_scope: str = "patient"
    laterality_scope: str = "image"
    intensity: Tuple[str, ...] = ()
    laterality: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not 0 <= self.seed <= MAX_SEED:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}", module="corruption-injector")
        for name in ("intensity_fraction", "laterality_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}", module="corruption-injector")
        if self.intensity_scope not in INTENSITY_SCOPES or self.laterality_scope not in LATERALITY_SCOPES:
            raise ConfigError(
                f"unknown injection scope ({self.intensity_scope!r}, {self.laterality_scope!r})",
                module="corruption-injector",
            )

    @property
    def empty(self) -> bool:
        return not self.intensity and not self.laterality

    def inverts(self, record: UnifiedRecord) -> bool:
        return _unit(record, self.intensity_scope) in self._intensity_set

    def mirrors(self, record: UnifiedRecord) -> bool:
        return _unit(record, self.laterality_scope) in self._laterality_set

    @property
    def _intensity_set(self) -> Set[str]:
        return set(self.intensity)

    @property
    def _laterality_set(self) -> Set[str]:
        return set(self.laterality)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "intensity_fraction": self.intensity_fraction,
            "laterality_fraction": self.laterality_fraction,
            "intensity_scope": self.intensity_scope,
            "laterality_scope": self.laterality_scope,
            "affected": {"intensity": list(self.intensity), "laterality": list(self.laterality)},
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "InjectionPlan":
        body = json.loads(text)
        affected = body.get("affected", {})
        return cls(
            seed=int(body["seed"]),
            intensity_fraction=float(body["intensity_fraction"]),
            laterality_fraction=float(body["laterality_fraction"]),
            intensity_scope=str(body.get("intensity_scope", "patient")),
            laterality_scope=str(body.get("laterality_scope", "image")),
            intensity=tuple(affected.get("intensity", ())),
            laterality=tuple(affected.get("laterality", ())),
        )


def _unit(record: UnifiedRecord, scope: str) -> str:
    return record.patient_id if scope == "patient" else format_image_key(record.key)


def fraction_count(fraction: float, n: int) -> int:
    """floor(fraction * n), with the product rounded to 9 places first so 0.29 * 100 is 29."""
    return int(math.floor(round(fraction * n, 9)))


def _choose(units: Sequence[str], fraction: float, rng: np.random.Generator) -> Tuple[str, ...]:
    ordered = sorted(set(units))
    k = fraction_count(fraction, len(ordered))
    perm = rng.permutation(len(ordered))
    return tuple(sorted(ordered[i] for i in perm[:k]))


def plan_injection(
    records: Sequence[UnifiedRecord],
    p: float,
    q: float,
    seed: int,
    scopes: Optional[InjectionScopes] = None,
) -> InjectionPlan:
    """p: fraction of intensity units to invert; q: fraction of laterality units to mirror."""
    scopes = scopes or InjectionScopes()
    if not records:
        raise StoreError("cannot plan an injection on an empty store", module="corruption-injector")
    probe = InjectionPlan(seed, p, q, scopes.intensity_scope, scopes.laterality_scope)
    intensity_stream, laterality_stream = np.random.SeedSequence(seed).spawn(2)
    intensity = _choose([_unit(r, scopes.intensity_scope) for r in records], p, np.random.default_rng(intensity_stream))
    laterality = _choose([_unit(r, scopes.laterality_scope) for r in records], q, np.random.default_rng(laterality_stream))
    plan = replace(probe, intensity=intensity, laterality=laterality)
    log.info(
        "injection plan seed=%d: %d %s unit(s) inverted, %d %s unit(s) mirrored",
        seed, len(intensity), scopes.intensity_scope, len(laterality), scopes.laterality_scope,
    )
    return plan


def plan_for_store(root: str, p: float, q: float, seed: int, scopes: Optional[InjectionScopes] = None) -> InjectionPlan:
    records, _ = read_store(root)
    return plan_injection(records, p, q, seed, scopes)


def _corrupt(args: Tuple[str, UnifiedRecord, bool, bool]) -> None:
    root, record, invert, mirror = args
    path = os.path.join(root, *record.processed_path.split("/"))
    buf, _ = read_image(path)
    if invert:
        buf = invert_intensity(buf)
    if mirror:
        buf = mirror_horizontal(buf)
    write_image(buf, path)


def apply_injection(src_root: str, plan: InjectionPlan, dst_root: str, *, workers: int = 1, progress: bool = False) -> str:
    """Copy the store at src_root to dst_root and corrupt the planned images in the copy."""
    src = os.path.realpath(src_root)
    dst = os.path.realpath(dst_root)
    if src == dst or dst.startswith(src + os.sep) or src.startswith(dst + os.sep):
        raise ConfigError(f"injection target {dst_root} must be outside the source store {src_root}", module="corruption-injector")
    if os.path.exists(dst) and os.listdir(dst):
        raise StoreError(f"injection target {dst_root} is not empty", module="corruption-injector")

    records, manifest = read_store(src_root)
    shutil.copytree(src_root, dst_root, dirs_exist_ok=True)
    stale = os.path.join(dst_root, PLAN_FILE)
    if os.path.exists(stale):
        os.remove(stale)

    jobs: List[Tuple[str, UnifiedRecord, bool, bool]] = []
    for r in records:
        invert, mirror = plan.inverts(r), plan.mirrors(r)
        if invert or mirror:
            jobs.append((dst_root, r, invert, mirror))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for _ in tqdm(pool.map(_corrupt, jobs), total=len(jobs), desc="inject", unit="img", disable=not progress):
            pass

    corrupted = StoreManifest(
        root=dst_root,
        dataset=manifest.dataset,
        patients=manifest.patients,
        images=manifest.images,
        config_fingerprint=manifest.config_fingerprint,
        exams_excluded=manifest.exams_excluded,
        images_skipped=manifest.images_skipped,
        source="inject",
    )
    with open(os.path.join(dst_root, MANIFEST), "w", encoding="utf-8", newline="\n") as f:
        f.write(corrupted.to_json())
    with open(os.path.join(dst_root, PLAN_FILE), "w", encoding="utf-8", newline="\n") as f:
        f.write(plan.to_json())
    log.info("injected %d image(s) into %s", len(jobs), dst_root)
    return dst_root


def load_plan(root: str) -> InjectionPlan:
    path = os.path.join(root, PLAN_FILE)
    if not os.path.isfile(path):
        raise StoreError(f"no {PLAN_FILE} in {root}", module="corruption-injector")
    with open(path, "r", encoding="utf-8") as f:
        return InjectionPlan.from_json(f.read())
