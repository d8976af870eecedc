"""MammoUnify - run configuration.

Precedence: command-line flags > environment > YAML file > defaults.

Env vars:
  DEBUG=1              DEBUG logging (same as --verbose)
  WORKERS              worker processes for the per-patient pool
  MAMMO_OUTPUT_ROOT    default output root

See config.example.yaml for every key.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Tuple

import yaml

from mammounify.errors import ConfigError
from mammounify.model import Dataset
from mammounify.pipeline import DetectorConfig

DEBUG = os.environ.get("DEBUG", "0") == "1"

GRANULARITIES = ("image", "breast")
INTENSITY_SCOPES = ("patient", "image")
LATERALITY_SCOPES = ("image", "patient")

# Published layouts; every entry can be overridden under datasets.<name> in the YAML.
DEFAULT_FILES: Dict[Dataset, Tuple[str, ...]] = {
    Dataset.CBIS: (
        "mass_case_description_train_set.csv",
        "mass_case_description_test_set.csv",
        "calc_case_description_train_set.csv",
        "calc_case_description_test_set.csv",
    ),
    Dataset.TOMPEI: ("tompei_cmmd_metadata.csv",),
    Dataset.VINDR: ("breast-level_annotations.csv", "finding_annotations.csv"),
}

DEFAULT_IMAGE_PATTERNS: Dict[Dataset, str] = {
    Dataset.CBIS: "{image_file_path}",
    Dataset.TOMPEI: "images/{patient}/{laterality}_{view}.dcm",
    Dataset.VINDR: "images/{study_id}/{image_id}.dicom",
}


@dataclass(frozen=True)
class DatasetSource:
    root: str
    files: Tuple[str, ...]
    image_pattern: str

    def paths(self) -> Tuple[str, ...]:
        return tuple(os.path.join(self.root, f) for f in self.files)


@dataclass(frozen=True)
class InjectionScopes:
    intensity_scope: str = "patient"
    laterality_scope: str = "image"

    def __post_init__(self) -> None:
        if self.intensity_scope not in INTENSITY_SCOPES:
            raise ConfigError(f"injection.intensity_scope must be one of {INTENSITY_SCOPES}, got {self.intensity_scope!r}")
        if self.laterality_scope not in LATERALITY_SCOPES:
            raise ConfigError(f"injection.laterality_scope must be one of {LATERALITY_SCOPES}, got {self.laterality_scope!r}")


@dataclass(frozen=True)
class RunConfig:
    output_root: str = "./mammounify_out"
    datasets: Dict[Dataset, DatasetSource] = field(default_factory=dict)
    detector: DetectorConfig = DetectorConfig()
    workers: int = 1
    drop_missing_images: bool = True
    counting_granularity: str = "breast"
    apply_rescale: bool = False
    orientation_sample: Optional[int] = 64
    validation_seed: int = 0
    injection: InjectionScopes = InjectionScopes()

    def __post_init__(self) -> None:
        if isinstance(self.workers, bool) or not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError(f"workers must be an integer >= 1, got {self.workers!r}")
        if self.counting_granularity not in GRANULARITIES:
            raise ConfigError(f"counting_granularity must be one of {GRANULARITIES}, got {self.counting_granularity!r}")
        if self.orientation_sample is not None and self.orientation_sample < 0:
            raise ConfigError("orientation_sample must be >= 0 or null (check every image)")
        out = os.path.realpath(self.output_root)
        for ds, src in self.datasets.items():
            root = os.path.realpath(src.root)
            if out == root or _is_within(out, root) or _is_within(root, out):
                raise ConfigError(
                    f"output_root {self.output_root!r} overlaps the {ds.value} dataset root {src.root!r}",
                    hint="Point output_root at a directory outside every dataset root.",
                )

    def source(self, dataset: Dataset) -> DatasetSource:
        try:
            return self.datasets[dataset]
        except KeyError:
            raise ConfigError(
                f"no datasets.{dataset.value.lower()} section in the config",
                hint=f"Add datasets.{dataset.value.lower()}.root to the YAML config.",
            ) from None

    def as_dict(self) -> Dict[str, Any]:
        return {
            "output_root": self.output_root,
            "workers": self.workers,
            "drop_missing_images": self.drop_missing_images,
            "counting_granularity": self.counting_granularity,
            "apply_rescale": self.apply_rescale,
            "orientation_sample": self.orientation_sample,
            "validation_seed": self.validation_seed,
            "detector": self.detector.as_dict(),
            "injection": {
                "intensity_scope": self.injection.intensity_scope,
                "laterality_scope": self.injection.laterality_scope,
            },
            "datasets": {
                ds.value.lower(): {"root": src.root, "files": list(src.files), "image_pattern": src.image_pattern}
                for ds, src in sorted(self.datasets.items(), key=lambda kv: kv[0].value)
            },
        }

    def fingerprint(self) -> str:
        """SHA-256 of the settings that shape outputs.

        Locations (output_root, dataset roots) and the worker count are left
        out: moving a dataset or adding workers does not change what is written.
        """
        d = self.as_dict()
        d.pop("output_root")
        d.pop("workers")
        for src in d["datasets"].values():
            src.pop("root")
        return hashlib.sha256(canonical_json(d).encode("utf-8")).hexdigest()


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def _is_within(path: str, parent: str) -> bool:
    return os.path.commonpath([path, parent]) == parent


# -----------------------------
# Loading
# -----------------------------
def load_yaml(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"config file {path} is not valid YAML: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a mapping at the top level")
    return data


_TOP_KEYS = {
    "output_root", "workers", "drop_missing_images", "counting_granularity", "apply_rescale",
    "orientation_sample", "validation_seed", "detector", "datasets", "injection",
}


def load_config(path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Build the effective RunConfig. `overrides` holds flag values (None = not given)."""
    raw: Dict[str, Any] = load_yaml(path) if path else {}
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    base_dir = os.path.dirname(os.path.abspath(path)) if path else os.getcwd()
    # file-relative paths resolve against the config's directory, env/flag paths against cwd
    if raw.get("output_root"):
        raw["output_root"] = _resolve(str(raw["output_root"]), base_dir)

    if os.environ.get("WORKERS"):
        raw["workers"] = _env_int("WORKERS")
    if os.environ.get("MAMMO_OUTPUT_ROOT"):
        raw["output_root"] = os.path.abspath(os.environ["MAMMO_OUTPUT_ROOT"])
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = os.path.abspath(value) if key == "output_root" else value

    datasets = _parse_datasets(raw.get("datasets") or {}, base_dir)
    injection = raw.get("injection") or {}
    if not isinstance(injection, dict):
        raise ConfigError("injection must be a mapping")

    kwargs: Dict[str, Any] = {
        "datasets": datasets,
        "detector": DetectorConfig.from_mapping(raw.get("detector")),
        "injection": InjectionScopes(**{k: str(v) for k, v in injection.items() if k in ("intensity_scope", "laterality_scope")}),
    }
    if raw.get("output_root"):
        kwargs["output_root"] = str(raw["output_root"])
    for key in ("workers", "orientation_sample", "validation_seed"):
        if key in raw:
            kwargs[key] = _as_int(key, raw[key], allow_none=key == "orientation_sample")
    for key in ("drop_missing_images", "apply_rescale"):
        if key in raw:
            kwargs[key] = _as_bool(key, raw[key])
    if raw.get("counting_granularity") is not None:
        kwargs["counting_granularity"] = str(raw["counting_granularity"]).lower()
    return RunConfig(**kwargs)


def _parse_datasets(raw: Mapping[str, Any], base_dir: str) -> Dict[Dataset, DatasetSource]:
    if not isinstance(raw, dict):
        raise ConfigError("datasets must be a mapping of cbis/tompei/vindr sections")
    out: Dict[Dataset, DatasetSource] = {}
    for name, section in raw.items():
        try:
            ds = Dataset(str(name).upper())
        except ValueError:
            raise ConfigError(f"unknown dataset section datasets.{name}; expected cbis, tompei or vindr") from None
        section = section or {}
        if not section.get("root"):
            raise ConfigError(f"datasets.{name}.root is required")
        files = section.get("files") or DEFAULT_FILES[ds]
        if isinstance(files, str):
            files = [files]
        out[ds] = DatasetSource(
            root=_resolve(str(section["root"]), base_dir),
            files=tuple(str(f) for f in files),
            image_pattern=str(section.get("image_pattern") or DEFAULT_IMAGE_PATTERNS[ds]),
        )
    return out


def _resolve(p: str, base_dir: str) -> str:
    p = os.path.expanduser(p)
    return p if os.path.isabs(p) else os.path.normpath(os.path.join(base_dir, p))


def _env_int(name: str) -> int:
    try:
        return int(os.environ[name])
    except ValueError:
        raise ConfigError(f"environment variable {name} must be an integer, got {os.environ[name]!r}") from None


def _as_int(key: str, value: Any, allow_none: bool = False) -> Optional[int]:
    if value is None and allow_none:
        return None
    if isinstance(value, bool):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be an integer, got {value!r}") from None


def _as_bool(key: str, value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key} must be a boolean, got {value!r}")
