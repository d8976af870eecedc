import os

import pytest
import yaml

from mammounify.config import DEFAULT_FILES, RunConfig, load_config
from mammounify.errors import ConfigError
from mammounify.model import Dataset
from mammounify.pipeline import DetectorConfig

EXAMPLE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "config.example.yaml")


def write_yaml(path, body):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(body) if not isinstance(body, str) else body)
    return str(path)


def test_defaults_without_a_file():
    cfg = load_config()
    assert cfg == RunConfig()
    assert cfg.workers == 1
    assert cfg.counting_granularity == "breast"
    assert cfg.orientation_sample == 64
    assert cfg.detector == DetectorConfig()


def test_example_config_loads():
    cfg = load_config(EXAMPLE)
    assert set(cfg.datasets) == set(Dataset)
    assert cfg.source(Dataset.CBIS).files == DEFAULT_FILES[Dataset.CBIS]
    assert cfg.output_root == os.path.join(os.path.dirname(EXAMPLE), "mammounify_out")


def test_relative_paths_resolve_against_the_file(tmp_path):
    path = write_yaml(tmp_path / "conf" / "run.yaml", {"output_root": "out", "datasets": {"tompei": {"root": "../data/t"}}})
    cfg = load_config(path)
    assert cfg.output_root == str(tmp_path / "conf" / "out")
    src = cfg.source(Dataset.TOMPEI)
    assert src.root == str(tmp_path / "data" / "t")
    assert src.paths() == (str(tmp_path / "data" / "t" / "tompei_cmmd_metadata.csv"),)


def test_files_may_be_a_single_string(tmp_path):
    path = write_yaml(tmp_path / "c.yaml", {"datasets": {"vindr": {"root": str(tmp_path / "v"), "files": "one.csv"}}})
    assert load_config(path).source(Dataset.VINDR).files == ("one.csv",)


def test_empty_file_is_defaults(tmp_path):
    assert load_config(write_yaml(tmp_path / "e.yaml", "")) == RunConfig()


def test_orientation_sample_null_checks_everything(tmp_path):
    path = write_yaml(tmp_path / "c.yaml", {"orientation_sample": None})
    assert load_config(path).orientation_sample is None


def test_booleans_accept_words(tmp_path):
    path = write_yaml(tmp_path / "c.yaml", {"drop_missing_images": "no", "apply_rescale": "yes"})
    cfg = load_config(path)
    assert (cfg.drop_missing_images, cfg.apply_rescale) == (False, True)


@pytest.mark.parametrize(
    "body",
    [
        {"colour": "blue"},
        {"workers": 0},
        {"workers": "many"},
        {"workers": True},
        {"counting_granularity": "patient"},
        {"orientation_sample": -1},
        {"drop_missing_images": "maybe"},
        {"detector": {"window_width": 0}},
        {"detector": {"window": 8}},
        {"detector": {"background_threshold": "high"}},
        {"injection": {"intensity_scope": "study"}},
        {"injection": "patient"},
        {"datasets": {"mias": {"root": "/x"}}},
        {"datasets": {"cbis": {"files": ["a.csv"]}}},
        {"datasets": ["cbis"]},
        ["not", "a", "mapping"],
    ],
)
def test_config_errors(tmp_path, body):
    path = write_yaml(tmp_path / "bad.yaml", body)
    with pytest.raises(ConfigError) as e:
        load_config(path)
    assert e.value.exit_code == 2


def test_invalid_yaml(tmp_path):
    with pytest.raises(ConfigError, match="not valid YAML"):
        load_config(write_yaml(tmp_path / "bad.yaml", "workers: [1,\n"))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "nope.yaml"))


def test_output_inside_dataset_root_refused(tmp_path):
    path = write_yaml(tmp_path / "c.yaml", {"output_root": "data/out", "datasets": {"cbis": {"root": "data"}}})
    with pytest.raises(ConfigError, match="overlaps"):
        load_config(path)


def test_dataset_root_inside_output_refused(tmp_path):
    path = write_yaml(tmp_path / "c.yaml", {"output_root": "out", "datasets": {"cbis": {"root": "out/cbis_raw"}}})
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_dataset_section():
    with pytest.raises(ConfigError, match="datasets.vindr"):
        RunConfig().source(Dataset.VINDR)


# -----------------------------
# precedence
# -----------------------------
def test_env_beats_file_and_flags_beat_env(tmp_path, monkeypatch):
    path = write_yaml(tmp_path / "c.yaml", {"workers": 2, "output_root": "from_file"})
    assert load_config(path).workers == 2
    monkeypatch.setenv("WORKERS", "3")
    monkeypatch.setenv("MAMMO_OUTPUT_ROOT", str(tmp_path / "from_env"))
    cfg = load_config(path)
    assert (cfg.workers, cfg.output_root) == (3, str(tmp_path / "from_env"))
    cfg = load_config(path, {"workers": 5, "output_root": str(tmp_path / "from_flag")})
    assert (cfg.workers, cfg.output_root) == (5, str(tmp_path / "from_flag"))


def test_unset_flags_do_not_override(tmp_path):
    path = write_yaml(tmp_path / "c.yaml", {"workers": 4})
    assert load_config(path, {"workers": None, "output_root": None}).workers == 4


def test_bad_env_integer(tmp_path, monkeypatch):
    monkeypatch.setenv("WORKERS", "lots")
    with pytest.raises(ConfigError, match="WORKERS"):
        load_config()


# -----------------------------
# fingerprint
# -----------------------------
def test_fingerprint_ignores_locations_and_workers(tmp_path):
    a = write_yaml(tmp_path / "a.yaml", {"output_root": "o1", "workers": 1, "datasets": {"cbis": {"root": "/d1"}}})
    b = write_yaml(tmp_path / "b.yaml", {"output_root": "o2", "workers": 8, "datasets": {"cbis": {"root": "/d2"}}})
    assert load_config(a).fingerprint() == load_config(b).fingerprint()


def test_fingerprint_follows_detector_and_selection_settings():
    base = RunConfig().fingerprint()
    assert len(base) == 64
    assert RunConfig(detector=DetectorConfig(background_threshold=0.6)).fingerprint() != base
    assert RunConfig(drop_missing_images=False).fingerprint() != base
    assert RunConfig().fingerprint() == base
