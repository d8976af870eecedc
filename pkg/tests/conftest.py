import os

import pytest

from mammounify.config import DEFAULT_FILES, DEFAULT_IMAGE_PATTERNS, DatasetSource, RunConfig
from mammounify.model import Dataset
from mammounify.pipeline import DetectorConfig
from mammounify.synthetic import write_cbis_sample, write_tompei_sample, write_vindr_sample

from tests.helpers import build_store


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    for name in ("WORKERS", "MAMMO_OUTPUT_ROOT", "DEBUG"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def detector():
    return DetectorConfig()


def _source(root, dataset):
    return DatasetSource(str(root), DEFAULT_FILES[dataset], DEFAULT_IMAGE_PATTERNS[dataset])


@pytest.fixture
def cbis_root(tmp_path):
    root = tmp_path / "cbis"
    write_cbis_sample(str(root), patients=6, seed=11)
    return root


@pytest.fixture
def tompei_root(tmp_path):
    root = tmp_path / "tompei"
    write_tompei_sample(str(root), patients=4, seed=12)
    return root


@pytest.fixture
def vindr_root(tmp_path):
    root = tmp_path / "vindr"
    write_vindr_sample(str(root), studies=4, seed=13)
    return root


@pytest.fixture
def make_config(tmp_path):
    """RunConfig factory: make_config(cbis=root, options={...}) with output under tmp_path/out."""

    def build(*, options=None, **roots):
        datasets = {Dataset(name.upper()): _source(root, Dataset(name.upper())) for name, root in roots.items()}
        return RunConfig(output_root=str(tmp_path / "out"), datasets=datasets, **(options or {}))

    return build


@pytest.fixture
def clean_store(tmp_path):
    root = os.path.join(str(tmp_path), "clean")
    manifest, exams = build_store(root, patients=3)
    return root, manifest, exams
