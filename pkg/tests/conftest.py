import os

import numpy as np
import pytest

from sda.config import PipelineConfig
from sda.synth import make_block_dataset, write_dataset_files

# Generator settings shared by the pipeline-level tests: strong planted
# blocks so the signal is comfortably learnable at default capacity.
BLOCK_KW = dict(within=0.8, across=0.001, n_blocks=5, feature_noise=0.08, seed=21)


@pytest.fixture(scope="session")
def synth_dataset(tmp_path_factory):
    """Block-structured synthetic dataset written to disk once per session."""
    directory = tmp_path_factory.mktemp("synth-data")
    am, ft, dag = make_block_dataset(**BLOCK_KW)
    paths = write_dataset_files(str(directory), am, ft, dag)
    return {"am": am, "ft": ft, "dag": dag, "paths": paths}


@pytest.fixture()
def synth_config(synth_dataset, tmp_path):
    """Fast config for the synthetic dataset: single SVM point, small k."""
    p = synth_dataset["paths"]
    return PipelineConfig(
        association_path=p["association"],
        feature_path=p["features"],
        dag_path=p["dag"],
        dataset_name="synth-blocks",
        output_dir=str(tmp_path / "out"),
        k=10,
        seed=7,
        svm_c=(10.0,),
        svm_gamma=(0.1,),
    )


def write_config_file(path, **keys):
    lines = [f"{k} = {v}" for k, v in keys.items()]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return str(path)


def dataset_dir(name: str):
    """Locate a distributed dataset (association.csv etc.) if present.

    Checked locations: $SDA_DATA_DIR/<name>/ and ./data/<name>/.
    Returns None when the files are not available in this environment.
    """
    roots = []
    if os.environ.get("SDA_DATA_DIR"):
        roots.append(os.environ["SDA_DATA_DIR"])
    roots.append(os.path.join(os.path.dirname(__file__), "..", "data"))
    for root in roots:
        candidate = os.path.join(root, name)
        if os.path.exists(os.path.join(candidate, "association.csv")):
            return candidate
    return None


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
