# tests/conftest.py
from pathlib import Path

import numpy as np
import pytest

from survfusion.core.cohort_io import EmbeddingMatrix, SurvivalData, write_embeddings
from survfusion.core.leibovich import load_point_table
from survfusion.core.synthetic import SyntheticSpec, generate_synthetic_cohort


FIXTURES_DIR = Path(__file__).parent / "fixtures"

MANIFEST_HEADER = "patient_id,time_months,event,wsi_file,wsi_row,ct_file,ct_row,t_stage,n_stage,tumor_size_cm,grade\n"


@pytest.fixture
def fixtures_dir():
    return FIXTURES_DIR


@pytest.fixture
def point_table():
    return load_point_table()


@pytest.fixture
def three_patient_manifest(tmp_path):
    """A hand-written 3-patient manifest with wsi (dim 3) and ct (dim 2) files."""
    wsi = np.array([[0.1, 0.2, 0.3], [1.0, -1.0, 0.5], [2.0, 0.0, -0.25]], dtype=np.float32)
    ct = np.array([[0.5, 0.5], [-1.5, 2.0], [0.0, 1.0]], dtype=np.float32)
    write_embeddings(EmbeddingMatrix("wsi", wsi), tmp_path / "wsi.femb")
    write_embeddings(EmbeddingMatrix("ct", ct), tmp_path / "ct.femb")
    manifest = tmp_path / "manifest.csv"
    manifest.write_text(
        MANIFEST_HEADER
        + "P001,12.5,1,wsi.femb,0,ct.femb,0,T3,N0,11,4\n"
        + "P002,30,0,wsi.femb,1,ct.femb,1,T1a,Nx,3.5,2\n"
        + "P003,7.25,1,wsi.femb,2,ct.femb,2,pT2,N1,6,\n"
    )
    return manifest


@pytest.fixture
def random_survival():
    """Factory for random survival data with tied times and censoring."""
    def make(n, seed, n_levels=None):
        rng = np.random.default_rng(seed)
        if n_levels:
            times = rng.integers(1, n_levels + 1, size=n).astype(float)
        else:
            times = rng.uniform(1, 100, size=n)
        events = rng.integers(0, 2, size=n)
        events[0] = 1
        return SurvivalData(times, events)
    return make


@pytest.fixture
def small_synthetic():
    """Small two-modality synthetic cohort with a strong complementary signal."""
    spec = SyntheticSpec(
        n_patients=120,
        dims={"wsi": 8, "ct": 8},
        beta={"wsi": [1.5, -1.2, 1.0, 0.8], "ct": [1.4, -1.0, 1.2, -0.9]},
        complementary_fraction=1.0,
        censoring_rate=0.01,
        seed=11,
        leibovich_noise=0.3,
    )
    cohort, truth = generate_synthetic_cohort(spec)
    return spec, cohort, truth
