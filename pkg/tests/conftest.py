import numpy as np
import pytest

from airtwin.citygen import generate_synthetic_city
from airtwin.models import CvConfig, ForestParams, GbtParams
from airtwin.pipeline import PipelineConfig, run_pipeline


@pytest.fixture(scope="session")
def small_city():
    """36-zone procedural city shared by read-only tests."""
    return generate_synthetic_city(3, 36)


@pytest.fixture(scope="session")
def tiny_pipeline_cfg():
    def make(out_dir, seed=5, threads=1):
        return PipelineConfig(
            seed=seed,
            threads=threads,
            out_dir=str(out_dir),
            n_zones=49,
            rho=0.6,
            noise_sd=1.0,
            selection_target=24,
            selection_spec=ForestParams(
                n_trees=6, max_depth=6, min_samples_leaf=2, feature_subsample=0.5
            ),
            rf_spec=ForestParams(
                n_trees=12, max_depth=8, min_samples_leaf=2, feature_subsample=0.5
            ),
            gbt_spec=GbtParams(
                n_trees=25, learning_rate=0.15, max_depth=3, min_samples_leaf=2
            ),
            cv=CvConfig(k=5, seed=42),
            sensitivity_trials=100,
        )

    return make


@pytest.fixture(scope="session")
def snapshot_dir(tmp_path_factory, tiny_pipeline_cfg):
    """A finished tiny pipeline run, reused by CLI/service tests."""
    out = tmp_path_factory.mktemp("snapshot")
    code = run_pipeline(tiny_pipeline_cfg(out))
    assert code == 0
    return out


def dense_moran(W: np.ndarray, x: np.ndarray) -> float:
    """Brute-force double-sum Moran's I over a dense weight matrix."""
    n = len(x)
    z = x - x.mean()
    num = 0.0
    for i in range(n):
        for j in range(n):
            num += W[i, j] * z[i] * z[j]
    return n / W.sum() * num / float(np.sum(z * z))
