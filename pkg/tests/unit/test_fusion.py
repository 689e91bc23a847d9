# tests/unit/test_fusion.py
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from survfusion.core.cohort_io import SurvivalData
from survfusion.core.fusion import (
    CtProjection,
    LateFusionWeight,
    alpha_grid,
    concat_embeddings,
    ct_project,
    late_fuse,
    tune_alpha,
    tune_alpha_folds,
)
from survfusion.core.nn import MlpParams, RiskModel, build_model
from survfusion.errors import DegenerateValSetError, DimensionMismatchError, LengthMismatchError


def test_late_fuse_weights():
    assert late_fuse([1.0], [-1.0], LateFusionWeight(0.8))[0] == pytest.approx(0.6)
    assert_array_equal(late_fuse([1.0, 2.0], [5.0, 6.0], LateFusionWeight(1.0)), [1.0, 2.0])
    assert_array_equal(late_fuse([1.0, 2.0], [5.0, 6.0], LateFusionWeight(0.0)), [5.0, 6.0])
    with pytest.raises(LengthMismatchError):
        late_fuse([1.0], [1.0, 2.0], LateFusionWeight(0.5))
    with pytest.raises(ValueError):
        LateFusionWeight(1.5)


def test_alpha_grid():
    grid = alpha_grid(0.01)
    assert grid.size == 101
    assert grid[0] == 0.0 and grid[-1] == 1.0
    assert_allclose(alpha_grid(0.25), [0.0, 0.25, 0.5, 0.75, 1.0])
    assert alpha_grid(0.3)[-1] == 1.0


def test_equal_rankings_tie_to_largest_alpha():
    data = SurvivalData([1, 2, 3], [1, 1, 1])
    assert tune_alpha([3.0, 2.0, 1.0], [3.0, 2.0, 1.0], data).alpha == 1.0


def test_interior_alpha_wins():
    data = SurvivalData([1, 2, 3, 4], [1, 1, 1, 1])
    # fused scores [1 + a, 2a, 1 - a, 0] rank perfectly only for 1/3 < a < 1
    weight, scores = tune_alpha_folds([([2.0, 2.0, 0.0, 0.0], [1.0, 0.0, 1.0, 0.0], data)], 0.01)
    assert weight.alpha == pytest.approx(0.99)
    assert scores[-1] == pytest.approx(5 / 6)
    assert scores[0] == pytest.approx(4 / 6)
    assert max(scores) == 1.0


def test_alpha_tuning_needs_comparable_pairs():
    with pytest.raises(DegenerateValSetError):
        tune_alpha([1.0, 2.0], [1.0, 2.0], SurvivalData([1, 2], [0, 0]))
    with pytest.raises(DegenerateValSetError):
        tune_alpha_folds([])


def test_ct_projection_and_concat():
    p = CtProjection(W=[[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]], b=[0.0, 0.0, 1.0])
    assert_allclose(ct_project(p, [1.0, 2.0]), [1.0, 4.0, 4.0])
    batch = ct_project(p, [[1.0, 2.0], [0.0, 0.0]])
    assert batch.shape == (2, 3)
    assert_allclose(concat_embeddings([9.0, 8.0, 7.0], [1.0, 4.0, 4.0]), [9, 8, 7, 1, 4, 4])
    with pytest.raises(DimensionMismatchError):
        ct_project(p, [1.0, 2.0, 3.0])
    with pytest.raises(DimensionMismatchError):
        concat_embeddings([1.0, 2.0], [1.0, 4.0, 4.0])


def test_zero_ct_projection_reduces_to_wsi_only():
    rng = np.random.default_rng(3)
    fused = build_model(("wsi", "ct"), {"wsi": 4, "ct": 3}, hidden_dim=8, seed=1)
    fused.projection.W[:] = 0.0
    fused.projection.b[:] = 0.0
    p = fused.params
    wsi_only = RiskModel(
        config=fused.config,
        params=MlpParams(W1=p.W1[:, :4].copy(), b1=p.b1, ln_gain=p.ln_gain, ln_bias=p.ln_bias, W2=p.W2, b2=p.b2),
        modalities=("wsi",),
    )
    features = {"wsi": rng.normal(size=(6, 4)), "ct": rng.normal(size=(6, 3))}
    assert_allclose(fused.predict(features), wsi_only.predict(features), rtol=1e-12, atol=1e-12)
