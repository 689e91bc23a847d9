# tests/unit/test_synthetic.py
import numpy as np
import pytest
from numpy.testing import assert_array_equal

from survfusion.core.metrics import c_index
from survfusion.core.synthetic import (
    SyntheticSpec,
    generate_synthetic_cohort,
    read_ground_truth,
    tune_censoring_rate,
    write_ground_truth,
)
from survfusion.errors import InvalidSpecError


def _spec(**kwargs):
    base = dict(n_patients=200, dims={"wsi": 6, "ct": 6},
                beta={"wsi": [1.5, -1.0, 1.2], "ct": [1.0, 0.8, -1.1]}, seed=7)
    base.update(kwargs)
    return SyntheticSpec(**base)


def test_generation_is_deterministic():
    a, truth_a = generate_synthetic_cohort(_spec())
    b, truth_b = generate_synthetic_cohort(_spec())
    assert a.survival_data() == b.survival_data()
    for m in ("wsi", "ct"):
        assert a.matrices[m] == b.matrices[m]
    assert_array_equal(truth_a.true_risk, truth_b.true_risk)


def test_zero_beta_gives_zero_risk():
    cohort, truth = generate_synthetic_cohort(_spec(beta={}))
    assert_array_equal(truth.true_risk, np.zeros(200))
    assert abs(c_index(cohort.survival_data(), truth.true_risk) - 0.5) < 1e-12


def test_true_risk_is_concordant_with_outcomes():
    cohort, truth = generate_synthetic_cohort(_spec())
    assert c_index(cohort.survival_data(), truth.true_risk) > 0.75


def test_true_risk_matches_stored_embeddings():
    spec = _spec()
    cohort, truth = generate_synthetic_cohort(spec)
    expected = sum(cohort.features(m) @ spec.full_beta(m) for m in ("wsi", "ct"))
    np.testing.assert_allclose(truth.true_risk, expected, rtol=1e-12, atol=1e-12)


def test_events_and_observed_times():
    cohort, truth = generate_synthetic_cohort(_spec())
    data = cohort.survival_data()
    assert_array_equal(data.events, (truth.event_times < truth.censor_times).astype(int))
    assert_array_equal(data.times, np.minimum(truth.event_times, truth.censor_times))


def test_shared_signal_copies_primary_coordinates():
    cohort, _ = generate_synthetic_cohort(_spec(complementary_fraction=0.0))
    assert_array_equal(cohort.features("ct")[:, 0], cohort.features("wsi")[:, 0])
    cohort, _ = generate_synthetic_cohort(_spec(complementary_fraction=1.0))
    assert not np.array_equal(cohort.features("ct")[:, 0], cohort.features("wsi")[:, 0])


def test_invalid_spec_names_key():
    with pytest.raises(InvalidSpecError, match="censoring_rate"):
        SyntheticSpec.parse({"censoring_rate": 0})
    with pytest.raises(InvalidSpecError, match="beta"):
        SyntheticSpec.parse({"dims": {"wsi": 2}, "beta": {"wsi": [1, 2, 3]}})


def test_tune_censoring_rate_hits_target():
    spec = _spec(n_patients=156, seed=3)
    rate = tune_censoring_rate(spec, 40 / 156)
    cohort, _ = generate_synthetic_cohort(spec.model_copy(update={"censoring_rate": rate}))
    assert cohort.survival_data().n_events == 40


def test_clinical_features_follow_risk():
    cohort, truth = generate_synthetic_cohort(_spec(leibovich_noise=0.2))
    grades = np.array([p.leibovich.grade for p in cohort.patients])
    assert set(grades) <= {1, 2, 3, 4}
    assert truth.true_risk[grades == 4].mean() > truth.true_risk[grades == 1].mean()


def test_ground_truth_round_trip(tmp_path):
    _, truth = generate_synthetic_cohort(_spec(n_patients=10))
    write_ground_truth(truth, tmp_path / "truth.json")
    back = read_ground_truth(tmp_path / "truth.json")
    assert_array_equal(back.true_risk, truth.true_risk)
    assert_array_equal(back.beta["ct"], truth.beta["ct"])
