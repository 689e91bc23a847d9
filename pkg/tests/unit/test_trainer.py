# tests/unit/test_trainer.py
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pydantic import ValidationError

from survfusion.core.cohort_io import SurvivalData
from survfusion.core.metrics import c_index
from survfusion.core.nn import AdamW, build_model
from survfusion.core.trainer import SurvivalSet, TrainConfig, lr_schedule, train, train_step
from survfusion.errors import DegenerateTrainSetError, DegenerateValSetError, NoEventsInBatchError
from survfusion.utils.seeding import derive_seed, make_rng


FAST = TrainConfig(learning_rate=1e-3, lr_floor=1e-5, max_epochs=15, warmup_epochs=2, patience=3)


def _sets(cohort, modalities=("wsi",)):
    return (SurvivalSet.from_cohort(cohort, modalities, range(80)),
            SurvivalSet.from_cohort(cohort, modalities, range(80, 120)))


def test_lr_schedule_shape():
    cfg = TrainConfig(learning_rate=1e-3, lr_floor=1e-5, warmup_epochs=10, max_epochs=110)
    assert lr_schedule(0, cfg) == pytest.approx(1e-4)
    assert lr_schedule(9, cfg) == pytest.approx(1e-3)
    assert lr_schedule(10, cfg) == pytest.approx(1e-3)
    assert lr_schedule(60, cfg) == pytest.approx((1e-3 + 1e-5) / 2)
    assert lr_schedule(110, cfg) == pytest.approx(1e-5)
    assert lr_schedule(150, cfg) == pytest.approx(1e-5)
    with pytest.raises(ValueError):
        lr_schedule(-1, cfg)


def test_no_warmup_starts_at_learning_rate():
    cfg = TrainConfig(learning_rate=5e-4, warmup_epochs=0, max_epochs=20)
    assert lr_schedule(0, cfg) == pytest.approx(5e-4)


def test_config_rejects_warmup_past_end():
    with pytest.raises(ValidationError):
        TrainConfig(max_epochs=5, warmup_epochs=5)
    with pytest.raises(ValidationError):
        TrainConfig(learning_rate=0.1)


def test_batch_without_events_raises():
    model = build_model(("wsi",), {"wsi": 2}, hidden_dim=4)
    batch = SurvivalSet({"wsi": np.ones((3, 2))}, SurvivalData([1, 2, 3], [0, 0, 0]), ["a", "b", "c"])
    with pytest.raises(NoEventsInBatchError):
        train_step(model, batch, TrainConfig(), make_rng(0), AdamW(), 1e-3)


def test_degenerate_sets():
    features = {"wsi": np.ones((3, 2))}
    one_event = SurvivalSet(features, SurvivalData([1, 2, 3], [1, 0, 0]), ["a", "b", "c"])
    fine = SurvivalSet(features, SurvivalData([1, 2, 3], [1, 1, 0]), ["a", "b", "c"])
    censored = SurvivalSet(features, SurvivalData([1, 2, 3], [0, 0, 0]), ["d", "e", "f"])
    with pytest.raises(DegenerateTrainSetError):
        train(one_event, fine, 32, 0.0, FAST, 0, ("wsi",))
    with pytest.raises(DegenerateValSetError):
        train(fine, censored, 32, 0.0, FAST, 0, ("wsi",))


def test_training_is_deterministic(small_synthetic):
    _, cohort, _ = small_synthetic
    train_set, val_set = _sets(cohort, ("wsi", "ct"))
    a = train(train_set, val_set, 32, 0.2, FAST, 123, ("wsi", "ct"))
    b = train(train_set, val_set, 32, 0.2, FAST, 123, ("wsi", "ct"))
    assert a.best_epoch == b.best_epoch
    assert_array_equal(a.model.predict(val_set.features), b.model.predict(val_set.features))
    c = train(train_set, val_set, 32, 0.2, FAST, 124, ("wsi", "ct"))
    assert not np.array_equal(a.model.predict(val_set.features), c.model.predict(val_set.features))


def test_early_stopping_bookkeeping(small_synthetic):
    _, cohort, _ = small_synthetic
    train_set, val_set = _sets(cohort)
    result = train(train_set, val_set, 32, 0.0, FAST, 5, ("wsi",))

    scores = [r.val_c_index for r in result.history]
    assert 1 <= result.best_epoch <= len(result.history) <= FAST.max_epochs
    assert result.history[result.best_epoch - 1].val_c_index == result.best_val_c_index
    assert result.best_val_c_index >= max(scores) - 1e-6
    if len(result.history) < FAST.max_epochs:
        assert len(result.history) == result.best_epoch + FAST.patience
    # the returned model is the best snapshot, not the last one
    assert c_index(val_set.data, result.model.predict(val_set.features)) == result.best_val_c_index


def test_fixed_epochs_skip_validation(small_synthetic):
    _, cohort, _ = small_synthetic
    train_set, _ = _sets(cohort)
    result = train(train_set, None, 32, 0.0, FAST, 5, ("wsi",), fixed_epochs=4)
    assert result.best_epoch == 4
    assert [r.epoch for r in result.history] == [1, 2, 3, 4]
    assert all(r.val_c_index is None for r in result.history)
    assert result.best_val_c_index is None


def test_training_learns_the_signal(small_synthetic):
    _, cohort, truth = small_synthetic
    train_set, val_set = _sets(cohort)
    cfg = TrainConfig(learning_rate=1e-3, lr_floor=1e-5, max_epochs=60, warmup_epochs=2,
                      patience=60, batch_size=8, l1_penalty=1e-6, weight_decay=1e-6)
    result = train(train_set, val_set, 64, 0.0, cfg, 0, ("wsi",))
    assert result.best_val_c_index > 0.6


def test_take_keeps_rows_aligned(small_synthetic):
    _, cohort, _ = small_synthetic
    full = SurvivalSet.from_cohort(cohort, ("wsi",))
    part = full.take([3, 1])
    assert part.ids == [full.ids[3], full.ids[1]]
    assert_array_equal(part.features["wsi"][0], full.features["wsi"][3])
    assert part.data == full.data.subset([3, 1])


def _noise_sets(seed=0, n=64, dim=8):
    rng = np.random.default_rng(seed)
    features = {"wsi": rng.normal(size=(n, dim))}
    data = SurvivalData(rng.uniform(1, 100, size=n), rng.integers(0, 2, size=n))
    return SurvivalSet(features, data, [f"N{i}" for i in range(n)])


def test_l1_penalty_shrinks_weights_on_noise():
    noise = _noise_sets()
    norms = {}
    for l1 in (1e-6, 1e-2):
        cfg = TrainConfig(learning_rate=1e-3, lr_floor=1e-5, max_epochs=40, warmup_epochs=2,
                          l1_penalty=l1, weight_decay=1e-6)
        result = train(noise, None, 32, 0.0, cfg, 7, ("wsi",), fixed_epochs=40)
        norms[l1] = result.model.l1_norm()
    assert norms[1e-2] < norms[1e-6]


def test_full_batch_takes_one_step_over_the_whole_set():
    train_set = _noise_sets(seed=3, n=40)
    cfg = TrainConfig(learning_rate=1e-3, lr_floor=1e-5, max_epochs=20, warmup_epochs=2,
                      full_batch=True, batch_size=4)
    result = train(train_set, None, 16, 0.0, cfg, 11, ("wsi",), fixed_epochs=1)

    manual = build_model(("wsi",), {"wsi": 8}, hidden_dim=16, seed=derive_seed(11, "init"))
    loss = train_step(manual, train_set, cfg, make_rng(0), AdamW(), lr_schedule(0, cfg))
    assert result.history[0].train_loss == pytest.approx(loss, rel=1e-10)
    for name, value in result.model.named_parameters().items():
        assert_allclose(value, manual.named_parameters()[name], rtol=1e-9, atol=1e-12, err_msg=name)


def test_full_batch_ignores_batch_size():
    train_set = _noise_sets(seed=4, n=30)
    results = []
    for batch_size in (1, 64):
        cfg = TrainConfig(learning_rate=1e-3, lr_floor=1e-5, max_epochs=10, warmup_epochs=2,
                          full_batch=True, batch_size=batch_size)
        results.append(train(train_set, None, 16, 0.0, cfg, 2, ("wsi",), fixed_epochs=5))
    assert_array_equal(results[0].model.predict(train_set.features),
                       results[1].model.predict(train_set.features))
    assert [r.train_loss for r in results[0].history] == [r.train_loss for r in results[1].history]
