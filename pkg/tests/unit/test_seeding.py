# tests/unit/test_seeding.py
from survfusion.utils.seeding import derive_seed, make_rng, sklearn_seed


def test_derived_seeds_are_stable_and_distinct():
    assert derive_seed(0, "unimodal_wsi", 0) == derive_seed(0, "unimodal_wsi", 0)
    seeds = {derive_seed(0, s, k) for s in ("unimodal_wsi", "unimodal_ct", "late") for k in range(5)}
    assert len(seeds) == 15
    assert derive_seed(0, "a") != derive_seed(1, "a")
    assert derive_seed(0, "trial", 1, "inner", 2) != derive_seed(0, "trial", 2, "inner", 1)


def test_derived_seeds_fit_in_64_bits():
    for master in (0, 1, 2 ** 64 - 1):
        assert 0 <= derive_seed(master, "x") < 2 ** 64


def test_rng_and_sklearn_seed():
    assert make_rng(7).random() == make_rng(7).random()
    assert sklearn_seed(2 ** 40 + 3) == 3
    assert 0 <= sklearn_seed(derive_seed(9, "outer")) < 2 ** 32
