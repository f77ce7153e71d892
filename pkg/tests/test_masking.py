import numpy as np
import pytest

from miri.errors import MaskSpecError, ShapeError
from miri.masking import MaskSpec, apply_mask, gen_mar, gen_mcar, gen_mnar
from miri.numeric import Rng


@pytest.fixture(scope="module")
def gauss_5000x8():
    return np.random.default_rng(0).normal(size=(5000, 8))


# ---------------------------------------------------------------- MCAR


def test_mcar_rate_30_percent():
    mask = gen_mcar(3000, 4, 0.3, Rng(1))
    assert mask.size == 12_000
    assert abs((~mask).mean() - 0.3) <= 0.015


def test_mcar_tiny_rate_gives_full_mask():
    assert gen_mcar(20, 3, 1e-4, Rng(2)).all()


def test_mcar_reproducible():
    assert np.array_equal(gen_mcar(50, 3, 0.3, Rng(3)), gen_mcar(50, 3, 0.3, Rng(3)))


@pytest.mark.parametrize("rate", [0.0, 1.0, -0.1, 1.5])
def test_rate_outside_open_interval(rate):
    with pytest.raises(MaskSpecError):
        gen_mcar(10, 2, rate, Rng(0))
    with pytest.raises(MaskSpecError):
        MaskSpec("MCAR", rate)


def test_mcar_ignores_row_order(gauss_5000x8):
    spec = MaskSpec("MCAR", 0.3, seed=4)
    perm = np.random.default_rng(5).permutation(len(gauss_5000x8))
    assert np.array_equal(spec.generate(gauss_5000x8), spec.generate(gauss_5000x8[perm]))


# ---------------------------------------------------------------- MAR


def test_mar_half_features_fully_observed():
    x = np.random.default_rng(6).normal(size=(400, 4))
    mask = gen_mar(x, 0.2, 0.5, Rng(7))
    assert int(mask.all(axis=0).sum()) == 2


def test_mar_realized_rate(gauss_5000x8):
    mask = gen_mar(gauss_5000x8, 0.4, 0.5, Rng(8))
    assert abs((~mask).mean() - 0.4) <= 0.02


def test_mar_depends_on_conditioning_features(gauss_5000x8):
    mask = gen_mar(gauss_5000x8, 0.3, 0.5, Rng(9))
    cond = np.flatnonzero(mask.all(axis=0))
    score = gauss_5000x8[:, cond].mean(axis=1)
    row_missing = (~mask).sum(axis=1)
    assert np.corrcoef(score, row_missing)[0, 1] > 0.2


def test_mar_infeasible_rate(gauss_5000x8):
    with pytest.raises(MaskSpecError, match="infeasible"):
        gen_mar(gauss_5000x8, 0.6, 0.5, Rng(0))


def test_mar_needs_two_features():
    with pytest.raises(MaskSpecError):
        gen_mar(np.zeros((10, 1)), 0.2, 0.5, Rng(0))


def test_mar_full_conditioning_leaves_nothing_to_mask():
    with pytest.raises(MaskSpecError):
        gen_mar(np.random.default_rng(0).normal(size=(10, 3)), 0.2, 1.0, Rng(0))


# ---------------------------------------------------------------- MNAR


def test_mnar_realized_rate():
    x = np.random.default_rng(10).normal(size=(5000, 4))
    mask = gen_mnar(x, 0.2, Rng(11))
    assert abs((~mask).mean() - 0.2) <= 0.02


def test_mnar_hides_large_values():
    x = np.random.default_rng(12).normal(size=(5000, 4))
    mask = gen_mnar(x, 0.3, Rng(13))
    col = x[:, 0]
    assert col[~mask[:, 0]].mean() > col[mask[:, 0]].mean()


def test_mnar_reproducible():
    x = np.random.default_rng(14).normal(size=(100, 3))
    assert np.array_equal(gen_mnar(x, 0.3, Rng(15)), gen_mnar(x, 0.3, Rng(15)))


def test_mnar_rejects_incomplete_truth():
    x = np.array([[1.0, np.nan], [0.0, 1.0]])
    with pytest.raises(MaskSpecError):
        gen_mnar(x, 0.3, Rng(0))


@pytest.mark.parametrize("mech", ["MCAR", "MAR", "MNAR"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_rate_tolerance_every_mechanism(gauss_5000x8, mech, seed):
    mask = MaskSpec(mech, 0.25, 0.5, seed).generate(gauss_5000x8)
    assert abs((~mask).mean() - 0.25) <= 0.02


# ---------------------------------------------------------------- apply_mask


def test_apply_full_mask_is_identity():
    x = np.random.default_rng(16).normal(size=(5, 3))
    ds = apply_mask(x, np.ones_like(x, dtype=bool))
    assert np.array_equal(ds.raw, x)


def test_apply_row_of_zeros():
    x = np.ones((3, 2))
    mask = np.ones_like(x, dtype=bool)
    mask[1] = False
    ds = apply_mask(x, mask)
    assert np.all(np.isnan(ds.raw[1])) and not np.any(np.isnan(ds.raw[[0, 2]]))


def test_recompose_with_truth():
    r = np.random.default_rng(17)
    x = r.normal(size=(20, 4))
    mask = r.random(x.shape) > 0.5
    ds = apply_mask(x, mask)
    recomposed = np.where(mask, ds.raw, x)
    assert np.array_equal(recomposed, x)


def test_apply_shape_mismatch():
    with pytest.raises(ShapeError):
        apply_mask(np.zeros((2, 2)), np.ones((2, 3)))
