import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from miri.data import (
    ImputationState,
    MaskedDataset,
    Standardizer,
    initial_impute,
    load_csv,
    standardize,
    write_csv,
)
from miri.errors import ParseError, PreprocessingError, ShapeError
from miri.numeric import Rng


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


# ---------------------------------------------------------------- CSV


def test_load_small_file_with_nan(tmp_path):
    ds = load_csv(write(tmp_path, "1.0,NaN\n3.0,4.0\n"))
    assert ds.shape == (2, 2)
    assert ds.mask.tolist() == [[True, False], [True, True]]
    assert ds.raw[0, 0] == 1.0 and ds.raw[1, 0] == 3.0 and ds.raw[1, 1] == 4.0
    assert np.isnan(ds.raw[0, 1])


def test_empty_field_is_missing(tmp_path):
    ds = load_csv(write(tmp_path, "1,\n,2\n"))
    assert ds.mask.tolist() == [[True, False], [False, True]]


def test_fully_observed_file(tmp_path):
    ds = load_csv(write(tmp_path, "a,b,c\n1,2,3\n4,5,6\n"))
    assert ds.mask.all()
    assert ds.feature_names == ("a", "b", "c")


def test_custom_missing_token(tmp_path):
    ds = load_csv(write(tmp_path, "1,?\n2,3\n"), missing_token="?")
    assert ds.mask.tolist() == [[True, False], [True, True]]


def test_letter_in_numeric_cell_names_the_cell(tmp_path):
    with pytest.raises(ParseError) as exc:
        load_csv(write(tmp_path, "1,2\n3,x\n"))
    assert exc.value.row == 2 and exc.value.column == 2
    assert "'x'" in str(exc.value)


def test_ragged_rows_rejected(tmp_path):
    with pytest.raises(ParseError, match="row 2"):
        load_csv(write(tmp_path, "1,2\n3\n"))


def test_empty_file_rejected(tmp_path):
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, ""))


def test_comment_lines_skipped(tmp_path):
    ds = load_csv(write(tmp_path, "# provenance line\nx1,x2\n1,2\n"))
    assert ds.shape == (1, 2)


finite = st.floats(-1e300, 1e300, allow_nan=False, allow_infinity=False)


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 4)), elements=finite),
       st.data())
@settings(max_examples=40, deadline=None)
def test_csv_round_trip(tmp_path_factory, values, data):
    mask = data.draw(arrays(bool, values.shape))
    ds = MaskedDataset(values, mask)
    path = tmp_path_factory.mktemp("rt") / "x.csv"
    write_csv(path, ds, comment="round trip")
    back = load_csv(path, header=False)
    assert np.array_equal(back.mask, ds.mask)
    assert np.array_equal(back.raw[ds.mask], ds.raw[ds.mask])


def test_csv_round_trip_keeps_header(tmp_path):
    ds = MaskedDataset(np.array([[0.1, 2.0]]), np.array([[1, 0]]), ("u", "v"))
    write_csv(tmp_path / "a.csv", ds)
    back = load_csv(tmp_path / "a.csv")
    assert back.feature_names == ("u", "v")
    assert back.raw[0, 0] == 0.1


# ---------------------------------------------------------------- dataset invariants


def test_mask_must_be_binary():
    with pytest.raises(ShapeError):
        MaskedDataset(np.zeros((2, 2)), np.array([[0, 2], [1, 1]]))


def test_observed_entries_must_be_finite():
    with pytest.raises(ShapeError):
        MaskedDataset(np.array([[np.nan, 1.0]]), np.ones((1, 2)))


def test_missing_cells_hold_sentinel():
    ds = MaskedDataset(np.array([[1.0, 2.0]]), np.array([[1, 0]]))
    assert np.isnan(ds.raw[0, 1])


# ---------------------------------------------------------------- standardization


def test_two_point_column_maps_to_plus_minus_one():
    ds = MaskedDataset(np.array([[2.0], [4.0], [np.nan]]), np.array([[1], [1], [0]]))
    z, s = standardize(ds)
    assert z.raw[:2, 0].tolist() == [-1.0, 1.0]
    assert s.std[0] == 1.0 and s.mean[0] == 3.0


def test_already_standardized_is_unchanged():
    x = np.array([[-1.0, 1.0], [1.0, -1.0]])
    z, _ = standardize(MaskedDataset(x, np.ones_like(x)))
    np.testing.assert_allclose(z.raw, x, atol=1e-10)


def test_observed_moments_after_standardization():
    r = np.random.default_rng(0)
    x = r.normal(5, 3, size=(500, 4))
    mask = r.random(x.shape) > 0.3
    z, _ = standardize(MaskedDataset(x, mask))
    for j in range(4):
        col = z.raw[mask[:, j], j]
        assert abs(col.mean()) < 1e-10 and abs(col.std() - 1.0) < 1e-10
    assert np.array_equal(z.mask, mask)


def test_constant_feature_rejected_by_name():
    ds = MaskedDataset(np.array([[1.0, 1.0], [2.0, 1.0]]), np.ones((2, 2)), ("a", "flat"))
    with pytest.raises(PreprocessingError, match="flat"):
        standardize(ds)


def test_fully_missing_feature_rejected():
    ds = MaskedDataset(np.array([[1.0, np.nan], [2.0, np.nan]]), np.array([[1, 0], [1, 0]]))
    with pytest.raises(PreprocessingError, match="column 1"):
        standardize(ds)


@given(arrays(np.float64, (20, 3), elements=st.floats(-1e3, 1e3)), st.data())
@settings(max_examples=40, deadline=None)
def test_standardizer_round_trip(x, data):
    mask = data.draw(arrays(bool, x.shape))
    mask[:3] = True
    ds = MaskedDataset(x, mask)
    try:
        s = Standardizer.fit(ds)
    except PreprocessingError:
        return
    back = s.inverse(s.transform(x))
    np.testing.assert_allclose(back[mask], x[mask], atol=1e-10, rtol=1e-10)


# ---------------------------------------------------------------- initial imputation


def test_full_mask_copies_raw_bit_exactly():
    x = np.random.default_rng(1).normal(size=(10, 3))
    st0 = initial_impute(MaskedDataset(x, np.ones_like(x)), "normal", Rng(0))
    assert st0.x.tobytes() == x.tobytes()
    assert st0.iteration == 0


def test_mean_strategy_on_standardized_data_fills_zero():
    r = np.random.default_rng(2)
    x = r.normal(3, 2, size=(200, 3))
    z, _ = standardize(MaskedDataset(x, r.random(x.shape) > 0.4))
    st0 = initial_impute(z, "mean")
    assert np.all(np.abs(st0.x[~z.mask]) < 1e-12)


def test_normal_fill_mean_clt():
    x = np.zeros((10_000, 2))
    mask = np.zeros_like(x, dtype=bool)
    mask[:, 0] = True
    st0 = initial_impute(MaskedDataset(x, mask), "normal", Rng(3))
    fills = st0.x[:, 1]
    # sd of the mean of 1e4 N(0,1) draws is 0.01
    assert abs(fills.mean()) < 0.05
    assert abs(fills.std() - 1.0) < 0.05


def test_uniform_fill_range():
    x = np.zeros((500, 2))
    mask = np.zeros_like(x, dtype=bool)
    st0 = initial_impute(MaskedDataset(x, mask), "uniform", Rng(4))
    assert st0.x.min() >= 0 and st0.x.max() < 1


@pytest.mark.parametrize("strategy", ["normal", "uniform", "mean"])
def test_initial_state_is_pinned(strategy):
    r = np.random.default_rng(5)
    x = r.normal(size=(50, 3))
    mask = r.random(x.shape) > 0.5
    mask[:2] = True
    st0 = initial_impute(MaskedDataset(x, mask), strategy, Rng(6))
    assert st0.pinning_holds()
    assert np.all(np.isfinite(st0.x))


def test_state_is_immutable():
    st0 = ImputationState(np.zeros((2, 2)), np.ones((2, 2)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        st0.x[0, 0] = 1.0


def test_pinning_detects_change():
    x = np.array([[1.0, 2.0]])
    moved = np.array([[1.0, np.nextafter(2.0, 3.0)]])
    st0 = ImputationState(moved, np.array([[True, True]]), x)
    assert not st0.pinning_holds()
