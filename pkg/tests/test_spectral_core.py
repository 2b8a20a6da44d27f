from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dualband.dataset_io import SynthConfig, generate_cube
from dualband.errors import DomainError, LoadError, NumericError, ParameterError, ShapeError
from dualband.spectral_core import (
    CubeKind,
    Hypercube,
    Spectrum,
    WavelengthAxis,
    calibrate,
    instance_mean_spectrum,
    msc,
    msc_correct,
    ndvi,
    ndvi_segment,
    otsu_threshold,
    preprocess_values,
    read_hsc,
    read_spectra_csv,
    savgol,
    savgol_smooth,
    write_hsc,
    write_spectra_csv,
)

AXIS = WavelengthAxis.regular(450, 850, 1.0)


def _cube(data, kind=CubeKind.RAW, axis=None):
    data = np.asarray(data, dtype=np.float32)
    axis = axis or WavelengthAxis.linspace(500, 900, data.shape[2])
    return Hypercube(data, axis, kind)


# --- wavelength axis -------------------------------------------------------

def test_axis_regular_has_expected_length():
    assert len(AXIS) == 401
    assert AXIS.lo == 450 and AXIS.hi == 850


@pytest.mark.parametrize("values", [[500, 500, 600], [600, 500], [50, 60, 70], [2900, 3100]])
def test_axis_rejects_bad_values(values):
    with pytest.raises(ParameterError):
        WavelengthAxis(np.array(values, dtype=float))


def test_nearest_index_and_range():
    assert AXIS.nearest_index(670.2) == 220
    with pytest.raises(ParameterError):
        AXIS.nearest_index(1200)
    assert AXIS.index_range(510, 670) == (60, 221)


# --- calibration -------------------------------------------------------------

def test_calibrate_white_maps_to_one_and_dark_to_zero(rng):
    dark = rng.uniform(0, 10, (4, 5, 6))
    white = dark + rng.uniform(100, 200, (4, 5, 6))
    W, D = _cube(white), _cube(dark)
    assert np.all(calibrate(_cube(white), W, D).data == 1.0)
    assert np.all(calibrate(_cube(dark), W, D).data == 0.0)


def test_calibrate_matches_formula(rng):
    dark = rng.uniform(0, 10, (3, 3, 8))
    white = dark + rng.uniform(50, 100, (3, 3, 8))
    raw = dark + rng.uniform(0, 1, (3, 3, 8)) * (white - dark)
    out = calibrate(_cube(raw), _cube(white), _cube(dark))
    r32 = [np.asarray(a, dtype=np.float32).astype(np.float64) for a in (raw, white, dark)]
    expected = ((r32[0] - r32[2]) / (r32[1] - r32[2])).astype(np.float32)
    assert np.array_equal(out.data, expected)
    assert out.kind is CubeKind.REFLECTANCE


def test_calibrate_dead_pixels_and_clamp():
    dark = np.zeros((1, 2, 3))
    white = np.ones((1, 2, 3))
    white[0, 0, :] = 0.0  # dead: white == dark
    raw = np.full((1, 2, 3), 5.0)
    out = calibrate(_cube(raw), _cube(white), _cube(dark)).data
    assert np.all(out[0, 0] == 0.0)
    assert np.all(out[0, 1] == 2.0)


def test_calibrate_errors():
    ones = np.ones((2, 2, 3))
    with pytest.raises(DomainError):
        calibrate(_cube(ones, CubeKind.REFLECTANCE), _cube(ones), _cube(0 * ones))
    with pytest.raises(DomainError):
        calibrate(_cube(ones), _cube(0 * ones), _cube(ones))
    with pytest.raises(ShapeError):
        calibrate(_cube(ones), _cube(np.ones((2, 3, 3))), _cube(0 * ones))


# --- MSC -----------------------------------------------------------------------

@given(st.integers(0, 10_000))
def test_msc_idempotent(seed):
    r = np.random.default_rng(seed)
    base = np.sin(np.linspace(0, 3, 50)) + 2
    X = r.uniform(0.5, 2.0, (6, 1)) * base + r.uniform(-0.3, 0.3, (6, 1)) + 0.01 * r.standard_normal((6, 50))
    ref = X.mean(axis=0)
    once = msc(X, ref)
    assert np.max(np.abs(msc(once, ref) - once)) <= 1e-9


def test_msc_removes_affine_scatter():
    ref = np.cos(np.linspace(0, 2, 30)) + 3
    X = np.vstack([a * ref + b for a, b in [(0.5, 0.1), (2.0, -1.0), (1.3, 0.7)]])
    assert np.allclose(msc(X, ref), ref, atol=1e-12)


def test_msc_constant_reference_is_numeric_error():
    with pytest.raises(NumericError):
        msc(np.ones((3, 10)), np.ones(10))


def test_msc_correct_default_reference_is_batch_mean():
    axis = WavelengthAxis.linspace(500, 600, 20)
    r = np.random.default_rng(1)
    spectra = [Spectrum(r.uniform(0, 1, 20), axis) for _ in range(4)]
    out = msc_correct(spectra)
    expected = msc(np.vstack([s.values for s in spectra]))
    assert np.array_equal(np.vstack([s.values for s in out]), expected)


# --- Savitzky-Golay ------------------------------------------------------------

def _poly_oracle(y, window, order):
    """Local least-squares polynomial fit evaluated at each interior centre."""
    half = window // 2
    out = np.full_like(y, np.nan)
    t = np.arange(-half, half + 1, dtype=float)
    A = np.vander(t, order + 1)
    for i in range(half, y.size - half):
        coef, *_ = np.linalg.lstsq(A, y[i - half:i + half + 1], rcond=None)
        out[i] = coef[-1]
    return out


@given(arrays(np.float64, 3, elements=st.floats(-2, 2)), st.sampled_from([0, 1, 2]))
def test_savgol_reproduces_low_order_polynomials(coefs, degree):
    x = np.linspace(-1, 1, 60)
    y = np.polyval(coefs[: degree + 1], x)
    sm = savgol(y, 11, 2)
    assert np.max(np.abs(sm[5:-5] - y[5:-5])) <= 1e-9


def test_savgol_matches_least_squares_oracle(rng):
    y = rng.standard_normal(80)
    ref = _poly_oracle(y, 11, 2)
    assert np.max(np.abs(savgol(y)[5:-5] - ref[5:-5])) <= 1e-9


def test_savgol_parameter_checks():
    with pytest.raises(ParameterError):
        savgol(np.zeros(20), 10, 2)
    with pytest.raises(ParameterError):
        savgol(np.zeros(20), 5, 5)
    with pytest.raises(ParameterError):
        savgol(np.zeros(7), 11, 2)


def test_savgol_smooth_keeps_axis():
    axis = WavelengthAxis.linspace(500, 600, 30)
    s = Spectrum(np.arange(30.0), axis)
    out = savgol_smooth(s)
    assert out.axis == axis
    # mirror padding bends a ramp at the edges; interior points are exact
    assert np.allclose(out.values[5:-5], s.values[5:-5], atol=1e-12)
    assert out.values[0] != s.values[0]


def test_preprocess_order_is_msc_then_savgol(rng):
    X = rng.uniform(0.1, 1, (5, 40))
    assert np.array_equal(preprocess_values(X), savgol(msc(X)))
    assert np.array_equal(preprocess_values(X, use_msc=False, use_savgol=False), X)


# --- segmentation --------------------------------------------------------------

def _otsu_oracle(values, bins=64):
    """Brute-force: try every bin edge and keep the max between-class variance."""
    counts, edges = np.histogram(values, bins=bins, range=(values.min(), values.max()))
    centers = 0.5 * (edges[:-1] + edges[1:])
    best, best_t = -1.0, None
    n = counts.sum()
    for t in range(bins - 1):
        c0, c1 = counts[: t + 1], counts[t + 1:]
        w0, w1 = c0.sum() / n, c1.sum() / n
        if w0 == 0 or w1 == 0:
            continue
        m0 = (c0 * centers[: t + 1]).sum() / c0.sum()
        m1 = (c1 * centers[t + 1:]).sum() / c1.sum()
        var = w0 * w1 * (m0 - m1) ** 2
        if var > best + 1e-15:
            best, best_t = var, edges[t + 1]
    return best_t


@given(st.integers(0, 5000))
def test_otsu_matches_brute_force(seed):
    r = np.random.default_rng(seed)
    v = np.concatenate([r.normal(-0.3, 0.1, 300), r.normal(0.5, 0.15, 200)])
    assert otsu_threshold(v) == pytest.approx(_otsu_oracle(v), abs=1e-12)


def test_otsu_flat_histogram_is_none():
    assert otsu_threshold(np.full(100, 0.3)) is None


def test_ndvi_segment_recovers_generator_mask():
    cfg = SynthConfig(classes=7, seed=2)
    cube, truth = generate_cube(cfg, 1, 5, 40, 60)
    mask = ndvi_segment(cube)
    assert np.array_equal(mask, truth > 0)


def test_ndvi_segment_flat_cube_is_all_background():
    cube = _cube(np.ones((5, 5, 30)), CubeKind.REFLECTANCE, WavelengthAxis.linspace(600, 850, 30))
    assert not ndvi_segment(cube).any()


def test_ndvi_values():
    axis = WavelengthAxis(np.array([670.0, 800.0]))
    data = np.zeros((1, 2, 2))
    data[0, 0] = [0.1, 0.5]
    data[0, 1] = [0.4, 0.2]
    v = ndvi(_cube(data, CubeKind.REFLECTANCE, axis))
    assert v[0, 0] == pytest.approx(0.4 / (0.6 + 1e-6), rel=1e-6)
    assert v[0, 1] < 0


def test_instance_mean_spectrum():
    data = np.zeros((2, 2, 3))
    data[0, 0] = [1, 2, 3]
    data[1, 1] = [3, 4, 5]
    mask = np.array([[True, False], [False, True]])
    s = instance_mean_spectrum(_cube(data, CubeKind.REFLECTANCE), mask)
    assert np.array_equal(s.values, [2, 3, 4])
    with pytest.raises(DomainError):
        instance_mean_spectrum(_cube(data, CubeKind.REFLECTANCE), np.zeros((2, 2), bool))


# --- I/O -------------------------------------------------------------------------

def test_hsc_round_trip_is_bitwise(tmp_path, rng):
    cube = _cube(rng.uniform(0, 1, (3, 4, 7)), CubeKind.REFLECTANCE)
    write_hsc(tmp_path / "c.hsc", cube)
    back = read_hsc(tmp_path / "c.hsc")
    assert np.array_equal(back.data, cube.data)
    assert back.axis == cube.axis and back.kind is cube.kind


def test_hsc_truncated_is_load_error(tmp_path, rng):
    cube = _cube(rng.uniform(0, 1, (3, 4, 7)))
    write_hsc(tmp_path / "c.hsc", cube)
    raw = (tmp_path / "c.hsc").read_bytes()
    (tmp_path / "c.hsc").write_bytes(raw[:-4])
    with pytest.raises(LoadError):
        read_hsc(tmp_path / "c.hsc")
    (tmp_path / "x.hsc").write_text("nonsense\n")
    with pytest.raises(LoadError):
        read_hsc(tmp_path / "x.hsc")


def test_spectra_csv_round_trip(tmp_path, rng):
    axis = WavelengthAxis.linspace(500, 520, 5)
    vals = rng.standard_normal((3, 5))
    write_spectra_csv(tmp_path / "s.csv", ["a", "b", "c"], vals, axis)
    labels, back, ax = read_spectra_csv(tmp_path / "s.csv")
    assert labels == ["a", "b", "c"]
    assert np.array_equal(back, vals) and ax == axis


def test_hypercube_rejects_axis_mismatch():
    with pytest.raises(ShapeError):
        Hypercube(np.zeros((2, 2, 3), np.float32), WavelengthAxis.linspace(500, 600, 4))
