"""Ear response models, their SH expansion and the IR container."""

import numpy as np
import pytest

from bsmrender.geometry import Direction, FrequencyGrid, directions_to_arrays
from bsmrender.hrtf import (
    HrtfSet,
    evaluate_sh,
    flat_hrtf,
    load_hrtf,
    point_receiver_hrtf,
    save_hrtf,
    sh_fit,
    sh_interpolate,
)
from bsmrender.sph import spiral_grid

GRID = FrequencyGrid.from_fft(48000, 512)


def test_point_receiver_dc_is_unity():
    hs = point_receiver_hrtf(0.0875, GRID, spiral_grid(16))
    np.testing.assert_array_equal(hs.left[:, 0], 1.0)
    np.testing.assert_array_equal(hs.right[:, 0], 1.0)


def test_point_receiver_quarter_wave_phase():
    # source on +y, offset 0.1 m: left ear leads by k*e = pi/2 -> response i
    offset = 0.1
    f = GRID.speed_of_sound / (4 * offset)  # k * offset = pi/2
    # rebuild a grid whose Nyquist covers f and that contains it exactly
    grid = FrequencyGrid(4 * f, np.array([0.0, f, 2 * f]))
    hs = point_receiver_hrtf(offset, grid, [Direction(np.pi / 2, np.pi / 2)])
    np.testing.assert_allclose(hs.left[0, 1], 1j, atol=1e-12)
    np.testing.assert_allclose(hs.right[0, 1], -1j, atol=1e-12)


def test_point_receiver_ears_are_conjugate():
    hs = point_receiver_hrtf(0.0875, GRID, spiral_grid(32))
    np.testing.assert_array_equal(hs.right, np.conj(hs.left))
    np.testing.assert_allclose(np.abs(hs.left), 1.0, atol=1e-12)


def test_point_receiver_rejects_bad_offset():
    with pytest.raises(ValueError):
        point_receiver_hrtf(0.0, GRID, spiral_grid(4))
    with pytest.raises(ValueError):
        point_receiver_hrtf(-0.1, GRID, spiral_grid(4))


def test_flat_hrtf_is_ones():
    hs = flat_hrtf(GRID, spiral_grid(8))
    np.testing.assert_array_equal(hs.left, 1.0)
    np.testing.assert_array_equal(hs.right, 1.0)


def test_hrtf_set_validation():
    dirs = spiral_grid(4)
    good = np.ones((4, GRID.num_bins), complex)
    with pytest.raises(ValueError):
        HrtfSet(directions=(), left=good[:0], right=good[:0],
                sample_rate=48000)
    with pytest.raises(ValueError):
        HrtfSet(directions=tuple(dirs), left=good, right=good[:3],
                sample_rate=48000)
    with pytest.raises(ValueError):
        HrtfSet(directions=tuple(dirs), left=good * np.nan, right=good,
                sample_rate=48000)
    hs = HrtfSet(directions=tuple(dirs), left=good, right=2 * good,
                 sample_rate=48000)
    np.testing.assert_array_equal(hs.response("right"), 2 * good)
    with pytest.raises(ValueError):
        hs.response("middle")


def test_sh_fit_reproduces_fit_grid():
    # enough coefficients for an exact interpolatory fit on the sample grid
    dirs = spiral_grid(36)
    hs = point_receiver_hrtf(0.0875, GRID, dirs)
    coeffs = sh_fit(hs, 5)  # 36 coefficients for 36 directions
    back = evaluate_sh(coeffs, dirs)
    np.testing.assert_allclose(back.left, hs.left, atol=1e-8)
    np.testing.assert_allclose(back.right, hs.right, atol=1e-8)


def test_sh_fit_generalizes_to_held_out_directions():
    # the truncation order must track kr, so judge only bins below 2 kHz
    # (kr < 3.3 for the 0.0875 m offset) where order 12 is plenty
    fit_dirs = spiral_grid(400)
    test_dirs = spiral_grid(37)
    hs = point_receiver_hrtf(0.0875, GRID, fit_dirs)
    coeffs = sh_fit(hs, 12)
    got = evaluate_sh(coeffs, test_dirs)
    want = point_receiver_hrtf(0.0875, GRID, test_dirs)
    low = GRID.bin_frequencies <= 2000.0
    np.testing.assert_allclose(got.left[:, low], want.left[:, low], atol=1e-4)
    np.testing.assert_allclose(got.right[:, low], want.right[:, low],
                               atol=1e-4)


def test_sh_fit_residual_shrinks_with_order():
    fit_dirs = spiral_grid(400)
    targets = spiral_grid(25)
    hs = point_receiver_hrtf(0.0875, GRID, fit_dirs)
    want = point_receiver_hrtf(0.0875, GRID, targets)
    low = GRID.bin_frequencies <= 4000.0  # kr up to ~6.4
    errs = []
    for order in (2, 6, 10):
        got = evaluate_sh(sh_fit(hs, order), targets)
        errs.append(np.abs(got.left[:, low] - want.left[:, low]).max())
    assert errs[0] > errs[1] > errs[2]


def test_sh_fit_requires_enough_directions():
    hs = point_receiver_hrtf(0.0875, GRID, spiral_grid(8))
    with pytest.raises(ValueError):
        sh_fit(hs, 3)  # 16 coefficients, 8 directions


def test_truncated_coefficients():
    hs = point_receiver_hrtf(0.0875, GRID, spiral_grid(100))
    coeffs = sh_fit(hs, 6)
    low = coeffs.truncated(2)
    assert low.order == 2
    np.testing.assert_array_equal(low.left, coeffs.left[:9])
    assert coeffs.truncated(9).order == 6  # never padded upwards


def test_sh_interpolate_linearity():
    dirs = spiral_grid(64)
    targets = spiral_grid(5)
    rng = np.random.default_rng(4)
    a = rng.standard_normal((64, GRID.num_bins)) + 0j
    b = rng.standard_normal((64, GRID.num_bins)) + 0j
    mk = lambda arr: HrtfSet(directions=tuple(dirs), left=arr, right=arr,
                             sample_rate=48000)
    one = sh_interpolate(mk(a + 2 * b), 5, targets)
    two_a = sh_interpolate(mk(a), 5, targets)
    two_b = sh_interpolate(mk(b), 5, targets)
    np.testing.assert_allclose(one.left, two_a.left + 2 * two_b.left,
                               atol=1e-10)


def test_ir_container_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    dirs = spiral_grid(6)
    left = rng.standard_normal((6, 64)).astype(np.float32)
    right = rng.standard_normal((6, 64)).astype(np.float32)
    path = tmp_path / "set.bsmh"
    save_hrtf(path, dirs, left, right, 48000)
    hs = load_hrtf(path)
    assert hs.num_directions == 6
    assert hs.sample_rate == 48000
    np.testing.assert_array_equal(hs.impulse_responses[0], left)
    th, ph = directions_to_arrays(dirs)
    got_th, got_ph = directions_to_arrays(hs.directions)
    np.testing.assert_allclose(got_th, th, atol=1e-12)
    np.testing.assert_allclose(got_ph, ph, atol=1e-12)
    # spectra are plain transforms of the stored IRs
    np.testing.assert_allclose(hs.left, np.fft.rfft(left, 64, axis=1),
                               atol=1e-5)


def test_identity_impulse_gives_flat_response(tmp_path):
    dirs = spiral_grid(3)
    ir = np.zeros((3, 64), np.float32)
    ir[:, 0] = 1.0
    path = tmp_path / "flat.bsmh"
    save_hrtf(path, dirs, ir, ir, 48000)
    hs = load_hrtf(path, fft_size=128)
    assert hs.num_bins == 65
    np.testing.assert_allclose(hs.left, 1.0, atol=1e-7)
    np.testing.assert_allclose(hs.right, 1.0, atol=1e-7)


def test_ir_container_errors(tmp_path):
    dirs = spiral_grid(3)
    ir = np.zeros((3, 16), np.float32)
    with pytest.raises(ValueError):
        save_hrtf(tmp_path / "x.bsmh", dirs, ir, ir[:, :8], 48000)
    with pytest.raises(ValueError):
        save_hrtf(tmp_path / "x.bsmh", spiral_grid(2), ir, ir, 48000)
    path = tmp_path / "bad.bsmh"
    path.write_bytes(b"NOPE" + bytes(32))
    with pytest.raises(ValueError):
        load_hrtf(path)
    good = tmp_path / "good.bsmh"
    save_hrtf(good, dirs, ir, ir, 48000)
    with pytest.raises(ValueError):
        load_hrtf(good, fft_size=8)  # shorter than the IRs
