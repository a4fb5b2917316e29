"""Spherical harmonics, nearly uniform sphere sampling and steering vectors.

Complex spherical harmonics with the Condon-Shortley phase throughout,
ordered by (n, m) with m = -n..n, so index = n^2 + n + m. The same
convention backs steering vectors, HRTF interpolation and the plane-wave
encoding of the simulator; do not mix in real-valued harmonics.

Plane-wave phase convention: a unit plane wave arriving from direction u
(unit vector pointing from the origin towards the source) is observed at
position r as exp(+i k r.u). Time delays therefore map to exp(-i 2 pi f tau)
in the rFFT spectrum.
"""

import numpy as np
from scipy import special

from .geometry import Direction, directions_to_arrays, sph_to_cart

try:
    from scipy.special import sph_harm_y as _sph_harm_y
except ImportError:  # scipy < 1.15 spells it sph_harm(m, n, phi, theta)
    def _sph_harm_y(n, m, theta, phi):
        return special.sph_harm(m, n, phi, theta)


def num_coeffs(order):
    return (order + 1) ** 2


def sh_degrees(order):
    """(n, m) index arrays for the flat coefficient ordering."""
    n = np.repeat(np.arange(order + 1), 2 * np.arange(order + 1) + 1)
    m = np.concatenate([np.arange(-k, k + 1) for k in range(order + 1)])
    return n, m


def sh_basis(order, d):
    """Y_n^m(theta, phi) for one Direction, flat (order+1)^2 vector."""
    if order < 0:
        raise ValueError("order must be >= 0")
    return sh_matrix(order, [d])[0]


def sh_matrix(order, directions):
    """Rows of SH values for a list (or array pair) of directions.

    Returns complex array of shape (len(directions), (order+1)^2).
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    if isinstance(directions, tuple) and len(directions) == 2:
        th, ph = np.asarray(directions[0], float), np.asarray(directions[1], float)
    else:
        th, ph = directions_to_arrays(directions)
    out = np.empty((th.size, num_coeffs(order)), dtype=complex)
    idx = 0
    for n in range(order + 1):
        for m in range(-n, n + 1):
            out[:, idx] = _sph_harm_y(n, m, th, ph)
            idx += 1
    return out


def spiral_grid(num_points):
    """Deterministic nearly uniform sphere sampling (golden-angle spiral).

    Midpoint rule on z keeps the poles free: z_i = 1 - (2i+1)/L, with the
    azimuth advancing by the golden angle pi*(3 - sqrt(5)). L=1 degenerates
    to a single equatorial point.
    """
    if num_points < 1:
        raise ValueError("num_points must be >= 1")
    i = np.arange(num_points)
    z = 1.0 - (2.0 * i + 1.0) / num_points
    theta = np.arccos(np.clip(z, -1.0, 1.0))
    phi = np.mod(i * np.pi * (3.0 - np.sqrt(5.0)), 2.0 * np.pi)
    return [Direction(t, p) for t, p in zip(theta, phi)]


def steering_vector(f, grid, geom, doa):
    """Free-field omni array response to a unit plane wave from `doa`.

    v_m = exp(+i k r_m . u), with r_m the mic position relative to the
    array center and u the unit vector towards the source. Entries have
    unit magnitude by construction.
    """
    k = grid.wavenumber(f)  # rejects negative f
    u = doa.unit_vector()
    proj = geom.local_positions() @ u
    return np.exp(1j * k * proj)


def steering_vector_sh(f, grid, geom, doa, order=None, pad=10):
    """SH-truncated evaluation of the same steering vector.

    Expands the plane wave at each mic radius: 4 pi sum_nm i^n j_n(k r_m)
    Y_nm(mic direction) conj(Y_nm(doa)), truncated at ceil(k r_max) + pad
    unless an explicit order is given. Converges to steering_vector as the
    order grows; used to cross-check the closed form.
    """
    k = grid.wavenumber(f)
    if order is None:
        order = int(np.ceil(k * geom.max_radius)) + pad
    n_idx, _ = sh_degrees(order)
    y_doa = np.conj(sh_basis(order, doa))
    out = np.empty(geom.num_mics, dtype=complex)
    for i, (r, d) in enumerate(geom.mics):
        jn = special.spherical_jn(np.arange(order + 1), k * r)
        y_mic = sh_basis(order, d)
        out[i] = 4.0 * np.pi * np.sum((1j ** n_idx) * jn[n_idx] * y_mic * y_doa)
    return out


def steering_matrix(f, grid, geom, doas):
    """Column-stacked steering vectors, shape (M, L), column l <-> doas[l]."""
    if len(doas) == 0:
        raise ValueError("doas must be non-empty")
    k = grid.wavenumber(f)
    th, ph = directions_to_arrays(doas)
    st = np.sin(th)
    u = np.stack([st * np.cos(ph), st * np.sin(ph), np.cos(th)], axis=0)  # (3, L)
    return np.exp(1j * k * (geom.local_positions() @ u))


def steering_tensor(grid, geom, doas):
    """Steering matrices for every bin at once, shape (bins, M, L).

    Same quantity as steering_matrix looped over grid.bin_frequencies,
    kept vectorized because filter design touches every bin.
    """
    if len(doas) == 0:
        raise ValueError("doas must be non-empty")
    ks = grid.wavenumbers()
    th, ph = directions_to_arrays(doas)
    st = np.sin(th)
    u = np.stack([st * np.cos(ph), st * np.sin(ph), np.cos(th)], axis=0)
    proj = geom.local_positions() @ u  # (M, L)
    return np.exp(1j * ks[:, None, None] * proj[None, :, :])
