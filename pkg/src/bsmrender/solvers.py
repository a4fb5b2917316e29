"""Per-bin binaural matching filters.

Given the array response V (M x L) to a set of candidate plane waves and
the ear responses h at the same directions, the rendered signal c^H x
should match h^H s for the modeled sources. The general solution weights
by source/noise covariances; the simplified one assumes uncorrelated
equal-power sources and white noise, leaving a single SNR knob:

    c = (V V^H + (1/SNR) I)^{-1} V h*

Above a configurable cutoff the magnitude-least-squares variant trades
phase accuracy for magnitude accuracy, which is the perceptually relevant
quantity at high frequencies.
"""

import json
import struct

import numpy as np
from dataclasses import dataclass, field

from .sph import steering_tensor

COND_CEILING = 1e12
MAGLS_MAX_ITER = 50
MAGLS_PHASE_TOL = 1e-6


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    snr: float = np.inf  # linear power ratio sigma_s^2 / sigma_n^2
    magls_enabled: bool = False
    magls_cutoff_hz: float = 1500.0
    tikhonov_floor: float = 1e-12

    def __post_init__(self):
        if not self.snr > 0:
            raise ValueError("snr must be positive (may be inf)")
        if self.magls_enabled and not self.magls_cutoff_hz > 0:
            raise ValueError("magls_cutoff_hz must be positive when enabled")
        if self.tikhonov_floor < 0:
            raise ValueError("tikhonov_floor must be non-negative")

    def to_dict(self):
        return {"snr": float(self.snr), "magls_enabled": bool(self.magls_enabled),
                "magls_cutoff_hz": float(self.magls_cutoff_hz),
                "tikhonov_floor": float(self.tikhonov_floor)}

    @classmethod
    def from_dict(cls, d):
        return cls(snr=d["snr"], magls_enabled=d["magls_enabled"],
                   magls_cutoff_hz=d["magls_cutoff_hz"],
                   tikhonov_floor=d["tikhonov_floor"])


@dataclass(frozen=True)
class CovarianceModel:
    """Source (L x L) and noise (M x M) covariances, Hermitian PSD."""

    source_cov: np.ndarray = field(repr=False)
    noise_cov: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name, mat in (("source_cov", self.source_cov),
                          ("noise_cov", self.noise_cov)):
            mat = np.asarray(mat)
            scale = max(1.0, np.abs(mat).max())
            if np.abs(mat - mat.conj().T).max() > 1e-12 * scale:
                raise ValueError(f"{name} is not Hermitian")
            eig = np.linalg.eigvalsh(mat)
            if eig.min() < -1e-10 * max(eig.max(), 1e-300):
                raise ValueError(f"{name} is not positive semidefinite")


def _regularized_inverse_apply(a, rhs, context=""):
    """Solve a @ x = rhs for Hermitian PSD a, guarding conditioning."""
    eig = np.linalg.eigvalsh(a)
    lo, hi = eig[0], eig[-1]
    cond = np.inf if lo <= 0 else hi / lo
    if cond > COND_CEILING:
        raise SolverError(
            f"system is ill-conditioned{context}: condition estimate {cond:.3e}")
    return np.linalg.solve(a, rhs)


def _check_finite(**arrays):
    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            raise SolverError(f"non-finite values in {name}")


def solve_general(v, cov, h):
    """Covariance-weighted solution (V R_s V^H + R_n)^{-1} V R_s h*."""
    v = np.asarray(v, dtype=complex)
    h = np.asarray(h, dtype=complex)
    _check_finite(v=v, h=h)
    vrs = v @ cov.source_cov
    a = vrs @ v.conj().T + cov.noise_cov
    return _regularized_inverse_apply(a, vrs @ np.conj(h))


def _ls_system(v, snr, tikhonov_floor):
    m = v.shape[0]
    a = v @ v.conj().T
    if np.isinf(snr):
        reg = tikhonov_floor * np.trace(a).real / m
    else:
        reg = 1.0 / snr
    return a + reg * np.eye(m)


def solve_ls(v, h, snr, tikhonov_floor=1e-12):
    """Uncorrelated-sources solution (V V^H + (1/SNR) I)^{-1} V h*.

    snr=inf keeps a tiny trace-scaled Tikhonov term so the solve stays
    well posed; with M >= L and full column rank this reproduces h*
    exactly (push-through identity).
    """
    v = np.asarray(v, dtype=complex)
    h = np.asarray(h, dtype=complex)
    _check_finite(v=v, h=h)
    # the regularized system is invertible by construction, so no
    # conditioning gate here (unlike solve_general): rank-deficient VV^H
    # plus the floor is the intended overdetermined regime, not an error
    a = _ls_system(v, snr, tikhonov_floor)
    return np.linalg.solve(a, v @ np.conj(h))


def solve_magls(v, h, snr, phase_init=None, tikhonov_floor=1e-12):
    """Magnitude least squares via iterated phase substitution.

    Alternates between the phase of the current response V^H c and an LS
    solve against a target with that phase and the wanted magnitude |h|.
    Each solve targets |h| exp(+i phase) in the matched (conjugated)
    domain, which makes the iteration a descent on the magnitude error;
    seeding with the previous bin's filter keeps phases continuous along
    frequency. Deterministic: fixed iteration cap, early exit once the
    largest phase change drops below MAGLS_PHASE_TOL.
    """
    v = np.asarray(v, dtype=complex)
    h = np.asarray(h, dtype=complex)
    _check_finite(v=v, h=h)
    a = _ls_system(v, snr, tikhonov_floor)
    c = np.asarray(phase_init, dtype=complex) if phase_init is not None \
        else np.linalg.solve(a, v @ np.conj(h))
    mag = np.abs(h)
    phase = np.angle(v.conj().T @ c)
    for _ in range(MAGLS_MAX_ITER):
        c = np.linalg.solve(a, v @ np.conj(mag * np.exp(-1j * phase)))
        new_phase = np.angle(v.conj().T @ c)
        step = np.abs(np.angle(np.exp(1j * (new_phase - phase))))
        phase = new_phase
        if step.max() < MAGLS_PHASE_TOL:
            break
    return c


@dataclass(frozen=True)
class BsmFilterBank:
    """Filters per bin and ear, shape (bins, M), plus design provenance."""

    left: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)
    tag: str
    config: SolverConfig
    sample_rate: float
    fft_size: int

    def __post_init__(self):
        if self.left.shape != self.right.shape or self.left.ndim != 2:
            raise ValueError("left/right coefficient shapes must match (bins, M)")
        if self.tag not in ("direct", "reverberant", "whole-field"):
            raise ValueError(f"unknown filter bank tag {self.tag!r}")
        if not (np.all(np.isfinite(self.left)) and np.all(np.isfinite(self.right))):
            raise ValueError("non-finite filter coefficients")
        if self.left.shape[0] != self.fft_size // 2 + 1:
            raise ValueError("bin count does not match fft_size")

    @property
    def num_bins(self):
        return self.left.shape[0]

    @property
    def num_mics(self):
        return self.left.shape[1]


def design_filterbank(geom, grid, doas, hrtf_at_doas, config, tag):
    """Design one filter bank over every bin of `grid`.

    hrtf_at_doas must provide ear responses at exactly the given DOAs (row
    l belongs to doas[l]). Below the MagLS cutoff (and always at bin 0)
    the plain LS solve is used; above it, MagLS seeded with the previous
    bin's filter.
    """
    if len(doas) != hrtf_at_doas.num_directions:
        raise ValueError("hrtf_at_doas does not cover the DOA list")
    if hrtf_at_doas.num_bins != grid.num_bins:
        raise ValueError("hrtf bin count does not match the frequency grid")
    if config.magls_enabled and config.magls_cutoff_hz > grid.bin_frequencies[-1]:
        raise ValueError("magls_cutoff_hz above Nyquist")
    vs = steering_tensor(grid, geom, doas)  # (bins, M, L)
    m = geom.num_mics
    banks = {}
    for ear in ("left", "right"):
        h_all = hrtf_at_doas.response(ear)  # (L, bins)
        coeffs = np.empty((grid.num_bins, m), dtype=complex)
        prev = None
        for b, f in enumerate(grid.bin_frequencies):
            v = vs[b]
            h = h_all[:, b]
            try:
                use_magls = (config.magls_enabled and b > 0
                             and f >= config.magls_cutoff_hz)
                if use_magls:
                    c = solve_magls(v, h, config.snr, phase_init=prev,
                                    tikhonov_floor=config.tikhonov_floor)
                else:
                    c = solve_ls(v, h, config.snr,
                                 tikhonov_floor=config.tikhonov_floor)
            except SolverError as err:
                raise SolverError(f"{ear} ear, bin {b} ({f:.1f} Hz): {err}")
            coeffs[b] = c
            prev = c
        banks[ear] = coeffs
    return BsmFilterBank(left=banks["left"], right=banks["right"], tag=tag,
                         config=config, sample_rate=grid.sample_rate,
                         fft_size=(grid.num_bins - 1) * 2)


# ---------------------------------------------------------------- BSMF io

_MAGIC = b"BSMF"
_VERSION = 1


def save_filterbank(path, bank, digest):
    from .containers import _check_digest  # same digest discipline everywhere

    cfg_blob = json.dumps(bank.config.to_dict(), sort_keys=True).encode()
    tag_b = bank.tag.encode("ascii")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIIII", _VERSION, bank.num_mics, bank.num_bins,
                             int(bank.sample_rate), bank.fft_size))
        fh.write(struct.pack("<I", len(tag_b)) + tag_b)
        fh.write(_check_digest(digest))
        fh.write(struct.pack("<I", len(cfg_blob)) + cfg_blob)
        fh.write(np.ascontiguousarray(bank.left, dtype="<c16").tobytes())
        fh.write(np.ascontiguousarray(bank.right, dtype="<c16").tobytes())


def load_filterbank(path):
    from .containers import DIGEST_LEN

    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValueError(f"{path}: not a BSMF container")
    version, m, bins, rate, fft_size = struct.unpack("<IIIII", blob[4:24])
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported BSMF version {version}")
    tag_len = struct.unpack("<I", blob[24:28])[0]
    pos = 28 + tag_len
    tag = blob[28:pos].decode("ascii")
    digest = blob[pos : pos + DIGEST_LEN].decode("ascii")
    pos += DIGEST_LEN
    cfg_len = struct.unpack("<I", blob[pos : pos + 4])[0]
    pos += 4
    config = SolverConfig.from_dict(json.loads(blob[pos : pos + cfg_len]))
    pos += cfg_len
    count = bins * m
    flat = np.frombuffer(blob[pos:], dtype="<c16")
    if flat.size != 2 * count:
        raise ValueError(f"{path}: truncated coefficient payload")
    bank = BsmFilterBank(left=flat[:count].reshape(bins, m).copy(),
                         right=flat[count:].reshape(bins, m).copy(),
                         tag=tag, config=config, sample_rate=float(rate),
                         fft_size=fft_size)
    return bank, digest
