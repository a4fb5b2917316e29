"""Head-related transfer functions: containers, analytic models and
SH-domain interpolation.

The head frame matches the room frame conventions used everywhere else:
the head faces +x and the interaural axis is +/-y, left ear on +y. The
measured-database path of the original experiment is replaced by a small
binary container (BSMH) plus analytic test models, which keeps the whole
pipeline self-verifying.
"""

import struct

import numpy as np
from dataclasses import dataclass, field

from .geometry import Direction, directions_to_arrays
from .sph import num_coeffs, sh_matrix


@dataclass(frozen=True)
class HrtfSet:
    """Direction-indexed ear responses on a one-sided frequency grid.

    left/right hold complex responses of shape (directions, bins). The
    time-domain impulse responses are retained when the set came from (or
    is destined for) a BSMH file.
    """

    directions: tuple
    left: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)
    sample_rate: float
    impulse_responses: tuple = None  # (left (D,T) f32, right (D,T) f32)

    def __post_init__(self):
        if len(self.directions) == 0:
            raise ValueError("direction list is empty")
        if self.left.shape != self.right.shape:
            raise ValueError("left/right response shapes differ")
        if self.left.shape[0] != len(self.directions):
            raise ValueError("response rows do not match direction count")
        if not (np.all(np.isfinite(self.left)) and np.all(np.isfinite(self.right))):
            raise ValueError("non-finite HRTF responses")

    @property
    def num_directions(self):
        return len(self.directions)

    @property
    def num_bins(self):
        return self.left.shape[1]

    def response(self, ear):
        if ear == "left":
            return self.left
        if ear == "right":
            return self.right
        raise ValueError(f"unknown ear {ear!r}")


@dataclass(frozen=True)
class HrtfSHCoefficients:
    """Per-bin SH expansion of an HrtfSet, coefficients shape (C, bins)."""

    order: int
    left: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)
    sample_rate: float

    def __post_init__(self):
        c = num_coeffs(self.order)
        if self.left.shape[0] != c or self.right.shape[0] != c:
            raise ValueError("coefficient count does not match order")

    def truncated(self, order):
        """Drop coefficients above `order` (no-op when order is higher)."""
        if order >= self.order:
            return self
        c = num_coeffs(order)
        return HrtfSHCoefficients(order=order, left=self.left[:c],
                                  right=self.right[:c],
                                  sample_rate=self.sample_rate)


def point_receiver_hrtf(ear_offset, grid, directions):
    """Analytic test model: each ear is an omni point receiver at
    +/- ear_offset on the y axis.

    h(f, d) = exp(+i k r_ear . u(d)), unit magnitude everywhere; the two
    ears are complex conjugates of each other since r_left = -r_right.
    """
    if ear_offset <= 0:
        raise ValueError("ear_offset must be positive")
    th, ph = directions_to_arrays(directions)
    uy = np.sin(th) * np.sin(ph)  # only the y component reaches the phase
    ks = grid.wavenumbers()
    phase = np.outer(uy, ks) * ear_offset
    left = np.exp(1j * phase)
    return HrtfSet(directions=tuple(directions), left=left,
                   right=np.conj(left), sample_rate=grid.sample_rate)


def flat_hrtf(grid, directions):
    """Unit response at every bin and direction, both ears."""
    ones = np.ones((len(directions), grid.num_bins), dtype=complex)
    return HrtfSet(directions=tuple(directions), left=ones, right=ones.copy(),
                   sample_rate=grid.sample_rate)


def sh_fit(hrtf_set, order):
    """Least-squares SH expansion per bin, both ears.

    Needs at least (order+1)^2 directions; an underdetermined fit is an
    error rather than a silently regularized guess.
    """
    c = num_coeffs(order)
    d = hrtf_set.num_directions
    if d < c:
        raise ValueError(
            f"SH fit of order {order} needs >= {c} directions, got {d}")
    y = sh_matrix(order, hrtf_set.directions)
    yinv = np.linalg.pinv(y)
    return HrtfSHCoefficients(order=order, left=yinv @ hrtf_set.left,
                              right=yinv @ hrtf_set.right,
                              sample_rate=hrtf_set.sample_rate)


def evaluate_sh(coeffs, targets):
    """Evaluate SH coefficients at target directions -> HrtfSet."""
    y = sh_matrix(coeffs.order, targets)
    return HrtfSet(directions=tuple(targets), left=y @ coeffs.left,
                   right=y @ coeffs.right, sample_rate=coeffs.sample_rate)


def sh_interpolate(hrtf_set, order, targets):
    """Fit at `order`, then evaluate at `targets`.

    Exact reproduction (to solver precision) when targets coincide with the
    source grid and the fit is exactly determined.
    """
    return evaluate_sh(sh_fit(hrtf_set, order), targets)


# ---------------------------------------------------------------- BSMH io

_MAGIC = b"BSMH"
_VERSION = 1


def save_hrtf(path, directions, left_ir, right_ir, sample_rate):
    """Write a BSMH container from time-domain impulse responses."""
    left_ir = np.ascontiguousarray(left_ir, dtype="<f4")
    right_ir = np.ascontiguousarray(right_ir, dtype="<f4")
    if left_ir.shape != right_ir.shape or left_ir.ndim != 2:
        raise ValueError("impulse responses must share a (directions, taps) shape")
    count, ir_length = left_ir.shape
    if count != len(directions):
        raise ValueError("direction count does not match IR rows")
    th, ph = directions_to_arrays(directions)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIII", _VERSION, int(sample_rate), count, ir_length))
        table = np.empty((count, 2), dtype="<f8")
        table[:, 0] = th
        table[:, 1] = ph
        fh.write(table.tobytes())
        fh.write(left_ir.tobytes())
        fh.write(right_ir.tobytes())


def load_hrtf(path, fft_size=None):
    """Read a BSMH container.

    Responses are the rFFT of each impulse response, zero-padded to
    fft_size (default: the IR length, rounded up to even).
    """
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except FileNotFoundError:
        raise FileNotFoundError(f"HRTF file not found: {path}")
    if len(blob) < 20 or blob[:4] != _MAGIC:
        raise ValueError(f"{path}: not a BSMH container (bad magic)")
    version, rate, count, ir_length = struct.unpack("<IIII", blob[4:20])
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported BSMH version {version}")
    if count == 0 or ir_length == 0:
        raise ValueError(f"{path}: malformed header (empty set)")
    pos = 20
    table = np.frombuffer(blob, dtype="<f8", count=2 * count, offset=pos)
    pos += table.nbytes
    per_ear = count * ir_length
    tail = (len(blob) - pos) // 4
    if tail < 2 * per_ear:
        raise ValueError(
            f"{path}: left/right IR blocks truncated or mismatched "
            f"(expected 2 x {count} directions x {ir_length} taps)")
    irs = np.frombuffer(blob, dtype="<f4", count=2 * per_ear, offset=pos)
    left_ir = irs[:per_ear].reshape(count, ir_length)
    right_ir = irs[per_ear:].reshape(count, ir_length)
    directions = tuple(Direction(t, p) for t, p in table.reshape(count, 2))
    if fft_size is None:
        fft_size = ir_length + (ir_length % 2)
    if fft_size < ir_length:
        raise ValueError("fft_size shorter than the impulse responses")
    left = np.fft.rfft(left_ir, n=fft_size, axis=1)
    right = np.fft.rfft(right_ir, n=fft_size, axis=1)
    return HrtfSet(directions=directions, left=left, right=right,
                   sample_rate=float(rate),
                   impulse_responses=(left_ir, right_ir))
