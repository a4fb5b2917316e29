"""Shoebox room simulation via the image method, plus scene statistics.

Rendering produces three aligned per-channel signals: the direct path, the
reverberant remainder and their sum, so the measurement decomposition of
the rendering model holds sample-exactly by construction. Plane-wave
reference channels encode every image source into spherical harmonics at
the array center; their arrival directions use the same conventions as the
steering vectors.
"""

import numpy as np
from dataclasses import dataclass, field
from scipy import signal as sps
from scipy import sparse

from .geometry import SPEED_OF_SOUND
from .sph import _sph_harm_y, sh_degrees

SINC_TAPS = 32  # windowed-sinc fractional delay, in-band error < -60 dB
_HALF = SINC_TAPS // 2


@dataclass(frozen=True)
class RoomSpec:
    """Axis-aligned room. reflection_coefficients order:
    (x=0, x=Lx, y=0, y=Ly, z=0, z=Lz)."""

    dimensions: tuple
    reflection_coefficients: tuple
    speed_of_sound: float = SPEED_OF_SOUND
    max_order: int = 64

    def __post_init__(self):
        dims = tuple(float(v) for v in self.dimensions)
        refl = tuple(float(v) for v in self.reflection_coefficients)
        if len(dims) != 3 or any(v <= 0 for v in dims):
            raise ValueError("dimensions must be three positive lengths")
        if len(refl) != 6 or any(not (0.0 <= b < 1.0) for b in refl):
            raise ValueError("need six reflection coefficients in [0, 1)")
        if self.max_order < 0:
            raise ValueError("max_order must be >= 0")
        object.__setattr__(self, "dimensions", dims)
        object.__setattr__(self, "reflection_coefficients", refl)

    @property
    def volume(self):
        lx, ly, lz = self.dimensions
        return lx * ly * lz

    @property
    def surface(self):
        lx, ly, lz = self.dimensions
        return 2.0 * (lx * ly + lx * lz + ly * lz)

    def contains(self, point, margin=0.0):
        return all(margin < p < l - margin
                   for p, l in zip(point, self.dimensions))


@dataclass(frozen=True)
class Scene:
    room: RoomSpec
    source_position: tuple
    source_signal: np.ndarray = field(repr=False)
    sample_rate: int = 48000
    array: object = None  # ArrayGeometry
    noise_snr: float = np.inf
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "source_position",
                           tuple(float(v) for v in self.source_position))
        if not self.room.contains(self.source_position):
            raise ValueError("source must be strictly inside the room")
        if self.array is not None:
            for pos in self.array.room_positions():
                if not self.room.contains(pos):
                    raise ValueError("every microphone must be inside the room")
        if np.asarray(self.source_signal).size == 0:
            raise ValueError("source signal is empty")


@dataclass(frozen=True)
class ImageSourceList:
    """Flat image-source table sorted by delay; row 0 is the direct path."""

    positions: np.ndarray = field(repr=False)
    gains: np.ndarray = field(repr=False)
    delays: np.ndarray = field(repr=False)
    colatitudes: np.ndarray = field(repr=False)
    azimuths: np.ndarray = field(repr=False)
    orders: np.ndarray = field(repr=False)

    @property
    def count(self):
        return self.gains.size


def compute_image_sources(room, source, receiver, max_order, max_delay=None):
    """Enumerate shoebox image sources seen from `receiver`.

    Bounded by reflection order and, when given, by arrival delay. Images
    whose reflection product is exactly zero are dropped (they carry no
    energy), so an anechoic room yields only the direct path.
    """
    source = np.asarray(source, float)
    receiver = np.asarray(receiver, float)
    if not room.contains(source) or not room.contains(receiver):
        raise ValueError("source and receiver must be inside the room")
    dims = np.asarray(room.dimensions)
    beta = np.asarray(room.reflection_coefficients).reshape(3, 2)  # [axis][wall0, wallL]
    c = room.speed_of_sound

    if max_delay is not None:
        reach = c * max_delay
    else:
        # order bound alone: |n| + |n - p| <= order limits |n|
        reach = (max_order / 2.0 + 1.0) * 2.0 * dims.max()

    blocks = []
    for px in (0, 1):
        for py in (0, 1):
            for pz in (0, 1):
                p = np.array([px, py, pz])
                mirrored = (1 - 2 * p) * source
                n_axes = []
                for a in range(3):
                    span = reach + abs(mirrored[a]) + dims[a] + receiver[a]
                    n_max = int(np.ceil(span / (2.0 * dims[a])))
                    n_max = min(n_max, max_order // 2 + 1)
                    n_axes.append(np.arange(-n_max, n_max + 1))
                nx, ny, nz = np.meshgrid(*n_axes, indexing="ij")
                n = np.stack([nx.ravel(), ny.ravel(), nz.ravel()], axis=1)
                order = (np.abs(n - p).sum(axis=1) + np.abs(n).sum(axis=1))
                keep = order <= max_order
                n = n[keep]
                order = order[keep]
                pos = mirrored + 2.0 * n * dims
                diff = pos - receiver
                dist = np.linalg.norm(diff, axis=1)
                delay = dist / c
                if max_delay is not None:
                    keep = delay <= max_delay
                    n, order = n[keep], order[keep]
                    pos, diff, dist, delay = pos[keep], diff[keep], dist[keep], delay[keep]
                refl = np.ones(len(n))
                for a in range(3):
                    refl = refl * beta[a, 0] ** np.abs(n[:, a] - p[a])
                    refl = refl * beta[a, 1] ** np.abs(n[:, a])
                keep = refl > 0.0
                n, order, refl = n[keep], order[keep], refl[keep]
                pos, diff, dist, delay = pos[keep], diff[keep], dist[keep], delay[keep]
                gain = refl / (4.0 * np.pi * dist)
                theta = np.arccos(np.clip(diff[:, 2] / dist, -1.0, 1.0))
                phi = np.mod(np.arctan2(diff[:, 1], diff[:, 0]), 2.0 * np.pi)
                blocks.append((pos, gain, delay, theta, phi, order))

    pos = np.concatenate([b[0] for b in blocks])
    gain = np.concatenate([b[1] for b in blocks])
    delay = np.concatenate([b[2] for b in blocks])
    theta = np.concatenate([b[3] for b in blocks])
    phi = np.concatenate([b[4] for b in blocks])
    order = np.concatenate([b[5] for b in blocks])
    idx = np.argsort(delay, kind="stable")
    return ImageSourceList(positions=pos[idx], gains=gain[idx], delays=delay[idx],
                           colatitudes=theta[idx], azimuths=phi[idx],
                           orders=order[idx])


def _sinc_kernel(frac):
    """Hann-windowed sinc taps for fractional delays, shape (len(frac), 32)."""
    u = (np.arange(SINC_TAPS) - (_HALF - 1))[None, :] - frac[:, None]
    return np.sinc(u) * 0.5 * (1.0 + np.cos(np.pi * u / _HALF))


def render_rir(images, num_samples, sample_rate, weights=None, chunk=131072):
    """Scatter image taps into an impulse response.

    weights (default: the image gains) may be complex, in which case the
    RIR is complex; used by the SH encoder with per-image SH weights.
    """
    if weights is None:
        weights = images.gains
    dtype = complex if np.iscomplexobj(weights) else float
    out = np.zeros((num_samples,) + weights.shape[1:], dtype=dtype)
    for start in range(0, images.count, chunk):
        sl = slice(start, start + chunk)
        d_samp = images.delays[sl] * sample_rate
        base = np.floor(d_samp).astype(np.int64)
        kern = _sinc_kernel(d_samp - base)
        idx = base[:, None] + (np.arange(SINC_TAPS) - (_HALF - 1))
        valid = (idx >= 0) & (idx < num_samples)
        w = weights[sl]
        if w.ndim == 1:
            np.add.at(out, idx[valid], (w[:, None] * kern)[valid])
        else:
            contrib = kern[:, :, None] * w[:, None, :]
            np.add.at(out, idx[valid], contrib[valid])
    return out


def _split_rirs(room, source, receiver, max_order, num_samples, sample_rate):
    """Direct and reverberant RIRs at one receiver (same length)."""
    max_delay = (num_samples - _HALF - 1) / sample_rate
    images = compute_image_sources(room, source, receiver, max_order, max_delay)
    direct = ImageSourceList(**{k: getattr(images, k)[:1] for k in
                                ("positions", "gains", "delays",
                                 "colatitudes", "azimuths", "orders")})
    reverb = ImageSourceList(**{k: getattr(images, k)[1:] for k in
                                ("positions", "gains", "delays",
                                 "colatitudes", "azimuths", "orders")})
    rir_d = render_rir(direct, num_samples, sample_rate)
    rir_r = render_rir(reverb, num_samples, sample_rate)
    return rir_d, rir_r, images


def render_mic_signals(scene, max_order, rir_seconds):
    """Per-mic signals: (full, direct, reverb), each (samples, M) float64.

    full is defined as direct + reverb, so the decomposition identity is
    sample-exact by construction.
    """
    fs = scene.sample_rate
    rir_len = int(round(rir_seconds * fs))
    src = np.asarray(scene.source_signal, float)
    mics = scene.array.room_positions()
    n_out = src.size + rir_len - 1
    direct = np.empty((n_out, len(mics)))
    reverb = np.empty((n_out, len(mics)))
    for m, pos in enumerate(mics):
        rir_d, rir_r, _ = _split_rirs(scene.room, scene.source_position, pos,
                                      max_order, rir_len, fs)
        direct[:, m] = sps.fftconvolve(src, rir_d)
        reverb[:, m] = sps.fftconvolve(src, rir_r)
    return direct + reverb, direct, reverb


def _sh_weights_block(images, order, cols):
    """conj(Y) columns `cols` at the image arrival directions, times gains."""
    n_idx, m_idx = sh_degrees(order)
    out = np.empty((images.count, len(cols)), dtype=complex)
    for j, c in enumerate(cols):
        y = _sph_harm_y(int(n_idx[c]), int(m_idx[c]),
                        images.colatitudes, images.azimuths)
        out[:, j] = np.conj(y)
    return out * images.gains[:, None]


def _delay_matrix(images, num_samples, sample_rate):
    """Sparse (num_samples x images) matrix of windowed-sinc delay taps."""
    d_samp = images.delays * sample_rate
    base = np.floor(d_samp).astype(np.int64)
    kern = _sinc_kernel(d_samp - base)
    rows = base[:, None] + (np.arange(SINC_TAPS) - (_HALF - 1))
    cols = np.broadcast_to(np.arange(images.count)[:, None], rows.shape)
    valid = (rows >= 0) & (rows < num_samples)
    mat = sparse.coo_matrix(
        (kern[valid], (rows[valid], cols[valid])),
        shape=(num_samples, images.count))
    return mat.tocsr()


def render_reference_plane_waves(scene, sh_order, max_order, rir_seconds,
                                 direct_only=False, chunk_channels=32,
                                 out_dtype=np.complex128):
    """Encode every image source as a plane wave into SH channels.

    Arrival directions are taken relative to the array center. Returns the
    SH-domain time signal, shape (samples, (sh_order+1)^2).
    """
    fs = scene.sample_rate
    rir_len = int(round(rir_seconds * fs))
    max_delay = (rir_len - _HALF - 1) / fs
    images = compute_image_sources(scene.room, scene.source_position,
                                   scene.array.center_position,
                                   max_order, max_delay)
    if direct_only:
        images = ImageSourceList(**{k: getattr(images, k)[:1] for k in
                                    ("positions", "gains", "delays",
                                     "colatitudes", "azimuths", "orders")})
    src = np.asarray(scene.source_signal, float)
    n_coeff = (sh_order + 1) ** 2
    n_out = src.size + rir_len - 1
    out = np.empty((n_out, n_coeff), dtype=out_dtype)
    delays = _delay_matrix(images, rir_len, fs)
    for start in range(0, n_coeff, chunk_channels):
        cols = range(start, min(start + chunk_channels, n_coeff))
        w = _sh_weights_block(images, sh_order, cols)
        rir = delays @ np.ascontiguousarray(w.real) \
            + 1j * (delays @ np.ascontiguousarray(w.imag))
        out[:, start : start + len(cols)] = sps.fftconvolve(
            src[:, None], rir, axes=0)
    return out


def add_noise(signals, snr, seed=0):
    """Add white Gaussian noise at the given per-channel SNR (power ratio)."""
    if not snr > 0:
        raise ValueError("snr must be positive")
    if np.isinf(snr):
        return signals
    rng = np.random.default_rng(seed)
    sig = np.asarray(signals, float)
    flat = sig.reshape(sig.shape[0], -1)
    power = np.mean(flat ** 2, axis=0)
    noise = rng.standard_normal(flat.shape) * np.sqrt(power / snr)
    return (flat + noise).reshape(sig.shape)


# ------------------------------------------------------------- statistics

def eyring_t60(room):
    """Eyring reverberation time from the room's reflection coefficients."""
    areas = _wall_areas(room.dimensions)
    absorb = 1.0 - np.asarray(room.reflection_coefficients) ** 2
    mean_abs = float(np.dot(areas, absorb) / areas.sum())
    if mean_abs <= 0:
        return np.inf
    if mean_abs >= 1.0:
        return 0.0
    return 0.161 * room.volume / (-room.surface * np.log(1.0 - mean_abs))


def reflection_for_t60(dimensions, t60):
    """Uniform wall reflection coefficient hitting an Eyring T60 target."""
    lx, ly, lz = dimensions
    volume = lx * ly * lz
    surface = 2.0 * (lx * ly + lx * lz + ly * lz)
    alpha = 1.0 - np.exp(-0.161 * volume / (surface * t60))
    return float(np.sqrt(1.0 - alpha))


def _wall_areas(dimensions):
    lx, ly, lz = dimensions
    return np.array([ly * lz, ly * lz, lx * lz, lx * lz, lx * ly, lx * ly])


def estimate_t60(rir, sample_rate):
    """Schroeder backward integration; line fit on the -5..-25 dB stretch,
    extrapolated by 3 to the 60 dB decay."""
    energy = np.asarray(rir, float) ** 2
    edc = np.cumsum(energy[::-1])[::-1]
    if edc[0] <= 0:
        raise ValueError("silent impulse response")
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(edc / edc[0])
    below5 = np.nonzero(db <= -5.0)[0]
    below25 = np.nonzero(db <= -25.0)[0]
    if not (db.min() <= -45.0) or below25.size == 0:
        raise ValueError("insufficient decay range for a T60 estimate")
    start, stop = below5[0], below25[0]
    if stop - start < 8:
        raise ValueError("insufficient decay range for a T60 estimate")
    t = np.arange(start, stop) / sample_rate
    seg = db[start:stop]
    slope = np.polyfit(t, seg, 1)[0]
    if slope >= 0:
        raise ValueError("energy decay is not monotone")
    return -60.0 / slope


def compute_drr(full_rir, direct_rir):
    """Direct-to-reverberant energy ratio in dB; +inf when anechoic."""
    full = np.asarray(full_rir, float)
    direct = np.asarray(direct_rir, float)
    if full.shape != direct.shape:
        raise ValueError("RIRs must be aligned and equally long")
    e_dir = float(np.sum(direct ** 2))
    e_rev = float(np.sum((full - direct) ** 2))
    if e_rev == 0.0:
        return np.inf
    return 10.0 * np.log10(e_dir / e_rev)


def scene_statistics(scene, max_order, rir_seconds):
    """Scene descriptors: array DRR, measured and predicted T60, direct
    delay and the image count.

    drr_db is the phase-averaged (incoherent) energy ratio summed over the
    microphones: sum of squared image gains, direct against the rest. The
    coherent waveform ratio at the array center is reported separately as
    drr_center_coherent_db; it is systematically lower here because exact
    source/receiver symmetries (shared horizontal plane) create equal-delay
    image pairs that interfere constructively in the rendered RIR, which no
    diffuse-field DRR figure accounts for.
    """
    fs = scene.sample_rate
    rir_len = int(round(rir_seconds * fs))
    max_delay = (rir_len - _HALF - 1) / fs
    center = scene.array.center_position
    rir_d, rir_r, images = _split_rirs(scene.room, scene.source_position,
                                       center, max_order, rir_len, fs)
    try:
        t60 = estimate_t60(rir_d + rir_r, fs)
    except ValueError:
        t60 = None
    e_direct = e_reverb = 0.0
    for pos in scene.array.room_positions():
        imgs = compute_image_sources(scene.room, scene.source_position,
                                     tuple(pos), max_order, max_delay)
        e_direct += float(imgs.gains[0] ** 2)
        e_reverb += float(np.sum(imgs.gains[1:] ** 2))
    # None rather than inf for anechoic rooms: the dict goes to JSON
    drr = None if e_reverb == 0.0 else 10.0 * np.log10(e_direct / e_reverb)
    coherent = compute_drr(rir_d + rir_r, rir_d)
    return {
        "drr_db": drr,
        "drr_center_coherent_db": None if np.isinf(coherent) else coherent,
        "t60_s": t60,
        "t60_eyring_s": eyring_t60(scene.room),
        "direct_delay_samples": float(images.delays[0] * fs),
        "image_count": int(images.count),
        "sample_rate": fs,
    }


def synth_speech_noise(num_samples, sample_rate, seed):
    """Deterministic speech-shaped noise: white Gaussian noise colored by a
    coarse long-term speech magnitude (bandpass around 500 Hz, 6 dB/oct
    slopes on both sides)."""
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(num_samples)
    freqs = np.fft.rfftfreq(num_samples, 1.0 / sample_rate)
    fn = freqs / 500.0
    shape = fn / (1.0 + fn ** 2)
    spec = np.fft.rfft(white) * shape
    sig = np.fft.irfft(spec, n=num_samples)
    rms = np.sqrt(np.mean(sig ** 2))
    return 0.1 * sig / rms
