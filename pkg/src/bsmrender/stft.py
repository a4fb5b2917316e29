"""Short-time Fourier transform with plain overlap-add inversion.

Analysis uses a periodic Hamming window; synthesis divides by the summed
analysis windows (WOLA square-root splitting is deliberately not used).
The Hamming window never reaches zero, so the overlap-add denominator is
strictly positive everywhere and unmodified frames reconstruct exactly.
"""

import numpy as np
from dataclasses import dataclass, field

ORIGIN_TAGS = ("x", "x_d", "x_r", "p", "z")


def _next_pow2(n):
    p = 1
    while p < n:
        p *= 2
    return p


@dataclass(frozen=True)
class StftConfig:
    sample_rate: int
    window_length: int
    hop: int
    fft_size: int = 0

    def __post_init__(self):
        if self.window_length <= 0 or self.hop <= 0:
            raise ValueError("window_length and hop must be positive")
        if self.window_length % self.hop != 0:
            raise ValueError("hop must divide window_length (overlap-add)")
        if self.window_length // self.hop < 2:
            raise ValueError("need at least 50% overlap")
        if self.fft_size == 0:
            object.__setattr__(self, "fft_size", _next_pow2(self.window_length))
        if self.fft_size < self.window_length:
            raise ValueError("fft_size must cover the window")
        if self.fft_size & (self.fft_size - 1):
            raise ValueError("fft_size must be a power of two")

    @classmethod
    def default(cls, sample_rate=48000, window_ms=32.0, hop_ms=16.0):
        w = int(round(sample_rate * window_ms / 1000.0))
        h = int(round(sample_rate * hop_ms / 1000.0))
        return cls(sample_rate=int(sample_rate), window_length=w, hop=h)

    @property
    def num_bins(self):
        return self.fft_size // 2 + 1

    def window(self):
        # periodic Hamming: 0.54 - 0.46 cos(2 pi n / N), n = 0..N-1
        n = np.arange(self.window_length)
        return 0.54 - 0.46 * np.cos(2.0 * np.pi * n / self.window_length)

    def num_frames(self, num_samples):
        if num_samples <= self.window_length:
            return 1
        return 1 + int(np.ceil((num_samples - self.window_length) / self.hop))


@dataclass
class Spectrogram:
    """Complex STFT data, shape (channels, frames, bins), plus provenance."""

    data: np.ndarray = field(repr=False)
    config: StftConfig
    origin: str = "x"

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError("data must be (channels, frames, bins)")
        if self.data.shape[2] != self.config.num_bins:
            raise ValueError("bin count does not match config")
        if self.origin not in ORIGIN_TAGS:
            raise ValueError(f"unknown origin tag {self.origin!r}")

    @property
    def num_channels(self):
        return self.data.shape[0]

    @property
    def num_frames(self):
        return self.data.shape[1]

    @property
    def num_bins(self):
        return self.data.shape[2]

    def retag(self, origin):
        return Spectrogram(data=self.data, config=self.config, origin=origin)


def stft(signal, config, origin="x"):
    """Forward transform. signal is (samples,) or (samples, channels)."""
    sig = np.asarray(signal)
    if sig.size == 0:
        raise ValueError("empty signal")
    if sig.ndim == 1:
        sig = sig[:, None]
    num_samples, num_ch = sig.shape
    frames = config.num_frames(num_samples)
    win = config.window()
    # gather frame starts; trailing frame is zero-padded
    padded = np.zeros(((frames - 1) * config.hop + config.window_length, num_ch),
                      dtype=sig.dtype)
    padded[:num_samples] = sig
    idx = (np.arange(frames)[:, None] * config.hop + np.arange(config.window_length))
    segments = padded[idx]                       # (frames, window, ch)
    segments = segments * win[None, :, None]
    if np.iscomplexobj(segments):
        # complex channels (SH-domain signals): positive-frequency half of
        # the full DFT, which coincides with rfft for real inputs
        spec = np.fft.fft(segments, n=config.fft_size, axis=1)[:, : config.num_bins]
    else:
        spec = np.fft.rfft(segments, n=config.fft_size, axis=1)
    return Spectrogram(data=np.ascontiguousarray(np.moveaxis(spec, 2, 0)),
                       config=config, origin=origin)


def istft(spec, num_samples=None):
    """Inverse transform via overlap-add with window-sum normalization.

    Returns (samples, channels) float64. With an unmodified spectrogram the
    interior reconstruction error is at rounding level; the zero-padded tail
    introduced by the forward transform is trimmed when num_samples is given.
    """
    cfg = spec.config
    win = cfg.window()
    frames = spec.num_frames
    total = (frames - 1) * cfg.hop + cfg.window_length
    segs = np.fft.irfft(np.moveaxis(spec.data, 0, 2), n=cfg.fft_size, axis=1)
    segs = segs[:, : cfg.window_length, :]
    out = np.zeros((total, spec.num_channels))
    den = np.zeros(total)
    for t in range(frames):
        s = t * cfg.hop
        out[s : s + cfg.window_length] += segs[t]
        den[s : s + cfg.window_length] += win
    out /= den[:, None]
    if num_samples is not None:
        out = out[:num_samples]
    return out
