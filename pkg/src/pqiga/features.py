"""STFT analysis/synthesis, MFCC extraction and angle scaling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.signal

LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class StftConfig:
    frame_len: int = 1024
    hop: int = 512
    window: str = "hann"
    sample_rate: int = 16000

    def __post_init__(self):
        n = self.frame_len
        if n < 2 or n & (n - 1):
            raise ValueError(f"frame_len must be a power of two, got {n}")
        if not 1 <= self.hop <= n:
            raise ValueError(f"hop must be in [1, frame_len], got {self.hop}")
        if self.window != "hann":
            raise ValueError(f"unsupported window {self.window!r}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def n_bins(self):
        return self.frame_len // 2 + 1

    def bin_frequencies(self):
        return np.arange(self.n_bins) * (self.sample_rate / self.frame_len)

    def get_window(self):
        # periodic Hann: overlap-adds to a constant at hop = frame_len/2
        return scipy.signal.get_window("hann", self.frame_len, fftbins=True)


@dataclass(frozen=True)
class Spectrogram:
    """One-sided STFT frames, shape ``(n_frames, frame_len//2 + 1)``.

    ``length`` is the number of samples of the analysed signal; synthesis
    trims to it.
    """

    frames: np.ndarray
    config: StftConfig
    length: int

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[1] != self.config.n_bins:
            raise ValueError(
                f"frames shape {self.frames.shape} inconsistent with {self.config.n_bins} bins"
            )

    def with_frames(self, frames):
        return Spectrogram(np.asarray(frames), self.config, self.length)


def to_mono(signal):
    """Average channels of a ``(n, channels)`` array; 1-D input is returned as float."""
    x = np.asarray(signal, dtype=float)
    if x.ndim == 2:
        return x.mean(axis=1)
    if x.ndim != 1:
        raise ValueError(f"expected 1-D or 2-D signal, got shape {x.shape}")
    return x


def _n_frames(length, cfg):
    padded = length + cfg.frame_len
    return 1 + int(math.ceil((padded - cfg.frame_len) / cfg.hop))


def stft(signal, config):
    """Hann-windowed STFT with half-frame zero padding at both ends."""
    x = to_mono(signal)
    cfg = config
    if x.size < cfg.frame_len:
        raise ValueError(f"signal has {x.size} samples, need at least frame_len={cfg.frame_len}")
    n_frames = _n_frames(x.size, cfg)
    pad_left = cfg.frame_len // 2
    total = (n_frames - 1) * cfg.hop + cfg.frame_len
    padded = np.zeros(total)
    padded[pad_left : pad_left + x.size] = x
    idx = np.arange(cfg.frame_len)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    frames = padded[idx] * cfg.get_window()[None, :]
    return Spectrogram(np.fft.rfft(frames, axis=1), cfg, x.size)


def cola_constant(config):
    """Overlap-add sum of the window at ``config.hop``; None when not constant."""
    win = config.get_window()
    n, hop = config.frame_len, config.hop
    if n % hop:
        return None
    acc = np.zeros(hop)
    for k in range(n // hop):
        acc += win[k * hop : (k + 1) * hop]
    if np.max(acc) - np.min(acc) > 1e-10 * np.max(acc):
        return None
    return float(acc.mean())


def istft(spec):
    """Overlap-add inverse of :func:`stft` (requires a COLA hop)."""
    cfg = spec.config
    scale = cola_constant(cfg)
    if scale is None:
        raise ValueError(f"hop={cfg.hop} is not COLA for a Hann window of {cfg.frame_len}")
    frames = np.fft.irfft(spec.frames, n=cfg.frame_len, axis=1)
    n_frames = frames.shape[0]
    total = (n_frames - 1) * cfg.hop + cfg.frame_len
    out = np.zeros(total)
    env = np.zeros(total)
    win = cfg.get_window()
    for i in range(n_frames):
        out[i * cfg.hop : i * cfg.hop + cfg.frame_len] += frames[i]
        env[i * cfg.hop : i * cfg.hop + cfg.frame_len] += win
    # interior envelope equals the COLA constant; near the ends fewer frames overlap
    env = np.where(env > 1e-3 * scale, env, scale)
    start = cfg.frame_len // 2
    y = out[start : start + spec.length] / env[start : start + spec.length]
    if y.size < spec.length:
        y = np.pad(y, (0, spec.length - y.size))
    return y


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_band_edges(n_bands, sample_rate):
    """``n_bands + 1`` mel-spaced edges from 0 Hz to Nyquist."""
    mels = np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_bands + 1)
    edges = mel_to_hz(mels)
    edges[0] = 0.0
    edges[-1] = sample_rate / 2.0
    return edges


def mel_filterbank(config, n_mels):
    """Triangular HTK-style mel filters, shape ``(n_mels, n_bins)``."""
    freqs = config.bin_frequencies()
    pts = mel_to_hz(np.linspace(0.0, hz_to_mel(config.sample_rate / 2.0), n_mels + 2))
    fb = np.zeros((n_mels, freqs.size))
    for m in range(n_mels):
        lo, mid, hi = pts[m], pts[m + 1], pts[m + 2]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


@dataclass(frozen=True)
class MfccMatrix:
    frames: np.ndarray
    n_mels: int
    n_mfcc: int


def mfcc(signal, config, n_mels=40, n_mfcc=13):
    if not 1 <= n_mfcc <= n_mels:
        raise ValueError(f"need 1 <= n_mfcc <= n_mels, got n_mfcc={n_mfcc}, n_mels={n_mels}")
    if n_mels > config.frame_len // 2:
        raise ValueError(f"n_mels={n_mels} exceeds frame_len/2={config.frame_len // 2}")
    spec = stft(signal, config)
    power = np.abs(spec.frames) ** 2
    mel_energy = power @ mel_filterbank(config, n_mels).T
    log_mel = np.log(np.maximum(mel_energy, LOG_FLOOR))
    coeffs = scipy.fft.dct(log_mel, type=2, axis=1, norm="ortho")[:, :n_mfcc]
    return MfccMatrix(coeffs, n_mels, n_mfcc)


@dataclass(frozen=True)
class FeatureScaler:
    """Per-coefficient min/max used to map MFCCs onto ``[0, pi]``."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.max) < np.asarray(self.min)):
            raise ValueError("scaler max must be >= min for every coefficient")

    @classmethod
    def fit(cls, matrices):
        """Global min/max per coefficient over one or more MFCC matrices."""
        if isinstance(matrices, MfccMatrix):
            matrices = [matrices]
        stacked = np.vstack([m.frames for m in matrices])
        return cls(stacked.min(axis=0), stacked.max(axis=0))


def scale_mfcc(m, scaler):
    """Affine map ``min -> 0``, ``max -> pi`` per coefficient, clamped."""
    x = m.frames if isinstance(m, MfccMatrix) else np.asarray(m, dtype=float)
    lo = np.asarray(scaler.min, dtype=float)
    hi = np.asarray(scaler.max, dtype=float)
    span = hi - lo
    flat = span <= 0
    safe = np.where(flat, 1.0, span)
    with np.errstate(over="ignore"):  # +-inf clips to the range ends
        out = np.clip((x - lo) / safe, 0.0, 1.0) * np.pi
    return np.where(flat, np.pi / 2.0, out)


def pad_to_even(angles):
    """Append a zero angle when the per-frame feature count is odd."""
    a = np.asarray(angles, dtype=float)
    if a.shape[-1] % 2:
        pad = [(0, 0)] * (a.ndim - 1) + [(0, 1)]
        a = np.pad(a, pad)
    return a
