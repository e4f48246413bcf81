"""Refinement of separated signals: band-pass, static compression, de-clipping."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


class ClippingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BandpassConfig:
    low: float
    high: float

    def validate(self, sample_rate):
        if not 0.0 <= self.low < self.high <= sample_rate / 2.0:
            raise ValueError(
                f"invalid band [{self.low}, {self.high}] Hz for sample rate {sample_rate}"
            )


@dataclass(frozen=True)
class CompressorConfig:
    threshold: float = 0.5
    ratio: float = 4.0

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must be in (0, 1]")
        if self.ratio < 1.0:
            raise ValueError("ratio must be >= 1")


@dataclass(frozen=True)
class PostprocConfig:
    enabled: bool = True
    low: float = 50.0
    high_fraction: float = 0.45
    threshold: float = 0.5
    ratio: float = 4.0
    clip_level: float = 0.999

    def bandpass(self, sample_rate):
        return BandpassConfig(self.low, self.high_fraction * sample_rate)

    def compressor(self):
        return CompressorConfig(self.threshold, self.ratio)


def bandpass(signal, config, sample_rate):
    """Zero every DFT bin whose centre frequency lies outside ``[low, high]``.

    The filter acts on the DFT of the whole signal, which makes it an
    orthogonal projection (applying it twice changes nothing).
    """
    config.validate(sample_rate)
    x = np.asarray(signal, dtype=float)
    if x.size == 0:
        return x.copy()
    spec = np.fft.rfft(x)
    f = np.fft.rfftfreq(x.size, d=1.0 / sample_rate)
    keep = (f >= config.low) & (f <= config.high)
    return np.fft.irfft(spec * keep, n=x.size)


def compress(signal, config):
    """Static curve: ``|x| <= tau`` passes, above it ``tau + (|x| - tau) / rho`` with sign kept."""
    x = np.asarray(signal, dtype=float)
    tau, rho = config.threshold, config.ratio
    mag = np.abs(x)
    over = mag > tau
    out = x.copy()
    out[over] = np.sign(x[over]) * (tau + (mag[over] - tau) / rho)
    return out


def clipped_runs(mask):
    """``(start, stop)`` pairs of maximal True runs."""
    m = np.concatenate(([False], np.asarray(mask, bool), [False]))
    d = np.diff(m.astype(np.int8))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def declip(signal, clip_level=0.999):
    """Replace runs with ``|x| >= clip_level`` by cubic Hermite interpolation.

    Each run is bridged between its nearest unclipped neighbours; endpoint
    slopes are one-sided differences taken outside the run. Runs touching
    either end of the signal are held at the neighbouring value. A fully
    clipped signal is returned unchanged with a :class:`ClippingWarning`.
    """
    if not 0.0 < clip_level <= 1.0:
        raise ValueError("clip_level must be in (0, 1]")
    x = np.asarray(signal, dtype=float)
    out = x.copy()
    clipped = np.abs(x) >= clip_level
    if not clipped.any():
        return out
    if clipped.all():
        warnings.warn("every sample is clipped; nothing to interpolate from", ClippingWarning,
                      stacklevel=2)
        return out
    n = x.size
    for start, stop in clipped_runs(clipped):
        left, right = start - 1, stop
        if left < 0:
            out[start:stop] = x[right]
            continue
        if right >= n:
            out[start:stop] = x[left]
            continue
        h = right - left
        m0 = x[left] - x[left - 1] if left >= 1 and not clipped[left - 1] else 0.0
        m1 = x[right + 1] - x[right] if right + 1 < n and not clipped[right + 1] else 0.0
        t = (np.arange(start, stop) - left) / h
        t2, t3 = t * t, t * t * t
        out[start:stop] = (
            (2 * t3 - 3 * t2 + 1) * x[left]
            + (t3 - 2 * t2 + t) * h * m0
            + (-2 * t3 + 3 * t2) * x[right]
            + (t3 - t2) * h * m1
        )
    return out


def refine(signal, config, sample_rate):
    """Run band-pass, compression and de-clipping in that order.

    Returns the refined signal and a list of warning flags.
    """
    flags = []
    y = bandpass(signal, config.bandpass(sample_rate), sample_rate)
    y = compress(y, config.compressor())
    if y.size and np.all(np.abs(y) >= config.clip_level):
        flags.append("fully_clipped")
        return y, flags
    if np.any(np.abs(y) >= config.clip_level):
        flags.append("declipped")
    y = declip(y, config.clip_level)
    return y, flags
