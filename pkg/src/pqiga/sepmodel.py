"""Band-wise ratio masks: the separation model a genome parameterises."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .features import istft, mel_band_edges

MASK_EPS = 1e-8


@dataclass(frozen=True)
class MaskParams:
    """Per-source, per-band gains in ``[0, 1]`` plus the band edges in Hz."""

    gains: np.ndarray
    band_edges: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=float)
        e = np.asarray(self.band_edges, dtype=float)
        if g.ndim != 2:
            raise ValueError("gains must be (n_sources, n_bands)")
        if e.shape != (g.shape[1] + 1,):
            raise ValueError(f"need {g.shape[1] + 1} band edges, got {e.shape}")
        if np.any(g < 0) or np.any(g > 1) or not np.all(np.isfinite(g)):
            raise ValueError("gains must lie in [0, 1]")
        if np.any(np.diff(e) <= 0):
            raise ValueError("band edges must be strictly increasing")
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "band_edges", e)

    @property
    def n_sources(self):
        return self.gains.shape[0]

    @property
    def n_bands(self):
        return self.gains.shape[1]

    def masks(self):
        return ratio_masks(self.gains)

    def to_dict(self):
        return {"gains": self.gains.tolist(), "band_edges": self.band_edges.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["gains"], dtype=float), np.array(d["band_edges"], dtype=float))


@dataclass(frozen=True)
class SeparatedSources:
    signals: tuple

    def __post_init__(self):
        sig = tuple(np.asarray(s, dtype=float) for s in self.signals)
        for s in sig:
            if not np.all(np.isfinite(s)):
                raise ValueError("separated signal contains NaN or Inf")
        object.__setattr__(self, "signals", sig)

    def __len__(self):
        return len(self.signals)

    def __getitem__(self, i):
        return self.signals[i]

    def permuted(self, perm):
        return SeparatedSources(tuple(self.signals[p] for p in perm))


def ratio_masks(gains, eps=MASK_EPS):
    """``g_i(b) / (sum_k g_k(b) + eps)``; works on ``(..., n_sources, n_bands)``."""
    g = np.asarray(gains, dtype=float)
    return g / (g.sum(axis=-2, keepdims=True) + eps)


def decode_genome(genome, n_sources, n_bands, sample_rate=16000):
    """Gains ``|beta|^2`` laid out row-major by (source, band)."""
    p = genome.probabilities()
    if p.size != n_sources * n_bands:
        raise ValueError(
            f"genome has {p.size} qubits, expected {n_sources} x {n_bands} = {n_sources * n_bands}"
        )
    return MaskParams(np.clip(p, 0.0, 1.0).reshape(n_sources, n_bands),
                      mel_band_edges(n_bands, sample_rate))


def band_of_bins(config, band_edges):
    """Band index of every STFT bin (Nyquist falls into the last band)."""
    edges = np.asarray(band_edges, dtype=float)
    if abs(edges[-1] - config.sample_rate / 2.0) > 1e-6 * config.sample_rate or edges[0] > 0:
        raise ValueError("band edges must span [0, sample_rate/2]")
    idx = np.searchsorted(edges, config.bin_frequencies(), side="right") - 1
    return np.clip(idx, 0, edges.size - 2)


def apply_masks(mixture_spec, params):
    """Mask the mixture STFT per source (mixture phase kept) and resynthesise."""
    bands = band_of_bins(mixture_spec.config, params.band_edges)
    masks = params.masks()
    out = []
    for i in range(params.n_sources):
        bin_mask = masks[i][bands]
        out.append(istft(mixture_spec.with_frames(mixture_spec.frames * bin_mask[None, :])))
    return SeparatedSources(tuple(out))


def band_signals(mixture_spec, band_edges):
    """Time-domain contribution of each band, shape ``(n_bands, length)``.

    Masked outputs are linear in these: source ``i`` equals
    ``sum_b mask[i, b] * band_signals[b]``.
    """
    bands = band_of_bins(mixture_spec.config, band_edges)
    n_bands = len(band_edges) - 1
    out = np.zeros((n_bands, mixture_spec.length))
    for b in range(n_bands):
        sel = bands == b
        if sel.any():
            out[b] = istft(mixture_spec.with_frames(mixture_spec.frames * sel[None, :]))
    return out


def _pearson(a, b):
    a = a - a.mean()
    b = b - b.mean()
    na, nb = np.dot(a, a), np.dot(b, b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / np.sqrt(na * nb), -1.0, 1.0))


def correlation_penalty(sources):
    """Mean ``|Pearson r|`` over unordered pairs of source signals."""
    signals = getattr(sources, "signals", sources)
    if len(signals) < 2:
        return 0.0
    vals = [abs(_pearson(np.asarray(a, float), np.asarray(b, float)))
            for a, b in itertools.combinations(signals, 2)]
    return float(np.mean(vals))
