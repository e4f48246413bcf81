"""Convolutive mixtures with additive noise."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PEAK_TARGET = 0.9


@dataclass(frozen=True)
class MixtureSpec:
    """Sources, their FIR mixing filters and the noise model.

    ``noise`` is either an explicit sample vector or None, in which case
    white Gaussian noise is generated at ``snr_db`` (no noise when that is
    None as well).
    """

    sources: tuple
    filters: tuple
    sample_rate: int
    noise: np.ndarray | None = None
    snr_db: float | None = None

    def __post_init__(self):
        if len(self.sources) == 0:
            raise ValueError("need at least one source")
        if len(self.filters) != len(self.sources):
            raise ValueError("need one mixing filter per source")
        lengths = {np.asarray(s).size for s in self.sources}
        if len(lengths) != 1:
            raise ValueError(f"sources differ in length: {sorted(lengths)}")
        if self.noise is not None and np.asarray(self.noise).size != lengths.pop():
            raise ValueError("noise length differs from sources")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")


@dataclass
class Mixture:
    mixture: np.ndarray
    references: list
    noise: np.ndarray
    sample_rate: int
    gain: float
    meta: dict = field(default_factory=dict)


def source_images(spec):
    """``sum_k a_i(k) s_i(t - k)`` for each source, truncated to the source length."""
    out = []
    for s, a in zip(spec.sources, spec.filters):
        s = np.asarray(s, dtype=float)
        a = np.atleast_1d(np.asarray(a, dtype=float))
        out.append(np.convolve(s, a)[: s.size])
    return out


def synthesize_mixture(spec, seed=0, peak=PEAK_TARGET):
    """Mix, add noise and jointly peak-normalise.

    Returns a :class:`Mixture` whose ``references`` are the filtered source
    images and whose ``noise`` is the noise actually added, all scaled by
    the same ``gain`` so ``mixture == sum(references) + noise``.
    """
    images = source_images(spec)
    clean = np.sum(images, axis=0)
    if spec.noise is not None:
        noise = np.asarray(spec.noise, dtype=float).copy()
    elif spec.snr_db is not None:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal(clean.size)
        e_clean = float(clean @ clean)
        if e_clean == 0.0:
            raise ValueError("cannot set an SNR on a silent mixture")
        noise *= np.sqrt(e_clean / (10.0 ** (spec.snr_db / 10.0)) / float(noise @ noise))
    else:
        noise = np.zeros(clean.size)
    mix = clean + noise
    top = max([np.max(np.abs(mix)), np.max(np.abs(noise))] + [np.max(np.abs(r)) for r in images])
    gain = peak / top if top > 0 else 1.0
    return Mixture(mix * gain, [r * gain for r in images], noise * gain, spec.sample_rate, gain)
