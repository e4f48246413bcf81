"""Built-in synthetic mixture recipes.

band_disjoint
    Two pure tones in non-overlapping frequency regions.
overlap
    Two amplitude-modulated noise bands whose spectra overlap by a
    configurable fraction of their bandwidth.
moving
    Two harmonic sources in separate regions whose gains cross-fade over
    time, a crude stand-in for sources moving past a fixed microphone.
"""

from __future__ import annotations

import numpy as np

from .mixing import MixtureSpec, synthesize_mixture

RECIPES = ("band_disjoint", "overlap", "moving")


def _time(duration, sample_rate):
    return np.arange(int(round(duration * sample_rate))) / sample_rate


def _filters(rng, n, taps):
    out = []
    for _ in range(n):
        a = np.zeros(taps)
        a[0] = 1.0
        if taps > 1:
            a[1:] = rng.uniform(-0.3, 0.3, taps - 1) * 0.5 ** np.arange(1, taps)
        out.append(a)
    return out


def band_noise(rng, n, sample_rate, low, high):
    """Unit-variance Gaussian noise restricted to ``[low, high]`` Hz."""
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / sample_rate)
    spec[(f < low) | (f > high)] = 0.0
    x = np.fft.irfft(spec, n=n)
    return x / np.std(x)


def band_disjoint_sources(rng, duration, sample_rate):
    t = _time(duration, sample_rate)
    f1 = rng.uniform(250.0, 700.0)
    f2 = rng.uniform(2200.0, 3800.0)
    s1 = np.sin(2 * np.pi * f1 * t + rng.uniform(0, 2 * np.pi))
    s2 = np.sin(2 * np.pi * f2 * t + rng.uniform(0, 2 * np.pi))
    return [s1, s2], {"f1": f1, "f2": f2}


def overlap_sources(rng, duration, sample_rate, overlap=0.3):
    t = _time(duration, sample_rate)
    w1 = rng.uniform(500.0, 1200.0)
    lo1 = rng.uniform(150.0, 2000.0)
    hi1 = lo1 + w1
    lo2 = hi1 - overlap * w1
    hi2 = min(lo2 + rng.uniform(1000.0, 3000.0), 0.45 * sample_rate)
    out = []
    for lo, hi in ((lo1, hi1), (lo2, hi2)):
        fm = rng.uniform(1.0, 4.0)
        env = 1.0 + 0.8 * np.sin(2 * np.pi * fm * t + rng.uniform(0, 2 * np.pi))
        out.append(band_noise(rng, t.size, sample_rate, lo, hi) * env)
    return out, {"band1": [lo1, hi1], "band2": [lo2, hi2]}


def moving_sources(rng, duration, sample_rate):
    t = _time(duration, sample_rate)
    f1 = rng.uniform(150.0, 300.0)
    f2 = rng.uniform(1500.0, 2500.0)
    ramp = np.clip(t / max(t[-1], 1e-12), 0.0, 1.0)
    s1 = sum(np.sin(2 * np.pi * k * f1 * t) / k for k in (1, 2, 3)) * (1.0 - 0.8 * ramp)
    s2 = sum(np.sin(2 * np.pi * k * f2 * t) / k for k in (1, 2)) * (0.2 + 0.8 * ramp)
    return [s1, s2], {"f1": f1, "f2": f2}


def make_recipe(name, seed, snr_db=10.0, duration=1.0, sample_rate=16000, taps=3,
                overlap=0.3):
    """Synthesize one mixture of the named recipe.

    Returns a :class:`~pqiga.harness.mixing.Mixture` with the recipe's
    random parameters stored in ``meta``.
    """
    rng = np.random.default_rng([int(seed), 0x5EED])
    if name == "band_disjoint":
        sources, meta = band_disjoint_sources(rng, duration, sample_rate)
    elif name == "overlap":
        sources, meta = overlap_sources(rng, duration, sample_rate, overlap=overlap)
    elif name == "moving":
        sources, meta = moving_sources(rng, duration, sample_rate)
    else:
        raise ValueError(f"unknown recipe {name!r}; choose from {RECIPES}")
    # equal source energies so neither source dominates the mixture
    sources = [s / np.sqrt(np.mean(s**2)) for s in sources]
    spec = MixtureSpec(tuple(sources), tuple(_filters(rng, len(sources), taps)), sample_rate,
                       snr_db=snr_db)
    mix = synthesize_mixture(spec, seed=int(rng.integers(2**63)))
    mix.meta = {"recipe": name, "seed": int(seed), "snr_db": snr_db, **meta}
    return mix
