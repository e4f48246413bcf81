"""Energy-ratio separation metrics and the composite fitness.

SIR and SAR here are defined through the additive noise component rather
than by BSS-Eval projections:

    SDR = 10 log10( sum s^2 / sum (s - s_hat)^2 )
    SIR = 10 log10( sum s^2 / (sum (s_hat - s)^2 - sum n^2) )
    SAR = 10 log10( sum (s_hat - n)^2 / sum (s_hat - s)^2 )

Degenerate denominators are clamped and reported through flags on
:class:`EvalTriple`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

SDR_CAP_DB = 300.0
SDR_CAP_RATIO = 1e-30  # error/signal energy below which SDR is capped
SIR_DELTA_REL = 1e-12  # SIR denominator floor relative to signal energy
SAR_DELTA = 1e-30  # absolute energy floor for SAR
MAX_ALIGN_SOURCES = 6


@dataclass(frozen=True)
class EvalTriple:
    sdr: float
    sir: float
    sar: float
    sdr_capped: bool = False
    sir_clamped: bool = False
    sar_clamped: bool = False

    def to_dict(self):
        return {
            "sdr": self.sdr,
            "sir": self.sir,
            "sar": self.sar,
            "flags": {
                "sdr_capped": self.sdr_capped,
                "sir_clamped": self.sir_clamped,
                "sar_clamped": self.sar_clamped,
            },
        }


@dataclass(frozen=True)
class FitnessWeights:
    sdr: float = 0.5
    sir: float = 0.3
    sar: float = 0.2
    correlation: float = 1.0

    def __post_init__(self):
        w = (self.sdr, self.sir, self.sar, self.correlation)
        if any(x < 0 or not math.isfinite(x) for x in w):
            raise ValueError(f"fitness weights must be finite and >= 0, got {w}")
        if not any(w):
            raise ValueError("fitness weights must not all be zero")


def _vectors(*arrays):
    out = [np.asarray(a, dtype=float).reshape(-1) for a in arrays]
    n = out[0].size
    if any(a.size != n for a in out):
        raise ValueError(f"length mismatch: {[a.size for a in out]}")
    return out


def _signal_energy(s):
    e = float(np.dot(s, s))
    if e == 0.0:
        raise ValueError("reference signal is all zero")
    return e


def _db(num, den):
    # log difference instead of log ratio: the quotient can overflow or underflow
    return 10.0 * (math.log10(num) - math.log10(den))


def sdr_from_energies(sig, err):
    """SDR in dB and whether the +300 dB cap applied."""
    if err == 0.0 or err < SDR_CAP_RATIO * sig:
        return SDR_CAP_DB, True
    return _db(sig, err), False


def sir_from_energies(sig, err, noise):
    if noise == 0.0:
        # without noise the SIR formula is the SDR formula, cap included
        return sdr_from_energies(sig, err)
    den = err - noise
    if den <= 0.0 or den < SIR_DELTA_REL * sig:
        return -10.0 * math.log10(SIR_DELTA_REL), True
    return _db(sig, den), False


def sar_from_energies(num, err):
    clamped = num < SAR_DELTA or err < SAR_DELTA
    val = _db(max(num, SAR_DELTA), max(err, SAR_DELTA))
    if abs(val) > SDR_CAP_DB:
        return math.copysign(SDR_CAP_DB, val), True
    return val, clamped


def sdr(reference, estimate):
    s, e = _vectors(reference, estimate)
    d = s - e
    return sdr_from_energies(_signal_energy(s), float(np.dot(d, d)))[0]


def sir(reference, estimate, noise):
    s, e, n = _vectors(reference, estimate, noise)
    sig = _signal_energy(s)
    d = e - s
    return sir_from_energies(sig, float(np.dot(d, d)), float(np.dot(n, n)))[0]


def sar(reference, estimate, noise):
    s, e, n = _vectors(reference, estimate, noise)
    d, a = e - s, e - n
    return sar_from_energies(float(np.dot(a, a)), float(np.dot(d, d)))[0]


def evaluate(reference, estimate, noise):
    """All three metrics plus clamp flags for one source."""
    s, e, n = _vectors(reference, estimate, noise)
    sig = _signal_energy(s)
    d = e - s
    err = float(np.dot(d, d))
    a = e - n
    v_sdr, capped = sdr_from_energies(sig, err)
    v_sir, sir_cl = sir_from_energies(sig, err, float(np.dot(n, n)))
    v_sar, sar_cl = sar_from_energies(float(np.dot(a, a)), err)
    return EvalTriple(v_sdr, v_sir, v_sar, capped, sir_cl, sar_cl)


def best_permutation(score):
    """Permutation ``p`` maximising ``mean(score[i, p[i]])``.

    ``score[i, j]`` is the score of estimate ``j`` against reference ``i``.
    Candidates are visited in lexicographic order and only a strictly
    better mean replaces the incumbent, so ties resolve to the smallest.
    """
    score = np.asarray(score, dtype=float)
    n = score.shape[0]
    if n > MAX_ALIGN_SOURCES:
        raise NotImplementedError(f"alignment supports at most {MAX_ALIGN_SOURCES} sources")
    rows = np.arange(n)
    best, best_val = None, -math.inf
    for perm in itertools.permutations(range(n)):
        val = float(np.mean(score[rows, list(perm)]))
        if best is None or val > best_val:
            best, best_val = perm, val
    return tuple(best)


def align_sources(references, estimates):
    """Permutation of ``estimates`` maximising mean SDR against ``references``.

    Returns a tuple ``p`` such that ``estimates[p[i]]`` pairs with
    ``references[i]``.
    """
    refs = [np.asarray(r, dtype=float) for r in references]
    ests = [np.asarray(e, dtype=float) for e in estimates]
    if len(refs) != len(ests):
        raise ValueError("reference and estimate counts differ")
    if len(refs) > MAX_ALIGN_SOURCES:
        raise NotImplementedError(f"alignment supports at most {MAX_ALIGN_SOURCES} sources")
    score = np.array([[sdr(r, e) for e in ests] for r in refs])
    return best_permutation(score)


def fitness(sources, references, noise, weights=None):
    """Weighted SDR/SIR/SAR means minus the weighted correlation penalty.

    ``sources`` must already be aligned with ``references``.
    """
    from .sepmodel import correlation_penalty

    weights = weights or FitnessWeights()
    signals = getattr(sources, "signals", sources)
    if len(signals) != len(references):
        raise ValueError("source counts differ")
    triples = [evaluate(r, e, noise) for r, e in zip(references, signals)]
    return (
        weights.sdr * float(np.mean([t.sdr for t in triples]))
        + weights.sir * float(np.mean([t.sir for t in triples]))
        + weights.sar * float(np.mean([t.sar for t in triples]))
        - weights.correlation * correlation_penalty(signals)
    )
