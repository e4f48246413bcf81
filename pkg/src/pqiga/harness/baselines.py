"""Reference points for judging separation quality."""

from __future__ import annotations

import numpy as np

from .. import metrics
from ..sepmodel import MASK_EPS

MAX_PARTITIONS = 2**20


def duplicate_mixture_sdr(mixture, references):
    """Mean SDR when every estimate is the mixture itself."""
    return float(np.mean([metrics.sdr(r, mixture) for r in references]))


def ideal_band_partition(problem):
    """Best hard band-to-source assignment, found exhaustively.

    Every band is given to exactly one source (gain 1, all others 0), which
    under ratio normalisation is the ideal binary band mask. All
    ``n_sources ** n_bands`` assignments are scored by mean SDR against the
    references using the precomputed statistics of ``problem``.

    Returns
    -------
    (float, ndarray)
        Best mean SDR in dB and the winning assignment (band -> source).
    """
    ns, nb = problem.n_sources, problem.n_bands
    total = ns**nb
    if total > MAX_PARTITIONS:
        raise NotImplementedError(f"{ns}^{nb} assignments exceed the exhaustive limit")
    codes = np.arange(total)
    assign = (codes[:, None] // ns ** np.arange(nb)[None, :]) % ns  # (total, nb)
    level = 1.0 / (1.0 + MASK_EPS)
    sdr_sum = np.zeros(total)
    for i in range(ns):
        m = (assign == i) * level
        err = (problem.ref_energy[i] - 2.0 * m @ problem.ref_proj[i]
               + np.einsum("pb,bc,pc->p", m, problem.gram, m))
        err = np.maximum(err, 0.0)
        sdr_sum += metrics.SDR_CAP_DB * (err < metrics.SDR_CAP_RATIO * problem.ref_energy[i])
        ok = err >= metrics.SDR_CAP_RATIO * problem.ref_energy[i]
        sdr_sum[ok] += 10.0 * np.log10(problem.ref_energy[i] / err[ok])
    best = int(np.argmax(sdr_sum))
    return float(sdr_sum[best] / ns), assign[best]
