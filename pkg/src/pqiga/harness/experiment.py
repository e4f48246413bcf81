"""End-to-end experiment orchestration and report assembly."""

from __future__ import annotations

import dataclasses
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .. import metrics, postproc, qiga
from ..features import FeatureScaler, mel_band_edges, mfcc, pad_to_even, scale_mfcc, stft
from ..problem import GenomeFitness, MixtureProblem
from ..qstate import encode_features, fidelity
from ..sepmodel import MaskParams, apply_masks, correlation_penalty, ratio_masks
from .config import to_sections
from .manifest import split_counts
from .recipes import make_recipe
from .wavio import read_wav, write_wav

log = logging.getLogger(__name__)

SCHEMA_ID = "pqiga.report/1"
MODES = ("supervised", "transfer", "datasize")
DEGENERATE_TOL = 1e-3


@dataclass
class Entry:
    id: str
    mixture: np.ndarray
    references: list
    noise: np.ndarray
    sample_rate: int
    label: str | None = None
    meta: dict = field(default_factory=dict)


def recipe_entries(config):
    exp = config.experiment
    out = []
    for i in range(exp.n_mixtures):
        m = make_recipe(exp.recipe, seed=exp.data_seed * 1_000_003 + i, snr_db=exp.snr_db,
                        duration=exp.duration, sample_rate=config.stft.sample_rate,
                        overlap=exp.overlap)
        out.append(Entry(f"{exp.recipe}-{i:03d}", m.mixture, m.references, m.noise,
                         m.sample_rate, meta=m.meta))
    return out


def load_manifest_entry(index, item):
    """Read one manifest entry; missing noise is taken as mixture minus references."""
    mix, sr = read_wav(item.mixture)
    refs = []
    for path in item.references:
        r, rsr = read_wav(path)
        if rsr != sr:
            raise ValueError(f"{path}: sample rate {rsr} differs from mixture rate {sr}")
        if r.size != mix.size:
            raise ValueError(f"{path}: length {r.size} differs from mixture length {mix.size}")
        refs.append(r)
    if item.noise:
        noise, nsr = read_wav(item.noise)
        if nsr != sr or noise.size != mix.size:
            raise ValueError(f"{item.noise}: rate/length differ from the mixture")
    else:
        noise = mix - np.sum(refs, axis=0)
    name = os.path.splitext(os.path.basename(item.mixture))[0]
    return Entry(f"{index:03d}-{name}", mix, refs, noise, sr, item.label)


def stft_for(config, sample_rate):
    return dataclasses.replace(config.stft, sample_rate=sample_rate)


def encoding_diagnostic(signal, config, scaler=None):
    """Encode each frame's leading MFCCs and summarise frame-to-frame fidelity."""
    fc = config.features
    m = mfcc(signal, config.stft, fc.n_mels, fc.n_mfcc)
    scaler = scaler or FeatureScaler.fit(m)
    angles = pad_to_even(scale_mfcc(m, scaler)[:, : fc.n_encoded])
    states = [encode_features(a) for a in angles]
    fids = [fidelity(a, b) for a, b in zip(states, states[1:])]
    return {
        "n_frames": len(states),
        "n_layers": angles.shape[1] // 2,
        "mean_adjacent_fidelity": float(np.mean(fids)) if fids else 1.0,
        "min_adjacent_fidelity": float(np.min(fids)) if fids else 1.0,
    }


def build_problem(entry, config):
    cfg = stft_for(config, entry.sample_rate)
    edges = mel_band_edges(config.masks.n_bands, entry.sample_rate)
    if len(entry.references) != config.masks.n_sources:
        raise ValueError(
            f"entry {entry.id} has {len(entry.references)} references, "
            f"config expects {config.masks.n_sources}"
        )
    return MixtureProblem(entry.mixture, entry.references, entry.noise, cfg, edges)


def optimize(problems, config, seed):
    mc = config.masks
    fit = GenomeFitness(problems, mc.n_sources, mc.n_bands, config.weights)
    qcfg = dataclasses.replace(config.qiga, seed=seed)
    return qiga.run(qcfg, fit, fit.genome_len)


def gains_of(genome, config):
    mc = config.masks
    return np.clip(genome.probabilities(), 0.0, 1.0).reshape(mc.n_sources, mc.n_bands)


def is_degenerate(gains):
    """True when every band gives all sources the same mask value."""
    m = ratio_masks(gains)
    return bool(np.all(m.max(axis=0) - m.min(axis=0) < DEGENERATE_TOL))


def _metric_rows(triples):
    return [{"source": i, **t.to_dict()} for i, t in enumerate(triples)]


def _flags(triples, prefix=""):
    out = []
    for i, t in enumerate(triples):
        for name in ("sdr_capped", "sir_clamped", "sar_clamped"):
            if getattr(t, name):
                out.append(f"{prefix}{name}:source{i}")
    return out


def separate_and_score(entry, gains, config, out_dir=None):
    """Apply gains to one entry, align, score, post-process and score again."""
    t0 = time.perf_counter()
    cfg = stft_for(config, entry.sample_rate)
    params = MaskParams(gains, mel_band_edges(gains.shape[1], entry.sample_rate))
    seps = apply_masks(stft(entry.mixture, cfg), params)
    perm = metrics.align_sources(entry.references, seps.signals)
    aligned = seps.permuted(perm)
    triples = [metrics.evaluate(r, e, entry.noise) for r, e in zip(entry.references, aligned)]
    fit = metrics.fitness(aligned, entry.references, entry.noise, config.weights)
    result = {
        "permutation": list(perm),
        "fitness": fit,
        "correlation_penalty": correlation_penalty(aligned),
        "metrics": _metric_rows(triples),
        "mean_sdr": float(np.mean([t.sdr for t in triples])),
    }
    flags = _flags(triples)
    refined = list(aligned.signals)
    if config.postproc.enabled:
        pp_triples = []
        refined = []
        for r, e in zip(entry.references, aligned):
            y, f = postproc.refine(e, config.postproc, entry.sample_rate)
            refined.append(y)
            flags += [f"postproc_{x}" for x in f]
            pp_triples.append(metrics.evaluate(r, y, entry.noise))
        result["metrics_postproc"] = _metric_rows(pp_triples)
        flags += _flags(pp_triples, "postproc_")
    result["flags"] = flags
    if out_dir is not None and config.io.write_sources:
        files = []
        for i, y in enumerate(refined):
            path = os.path.join(out_dir, f"{entry.id}_source{i}.wav")
            write_wav(path, y, entry.sample_rate)
            files.append(os.path.basename(path))
        result["source_files"] = files
    result["timing"] = {"separate_seconds": time.perf_counter() - t0}
    return result


def _trace_dict(trace):
    return {"best": list(trace.best), "mean": list(trace.mean)}


def _write_trace(out_dir, name, trace, config):
    if out_dir is None or not config.io.write_traces:
        return None
    path = os.path.join(out_dir, f"{name}_trace.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(trace.to_csv())
    return os.path.basename(path)


def run_supervised(entries, config, out_dir=None):
    """Optimise masks per mixture against its own references."""
    reports = []
    for k, entry in enumerate(entries):
        if isinstance(entry, Exception):
            reports.append(_error_report(f"entry-{k:03d}", entry))
            continue
        t0 = time.perf_counter()
        try:
            rep = {"id": entry.id, "status": "ok", "label": entry.label, "meta": entry.meta}
            if config.features.encode:
                rep["encoding"] = encoding_diagnostic(entry.mixture, _with_rate(config, entry))
            t1 = time.perf_counter()
            res = optimize([build_problem(entry, config)], config, config.qiga.seed)
            t2 = time.perf_counter()
            gains = gains_of(res.best, config)
            rep["mask_gains"] = gains.tolist()
            rep["best_fitness"] = res.best_fitness
            rep["generations"] = res.generations
            rep["trace"] = _trace_dict(res.trace)
            rep["trace_file"] = _write_trace(out_dir, entry.id, res.trace, config)
            rep.update(separate_and_score(entry, gains, config, out_dir))
            rep["timing"].update(optimize_seconds=t2 - t1, total_seconds=time.perf_counter() - t0)
        except Exception as exc:  # a failing entry must not abort the batch
            log.exception("entry %s failed", entry.id)
            rep = _error_report(entry.id, exc)
        reports.append(rep)
    return reports


def _with_rate(config, entry):
    return config.replace(stft=stft_for(config, entry.sample_rate))


def _error_report(entry_id, exc):
    return {"id": entry_id, "status": "error", "error": f"{type(exc).__name__}: {exc}"}


def subsample(n, fraction, seed, repeat):
    """Seeded subset of ``range(n)`` of size ``max(1, round(fraction * n))``."""
    k = max(1, int(round(fraction * n)))
    rng = np.random.default_rng([int(seed), int(repeat), int(round(fraction * 1_000_000))])
    return sorted(int(i) for i in rng.permutation(n)[:k])


def transfer_run(train, test, config, seed, out_dir=None, tag="transfer"):
    """Learn one set of mask gains on ``train`` and apply it to ``test``."""
    t0 = time.perf_counter()
    problems = [build_problem(e, config) for e in train]
    res = optimize(problems, config, seed)
    gains = gains_of(res.best, config)
    t1 = time.perf_counter()
    scaler = None
    if config.features.encode:
        fc = config.features
        scaler = FeatureScaler.fit(
            [mfcc(e.mixture, stft_for(config, e.sample_rate), fc.n_mels, fc.n_mfcc) for e in train]
        )
    tests = []
    for e in test:
        try:
            r = separate_and_score(e, gains, config, out_dir)
            if scaler is not None:
                r["encoding"] = encoding_diagnostic(e.mixture, _with_rate(config, e), scaler)
            tests.append({"id": e.id, "status": "ok", **r})
        except Exception as exc:
            log.exception("test entry %s failed", e.id)
            tests.append(_error_report(e.id, exc))
    ok = [t["mean_sdr"] for t in tests if t["status"] == "ok"]
    return {
        "tag": tag,
        "seed": seed,
        "train_ids": [e.id for e in train],
        "mask_gains": gains.tolist(),
        "degenerate": is_degenerate(gains),
        "best_fitness": res.best_fitness,
        "generations": res.generations,
        "trace": _trace_dict(res.trace),
        "trace_file": _write_trace(out_dir, tag, res.trace, config),
        "test": tests,
        "mean_test_sdr": float(np.mean(ok)) if ok else None,
        "timing": {"optimize_seconds": t1 - t0, "total_seconds": time.perf_counter() - t0},
    }


def _split(entries, split):
    n_train, n_val, _ = split_counts(len(entries), split)
    return entries[:n_train], entries[n_train : n_train + n_val], entries[n_train + n_val :]


def run_transfer(entries, split, config, out_dir=None):
    train, _, test = _split(entries, split)
    if not train or not test:
        raise ValueError("transfer mode needs non-empty train and test splits")
    return [transfer_run(train, test, config, config.qiga.seed + r, out_dir, f"transfer-r{r}")
            for r in range(config.experiment.repeats)]


def run_datasize(entries, split, config, out_dir=None):
    """Transfer runs on seeded subsamples of the training split, one row per fraction."""
    train, _, test = _split(entries, split)
    if not train or not test:
        raise ValueError("data-size mode needs non-empty train and test splits")
    exp = config.experiment
    runs, summary = [], []
    for fraction in exp.fraction_list():
        sdrs, degenerate = [], False
        for r in range(exp.repeats):
            idx = subsample(len(train), fraction, exp.data_seed, r)
            tag = f"datasize-f{int(round(fraction * 100)):03d}-r{r}"
            run = transfer_run([train[i] for i in idx], test, config, config.qiga.seed + r,
                               out_dir, tag)
            run["fraction"] = fraction
            runs.append(run)
            degenerate |= run["degenerate"]
            if run["mean_test_sdr"] is not None:
                sdrs.append(run["mean_test_sdr"])
        summary.append({
            "fraction": fraction,
            "n_train": max(1, int(round(fraction * len(train)))),
            "repeats": exp.repeats,
            "mean_test_sdr": float(np.mean(sdrs)) if sdrs else None,
            "test_sdr_per_repeat": sdrs,
            "degenerate": degenerate,
        })
    return runs, summary


def run_experiment(config, entries=None, split=None, out_dir=None):
    """Run the configured mode and return the report dictionary.

    ``entries`` defaults to the configured synthetic recipe; items may be
    exceptions from failed manifest loads, which become error records.
    """
    t0 = time.perf_counter()
    exp = config.experiment
    if exp.mode not in MODES:
        raise ValueError(f"unknown mode {exp.mode!r}; choose from {MODES}")
    if entries is None:
        entries = recipe_entries(config)
    split = split or exp.split_fractions()
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    report = {
        "schema": SCHEMA_ID,
        "mode": exp.mode,
        "config": to_sections(config),
        "entries": [],
        "runs": [],
        "summary": [],
    }
    failed = [e for e in entries if isinstance(e, Exception)]
    if exp.mode == "supervised":
        report["entries"] = run_supervised(entries, config, out_dir)
    else:
        good = [e for e in entries if not isinstance(e, Exception)]
        report["entries"] = [_error_report(f"entry-{k:03d}", e)
                             for k, e in enumerate(entries) if isinstance(e, Exception)]
        if exp.mode == "transfer":
            report["runs"] = run_transfer(good, split, config, out_dir)
        else:
            report["runs"], report["summary"] = run_datasize(good, split, config, out_dir)
    n_err = sum(1 for e in report["entries"] if e["status"] == "error")
    n_err += sum(1 for run in report["runs"] for t in run["test"] if t["status"] == "error")
    report["status"] = "ok" if n_err == 0 and not failed else "partial"
    report["n_errors"] = n_err
    report["timing"] = {"total_seconds": time.perf_counter() - t0}
    return report
