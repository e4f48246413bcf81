"""Command-line entry point: ``pqiga <subcommand> ...``.

Exit status is 0 on success, 1 when some entries failed and 2 on
configuration or usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .. import metrics
from ..features import FeatureScaler, mel_band_edges, mfcc, pad_to_even, scale_mfcc, stft
from ..qiga import ConvergenceModel, convergence_csv, convergence_curve
from ..qstate import encode_features
from ..sepmodel import MaskParams, apply_masks
from . import config as cfgmod
from . import report as reportmod
from .experiment import Entry, load_manifest_entry, run_experiment, separate_and_score
from .experiment import build_problem, gains_of, optimize, stft_for
from .manifest import DatasetManifest, ManifestEntry, ManifestError, format_manifest, read_manifest
from .recipes import RECIPES, make_recipe
from .wavio import WavError, read_wav, write_wav

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("pqiga")


def _load_config(args, extra=()):
    overrides = list(args.set or []) + list(extra)
    if getattr(args, "seed", None) is not None:
        overrides.append(f"qiga.seed={args.seed}")
    return cfgmod.load(args.config, overrides)


def _write_text(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def cmd_mix(args):
    mix = make_recipe(args.recipe, args.data_seed, snr_db=args.snr, duration=args.duration,
                      sample_rate=args.sample_rate, overlap=args.overlap)
    os.makedirs(args.out, exist_ok=True)
    paths = {"mixture": os.path.join(args.out, "mixture.wav"),
             "noise": os.path.join(args.out, "noise.wav")}
    write_wav(paths["mixture"], mix.mixture, mix.sample_rate)
    write_wav(paths["noise"], mix.noise, mix.sample_rate)
    refs = []
    for i, r in enumerate(mix.references):
        p = os.path.join(args.out, f"ref{i}.wav")
        write_wav(p, r, mix.sample_rate)
        refs.append(p)
    manifest = DatasetManifest([ManifestEntry(paths["mixture"], tuple(refs), paths["noise"])])
    _write_text(os.path.join(args.out, "manifest.tsv"), format_manifest(manifest, args.out))
    meta = {**mix.meta, "gain": mix.gain, "sample_rate": mix.sample_rate}
    _write_text(os.path.join(args.out, "meta.json"), json.dumps(meta, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_separate(args):
    config = _load_config(args)
    mix, sr = read_wav(args.mixture)
    os.makedirs(args.out, exist_ok=True)
    if args.params:
        with open(args.params, encoding="utf-8") as fh:
            params = MaskParams.from_dict(json.load(fh))
        seps = apply_masks(stft(mix, stft_for(config, sr)), params)
        for i, y in enumerate(seps.signals):
            write_wav(os.path.join(args.out, f"source{i}.wav"), y, sr)
        if not args.refs:
            return EXIT_OK
    if not args.refs:
        raise cfgmod.ConfigError("supervised separation needs --refs (or --params to apply saved masks)")
    refs = []
    for p in args.refs:
        r, rsr = read_wav(p)
        if rsr != sr:
            raise WavError(f"{p}: sample rate {rsr} differs from mixture rate {sr}")
        refs.append(r)
    noise = read_wav(args.noise)[0] if args.noise else mix - np.sum(refs, axis=0)
    config = config.replace(masks=cfgmod.MaskConfig(len(refs), config.masks.n_bands))
    entry = Entry("separate", mix, refs, noise, sr)
    if args.params:
        gains = params.gains
        rep = {"id": entry.id, "status": "ok", "mode": "transfer"}
    else:
        res = optimize([build_problem(entry, config)], config, config.qiga.seed)
        gains = gains_of(res.best, config)
        rep = {"id": entry.id, "status": "ok", "mode": "supervised",
               "best_fitness": res.best_fitness, "generations": res.generations}
        _write_text(os.path.join(args.out, "trace.csv"), res.trace.to_csv())
        params = MaskParams(gains, mel_band_edges(config.masks.n_bands, sr))
        _write_text(os.path.join(args.out, "params.json"), json.dumps(params.to_dict(), indent=2))
    rep.update(separate_and_score(entry, np.asarray(gains), config, args.out))
    reportmod.write(os.path.join(args.out, "report.json"), rep)
    return EXIT_OK


def cmd_eval(args):
    refs = [read_wav(p)[0] for p in args.refs]
    ests = [read_wav(p)[0] for p in args.estimates]
    if len(refs) != len(ests):
        raise cfgmod.ConfigError("need the same number of references and estimates")
    n = min([x.size for x in refs + ests])
    refs, ests = [r[:n] for r in refs], [e[:n] for e in ests]
    noise = read_wav(args.noise)[0][:n] if args.noise else np.zeros(n)
    perm = metrics.align_sources(refs, ests)
    rows = [{"source": i, "estimate": perm[i], **metrics.evaluate(r, ests[perm[i]], noise).to_dict()}
            for i, r in enumerate(refs)]
    _write_text(args.out, json.dumps({"permutation": list(perm), "metrics": rows}, indent=2) + "\n")
    return EXIT_OK


def cmd_encode(args):
    config = _load_config(args)
    if args.features:
        angles = np.array([float(x) for x in args.features.split(",")])
    else:
        x, sr = read_wav(args.wav)
        cfg = stft_for(config, sr)
        fc = config.features
        m = mfcc(x, cfg, fc.n_mels, fc.n_mfcc)
        frames = pad_to_even(scale_mfcc(m, FeatureScaler.fit(m))[:, : fc.n_encoded])
        if not 0 <= args.frame < frames.shape[0]:
            raise cfgmod.ConfigError(f"frame {args.frame} out of range (0..{frames.shape[0] - 1})")
        angles = frames[args.frame]
    state = encode_features(pad_to_even(angles))
    lines = ["basis_index,re,im"] + [f"{k},{float(a.real)!r},{float(a.imag)!r}" for k, a in enumerate(state.amps)]
    _write_text(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_convergence(args):
    if args.t_max < 0:
        raise cfgmod.ConfigError("--t-max must be >= 0")
    try:
        model = ConvergenceModel(args.alpha, args.beta, args.p0)
    except ValueError as exc:
        raise cfgmod.ConfigError(str(exc)) from None
    curve = convergence_curve(model, args.t_max)
    _write_text(args.out, convergence_csv(curve))
    return EXIT_OK


def cmd_experiment(args):
    extra = []
    for key in ("mode", "recipe", "n_mixtures", "snr_db", "repeats"):
        v = getattr(args, key)
        if v is not None:
            extra.append(f"experiment.{key}={v}")
    config = _load_config(args, extra)
    entries = split = None
    if args.manifest:
        manifest = read_manifest(args.manifest)
        entries = []
        for i, item in enumerate(manifest.entries):
            try:
                entries.append(load_manifest_entry(i, item))
            except (OSError, ValueError) as exc:
                log.error("cannot load manifest entry %d: %s", i, exc)
                entries.append(exc)
        split = manifest.split
    rep = run_experiment(config, entries, split, args.out)
    path = args.report or (os.path.join(args.out, "report.json") if args.out else None)
    if path:
        reportmod.write(path, rep)
    else:
        sys.stdout.write(reportmod.dumps(rep))
    for row in rep["summary"]:
        log.info("fraction %.2f: mean test SDR %s dB", row["fraction"], row["mean_test_sdr"])
    return EXIT_OK if rep["status"] == "ok" else EXIT_PARTIAL


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="pqiga", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("mix", parents=[common], help="synthesize a mixture from a recipe")
    s.add_argument("--recipe", choices=RECIPES, default="band_disjoint")
    s.add_argument("--data-seed", type=int, default=0)
    s.add_argument("--snr", type=float, default=10.0)
    s.add_argument("--duration", type=float, default=1.0)
    s.add_argument("--overlap", type=float, default=0.3)
    s.add_argument("--sample-rate", type=int, default=16000)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_mix)

    s = sub.add_parser("separate", parents=[common], help="optimise masks and write sources")
    s.add_argument("--mixture", required=True)
    s.add_argument("--refs", nargs="+")
    s.add_argument("--noise")
    s.add_argument("--params", help="apply saved mask parameters (transfer mode)")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_separate)

    s = sub.add_parser("eval", parents=[common], help="score estimates against references")
    s.add_argument("--refs", nargs="+", required=True)
    s.add_argument("--estimates", nargs="+", required=True)
    s.add_argument("--noise")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("encode", parents=[common], help="dump encoder amplitudes as CSV")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--features", help="comma-separated angles in radians")
    g.add_argument("--wav", help="encode one MFCC frame of this file")
    s.add_argument("--frame", type=int, default=0)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("convergence", parents=[common], help="P_opt curve as CSV")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--beta", type=float, default=0.0)
    s.add_argument("--p0", type=float, default=0.0)
    s.add_argument("--t-max", type=int, default=100)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_convergence)

    s = sub.add_parser("experiment", parents=[common], help="batch run and data-size protocol")
    s.add_argument("--manifest")
    s.add_argument("--mode", choices=("supervised", "transfer", "datasize"))
    s.add_argument("--recipe", choices=RECIPES)
    s.add_argument("--n-mixtures", dest="n_mixtures", type=int)
    s.add_argument("--snr-db", dest="snr_db", type=float)
    s.add_argument("--repeats", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="directory for sources, traces and report.json")
    s.add_argument("--report", help="report path (default OUT/report.json or stdout)")
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (cfgmod.ConfigError, ManifestError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
