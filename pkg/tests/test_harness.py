import json
import math
import struct
import wave

import numpy as np
import pytest

from pqiga.features import StftConfig
from pqiga.harness import config as cfgmod
from pqiga.harness import report as reportmod
from pqiga.harness.baselines import duplicate_mixture_sdr, ideal_band_partition
from pqiga.harness.cli import main
from pqiga.harness.experiment import (
    Entry,
    build_problem,
    is_degenerate,
    run_experiment,
    separate_and_score,
    subsample,
)
from pqiga.harness.manifest import (
    DatasetManifest,
    ManifestEntry,
    ManifestError,
    format_manifest,
    parse_manifest,
    split_counts,
)
from pqiga.harness.mixing import MixtureSpec, source_images, synthesize_mixture
from pqiga.harness.recipes import RECIPES, make_recipe
from pqiga.harness.wavio import WavError, read_wav, write_wav
from pqiga.metrics import FitnessWeights

SR = 16000


def small_config(**experiment):
    cfg = cfgmod.Config()
    q = cfg.qiga.__class__(population_size=8, max_generations=4, seed=1)
    exp = cfg.experiment.__class__(**{"n_mixtures": 2, "duration": 0.5, **experiment})
    return cfg.replace(qiga=q, experiment=exp)


# mixing


def test_identity_mixing():
    s = np.random.default_rng(0).standard_normal(1000)
    m = synthesize_mixture(MixtureSpec((s,), ([1.0],), SR))
    assert np.allclose(m.mixture, m.gain * s, atol=1e-12)
    assert np.max(np.abs(m.mixture)) == pytest.approx(0.9)


def test_zero_filter_drops_source():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal(500), rng.standard_normal(500)
    m = synthesize_mixture(MixtureSpec((a, b), ([1.0], [0.0]), SR))
    assert np.allclose(m.mixture / m.gain, a, atol=1e-12)


def test_mixing_identity_before_normalization():
    rng = np.random.default_rng(2)
    srcs = tuple(rng.standard_normal(3000) for _ in range(3))
    filters = tuple(rng.standard_normal(5) for _ in range(3))
    spec = MixtureSpec(srcs, filters, SR, snr_db=5.0)
    m = synthesize_mixture(spec, seed=3)
    # independent convolution oracle: explicit sum over taps
    clean = np.zeros(3000)
    for s, a in zip(srcs, filters):
        for k, ak in enumerate(a):
            clean[k:] += ak * s[: 3000 - k]
    resid = m.mixture / m.gain - clean - m.noise / m.gain
    assert np.max(np.abs(resid)) < 1e-9
    assert np.allclose(np.sum(source_images(spec), axis=0), clean, atol=1e-9)
    assert np.allclose(m.mixture, np.sum(m.references, axis=0) + m.noise, atol=1e-12)


@pytest.mark.parametrize("snr", [3.0, -5.0, 20.0])
def test_realized_snr(snr):
    rng = np.random.default_rng(4)
    srcs = (rng.standard_normal(4000), rng.standard_normal(4000))
    m = synthesize_mixture(MixtureSpec(srcs, ([1.0], [0.5, 0.2]), SR, snr_db=snr), seed=5)
    clean = m.mixture - m.noise
    ratio = np.sum(clean**2) / np.sum(m.noise**2)
    assert ratio == pytest.approx(10 ** (snr / 10), rel=1e-6)


def test_mixture_spec_validation():
    with pytest.raises(ValueError):
        MixtureSpec((), (), SR)
    with pytest.raises(ValueError):
        MixtureSpec((np.ones(3), np.ones(4)), ([1], [1]), SR)
    with pytest.raises(ValueError):
        MixtureSpec((np.ones(3),), ([1], [1]), SR)


@pytest.mark.parametrize("name", RECIPES)
def test_recipes_deterministic_and_bounded(name):
    a, b = make_recipe(name, 7, duration=0.25), make_recipe(name, 7, duration=0.25)
    assert np.array_equal(a.mixture, b.mixture)
    assert a.meta["recipe"] == name
    assert np.max(np.abs(a.mixture)) <= 0.9 + 1e-12
    assert len(a.references) == 2
    c = make_recipe(name, 8, duration=0.25)
    assert not np.array_equal(a.mixture, c.mixture)


def test_unknown_recipe():
    with pytest.raises(ValueError):
        make_recipe("nope", 0)


# wav


def test_wav_round_trip_ramp(tmp_path):
    x = np.linspace(-1, 1 - 2**-15, 5000)
    p = tmp_path / "ramp.wav"
    write_wav(p, x, 22050)
    y, sr = read_wav(p)
    assert sr == 22050
    assert np.max(np.abs(x - y)) <= 2**-15


def test_wav_stereo_downmix(tmp_path):
    p = tmp_path / "st.wav"
    left = np.full(100, 1000, dtype="<i2")
    right = np.full(100, -3000, dtype="<i2")
    with wave.open(str(p), "wb") as w:
        w.setnchannels(2)
        w.setsampwidth(2)
        w.setframerate(SR)
        w.writeframes(np.stack([left, right], axis=1).tobytes())
    y, _ = read_wav(p)
    assert y.shape == (100,)
    assert np.allclose(y, -1000 / 32768)


def _float_wav(path, x, sr):
    data = np.asarray(x, dtype="<f4").tobytes()
    fmt = struct.pack("<HHIIHH", 3, 1, sr, sr * 4, 4, 32)
    body = b"WAVE" + b"fmt " + struct.pack("<I", 16) + fmt + b"data" + struct.pack("<I", len(data)) + data
    path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


def test_wav_float32(tmp_path):
    p = tmp_path / "f.wav"
    x = np.array([0.0, 0.25, -0.5, 0.125])
    _float_wav(p, x, 8000)
    y, sr = read_wav(p)
    assert sr == 8000 and np.array_equal(y, x)


def test_wav_truncated_header_names_chunk(tmp_path):
    p = tmp_path / "t.wav"
    write_wav(p, np.zeros(100), SR)
    raw = p.read_bytes()
    (tmp_path / "a.wav").write_bytes(raw[:20])
    with pytest.raises(WavError, match="fmt "):
        read_wav(tmp_path / "a.wav")
    (tmp_path / "b.wav").write_bytes(raw[:8])
    with pytest.raises(WavError, match="RIFF"):
        read_wav(tmp_path / "b.wav")
    (tmp_path / "c.wav").write_bytes(raw[:36])
    with pytest.raises(WavError, match="data"):
        read_wav(tmp_path / "c.wav")


def test_wav_unsupported_encoding(tmp_path):
    p = tmp_path / "u8.wav"
    with wave.open(str(p), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(1)
        w.setframerate(SR)
        w.writeframes(bytes(10))
    with pytest.raises(WavError, match="unsupported"):
        read_wav(p)


# manifest


def test_manifest_parse_and_format(tmp_path):
    text = "# split=0.6,0.2,0.2\n# comment\nm.wav\tr1.wav\tr2.wav\tnoise=n.wav\tlabel=street\n\nm2.wav\ta.wav\n"
    m = parse_manifest(text, str(tmp_path))
    assert m.split == (0.6, 0.2, 0.2)
    assert len(m.entries) == 2
    e = m.entries[0]
    assert e.mixture == str(tmp_path / "m.wav") and len(e.references) == 2
    assert e.noise == str(tmp_path / "n.wav") and e.label == "street"
    again = parse_manifest(format_manifest(m, str(tmp_path)), str(tmp_path))
    assert again == m


@pytest.mark.parametrize("text", [
    "m.wav\n",
    "# split=0.5,0.5,0.5\nm.wav\tr.wav\n",
    "# split=a,b\nm.wav\tr.wav\n",
    "m.wav\tr.wav\nm.wav\tq.wav\n",
])
def test_manifest_errors(text):
    with pytest.raises(ManifestError):
        parse_manifest(text)


def test_split_counts():
    assert split_counts(50, (0.8, 0.1, 0.1)) == (40, 5, 5)
    m = DatasetManifest([ManifestEntry(f"m{i}", (f"r{i}",)) for i in range(10)])
    train, val, test = m.split_indices()
    assert (len(train), len(val), len(test)) == (8, 1, 1)


# config


def test_default_file_holds_table_defaults():
    cfg = cfgmod.load_default()
    assert cfg == cfgmod.Config()
    w = cfg.weights
    assert (w.sdr, w.sir, w.sar, w.correlation) == (0.5, 0.3, 0.2, 1.0)
    q = cfg.qiga
    assert (q.population_size, q.max_generations, q.crossover_prob, q.mutation_prob) == (
        50, 100, 0.8, 0.1)


def test_config_round_trip_and_overrides(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[qiga]\npopulation_size = 12\n[metrics]\nw_corr = 0.5\n")
    cfg = cfgmod.load(str(p), ["qiga.population_size=20", "masks.n_bands=8"])
    assert cfg.qiga.population_size == 20
    assert cfg.weights.correlation == 0.5
    assert cfg.masks.n_bands == 8
    assert cfgmod.loads(cfgmod.dumps(cfg)) == cfg


@pytest.mark.parametrize("override", [
    "qiga.nope=1", "nosection.x=1", "qiga.population_size=abc", "qiga.population_size",
    "qiga.crossover_prob=2", "metrics.w_sdr=-1",
])
def test_config_errors(override):
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.load(None, [override])


def test_config_missing_file():
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.load("/nonexistent/x.ini")


# experiment pieces


def test_subsample_seeded():
    a = subsample(40, 0.25, 3, 0)
    assert a == subsample(40, 0.25, 3, 0) and len(a) == 10
    assert a != subsample(40, 0.25, 3, 1)
    assert len(subsample(40, 0.01, 0, 0)) == 1


def test_degenerate_detection():
    assert is_degenerate(np.full((2, 4), 0.3))
    assert not is_degenerate(np.array([[1.0, 0.0], [0.0, 1.0]]))


def test_ideal_partition_matches_direct_scoring():
    mix = make_recipe("band_disjoint", 3, duration=0.5)
    entry = Entry("e", mix.mixture, mix.references, mix.noise, SR)
    cfg = cfgmod.Config()
    best, assign = ideal_band_partition(build_problem(entry, cfg))
    gains = np.stack([(assign == i).astype(float) for i in range(2)])
    direct = separate_and_score(entry, gains, cfg.replace(
        postproc=cfg.postproc.__class__(enabled=False)))
    assert direct["mean_sdr"] == pytest.approx(best, abs=1e-6)
    assert best > duplicate_mixture_sdr(mix.mixture, mix.references) + 10


def test_supervised_report_schema_and_quality(tmp_path):
    cfg = small_config()
    rep = run_experiment(cfg, out_dir=str(tmp_path))
    reportmod.validate(rep)
    assert rep["status"] == "ok" and len(rep["entries"]) == 2
    for e in rep["entries"]:
        # a zero estimate scores 0 dB
        assert e["mean_sdr"] > 0
        assert (tmp_path / e["source_files"][0]).exists()
        assert (tmp_path / e["trace_file"]).exists()
        assert np.all(np.diff(e["trace"]["best"]) >= 0)


def test_sir_clamp_events_are_flagged():
    cfg = small_config()
    rep = run_experiment(cfg)
    for e in rep["entries"]:
        for row in e["metrics"]:
            if row["flags"]["sir_clamped"]:
                assert f"sir_clamped:source{row['source']}" in e["flags"]


def test_failing_entry_does_not_abort_batch():
    cfg = small_config()
    mix = make_recipe("band_disjoint", 0, duration=0.5)
    good = Entry("good", mix.mixture, mix.references, mix.noise, SR)
    bad = Entry("bad", mix.mixture, mix.references[:1], mix.noise, SR)
    rep = run_experiment(cfg, entries=[bad, good, OSError("missing.wav")])
    reportmod.validate(rep)
    status = [e["status"] for e in rep["entries"]]
    assert status == ["error", "ok", "error"]
    assert rep["status"] == "partial" and rep["n_errors"] == 2


def test_datasize_report(tmp_path):
    cfg = small_config(mode="datasize", n_mixtures=10, fractions="0.25,0.5")
    rep = run_experiment(cfg)
    reportmod.validate(rep)
    assert [r["fraction"] for r in rep["summary"]] == [0.25, 0.5]
    assert [r["n_train"] for r in rep["summary"]] == [2, 4]
    assert len(rep["runs"]) == 2


def test_transfer_report():
    cfg = small_config(mode="transfer", n_mixtures=10, repeats=2)
    rep = run_experiment(cfg)
    reportmod.validate(rep)
    assert len(rep["runs"]) == 2 and len(rep["runs"][0]["test"]) == 1
    assert "encoding" in rep["runs"][0]["test"][0]


def test_report_determinism():
    cfg = small_config()
    a = reportmod.dumps(reportmod.strip_timing(run_experiment(cfg)))
    b = reportmod.dumps(reportmod.strip_timing(run_experiment(cfg)))
    assert a == b


def test_report_round_trip(tmp_path):
    rep = run_experiment(small_config(n_mixtures=1))
    text = reportmod.write(tmp_path / "r.json", rep)
    assert reportmod.dumps(reportmod.load(tmp_path / "r.json")) == text


def test_schema_rejects_bad_report():
    import jsonschema

    rep = run_experiment(small_config(n_mixtures=1))
    rep["entries"][0]["metrics"][0]["flags"].pop("sdr_capped")
    with pytest.raises(jsonschema.ValidationError):
        reportmod.validate(rep)


def test_encoding_diagnostic_in_range():
    rep = run_experiment(small_config(n_mixtures=1))
    enc = rep["entries"][0]["encoding"]
    assert enc["n_layers"] == 7
    assert 0 <= enc["min_adjacent_fidelity"] <= enc["mean_adjacent_fidelity"] <= 1


# cli

FAST = ["--set", "qiga.population_size=8", "--set", "qiga.max_generations=3"]


def test_cli_mix_separate_eval(tmp_path, capsys):
    d = tmp_path / "mix"
    assert main(["mix", "--recipe", "band_disjoint", "--duration", "0.5", "--out", str(d)]) == 0
    meta = json.loads((d / "meta.json").read_text())
    assert meta["recipe"] == "band_disjoint"
    out = tmp_path / "sep"
    assert main(["separate", "--mixture", str(d / "mixture.wav"),
                 "--refs", str(d / "ref0.wav"), str(d / "ref1.wav"),
                 "--noise", str(d / "noise.wav"), "--out", str(out), *FAST]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["mean_sdr"] > 0
    assert (out / "trace.csv").read_text().startswith("generation,best,mean\n")
    assert main(["eval", "--refs", str(d / "ref0.wav"), str(d / "ref1.wav"),
                 "--estimates", str(out / "separate_source1.wav"),
                 str(out / "separate_source0.wav")]) == 0
    result = json.loads(capsys.readouterr().out)
    assert len(result["metrics"]) == 2
    # transfer mode with the saved parameters
    t_out = tmp_path / "transfer"
    assert main(["separate", "--mixture", str(d / "mixture.wav"), "--params",
                 str(out / "params.json"), "--out", str(t_out)]) == 0
    assert (t_out / "source0.wav").exists()


def test_cli_encode(tmp_path, capsys):
    assert main(["encode", "--features", "0,0"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "basis_index,re,im" and len(lines) == 17
    amps = {int(r.split(",")[0]): float(r.split(",")[1]) for r in lines[1:]}
    assert [k for k, v in amps.items() if abs(v) > 1e-12] == [0, 1, 14, 15]
    p = tmp_path / "x.wav"
    write_wav(p, 0.3 * np.random.default_rng(0).standard_normal(8000), SR)
    out = tmp_path / "amps.csv"
    assert main(["encode", "--wav", str(p), "--frame", "2", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()[1:]
    norm = sum(float(r.split(",")[1]) ** 2 + float(r.split(",")[2]) ** 2 for r in rows)
    assert norm == pytest.approx(1.0, abs=1e-10)
    assert main(["encode", "--wav", str(p), "--frame", "999"]) == 2


def test_cli_convergence(capsys):
    assert main(["convergence", "--alpha", "0.1", "--t-max", "3"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0] == "t,p_opt"
    assert [float(r.split(",")[1]) for r in rows[1:]] == pytest.approx([0, 0.1, 0.19, 0.271])
    assert main(["convergence", "--alpha", "2"]) == 2


def test_cli_experiment_and_exit_codes(tmp_path):
    rep = tmp_path / "r.json"
    args = ["experiment", "--n-mixtures", "1", "--report", str(rep), *FAST,
            "--set", "experiment.duration=0.5"]
    assert main(args) == 0
    reportmod.validate(reportmod.load(rep))
    assert main(["experiment", "--set", "qiga.bogus=1"]) == 2
    assert main(["experiment", "--config", str(tmp_path / "none.ini")]) == 2


def test_cli_experiment_manifest_partial(tmp_path):
    d = tmp_path / "mix"
    main(["mix", "--duration", "0.5", "--out", str(d)])
    manifest = d / "manifest.tsv"
    manifest.write_text(manifest.read_text() + "missing.wav\tgone.wav\tgone2.wav\n")
    rep = tmp_path / "r.json"
    code = main(["experiment", "--manifest", str(manifest), "--report", str(rep), *FAST])
    assert code == 1
    r = reportmod.load(rep)
    assert [e["status"] for e in r["entries"]] == ["ok", "error"]
    bad = tmp_path / "bad.tsv"
    bad.write_text("only_one.wav\n")
    assert main(["experiment", "--manifest", str(bad)]) == 2


def test_stft_config_follows_file_rate(tmp_path):
    mix = make_recipe("band_disjoint", 1, duration=0.5, sample_rate=8000)
    entry = Entry("e8k", mix.mixture, mix.references, mix.noise, 8000)
    cfg = cfgmod.Config()
    res = separate_and_score(entry, np.array([[1.0] * 8 + [0.0] * 8, [0.0] * 8 + [1.0] * 8]), cfg)
    assert math.isfinite(res["mean_sdr"])
    assert StftConfig().sample_rate == 16000
    assert FitnessWeights() == cfg.weights
