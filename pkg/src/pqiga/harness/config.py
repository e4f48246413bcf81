"""INI-style run configuration with every default pre-populated.

Precedence: built-in defaults < config file < ``section.key=value`` overrides.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources

from ..features import StftConfig
from ..metrics import FitnessWeights
from ..postproc import PostprocConfig
from ..qiga import QigaConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MaskConfig:
    n_sources: int = 2
    n_bands: int = 16


@dataclass(frozen=True)
class FeatureConfig:
    n_mels: int = 40
    n_mfcc: int = 13
    encode: bool = True
    # leading coefficients fed to the encoder; odd counts are padded with 0
    n_encoded: int = 13


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "supervised"
    recipe: str = "band_disjoint"
    n_mixtures: int = 4
    snr_db: float = 10.0
    duration: float = 1.0
    overlap: float = 0.3
    data_seed: int = 0
    split: str = "0.8,0.1,0.1"
    fractions: str = "0.1,0.25,0.5,0.75"
    repeats: int = 1

    def split_fractions(self):
        parts = tuple(float(x) for x in self.split.split(","))
        if len(parts) != 3 or abs(sum(parts) - 1.0) > 1e-9 or min(parts) < 0:
            raise ConfigError(f"split must be three fractions summing to 1, got {self.split!r}")
        return parts

    def fraction_list(self):
        fr = [float(x) for x in self.fractions.split(",") if x.strip()]
        if not fr or any(not 0.0 < f <= 1.0 for f in fr):
            raise ConfigError(f"fractions must lie in (0, 1], got {self.fractions!r}")
        return fr


@dataclass(frozen=True)
class IoConfig:
    write_sources: bool = True
    write_traces: bool = True


# section name -> (attribute on Config, dataclass, {ini key: field name})
SECTIONS = {
    "qiga": ("qiga", QigaConfig, {}),
    "masks": ("masks", MaskConfig, {}),
    "stft": ("stft", StftConfig, {}),
    "features": ("features", FeatureConfig, {}),
    "postproc": ("postproc", PostprocConfig, {}),
    "metrics": ("weights", FitnessWeights, {
        "w_sdr": "sdr", "w_sir": "sir", "w_sar": "sar", "w_corr": "correlation"}),
    "experiment": ("experiment", ExperimentConfig, {}),
    "io": ("io", IoConfig, {}),
}


@dataclass(frozen=True)
class Config:
    qiga: QigaConfig = field(default_factory=QigaConfig)
    masks: MaskConfig = field(default_factory=MaskConfig)
    stft: StftConfig = field(default_factory=StftConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    postproc: PostprocConfig = field(default_factory=PostprocConfig)
    weights: FitnessWeights = field(default_factory=FitnessWeights)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    io: IoConfig = field(default_factory=IoConfig)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "inf" if value == math.inf else repr(value)
    return str(value)


def _parse(raw, default, where):
    try:
        if isinstance(default, bool):
            v = raw.strip().lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type(default).__name__}") from None


def _key_map(section):
    _, cls, rename = SECTIONS[section]
    keys = {}
    for f in dataclasses.fields(cls):
        ini = next((k for k, v in rename.items() if v == f.name), f.name)
        keys[ini] = f.name
    return keys


def to_sections(config):
    """``{section: {key: string}}`` view; also the report's config snapshot."""
    out = {}
    for section, (attr, _, _) in SECTIONS.items():
        obj = getattr(config, attr)
        out[section] = {ini: _format(getattr(obj, name)) for ini, name in _key_map(section).items()}
    return out


def dumps(config):
    lines = []
    for section, kv in to_sections(config).items():
        lines.append(f"[{section}]")
        lines += [f"{k} = {v}" for k, v in kv.items()]
        lines.append("")
    return "\n".join(lines)


def from_sections(sections, base=None):
    """Apply ``{section: {key: raw}}`` on top of ``base`` (defaults if None)."""
    config = base or Config()
    updates = {}
    for section, kv in sections.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        attr, cls, _ = SECTIONS[section]
        obj = updates.get(attr, getattr(config, attr))
        keys = _key_map(section)
        changes = {}
        for key, raw in kv.items():
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            name = keys[key]
            changes[name] = _parse(str(raw), getattr(obj, name), f"[{section}] {key}")
        try:
            updates[attr] = dataclasses.replace(obj, **changes)
        except ValueError as exc:
            raise ConfigError(f"[{section}]: {exc}") from None
    return config.replace(**updates)


def loads(text, base=None):
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    return from_sections({s: dict(parser[s]) for s in parser.sections()}, base)


def load(path=None, overrides=()):
    """Read a config file (or just defaults) and apply ``section.key=value`` overrides."""
    config = Config()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        config = loads(text, config)
    return apply_overrides(config, overrides)


def apply_overrides(config, overrides):
    sections = {}
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        sections.setdefault(section, {})[name] = value
    return from_sections(sections, config) if sections else config


def default_config_text():
    """Contents of the packaged default configuration file."""
    return resources.files("pqiga").joinpath("default.ini").read_text(encoding="utf-8")


def load_default():
    return loads(default_config_text())
