"""Report serialisation and schema validation."""

from __future__ import annotations

import json
import math
from importlib import resources

import jsonschema

TIMING_KEY = "timing"


def _sanitize(obj):
    # JSON has no infinities; capped metrics never reach them, config values are strings
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return _sanitize(obj.item())
    return obj


def dumps(report):
    return json.dumps(_sanitize(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write(path, report):
    text = dumps(report)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return text


def load(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def strip_timing(obj):
    """Copy of ``obj`` without any ``timing`` members (for determinism checks)."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k != TIMING_KEY}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def schema():
    text = resources.files("pqiga").joinpath("report.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate(report):
    """Raise ``jsonschema.ValidationError`` if the report does not match the schema."""
    jsonschema.validate(json.loads(dumps(report)), schema())
