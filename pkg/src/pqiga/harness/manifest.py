"""Line-oriented dataset manifests.

One entry per line, tab separated::

    mixture.wav <TAB> ref1.wav <TAB> ref2.wav [<TAB> noise=n.wav] [<TAB> label=street]

Relative paths resolve against the manifest's directory. A directive line
``# split=0.8,0.1,0.1`` sets the train/val/test fractions; other lines
starting with ``#`` are comments.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

DEFAULT_SPLIT = (0.8, 0.1, 0.1)


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    mixture: str
    references: tuple
    noise: str | None = None
    label: str | None = None


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)
    split: tuple = DEFAULT_SPLIT

    def __post_init__(self):
        if len(self.split) != 3 or abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ManifestError(f"split fractions must be three values summing to 1: {self.split}")
        seen = set()
        for e in self.entries:
            paths = [e.mixture, *e.references] + ([e.noise] if e.noise else [])
            for p in paths:
                if p in seen:
                    raise ManifestError(f"path listed more than once: {p}")
                seen.add(p)

    def split_indices(self):
        """Contiguous (train, val, test) index lists in manifest order."""
        n_train, n_val, _ = split_counts(len(self.entries), self.split)
        idx = list(range(len(self.entries)))
        return idx[:n_train], idx[n_train : n_train + n_val], idx[n_train + n_val :]


def split_counts(n, split):
    n_train = int(round(split[0] * n))
    n_val = int(round(split[1] * n))
    return n_train, n_val, n - n_train - n_val


def parse_manifest(text, base_dir="."):
    entries = []
    split = DEFAULT_SPLIT
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if line.lstrip().startswith("#"):
            body = line.lstrip()[1:].strip()
            if body.startswith("split="):
                try:
                    split = tuple(float(x) for x in body[len("split="):].split(","))
                except ValueError:
                    raise ManifestError(f"line {lineno}: bad split directive {body!r}") from None
            continue
        cols = [c.strip() for c in line.split("\t") if c.strip()]
        noise = label = None
        paths = []
        for c in cols:
            if c.startswith("noise="):
                noise = os.path.join(base_dir, c[len("noise="):])
            elif c.startswith("label="):
                label = c[len("label="):]
            else:
                paths.append(os.path.join(base_dir, c))
        if len(paths) < 2:
            raise ManifestError(f"line {lineno}: need a mixture and at least one reference")
        entries.append(ManifestEntry(paths[0], tuple(paths[1:]), noise, label))
    return DatasetManifest(entries, split)


def read_manifest(path):
    with open(path, encoding="utf-8") as fh:
        return parse_manifest(fh.read(), os.path.dirname(os.path.abspath(path)))


def format_manifest(manifest, base_dir=None):
    def rel(p):
        return os.path.relpath(p, base_dir) if base_dir else p

    lines = ["# split=" + ",".join(repr(float(x)) for x in manifest.split)]
    for e in manifest.entries:
        cols = [rel(e.mixture), *(rel(r) for r in e.references)]
        if e.noise:
            cols.append("noise=" + rel(e.noise))
        if e.label:
            cols.append("label=" + e.label)
        lines.append("\t".join(cols))
    return "\n".join(lines) + "\n"
