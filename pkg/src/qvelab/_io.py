"""Deterministic serialization and run manifests.

JSON numbers are emitted with 17 significant digits so doubles round-trip
exactly and reruns are byte-identical; files are written atomically.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from typing import Optional

_TOKEN = "@qvelab-f17[{}]f17-qvelab@"
_TOKEN_RE = re.compile(r'"@qvelab-f17\[(.*?)\]f17-qvelab@"')


def _fmt_float(x: float) -> str:
    if x != x:  # NaN is not valid JSON
        return "null"
    if x in (float("inf"), float("-inf")):
        return "1e999" if x > 0 else "-1e999"  # parses back as +-inf
    return "%.17g" % x


def _tokenize(obj):
    if isinstance(obj, float):
        return _TOKEN.format(_fmt_float(obj))
    if isinstance(obj, dict):
        return {k: _tokenize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_tokenize(v) for v in obj]
    if isinstance(obj, complex):
        return [_tokenize(obj.real), _tokenize(obj.imag)]
    return obj


def dump_json(obj, indent: Optional[int] = None) -> str:
    """Deterministic JSON text: sorted keys, 17-significant-digit floats."""
    text = json.dumps(_tokenize(obj), sort_keys=True, indent=indent)
    return _TOKEN_RE.sub(lambda m: m.group(1), text)


def atomic_write(path: str, text: str) -> None:
    """Write via a sibling temp file and rename."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class RunManifest:
    """Reproducibility record written alongside every CLI output."""

    command: str
    model_hash: str
    config: dict
    seed: Optional[int] = None
    versions: str = ""
    outputs: list = field(default_factory=list)

    def to_json(self) -> str:
        return dump_json(
            {
                "command": self.command,
                "model_hash": self.model_hash,
                "config": self.config,
                "seed": self.seed,
                "versions": self.versions,
                "outputs": self.outputs,
            },
            indent=2,
        )

    def write(self, out_path: str) -> str:
        path = out_path + ".manifest.json"
        atomic_write(path, self.to_json() + "\n")
        return path


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()
