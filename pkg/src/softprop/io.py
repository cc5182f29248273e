"""File helpers: atomic writes and schema-versioned CSV."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ConfigError

SCHEMA_MAJOR = 1
SCHEMA_VERSION = f"{SCHEMA_MAJOR}.0"
_PREFIX = "# softprop:"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v) -> str:
    if isinstance(v, (str, bytes)):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, rows, kind: str) -> None:
    """Write ``rows`` under ``header`` preceded by a schema line ``# softprop:<kind> v1.0``."""
    buf = io.StringIO()
    buf.write(f"{_PREFIX}{kind} v{SCHEMA_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def read_csv_rows(path, expected_kind=None):
    """Return ``(header, rows)``. Files without a schema line are accepted as v1."""
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ConfigError(f"{path}: empty file")
    if lines[0].startswith("#"):
        tag = lines[0]
        lines = lines[1:]
        if tag.startswith(_PREFIX):
            kind, _, version = tag[len(_PREFIX) :].partition(" v")
            major = version.split(".")[0]
            if major != str(SCHEMA_MAJOR):
                raise ConfigError(f"{path}: unsupported schema version {version!r}")
            if expected_kind is not None and kind != expected_kind:
                raise ConfigError(f"{path}: expected a {expected_kind} file, found {kind}")
    reader = csv.reader(lines)
    header = next(reader)
    rows = [r for r in reader if r]
    return header, rows


def read_csv_array(path, expected_kind=None):
    header, rows = read_csv_rows(path, expected_kind)
    return header, np.asarray(rows, dtype=float).reshape(-1, len(header))
