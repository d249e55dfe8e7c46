"""Deterministic experiment plumbing: seeds, configuration, manifests and emission.

Every trial draws from its own counter-based generator keyed by
``(master seed, trial index, stream label)``, so results do not depend on
the order or the process in which trials run.  Outputs are written with
sorted keys and shortest round-trip floats so that a rerun reproduces the
files byte for byte; wall-clock timings go to a separate file for the
same reason.
"""

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import InvalidInputError

ARTIFACT_VERSION = "0.1.0"

NOISE_MODELS = ("none", "uniform", "gaussian")
FORMATS = ("csv", "json")


# -- seeds ------------------------------------------------------------------------------


def _seed_digest(master, trial_index, stream):
    text = f"{int(master)}:{int(trial_index)}:{stream}".encode()
    return hashlib.blake2b(text, digest_size=16, person=b"radcal-seeds").digest()


def derive_seed(master, trial_index, stream="main"):
    """Independent generator for one ``(trial, stream)`` pair.

    The 128-bit Philox key is a BLAKE2b hash of the three inputs, so
    streams never share a counter sequence and no jump-ahead is needed.
    """
    key = np.frombuffer(_seed_digest(master, trial_index, stream), dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def seed_fingerprint(master, trial_index, stream="main"):
    """First 64 bits of the derived key, for collision checks."""
    return int.from_bytes(_seed_digest(master, trial_index, stream)[:8], "little")


# -- configuration --------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    experiment: str = ""
    n: int = 0  # 0 means the experiment default
    m: int = 0
    a: float = 0.0  # a = b = 0 means the experiment's own box
    b: float = 0.0
    k: int = 5
    trials: int = 0
    noise: str = "none"
    noise_level: float = 0.0
    seed: int = 0
    out: str = "results"
    format: str = "csv"
    full_scale: bool = False
    workers: int = 1
    figures: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.trials < 0:
            raise InvalidInputError("trials must be at least 1 (or 0 for the experiment default)")
        if self.noise not in NOISE_MODELS:
            raise InvalidInputError(f"noise must be one of {NOISE_MODELS}, got {self.noise!r}")
        if self.noise != "none" and not self.noise_level > 0:
            raise InvalidInputError("noise_level must be positive when a noise model is set")
        if self.format not in FORMATS:
            raise InvalidInputError(f"format must be one of {FORMATS}, got {self.format!r}")
        if not self.box_is_default and not 0 < self.a < self.b:
            raise InvalidInputError(f"box needs 0 < a < b, got ({self.a}, {self.b})")
        if self.workers < 1:
            raise InvalidInputError("workers must be at least 1")
        if self.seed < 0 or self.seed >= 2**64:
            raise InvalidInputError("seed must fit in an unsigned 64-bit integer")

    @property
    def box_is_default(self):
        return self.a == 0 and self.b == 0

    def trials_or(self, desk, full=None):
        """Configured trial count, else the desk default, else the full-scale one when requested."""
        if self.trials:
            return self.trials
        if self.full_scale and full is not None:
            return full
        return desk

    def echo(self):
        return asdict(self)


def _coerce(name, kind, text):
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise InvalidInputError(f"{name}: expected a boolean, got {text!r}")
    try:
        return kind(text)
    except ValueError:
        raise InvalidInputError(f"{name}: cannot read {text!r} as {kind.__name__}") from None


def parse_config(text, base=None):
    """Flat ``key = value`` text; ``#`` starts a comment.  Keys are ExperimentConfig fields."""
    kinds = {f.name: type(f.default) for f in fields(ExperimentConfig)}
    values = asdict(base) if base is not None else {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in kinds:
            raise InvalidInputError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, kinds[key], value)
    return ExperimentConfig(**values)


def load_config(path, base=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)


# -- manifest --------------------------------------------------------------------------------


@dataclass
class Table:
    """Rows of one CSV; ``columns`` fixes the header order."""

    columns: list
    rows: list = field(default_factory=list)

    def add(self, **row):
        self.rows.append(row)


@dataclass
class RunManifest:
    config: dict
    version: str = ARTIFACT_VERSION
    tables: dict = field(default_factory=dict)  # name -> Table
    aggregates: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)  # stage -> seconds, written apart
    notes: list = field(default_factory=list)

    def table(self, name, columns):
        if name not in self.tables:
            self.tables[name] = Table(list(columns))
        return self.tables[name]

    def to_dict(self):
        return {
            "config": self.config,
            "version": self.version,
            "aggregates": self.aggregates,
            "tables": {name: {"columns": t.columns, "rows": len(t.rows)} for name, t in sorted(self.tables.items())},
            "notes": self.notes,
        }


def _plain(obj):
    """JSON-ready copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps_json(obj):
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _cell(v):
    if isinstance(v, (np.floating, float)):
        return repr(float(v))
    if isinstance(v, (np.integer, np.bool_)):
        return str(v.item())
    return str(v)


def table_csv(table):
    """UTF-8 CSV text with a header row; floats in shortest round-trip form."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_cell(row.get(c, "")) for c in table.columns])
    return out.getvalue()


def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def emit(manifest, out_dir, fmt="csv"):
    """Write ``manifest.json``, ``timings.json`` and one file per table; returns the paths."""
    if fmt not in FORMATS:
        raise InvalidInputError(f"format must be one of {FORMATS}")
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out_dir}: {exc.strerror or exc}") from exc
    paths = [_write(os.path.join(out_dir, "manifest.json"), dumps_json(manifest.to_dict()))]
    paths.append(_write(os.path.join(out_dir, "timings.json"), dumps_json(manifest.timings)))
    for name, table in sorted(manifest.tables.items()):
        if fmt == "csv":
            paths.append(_write(os.path.join(out_dir, f"{name}.csv"), table_csv(table)))
        else:
            rows = [{c: row.get(c) for c in table.columns} for row in table.rows]
            paths.append(_write(os.path.join(out_dir, f"{name}.json"), dumps_json({"columns": table.columns, "rows": rows})))
    return paths


# -- trial execution ----------------------------------------------------------------------------


def run_trials(func, count, workers=1):
    """``[func(i) for i in range(count)]``, optionally across processes; order is by index.

    ``func`` must be picklable when ``workers > 1`` (a module-level function
    or a ``functools.partial`` of one).  Each trial derives its own seed, so
    the result list does not depend on ``workers``.
    """
    if workers <= 1 or count <= 1:
        return [func(i) for i in range(count)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, range(count), chunksize=max(1, count // (4 * workers))))


__all__ = [
    "ARTIFACT_VERSION",
    "ExperimentConfig",
    "RunManifest",
    "Table",
    "derive_seed",
    "dumps_json",
    "emit",
    "load_config",
    "parse_config",
    "run_trials",
    "seed_fingerprint",
    "table_csv",
]
