"""Format-by-width accuracy sweeps.

One full-precision model is trained per dataset, then quantized into every
format of the grid and evaluated on the test split with exact EMAC
inference.  Results are plain rows; rendering lives in :mod:`cli`.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import data, trainer
from .codec import FormatSpec, Kind
from .errors import ConfigError, InvalidFormat
from .network import CompiledNetwork

CSV_HEADER = ("dataset", "format", "n", "param", "accuracy", "baseline", "degradation")
BASELINE_TAG = "float64"
BASELINE_BITS = 64
KIND_ORDER = (Kind.POSIT, Kind.FLOAT, Kind.FIXED)
CONFIG_KEYS = {"seed", "output_dir", "jobs", "train", "datasets", "grid", "formats"}
GRID_KEYS = {"n", "posit_es", "float_we", "fixed_q"}


@dataclass(frozen=True)
class SweepGrid:
    n: tuple[int, ...] = (5, 6, 7, 8)
    posit_es: tuple[int, ...] = (0, 1, 2)
    float_we: tuple[int, ...] = (3, 4, 5)
    fixed_q: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7)

    @classmethod
    def from_dict(cls, d: dict) -> SweepGrid:
        unknown = set(d) - GRID_KEYS
        if unknown:
            raise ConfigError(f"unknown grid keys {sorted(unknown)}")
        try:
            return cls(**{k: tuple(int(v) for v in d[k]) for k in d})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"grid values must be integer lists: {exc}") from None

    def formats(self) -> list[FormatSpec]:
        """Every valid format, ordered by kind, then n, then parameter.

        Combinations that do not form a usable format are skipped: posit
        needs es <= n-3, float needs at least one fraction bit, fixed needs
        q <= n-1.
        """
        out: list[FormatSpec] = []
        for n in sorted(set(self.n)):
            out += [FormatSpec.posit(n, es) for es in sorted(set(self.posit_es)) if es <= n - 3]
        for n in sorted(set(self.n)):
            out += [FormatSpec.floating(we, n - 1 - we) for we in sorted(set(self.float_we))
                    if 2 <= we and n - 1 - we >= 1]
        for n in sorted(set(self.n)):
            out += [FormatSpec.fixed(n, q) for q in sorted(set(self.fixed_q)) if 0 <= q <= n - 1]
        return out


@dataclass(frozen=True)
class ResultRow:
    dataset: str
    format: str
    n: int
    param: Optional[int]
    accuracy: float
    baseline: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.accuracy <= 1.0 and 0.0 <= self.baseline <= 1.0):
            raise ValueError("accuracies must lie in [0, 1]")

    @property
    def degradation(self) -> float:
        """Percentage points lost against the full-precision baseline."""
        return 100.0 * (self.baseline - self.accuracy)

    @property
    def kind(self) -> Optional[Kind]:
        return None if self.format == BASELINE_TAG else FormatSpec.parse(self.format).kind


@dataclass
class SweepConfig:
    datasets: list[dict]
    formats: list[FormatSpec]
    train: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str = "results"
    jobs: int = 1
    source: dict = field(default_factory=dict)

    @property
    def digest(self) -> str:
        # parallelism and destination do not change results
        doc = {k: v for k, v in self.source.items() if k not in ("jobs", "output_dir")}
        canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def train_config(self, entry: dict) -> trainer.TrainConfig:
        merged = {"seed": self.seed, **self.train, **entry.get("train", {})}
        return trainer.TrainConfig.from_dict(merged)


def default_config_path() -> Path:
    return Path(str(resources.files("deep_positron") / "configs" / "default.json"))


def parse_config(doc: dict) -> SweepConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    datasets = doc.get("datasets")
    if not isinstance(datasets, list) or not datasets:
        raise ConfigError("config needs a non-empty 'datasets' list")
    for entry in datasets:
        if not isinstance(entry, dict) or "name" not in entry:
            raise ConfigError(f"bad dataset entry {entry!r}")
    names = [e["name"] for e in datasets]
    if len(set(names)) != len(names):
        raise ConfigError("dataset names must be unique")
    if "formats" in doc:
        if "grid" in doc:
            raise ConfigError("give either 'grid' or 'formats', not both")
        try:
            formats = [FormatSpec.parse(t) for t in doc["formats"]]
        except InvalidFormat as exc:
            raise ConfigError(str(exc)) from None
    else:
        formats = SweepGrid.from_dict(doc.get("grid", {})).formats()
    if len({f.tag for f in formats}) != len(formats):
        raise ConfigError("duplicate formats in sweep")
    try:
        seed, jobs = int(doc.get("seed", 0)), int(doc.get("jobs", 1))
    except (TypeError, ValueError):
        raise ConfigError("'seed' and 'jobs' must be integers") from None
    if jobs < 1:
        raise ConfigError("'jobs' must be >= 1")
    cfg = SweepConfig(
        datasets=datasets, formats=formats, train=dict(doc.get("train", {})),
        seed=seed, output_dir=str(doc.get("output_dir", "results")), jobs=jobs, source=doc,
    )
    for entry in datasets:
        cfg.train_config(entry)  # validate option names early
    return cfg


def with_overrides(cfg: SweepConfig, **changes) -> SweepConfig:
    """Re-parse with top-level fields replaced; ``None`` values are ignored."""
    doc = dict(cfg.source)
    doc.update({k: v for k, v in changes.items() if v is not None})
    return parse_config(doc)


def load_config(path: str | Path) -> SweepConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(doc)


def _evaluate(model: trainer.FloatModel, spec: FormatSpec, x: np.ndarray, y: np.ndarray) -> float:
    net = CompiledNetwork(trainer.quantize(model, spec))
    if len(y) == 0:
        return 0.0
    return float(np.mean(net.predict(x) == y))


def _cell(args) -> float:
    return _evaluate(*args)


def run_sweep(cfg: SweepConfig, datasets: Optional[Sequence[str]] = None) -> list[ResultRow]:
    """Train, quantize and evaluate; rows come back in grid order."""
    rows: list[ResultRow] = []
    entries = cfg.datasets
    if datasets is not None:
        missing = set(datasets) - {e["name"] for e in entries}
        if missing:
            raise ConfigError(f"datasets not in config: {sorted(missing)}")
        entries = [e for e in entries if e["name"] in datasets]
    jobs = []
    baselines = []
    for entry in entries:
        ds = data.load_dataset(entry, cfg.seed)
        model = trainer.train(ds, cfg.train_config(entry))
        x, y = ds.test
        base = trainer.accuracy(model, x, y)
        baselines.append((entry["name"], base))
        jobs += [(entry["name"], base, (model, spec, x, y)) for spec in cfg.formats]

    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            accs = list(pool.map(_cell, [j[2] for j in jobs]))
    else:
        accs = [_cell(j[2]) for j in jobs]

    for name, base in baselines:
        rows.append(ResultRow(name, BASELINE_TAG, BASELINE_BITS, None, base, base))
    for (name, base, (_, spec, _, _)), acc in zip(jobs, accs):
        rows.append(ResultRow(name, spec.tag, spec.n, spec.param, acc, base))
    order = {name: i for i, (name, _) in enumerate(baselines)}
    rows.sort(key=lambda r: (order[r.dataset], r.format != BASELINE_TAG))
    return rows


def best_of(rows: Sequence[ResultRow], dataset: str, kind: Kind, n: int) -> Optional[ResultRow]:
    """Most accurate row for one (dataset, kind, n); ties go to the earlier grid entry."""
    best = None
    for r in rows:
        if r.dataset == dataset and r.kind is kind and r.n == n:
            if best is None or r.accuracy > best.accuracy:
                best = r
    return best


def average_degradation(rows: Sequence[ResultRow], kind: Kind, n: int) -> Optional[float]:
    """Mean over datasets of the best-configuration degradation at width n."""
    picks = [best_of(rows, d, kind, n) for d in dataset_names(rows)]
    if not picks or any(p is None for p in picks):
        return None
    return sum(p.degradation for p in picks) / len(picks)


def dataset_names(rows: Sequence[ResultRow]) -> list[str]:
    return list(dict.fromkeys(r.dataset for r in rows))


def rows_to_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([
            r.dataset, r.format, r.n, "" if r.param is None else r.param,
            f"{r.accuracy:.6f}", f"{r.baseline:.6f}", f"{r.degradation:.4f}",
        ])
    return buf.getvalue()


def rows_from_csv(text: str) -> list[ResultRow]:
    reader = csv.reader(io.StringIO(text))
    header = tuple(next(reader))
    if header != CSV_HEADER:
        raise ConfigError(f"unexpected report header {header}")
    return [
        ResultRow(d, f, int(n), None if p == "" else int(p), float(a), float(b))
        for d, f, n, p, a, b, _ in reader
    ]


def _pct(x: Optional[float]) -> str:
    return "-" if x is None else f"{100 * x:.1f}"


def render_text(rows: Sequence[ResultRow], seed: int, digest: str) -> str:
    """Human-readable report: per-dataset best-of tables and average degradation."""
    out = [f"seed: {seed}", f"config: {digest}", ""]
    names = dataset_names(rows)
    widths = sorted({r.n for r in rows if r.kind is not None}, reverse=True)
    for name in names:
        base = next(r.baseline for r in rows if r.dataset == name)
        out.append(f"{name}  (full-precision baseline {_pct(base)}%)")
        out.append(f"  {'n':>2}  {'posit':>14}  {'float':>14}  {'fixed':>14}")
        for n in widths:
            cells = []
            for kind, letter in zip(KIND_ORDER, ("es", "we", "q")):
                b = best_of(rows, name, kind, n)
                cells.append("-" if b is None else f"{_pct(b.accuracy)} ({letter}={b.param})")
            out.append(f"  {n:>2}  " + "  ".join(f"{c:>14}" for c in cells))
        out.append("")
    out.append("average degradation at best configuration (percentage points)")
    out.append(f"  {'n':>2}  {'posit':>8}  {'float':>8}  {'fixed':>8}")
    for n in widths:
        vals = [average_degradation(rows, k, n) for k in KIND_ORDER]
        out.append(f"  {n:>2}  " + "  ".join(f"{'-' if v is None else f'{v:.1f}':>8}" for v in vals))
    return "\n".join(out) + "\n"


def write_reports(rows: Sequence[ResultRow], cfg: SweepConfig, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "sweep.csv", "text": out / "sweep.txt", "meta": out / "sweep.json"}
    paths["csv"].write_text(rows_to_csv(rows))
    paths["text"].write_text(render_text(rows, cfg.seed, cfg.digest))
    meta = {"seed": cfg.seed, "config_sha256": cfg.digest, "cells": len(rows), "config": cfg.source}
    paths["meta"].write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return paths
