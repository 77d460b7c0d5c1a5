"""Benchmark harness: optimiser vs sample-and-filter, plus the ablation ladder.

Every run is scored by the mean expected utility of its top-10 grasps and
by which criteria its top grasps satisfy. All criteria the scene supports
are evaluated on the final grasps, including ones absent from the run's
hierarchy, so ablations can be compared on a common footing.

Three CSV files are written: ``report.csv`` (one row per method or
ablation and seed), ``summary.csv`` (mean and standard deviation per
method or ablation) and ``long.csv`` (one metric per row, for plotting).
"""
from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DomainError
from .hierarchy import RuleHierarchy
from .optimizer import OptimizerConfig, SamplerSpec, evaluate, filter_baseline, grace_opt

DEFAULT_METHODS = ("grace", "filter-10", "filter-50", "filter-100", "filter-1000")
DEFAULT_ABLATIONS = ("S", "SE", "SC", "SEC", "SECN")
TOP_K = 10

_KEY_COLUMNS = ("kind", "method", "hierarchy", "seed")


@dataclass
class BenchmarkReport:
    rows: list = field(default_factory=list)

    def __post_init__(self):
        self.rows = sorted(self.rows, key=_row_key)

    @property
    def seeds(self) -> list:
        return sorted({r["seed"] for r in self.rows})

    @property
    def methods(self) -> list:
        return sorted({(r["kind"], r["method"]) for r in self.rows})

    def validate(self) -> "BenchmarkReport":
        if not self.rows:
            raise DomainError("a benchmark report needs at least one row")
        return self

    def select(self, kind=None, method=None) -> list:
        return [r for r in self.rows
                if (kind is None or r["kind"] == kind) and (method is None or r["method"] == method)]

    def metric_columns(self) -> list:
        cols = []
        for r in self.rows:
            for k in r:
                if k not in _KEY_COLUMNS and k not in cols:
                    cols.append(k)
        return cols

    def summary(self) -> list:
        """Mean and population standard deviation per (kind, method)."""
        out = []
        for kind, method in self.methods:
            group = self.select(kind, method)
            row = {"kind": kind, "method": method, "hierarchy": group[0]["hierarchy"], "seeds": len(group)}
            for col in self.metric_columns():
                vals = np.array([g[col] for g in group if g.get(col) is not None], dtype=float)
                if len(vals) == 0:
                    continue
                row[f"{col}_mean"] = float(np.mean(vals))
                row[f"{col}_std"] = float(np.std(vals))
            out.append(row)
        return out

    def long_rows(self) -> list:
        return [{"kind": r["kind"], "method": r["method"], "hierarchy": r["hierarchy"], "seed": r["seed"],
                 "metric": col, "value": r[col]}
                for r in self.rows for col in self.metric_columns() if r.get(col) is not None]

    def write(self, directory) -> dict:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {"report": directory / "report.csv", "summary": directory / "summary.csv",
                 "long": directory / "long.csv"}
        _write_csv(paths["report"], list(_KEY_COLUMNS) + self.metric_columns(), self.rows)
        summary = self.summary()
        cols = []
        for r in summary:
            cols += [k for k in r if k not in cols]
        _write_csv(paths["summary"], cols, summary)
        _write_csv(paths["long"], ["kind", "method", "hierarchy", "seed", "metric", "value"], self.long_rows())
        return paths

    @classmethod
    def read(cls, path) -> "BenchmarkReport":
        """Parse a ``report.csv`` (or the directory holding it)."""
        path = Path(path)
        if path.is_dir():
            path = path / "report.csv"
        rows = []
        with open(path, "r", encoding="utf-8", newline="") as fh:
            for raw in csv.DictReader(fh):
                row = {"kind": raw["kind"], "method": raw["method"], "hierarchy": raw["hierarchy"],
                       "seed": int(raw["seed"])}
                for k, v in raw.items():
                    if k in _KEY_COLUMNS:
                        continue
                    row[k] = None if v == "" else (int(v) if k == "evaluations" else float(v))
                rows.append(row)
        return cls(rows).validate()


def _row_key(r):
    order = {"method": 0, "ablation": 1}
    return (order.get(r["kind"], 2), r["method"], r["seed"])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _write_csv(path, columns, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def supported_criteria(scene) -> tuple:
    ids = ["stability", "execution", "collision"]
    if scene.intent:
        ids.append("intention")
    return tuple(ids)


def _hierarchy_code(h: RuleHierarchy) -> str:
    letters = {"stability": "S", "execution": "E", "collision": "C", "intention": "N"}
    return "|".join("".join(letters.get(c, c) for c in rule) for rule in h.as_lists())


def score_run(batch, scene, top_k: int = TOP_K) -> dict:
    """Metrics for a finished run; criteria outside the hierarchy are evaluated here."""
    k = min(top_k, len(batch))
    row = {"top10_utility": float(np.mean(batch.utility[:k])), "top1_utility": float(batch.utility[0])}
    for i, q in enumerate(batch.rule_probabilities[0], start=1):
        row[f"top1_rule_{i}"] = float(q)
    full = RuleHierarchy.from_lists([[c] for c in supported_criteria(scene)])
    probs, *_ = evaluate(batch.translations[:k], batch.quaternions[:k], scene, full)
    for cid in full.criteria:
        row[f"top1_p_{cid}"] = float(probs[cid][0])
        row[f"top10_frac_{cid}"] = float(np.mean(probs[cid] > 0.5))
    row["evaluations"] = int(batch.evaluations)
    return row


def _run_one(task):
    kind, method, hierarchy, seed, scene, config, sampler, timings = task
    start = time.perf_counter()
    if method == "grace" or kind == "ablation":
        batch = grace_opt(scene, hierarchy, replace_config(config, seed=seed), sampler)
    else:
        n = int(method.split("-", 1)[1])
        batch = filter_baseline(scene, hierarchy, sampler, n, min(config.top_q, n), seed)
    row = {"kind": kind, "method": method, "hierarchy": _hierarchy_code(hierarchy), "seed": seed}
    row.update(score_run(batch, scene))
    if timings:
        row["wall_time"] = time.perf_counter() - start
    return row


def replace_config(config: OptimizerConfig, **changes) -> OptimizerConfig:
    return replace(config, **changes)


def run_benchmark(scene, seeds=20, methods=DEFAULT_METHODS, ablations=DEFAULT_ABLATIONS,
                  config: OptimizerConfig | None = None, sampler: SamplerSpec | None = None,
                  jobs: int = 1, timings: bool = False) -> BenchmarkReport:
    """Run every method and ablation for seeds ``0..seeds-1`` (or the given list)."""
    seed_list = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    if not seed_list:
        raise DomainError("need at least one seed")
    if not methods and not ablations:
        raise DomainError("need at least one method or ablation")
    config = config or OptimizerConfig()
    sampler = sampler or SamplerSpec()
    for m in methods:
        if m != "grace" and not (m.startswith("filter-") and m[7:].isdigit() and int(m[7:]) >= 1):
            raise DomainError(f"unknown method {m!r}; use 'grace' or 'filter-<n>'")
    tasks = []
    for m in methods:
        for s in seed_list:
            tasks.append(("method", m, scene.hierarchy, s, scene, config, sampler, timings))
    for code in ablations:
        h = RuleHierarchy.ablation(code)
        if "intention" in h.criteria and not scene.intent:
            raise DomainError(f"ablation {code} needs a scene intent")
        for s in seed_list:
            tasks.append(("ablation", code, h, s, scene, config, sampler, timings))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_one, tasks))
    else:
        rows = [_run_one(t) for t in tasks]
    return BenchmarkReport(rows).validate()
