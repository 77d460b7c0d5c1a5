"""Command-line entry point: ``rankgrasp <command> ...``.

Exit codes: 0 success, 1 invalid input (validation or domain errors),
2 I/O failure.

``--scene`` takes a scene file or the name of a synthetic scene. Relative
scene paths that do not exist in the working directory are looked up in
``$RANKGRASP_CONFIG_DIR``, which may also hold a ``defaults.json`` whose
keys (``seed``, ``samples``, ``outer``, ``inner``, ``eta``, ``top``)
override the built-in flag defaults.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

from .bench import DEFAULT_ABLATIONS, DEFAULT_METHODS, run_benchmark
from .errors import ConfigurationError, DomainError, SceneValidationError
from .hierarchy import CRITERION_CODES, RuleHierarchy, pattern_for_rank, utility
from .optimizer import OptimizerConfig, SamplerSpec, filter_baseline, grace_opt, write_stats
from .scene import load_scene, save_results, save_scene
from .synthetic import SCENE_NAMES, make_synthetic_scene

CONFIG_ENV = "RANKGRASP_CONFIG_DIR"
MAX_TABLE_RULES = 16
_DEFAULTS = {"seed": 0, "samples": None, "outer": 10, "inner": 5, "eta": 0.01, "top": 50}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _config_dir() -> Path | None:
    value = os.environ.get(CONFIG_ENV)
    return Path(value) if value else None


def _user_defaults() -> dict:
    d = _config_dir()
    if d is None or not (d / "defaults.json").is_file():
        return {}
    with open(d / "defaults.json", "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    unknown = set(doc) - set(_DEFAULTS)
    if unknown:
        raise ConfigurationError(f"{d / 'defaults.json'}: unknown keys {sorted(unknown)}")
    return doc


def resolve_scene(ref: str, scene_seed: int = 0):
    path = Path(ref)
    if not path.exists() and not path.is_absolute() and _config_dir() is not None:
        candidate = _config_dir() / path
        if candidate.exists():
            path = candidate
    if path.exists():
        return load_scene(path)
    if ref in SCENE_NAMES:
        return make_synthetic_scene(ref, scene_seed)
    raise FileNotFoundError(f"scene file not found: {ref}")


def _hierarchy(code: str | None, scene):
    if code is None:
        return scene.hierarchy
    if "|" in code or code.upper() not in ("S", "SE", "SC", "SEC", "SECN"):
        rules = []
        for part in code.split("|"):
            part = part.strip().upper()
            if not part or any(c not in CRITERION_CODES for c in part):
                raise DomainError(f"bad hierarchy {code!r}; use letters S, E, C, N separated by '|'")
            rules.append([CRITERION_CODES[c] for c in part])
        h = RuleHierarchy.from_lists(rules)
    else:
        h = RuleHierarchy.ablation(code)
    scene.with_hierarchy(h).validate()
    return h


def _apply_scene_flags(scene, args):
    changes = {}
    if args.paper_literal_collision_sign:
        changes["paper_literal_collision_sign"] = True
    if args.collision_includes_target:
        changes["collision_includes_target"] = True
    return scene.with_params(**changes) if changes else scene


def _add_common(p, samples_default):
    p.add_argument("--scene", required=True, help="scene file or synthetic scene name")
    p.add_argument("--scene-seed", type=int, default=0, help="seed for synthetic scenes")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--samples", type=int, default=samples_default)
    p.add_argument("--top", type=int, default=None, help="number of grasps kept (Q)")
    p.add_argument("--hierarchy", default=None, help="e.g. SEC or 'S|EC|N'; defaults to the scene's")
    p.add_argument("--sampler", choices=SamplerSpec.KINDS, default="surface-antipodal")
    p.add_argument("--standoff", type=float, default=0.05)
    p.add_argument("--poses", default=None, help="pose file for --sampler file")
    p.add_argument("--out", required=True, help="result JSON path; a CSV twin is written beside it")
    p.add_argument("--paper-literal-collision-sign", action="store_true",
                   help="use sigmoid(C_c (d_th - dbar)) for the collision criterion")
    p.add_argument("--collision-includes-target", action="store_true",
                   help="count target points as obstacles in the collision criterion")
    p.add_argument("--timings", action="store_true", help="record wall time in the output")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rankgrasp", description="Rank-preserving grasp selection.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("optimize", help="run the optimiser")
    _add_common(p, None)
    p.add_argument("--outer", type=int, default=None, help="outer iterations (T)")
    p.add_argument("--inner", type=int, default=None, help="gradient steps per iteration (K)")
    p.add_argument("--eta", type=float, default=None, help="gradient step size")
    p.add_argument("--stats", default=None, help="write per-iteration statistics CSV here")

    p = sub.add_parser("filter", help="sample, score once, keep the best")
    _add_common(p, None)

    p = sub.add_parser("bench", help="optimiser vs filter, plus the ablation ladder")
    p.add_argument("--scene", required=True)
    p.add_argument("--scene-seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--methods", default=",".join(DEFAULT_METHODS))
    p.add_argument("--ablations", default=",".join(DEFAULT_ABLATIONS), help="comma list; empty to skip")
    p.add_argument("--outer", type=int, default=None)
    p.add_argument("--inner", type=int, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--top", type=int, default=None)
    p.add_argument("--samples", type=int, default=None, help="optimiser sample count")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--paper-literal-collision-sign", action="store_true")
    p.add_argument("--collision-includes-target", action="store_true")
    p.add_argument("--timings", action="store_true")

    p = sub.add_parser("rank-table", help="print the rank / utility table of a hierarchy")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--rules", type=int, help="N generic rules")
    g.add_argument("--hierarchy", help="e.g. 'S|EC|N'")
    p.add_argument("--out", default=None, help="also write the table as CSV")

    p = sub.add_parser("scene", help="scene utilities")
    ssub = p.add_subparsers(dest="scene_command", required=True, parser_class=_Parser)
    p = ssub.add_parser("gen", help="write a synthetic scene")
    p.add_argument("name", choices=SCENE_NAMES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--inline", action="store_true", help="embed clouds instead of writing PLY files")
    return parser


def _setting(args, name, defaults, fallback=None):
    v = getattr(args, name, None)
    if v is not None:
        return v
    if name in defaults and defaults[name] is not None:
        return defaults[name]
    return _DEFAULTS.get(name) if _DEFAULTS.get(name) is not None else fallback


def _sampler(args):
    if args.sampler == "file":
        return SamplerSpec("file", path=args.poses)
    if args.sampler == "uniform-box":
        raise DomainError("uniform-box sampling needs bounds; use the library API")
    return SamplerSpec(standoff=args.standoff)


def _write(batch, args, config: dict, seed: int, elapsed: float | None):
    timings = {"wall_time": elapsed} if args.timings else None
    record = batch.to_record(config, seed, timings)
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    json_path, csv_path = save_results(record, out)
    print(f"wrote {len(batch)} grasps to {json_path} and {csv_path}")
    print(f"best utility {batch.utility[0]:.6f}")


def cmd_optimize(args) -> int:
    defaults = _user_defaults()
    scene = _apply_scene_flags(resolve_scene(args.scene, args.scene_seed), args)
    hierarchy = _hierarchy(args.hierarchy, scene)
    top = _setting(args, "top", defaults)
    config = OptimizerConfig(
        outer_iters=_setting(args, "outer", defaults), inner_steps=_setting(args, "inner", defaults),
        step_size=_setting(args, "eta", defaults), top_q=top,
        seed=_setting(args, "seed", defaults), batch=_setting(args, "samples", defaults, fallback=50))
    start = time.perf_counter()
    batch = grace_opt(scene, hierarchy, config, _sampler(args))
    elapsed = time.perf_counter() - start
    _write(batch, args, {"command": "optimize", **config.to_dict(), "hierarchy": hierarchy.as_lists()},
           config.seed, elapsed)
    if args.stats:
        write_stats(batch.stats, args.stats)
    return 0


def cmd_filter(args) -> int:
    defaults = _user_defaults()
    scene = _apply_scene_flags(resolve_scene(args.scene, args.scene_seed), args)
    hierarchy = _hierarchy(args.hierarchy, scene)
    n = _setting(args, "samples", defaults, fallback=1000)
    top = _setting(args, "top", defaults)
    seed = _setting(args, "seed", defaults)
    start = time.perf_counter()
    batch = filter_baseline(scene, hierarchy, _sampler(args), n, top, seed)
    elapsed = time.perf_counter() - start
    _write(batch, args, {"command": "filter", "samples": n, "top_q": top, "seed": seed,
                         "hierarchy": hierarchy.as_lists()}, seed, elapsed)
    return 0


def cmd_bench(args) -> int:
    defaults = _user_defaults()
    scene = _apply_scene_flags(resolve_scene(args.scene, args.scene_seed), args)
    if args.seeds < 1:
        raise DomainError("--seeds must be at least 1")
    config = OptimizerConfig(
        outer_iters=_setting(args, "outer", defaults), inner_steps=_setting(args, "inner", defaults),
        step_size=_setting(args, "eta", defaults), top_q=_setting(args, "top", defaults),
        batch=_setting(args, "samples", defaults, fallback=50))
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    ablations = tuple(a.strip().upper() for a in args.ablations.split(",") if a.strip())
    report = run_benchmark(scene, args.seeds, methods, ablations, config, jobs=args.jobs,
                           timings=args.timings)
    paths = report.write(args.out)
    for row in report.summary():
        print(f"{row['kind']:8s} {row['method']:12s} top-10 utility "
              f"{row['top10_utility_mean']:.4f} +- {row['top10_utility_std']:.4f}")
    print("wrote " + ", ".join(str(p) for p in paths.values()))
    return 0


def rank_table(hierarchy_lists) -> list[dict]:
    """Rows of (pattern, rank, utility, probability product) for each rank."""
    n = len(hierarchy_lists)
    names = ["".join(r) if isinstance(r, str) else "*".join(r) for r in hierarchy_lists]
    rows = []
    for r in range(1, 2 ** n + 1):
        pattern = pattern_for_rank(r, n)
        factors = [f"P({names[i]})" if bit else f"(1-P({names[i]}))" for i, bit in enumerate(pattern)]
        rows.append({"pattern": "".join("1" if b else "0" for b in pattern), "rank": r,
                     "utility": utility(pattern), "probability": " * ".join(factors)})
    return rows


def cmd_rank_table(args) -> int:
    if args.rules is not None:
        if not 1 <= args.rules <= MAX_TABLE_RULES:
            raise DomainError(f"--rules must be in 1..{MAX_TABLE_RULES}, got {args.rules}")
        rules = [f"phi{i}" for i in range(1, args.rules + 1)]
    else:
        parts = [p.strip().upper() for p in args.hierarchy.split("|")]
        if not all(parts) or any(c not in CRITERION_CODES for p in parts for c in p):
            raise DomainError(f"bad hierarchy {args.hierarchy!r}; use letters S, E, C, N separated by '|'")
        if len(parts) > MAX_TABLE_RULES:
            raise DomainError(f"at most {MAX_TABLE_RULES} rules, got {len(parts)}")
        rules = [[CRITERION_CODES[c] for c in p] for p in parts]
    rows = rank_table(rules)
    width = max(len(r["pattern"]) for r in rows)
    print(f"{'pattern':>{max(width, 7)}}  {'rank':>6}  {'utility':>7}  probability")
    for r in rows:
        print(f"{r['pattern']:>{max(width, 7)}}  {r['rank']:>6}  {r['utility']:>7}  {r['probability']}")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["pattern", "rank", "utility", "probability"], lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    return 0


def cmd_scene_gen(args) -> int:
    scene = make_synthetic_scene(args.name, args.seed)
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    save_scene(scene, out, inline_clouds=args.inline)
    print(f"wrote scene {args.name!r} to {out}")
    return 0


_COMMANDS = {"optimize": cmd_optimize, "filter": cmd_filter, "bench": cmd_bench,
             "rank-table": cmd_rank_table}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "scene":
            return cmd_scene_gen(args)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (SceneValidationError, DomainError, ConfigurationError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
