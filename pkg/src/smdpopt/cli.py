"""Command-line front end.

Exit codes: 0 success, 1 validation, 2 IO/schema, 3 internal inconsistency,
4 unbounded, 5 verification failure.  Artifacts (JSON/CSV) go to standard
output, diagnostics and the timing manifest to standard error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .measures import degenerate, functional_value_averaged, functional_value_multilinear
from .model import (FiniteSpace, MixedStrategy, PureStrategy, SchemaError, ValidationError,
                    load_strategy, model_from_dict, strategy_to_dict)
from .optimize import GridConfig, OptimizationError, Unbounded, optimize, optimize_finite
from .oracle import PRNG_NAME, ratio_value, sample_mixed_strategies, simulate
from .testfn import (ZERO_TOL, ProductEvaluator, cofactor_weights_det,
                     cofactor_weights_perm, integrands)

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_INCONSISTENT, EXIT_UNBOUNDED, EXIT_VERIFY = 0, 1, 2, 3, 4, 5
ROUTE_TOL = 1e-6


def _num(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float printed to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    return _num(obj)


def _manifest(args, config=None, seed=None) -> dict:
    return {"command": args.command, "model": str(args.model), "config": config or {},
            "seed": seed, "version": __version__}


def _emit(obj) -> None:
    sys.stdout.write(dumps(obj) + "\n")


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _read_doc(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc


def _load(path):
    doc = _read_doc(path)
    return model_from_dict(doc), doc


# --------------------------------------------------------------------------
# validate


def _condition4_points(model, limit=10**5, seed=0):
    axes = []
    for s in model.spaces:
        axes.append(list(s.values) if isinstance(s, FiniteSpace) else s.grid(9).tolist())
    if math.prod(len(a) for a in axes) <= limit:
        return axes, None
    rng = np.random.default_rng(seed)
    pts = [[a[int(rng.integers(len(a)))] for a in axes] for _ in range(2000)]
    return None, pts


def cmd_validate(args) -> int:
    model, _ = _load(args.model)
    axes, pts = _condition4_points(model)
    bad = []
    if axes is not None:
        ev = ProductEvaluator(model, axes)
        C = np.concatenate(ev.map_chunks(lambda s, A, B, C: C, args.workers))
        for flat in np.flatnonzero(np.isnan(C))[:10]:
            bad.append(ev.point(int(flat)))
        n_bad, n_checked = int(np.isnan(C).sum()), C.size
    else:
        n_checked = len(pts)
        for p in pts:
            try:
                integrands(model, PureStrategy(p))
            except ValidationError:
                bad.append(PureStrategy(p))
        n_bad = len(bad)
        bad = bad[:10]
    if n_bad:
        print(f"invalid: BPC condition 4 fails at {n_bad} of {n_checked} checked pure strategies "
              "(embedded chain without a unique ergodic class, or undefined characteristics)")
        for p in bad:
            print(f"  condition 4: decisions {_strategy_text(model, p)}")
        return EXIT_INVALID
    print(f"valid: {model.n} states; conditions 1-2 checked on every table entry/grid point, "
          f"condition 4 on {n_checked} pure strategies")
    return EXIT_OK


# --------------------------------------------------------------------------
# eval / testfn


def cmd_eval(args) -> int:
    model, _ = _load(args.model)
    strategy = load_strategy(model, _read_doc(args.strategy))
    psi = degenerate(strategy) if isinstance(strategy, PureStrategy) else strategy
    ml = functional_value_multilinear(model, psi)
    av = functional_value_averaged(model, psi)
    rel = abs(ml.I - av.I) / max(abs(ml.I), abs(av.I), ZERO_TOL)
    _emit({"I": av.I, "routes": [ml.to_dict(), av.to_dict()], "relative_difference": rel,
           "manifest": _manifest(args)})
    if rel > ROUTE_TOL:
        print(f"error: routes disagree (relative difference {rel:.3g})", file=sys.stderr)
        return EXIT_INCONSISTENT
    return EXIT_OK


def _parse_grid(text, model):
    counts = [int(c) for c in text.split(",")] if text else []
    interval = [a for a, s in enumerate(model.spaces) if not isinstance(s, FiniteSpace)]
    if not counts:
        counts = [10] * len(interval)
    if len(counts) == model.n and len(interval) != model.n:
        counts = [counts[a] for a in interval]
    if len(counts) != len(interval):
        raise SchemaError(f"--grid needs {len(interval)} counts (one per interval axis) or {model.n}")
    if any(c < 1 for c in counts):
        raise SchemaError("--grid counts must be positive")
    axes = []
    it = iter(counts)
    for s in model.spaces:
        if isinstance(s, FiniteSpace):
            axes.append(list(s.values))
        else:
            c = next(it)
            if c == 1:
                axes.append([(s.low + s.high) / 2])
            else:
                pts = np.linspace(s.low, s.high, c + s.low_open + s.high_open)
                axes.append(pts[int(s.low_open): len(pts) - int(s.high_open)].tolist())
    return axes


def cmd_testfn(args) -> int:
    model, _ = _load(args.model)
    axes = _parse_grid(args.grid, model)
    ev = ProductEvaluator(model, axes)
    out = sys.stdout
    out.write(",".join([f"u_{i + 1}" for i in range(model.n)] + ["A", "B", "C"]) + "\n")
    failures = 0
    flat = 0
    for A, B, C in ev.map_chunks(lambda s, A, B, C: (A, B, C), args.workers):
        for a, b, c in zip(A, B, C):
            idx = np.unravel_index(flat, ev.shape)
            cells = [_num(axes[i][k]) for i, k in enumerate(idx)]
            if math.isnan(c):
                failures += 1
                cells += ["", "", ""]
            else:
                cells += [_num(a), _num(b), _num(c)]
            out.write(",".join(cells) + "\n")
            flat += 1
    if failures:
        _warn(f"{failures} grid point(s) could not be evaluated")
    return EXIT_OK


# --------------------------------------------------------------------------
# optimize


def _config(args, doc) -> GridConfig:
    cfg = GridConfig()
    if isinstance(doc, dict) and isinstance(doc.get("optimizer"), dict):
        cfg = cfg.with_overrides(doc["optimizer"])
    overrides = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise SchemaError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    if args.workers:
        overrides["workers"] = args.workers
    try:
        return cfg.with_overrides(overrides)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def cmd_optimize(args) -> int:
    model, doc = _load(args.model)
    cfg = _config(args, doc)
    outcome = optimize(model, args.sense, cfg)
    out = outcome.to_dict(model)
    out["manifest"] = _manifest(args, cfg.echo())
    _emit(out)
    return EXIT_UNBOUNDED if isinstance(outcome, Unbounded) else EXIT_OK


# --------------------------------------------------------------------------
# verify


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), ZERO_TOL)


def run_checks(model, seed: int, budget: int, workers: int = 1) -> list:
    """Oracle suite; returns ``[(name, passed, detail)]``."""
    results = []
    # keep the multilinear expansion small: at most ~1e5 support combinations
    support = max(1, min(3, int(1e5 ** (1.0 / model.n))))
    mixed = sample_mixed_strategies(model, budget, support, seed)
    pures = [PureStrategy([m[0][0] for m in psi.support])
             for psi in sample_mixed_strategies(model, budget, 1, seed + 1)]

    worst, culprit = 0.0, None
    values = []
    for psi in mixed:
        a = functional_value_multilinear(model, psi).I
        b = functional_value_averaged(model, psi).I
        values.append(b)
        r = _rel(a, b)
        if r > worst:
            worst, culprit = r, psi
    ok = worst <= 1e-9
    results.append(("route_agreement", ok,
                    f"n={len(mixed)} max_rel={worst:.3g}" + ("" if ok else f" at {_strategy_text(model, culprit)}")))

    worst, culprit = 0.0, None
    for s in pures:
        r = _rel(integrands(model, s).C, ratio_value(model, degenerate(s)))
        if r > worst:
            worst, culprit = r, s
    ok = worst <= 1e-10
    results.append(("testfn_vs_oracle", ok,
                    f"n={len(pures)} max_rel={worst:.3g}" + ("" if ok else f" at {_strategy_text(model, culprit)}")))

    violations = []
    top = None
    if budget and model.all_finite and math.prod(len(s) for s in model.spaces) <= 10**6:
        top = optimize_finite(model, "max", workers).value
    for psi, val in zip(mixed, values):
        C = integrands_over_support(model, psi)
        slack = 1e-12 * max(1.0, abs(val))
        if not (C.min() - slack <= val <= C.max() + slack) or (top is not None and val > top + slack):
            violations.append(psi)
    results.append(("dominance", not violations,
                    f"n={len(mixed)}" + (f" max_C={top:.17g}" if top is not None else "")
                    + ("" if not violations else f" violated at {_strategy_text(model, violations[0])}")))

    worst, culprit, checked = 0.0, None, 0
    if model.n <= 7:
        for s in pures[:20]:
            wd = cofactor_weights_det(model, s).w
            wp = np.abs(cofactor_weights_perm(model, s).w)
            r = max((_rel(x, y) for x, y in zip(wd, wp)), default=0.0)
            checked += 1
            if r > worst:
                worst, culprit = r, s
    ok = worst <= 1e-12
    results.append(("cofactor_magnitude", ok,
                    f"n={checked} max_rel={worst:.3g}" + ("" if ok else f" at {_strategy_text(model, culprit)}")))

    if mixed:
        psi = mixed[0]
        rep = simulate(model, psi, 50_000, seed, "exponential")
        target = ratio_value(model, psi)
        ok = abs(rep.empirical_ratio - target) <= 3 * rep.half_width_95
        results.append(("simulation", ok, f"empirical={rep.empirical_ratio:.6g} "
                        f"target={target:.6g} half_width={rep.half_width_95:.3g}"))
    else:
        results.append(("simulation", True, "n=0"))
    return results


def integrands_over_support(model, psi: MixedStrategy) -> np.ndarray:
    ev = ProductEvaluator(model, [psi.points(i) for i in range(model.n)])
    return np.concatenate(ev.map_chunks(lambda s, A, B, C: C))


def _strategy_text(model, s):
    return json.dumps(strategy_to_dict(model, s))


def cmd_verify(args) -> int:
    model, _ = _load(args.model)
    if args.budget == 0:
        _warn("budget 0: every check passes vacuously")
    results = run_checks(model, args.seed, args.budget, args.workers or 1)
    width = max(len(name) for name, _, _ in results)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_VERIFY


# --------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    model, _ = _load(args.model)
    strategy = load_strategy(model, _read_doc(args.strategy))
    psi = degenerate(strategy) if isinstance(strategy, PureStrategy) else strategy
    if args.jumps < 1:
        raise ValidationError("--jumps must be at least 1")
    mode = {"exp": "exponential", "det": "deterministic"}[args.sojourn]
    rep = simulate(model, psi, args.jumps, args.seed, mode)
    out = rep.to_dict()
    out["manifest"] = _manifest(args, {"jumps": args.jumps, "sojourn": mode, "prng": PRNG_NAME}, args.seed)
    _emit(out)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smdpopt", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def model_cmd(name, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("model", help="model document (JSON)")
        sp.add_argument("--workers", type=int, default=0, help="threads for grid work")
        return sp

    model_cmd("validate", "check a model document")
    sp = model_cmd("eval", "evaluate a strategy by both functional routes")
    sp.add_argument("strategy")
    sp = model_cmd("testfn", "dump A, B, C over a grid as CSV")
    sp.add_argument("--grid", default="", help="points per interval axis, e.g. 10,10")
    sp = model_cmd("optimize", "optimize the test function")
    sp.add_argument("--sense", choices=["max", "min"], default="max")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="optimizer config override")
    sp = model_cmd("verify", "run the oracle suite")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--budget", type=int, default=50)
    sp = model_cmd("simulate", "simulate the controlled process")
    sp.add_argument("strategy")
    sp.add_argument("--jumps", type=int, default=10**6)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sojourn", choices=["exp", "det"], default="exp")
    return p


COMMANDS = {"validate": cmd_validate, "eval": cmd_eval, "testfn": cmd_testfn,
            "optimize": cmd_optimize, "verify": cmd_verify, "simulate": cmd_simulate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command](args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, OptimizationError) as exc:
        cond = getattr(exc, "condition", None)
        tag = f" [BPC condition {cond}]" if cond else ""
        print(f"invalid{tag}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(f"# {args.command}: wall_time={time.perf_counter() - t0:.3f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
