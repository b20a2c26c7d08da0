"""Global optimisation of the test function and outcome classification.

The extremum of the functional over all strategies coincides with the
extremum of the test function ``C`` over pure strategies, so only ``C`` is
searched.  Three outcomes are possible:

``Attained``
    the extremum is reached at a point (exactly enumerated on finite
    models; heuristically located on interval axes);
``EpsOptimal``
    ``C`` is bounded but its supremum is only approached, towards an open
    endpoint; the point returned satisfies ``sup - eps < C(point) < sup``;
``Unbounded``
    ``C`` grows past the divergence threshold along a witness sequence.

For maximisation the search works on ``C`` directly, for minimisation on
``-C``; every reported value is ``C`` itself.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .measures import degenerate
from .model import FiniteSpace, IntervalSpace, PureStrategy, SmdpModel, strategy_to_dict
from .testfn import ProductEvaluator, integrands

FINITE_LIMIT = 10**8
GRID_CAP = 2 * 10**6
APPROACH_STEPS = 400
POLISH_BUDGET = 20000


class OptimizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridConfig:
    initial_points: int = 64
    refinement_rounds: int = 6
    shrink: float = 0.25
    multistart: int = 8
    tolerance: float = 1e-10
    divergence_threshold: float = 1e12
    epsilon: float = 1e-6
    workers: int = 1

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"config {f.name} must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("config shrink must lie in (0, 1)")
        if self.initial_points < 3:
            raise ValueError("config initial_points must be at least 3")

    def with_overrides(self, overrides: dict) -> "GridConfig":
        """Copy with ``{"name": value}`` overrides; string values are coerced."""
        kinds = {f.name: type(f.default) for f in dataclasses.fields(self)}
        kw = {}
        for key, value in overrides.items():
            if key not in kinds:
                raise ValueError(f"unknown config key {key!r}")
            value = float(value)
            if kinds[key] is int:
                if not value.is_integer():
                    raise ValueError(f"config {key} must be an integer")
                value = int(value)
            kw[key] = value
        return dataclasses.replace(self, **kw)

    def echo(self) -> dict:
        """Settings that influence results (the worker count does not)."""
        d = dataclasses.asdict(self)
        d.pop("workers")
        return d


@dataclass
class _Outcome:
    sense: str
    evaluations: int
    heuristic_global: bool
    wall_time: float = field(default=0.0, compare=False)

    kind = ""

    def to_dict(self, model: SmdpModel) -> dict:
        out = {"kind": self.kind, "sense": self.sense}
        out.update(self._payload(model))
        out["evaluations"] = self.evaluations
        out["heuristic_global"] = self.heuristic_global
        return out


def _encode(model, point):
    return strategy_to_dict(model, point)["pure"]


@dataclass
class Attained(_Outcome):
    point: PureStrategy = None
    value: float = math.nan
    kind = "attained"

    @property
    def strategy(self):
        return degenerate(self.point)

    def _payload(self, model):
        return {"point": _encode(model, self.point), "value": self.value}


@dataclass
class EpsOptimal(_Outcome):
    point: PureStrategy = None
    value: float = math.nan
    sup_estimate: float = math.nan
    epsilon: float = math.nan
    kind = "eps_optimal"

    def _payload(self, model):
        return {"point": _encode(model, self.point), "value": self.value,
                "sup_estimate": self.sup_estimate, "epsilon": self.epsilon}


@dataclass
class Unbounded(_Outcome):
    witness: list = field(default_factory=list)
    kind = "unbounded"

    @property
    def point(self):
        return self.witness[-1][0]

    @property
    def value(self):
        return self.witness[-1][1]

    def _payload(self, model):
        return {"point": _encode(model, self.point), "value": self.value,
                "witness": [{"point": _encode(model, p), "value": v} for p, v in self.witness]}


def _sign(sense: str) -> float:
    if sense in ("max", "maximize"):
        return 1.0
    if sense in ("min", "minimize"):
        return -1.0
    raise ValueError(f"sense must be max or min, got {sense!r}")


def _sense_name(sense: str) -> str:
    return "maximize" if _sign(sense) > 0 else "minimize"


# --------------------------------------------------------------------------
# finite models


def optimize_finite(model: SmdpModel, sense: str = "max", workers: int = 1) -> Attained:
    """Exact extremum of ``C`` by full enumeration of the product of finite spaces.

    Ties go to the lexicographically smallest index vector.
    """
    t0 = time.perf_counter()
    sign = _sign(sense)
    if not model.all_finite:
        raise ValueError("optimize_finite needs finite decision spaces only")
    total = math.prod(len(s) for s in model.spaces)
    if total > FINITE_LIMIT:
        raise OptimizationError(f"{total} pure strategies exceed the enumeration bound {FINITE_LIMIT}")
    ev = ProductEvaluator(model, [list(s.values) for s in model.spaces])

    def best_in_chunk(start, A, B, C):
        v = np.where(np.isnan(C), -np.inf, sign * C)
        k = int(np.argmax(v))
        return start + k, v[k]

    best_flat, best_val = -1, -np.inf
    for flat, val in ev.map_chunks(best_in_chunk, workers):
        if val > best_val:
            best_flat, best_val = flat, val
    if best_flat < 0:
        raise OptimizationError("test function undefined at every pure strategy (condition 4 violated)")
    point = ev.point(best_flat)
    value = integrands(model, point).C
    return Attained(_sense_name(sense), total, False, time.perf_counter() - t0, point, value)


# --------------------------------------------------------------------------
# interval (and mixed) models


class _Search:
    """Incumbent bookkeeping for one optimisation run."""

    def __init__(self, model, sign, workers):
        self.model = model
        self.sign = sign
        self.workers = workers
        self.evaluations = 0

    def values(self, axes) -> np.ndarray:
        ev = ProductEvaluator(self.model, axes)
        parts = ev.map_chunks(lambda s, A, B, C: C, self.workers)
        C = np.concatenate(parts)
        self.evaluations += C.size
        return np.where(np.isnan(C), -np.inf, self.sign * C)

    def value(self, x) -> float:
        return float(self.values([[u] for u in x])[0])

    def line(self, x, axis, pts) -> np.ndarray:
        axes = [[u] for u in x]
        axes[axis] = list(pts)
        return self.values(axes)


def _window(space: IntervalSpace, center: float, half: float, m: int) -> np.ndarray:
    lo = max(space.low, center - half)
    hi = min(space.high, center + half)
    pts = np.linspace(lo, hi, m)
    keep = np.array([space.contains(float(u)) for u in pts])
    pts = pts[keep]
    return np.union1d(pts, [center])


def _project(space: IntervalSpace, current: float, cand: float) -> float:
    if cand < space.low:
        return (current + space.low) / 2 if space.low_open else space.low
    if cand > space.high:
        return (current + space.high) / 2 if space.high_open else space.high
    if cand == space.low and space.low_open:
        return (current + space.low) / 2
    if cand == space.high and space.high_open:
        return (current + space.high) / 2
    return cand


def _refine(search, spaces, x, val, spacing, cfg):
    """Shrinking coordinate-grid rounds from ``x``; returns the trajectory."""
    traj = [(tuple(x), val)]
    half = dict(spacing)
    for _ in range(cfg.refinement_rounds):
        for a, space in enumerate(spaces):
            if isinstance(space, FiniteSpace):
                pts = list(space.values)
            else:
                pts = _window(space, x[a], half[a], cfg.initial_points)
            v = search.line(x, a, pts)
            k = int(np.argmax(v))
            if v[k] > val:
                x[a], val = float(pts[k]), float(v[k])
        for a in half:
            half[a] *= cfg.shrink
        traj.append((tuple(x), val))
    return x, val, traj


def _polish(search, spaces, x, val, step, cfg):
    """Coordinate pattern search until every step falls below the tolerance."""
    traj = []
    step = dict(step)
    budget = search.evaluations + POLISH_BUDGET
    while step and max(step.values()) >= cfg.tolerance and search.evaluations < budget:
        improved = False
        for a, h in step.items():
            for direction in (-1.0, 1.0):
                cand = _project(spaces[a], x[a], x[a] + direction * h)
                if cand == x[a]:
                    continue
                y = list(x)
                y[a] = cand
                v = search.value(y)
                if v > val:
                    x, val, improved = y, v, True
                    break
        if not improved:
            for a in step:
                step[a] *= cfg.shrink
            traj.append((tuple(x), val))
        if val > cfg.divergence_threshold:
            traj.append((tuple(x), val))
            break
    return x, val, traj


def _approached(spaces, traj, cfg):
    """Open endpoints the trajectory closes in on: distance shrinking by at
    least ``sqrt(shrink)`` per round over the last three rounds."""
    out = {}
    limit = math.sqrt(cfg.shrink) * (1 + 1e-9)
    for a, space in enumerate(spaces):
        if not isinstance(space, IntervalSpace):
            continue
        for end, is_open in ((space.low, space.low_open), (space.high, space.high_open)):
            if not is_open:
                continue
            dist = [abs(p[a] - end) for p, _ in traj[-4:]]
            if len(dist) == 4 and all(d > 0 for d in dist) and \
                    all(dist[k + 1] <= limit * dist[k] for k in range(3)):
                out[a] = end
    return out


def _aitken(v1, v2, v3):
    d1, d2 = v2 - v1, v3 - v2
    den = d2 - d1
    if den == 0 or not math.isfinite(den):
        return v3
    return v3 - d2 * d2 / den


def optimize_box(model: SmdpModel, sense: str = "max", cfg: GridConfig = GridConfig()):
    """Heuristic global optimisation of ``C`` over finite and interval axes.

    Finite-only models are delegated to :func:`optimize_finite`.
    """
    if model.all_finite:
        return optimize_finite(model, sense, cfg.workers)
    t0 = time.perf_counter()
    sign = _sign(sense)
    spaces = model.spaces
    search = _Search(model, sign, cfg.workers)

    n_int = sum(isinstance(s, IntervalSpace) for s in spaces)
    finite = math.prod(len(s) for s in spaces if isinstance(s, FiniteSpace))
    per_axis = max(3, min(cfg.initial_points, int((GRID_CAP / finite) ** (1.0 / n_int))))
    axes, spacing = [], {}
    for a, s in enumerate(spaces):
        if isinstance(s, FiniteSpace):
            axes.append(list(s.values))
        else:
            axes.append(s.grid(per_axis).tolist())
            spacing[a] = (s.high - s.low) / (per_axis - 1)

    grid = search.values(axes)
    if np.isneginf(grid).sum() > grid.size / 2:
        raise OptimizationError(
            f"test function failed at {int(np.isneginf(grid).sum())} of {grid.size} grid points")
    order = np.argsort(-grid, kind="stable")
    shape = tuple(len(a) for a in axes)
    starts = []
    for flat in order[: cfg.multistart]:
        if not np.isfinite(grid[flat]):
            break
        idx = np.unravel_index(flat, shape)
        starts.append(([axes[a][k] for a, k in enumerate(idx)], float(grid[flat])))

    best = None
    for x0, v0 in starts:
        x, val, traj = _refine(search, spaces, list(x0), v0, spacing, cfg)
        if best is None or val > best[1]:
            best = (x, val, traj)
    x, val, traj = best

    def done(outcome_cls, **kw):
        return outcome_cls(_sense_name(sense), search.evaluations, True,
                           time.perf_counter() - t0, **kw)

    ends = _approached(spaces, traj, cfg)
    if ends:
        result = _approach(search, x, val, ends, cfg)
        if result is not None:
            kind, payload = result
            if kind == "unbounded":
                return done(Unbounded, witness=payload)
            if kind == "eps":
                point, v, sup = payload
                if certify_epsilon(model, point, cfg.epsilon, sign * sup, sense):
                    return done(EpsOptimal, point=point, value=integrands(model, point).C,
                                sup_estimate=sign * sup, epsilon=cfg.epsilon)
                payload = (point, v)
            x, val = list(payload[0].u), payload[1]

    step = {a: spacing[a] * cfg.shrink ** cfg.refinement_rounds for a in spacing}
    x, val, ptraj = _polish(search, spaces, list(x), val, step, cfg)
    traj = traj + ptraj
    if val > cfg.divergence_threshold:
        witness = _monotone_witness(traj)
        if len(witness) >= 3:
            return done(Unbounded, witness=[(PureStrategy(p), sign * v) for p, v in witness])
    point = PureStrategy(x)
    return done(Attained, point=point, value=integrands(model, point).C)


def _monotone_witness(traj):
    out = []
    for p, v in traj:
        if not out or v > out[-1][1]:
            out.append((p, v))
    return out


def _approach(search, x, val, ends, cfg):
    """Walk geometrically towards the approached open endpoints.

    Returns ``("unbounded", witness)``, ``("eps", (point, value, limit))``,
    ``("attained", (point, value))`` or None when the walk is inconclusive.
    Values here are sense-adjusted.
    """
    delta = {a: abs(x[a] - e) for a, e in ends.items()}
    seq = [(PureStrategy(x), val)]
    for k in range(1, APPROACH_STEPS):
        y = list(x)
        for a, e in ends.items():
            off = delta[a] * cfg.shrink ** k
            y[a] = e - off if e > x[a] else e + off
        if all(y[a] == seq[-1][0].u[a] for a in ends):
            break
        v = search.value(y)
        if not np.isfinite(v):
            break
        if v < seq[-1][1]:
            best = max(seq, key=lambda t: t[1])
            return "attained", best
        seq.append((PureStrategy(y), v))
        if v > cfg.divergence_threshold:
            witness = _monotone_witness([(s.u, w) for s, w in seq])
            if len(witness) >= 3:
                return "unbounded", [(PureStrategy(p), search.sign * w) for p, w in witness]
            return None
        if len(seq) >= 3 and abs(seq[-1][1] - seq[-2][1]) <= 1e-12 * max(1.0, abs(v)):
            break
    if len(seq) < 3:
        return None
    vals = [v for _, v in seq]
    limit = _aitken(*vals[-3:])
    limit = max(limit, vals[-1])
    # the last point strictly below the limit and within epsilon of it
    for point, v in reversed(seq):
        if limit - cfg.epsilon < v < limit:
            return "eps", (point, v, limit)
    return "attained", max(seq, key=lambda t: t[1])


def optimize(model: SmdpModel, sense: str = "max", cfg: GridConfig = GridConfig()):
    """Dispatch to the exact finite search or the interval heuristic."""
    if model.all_finite:
        return optimize_finite(model, sense, cfg.workers)
    return optimize_box(model, sense, cfg)


def certify_epsilon(model: SmdpModel, point: PureStrategy, epsilon: float,
                    sup_estimate: float, sense: str = "max") -> bool:
    """Strict two-sided ε-certificate of ``point`` against a supremum (infimum) estimate."""
    c = integrands(model, point).C
    if _sign(sense) > 0:
        return sup_estimate - epsilon < c < sup_estimate
    return sup_estimate < c < sup_estimate + epsilon
