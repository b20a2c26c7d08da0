"""Semi-Markov decision model, strategies and their averaged characteristics.

A model holds, for each state ``i``, an admissible decision space ``U_i``
and three characteristics of a decision ``u in U_i``: the transition row
``p_i.(u)`` of the embedded chain, the mean sojourn time ``T_i(u)`` and the
expected reward increment ``d_i(u)`` over one sojourn.

Finite spaces carry the characteristics as tables indexed by decision
point; interval spaces carry :mod:`smdpopt.exprlang` expressions in ``u``.
States are 0-based in the API and 1-based in every user-facing message.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from . import exprlang

ROW_SUM_TOL = 1e-9
NEG_CLAMP = 1e-12
WEIGHT_TOL = 1e-12
VALIDATION_GRID = 1024


class SchemaError(ValueError):
    """The document does not have the expected structure."""


class ValidationError(ValueError):
    """A model or strategy violates an invariant.

    ``condition`` is the number of the basic preliminary condition the
    violation endangers (1: integrals defined, 2: denominator non-zero,
    4: single ergodic class), ``state`` is 0-based.
    """

    def __init__(self, message, condition=None, state=None, decision=None):
        self.condition = condition
        self.state = state
        self.decision = decision
        super().__init__(message)


# --------------------------------------------------------------------------
# decision spaces


@dataclass(frozen=True)
class FiniteSpace:
    labels: tuple
    values: tuple

    def __post_init__(self):
        if not self.values:
            raise ValidationError("finite decision space needs at least one point")
        if len(self.labels) != len(self.values):
            raise ValidationError("labels and values differ in length")
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError("decision labels must be unique")
        if any(not math.isfinite(v) for v in self.values):
            raise ValidationError("decision values must be finite")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValidationError("decision points must be listed in strictly ascending order")

    def __len__(self):
        return len(self.values)

    def contains(self, u: float) -> bool:
        return u in self.values

    def index(self, u: float) -> int:
        try:
            return self.values.index(u)
        except ValueError:
            raise ValidationError(f"decision {u!r} is not a point of the space") from None

    def label_of(self, u: float) -> str:
        return self.labels[self.index(u)]

    def resolve(self, item) -> float:
        """Map a label or a numeric value from a document to a decision value."""
        if isinstance(item, str):
            if item not in self.labels:
                raise ValidationError(f"unknown decision label {item!r}")
            return float(self.values[self.labels.index(item)])
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise SchemaError(f"decision must be a label or a number, got {item!r}")
        u = float(item)
        self.index(u)
        return u


@dataclass(frozen=True)
class IntervalSpace:
    low: float
    high: float
    low_open: bool = False
    high_open: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.low) and math.isfinite(self.high)):
            raise ValidationError("interval bounds must be finite")
        if not self.low < self.high:
            raise ValidationError(f"interval needs low < high, got [{self.low}, {self.high}]")

    def contains(self, u: float) -> bool:
        lo_ok = u > self.low if self.low_open else u >= self.low
        hi_ok = u < self.high if self.high_open else u <= self.high
        return bool(lo_ok and hi_ok)

    def resolve(self, item) -> float:
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise SchemaError(f"interval decision must be a number, got {item!r}")
        u = float(item)
        if not self.contains(u):
            raise ValidationError(f"decision {u!r} lies outside {self.describe()}")
        return u

    def grid(self, n: int) -> np.ndarray:
        """``n`` uniform points with the closed endpoints; open endpoints dropped."""
        pts = np.linspace(self.low, self.high, max(n, 2))
        if self.low_open:
            pts = pts[1:]
        if self.high_open:
            pts = pts[:-1]
        return pts

    def describe(self) -> str:
        return f"{'(' if self.low_open else '['}{self.low}, {self.high}{')' if self.high_open else ']'}"


DecisionSpace = Union[FiniteSpace, IntervalSpace]


# --------------------------------------------------------------------------
# strategies


@dataclass(frozen=True)
class PureStrategy:
    """One decision value per state (the concentration points of a deterministic strategy)."""

    u: tuple

    def __post_init__(self):
        object.__setattr__(self, "u", tuple(float(x) for x in self.u))

    def __len__(self):
        return len(self.u)


@dataclass(frozen=True)
class MixedStrategy:
    """Per-state finite-support probability measure: ``support[i]`` is a
    tuple of ``(decision, weight)`` pairs."""

    support: tuple

    def __post_init__(self):
        supp = tuple(tuple((float(u), float(w)) for u, w in s) for s in self.support)
        object.__setattr__(self, "support", supp)
        for i, s in enumerate(supp):
            if not s:
                raise ValidationError(f"empty measure at state {i + 1}", state=i)
            ws = [w for _, w in s]
            if any(not math.isfinite(w) or w < 0 for w in ws):
                raise ValidationError(f"negative weight at state {i + 1}", state=i)
            if abs(math.fsum(ws) - 1.0) > WEIGHT_TOL:
                raise ValidationError(
                    f"weights at state {i + 1} sum to {math.fsum(ws)!r}, not 1", state=i)
            pts = [u for u, _ in s]
            if len(set(pts)) != len(pts):
                raise ValidationError(f"repeated support point at state {i + 1}", state=i)

    def __len__(self):
        return len(self.support)

    def points(self, i: int) -> np.ndarray:
        return np.array([u for u, _ in self.support[i]])

    def weights(self, i: int) -> np.ndarray:
        return np.array([w for _, w in self.support[i]])


# --------------------------------------------------------------------------
# the model


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SmdpModel:
    """Immutable semi-Markov decision model.

    For a finite state ``i``: ``p[i]`` is a ``(k_i, N)`` array, ``T[i]`` and
    ``d[i]`` are ``(k_i,)`` arrays, row ``k`` belonging to the ``k``-th point
    of ``spaces[i]``.  For an interval state: ``p[i]`` is a tuple of ``N``
    expressions and ``T[i]``, ``d[i]`` are expressions.
    """

    spaces: tuple
    p: tuple
    T: tuple
    d: tuple

    @property
    def n(self) -> int:
        return len(self.spaces)

    @property
    def all_finite(self) -> bool:
        return all(isinstance(s, FiniteSpace) for s in self.spaces)

    def __eq__(self, other):
        if not isinstance(other, SmdpModel) or self.spaces != other.spaces:
            return False
        for i, s in enumerate(self.spaces):
            for a, b in ((self.p[i], other.p[i]), (self.T[i], other.T[i]), (self.d[i], other.d[i])):
                if isinstance(s, FiniteSpace):
                    if not np.array_equal(a, b):
                        return False
                elif a != b:
                    return False
        return True

    __hash__ = None

    def _label(self, i, u):
        s = self.spaces[i]
        return s.label_of(u) if isinstance(s, FiniteSpace) else repr(u)

    def row(self, i: int, u: float) -> np.ndarray:
        """Transition row ``p_i.(u)`` with tiny negatives clamped to zero."""
        s = self.spaces[i]
        if isinstance(s, FiniteSpace):
            return self.p[i][s.index(u)]
        if not s.contains(u):
            raise ValidationError(f"decision {u!r} outside {s.describe()} at state {i + 1}",
                                  state=i, decision=u)
        r = np.array([exprlang.evaluate(e, u) for e in self.p[i]])
        return _check_row(r, i, self._label(i, u))

    def sojourn(self, i: int, u: float) -> float:
        s = self.spaces[i]
        if isinstance(s, FiniteSpace):
            return float(self.T[i][s.index(u)])
        t = exprlang.evaluate(self.T[i], u)
        if not t > 0:
            raise ValidationError(
                f"nonpositive mean sojourn {t!r} at state {i + 1}, decision {u!r} (BPC condition 2)",
                condition=2, state=i, decision=u)
        return t

    def reward(self, i: int, u: float) -> float:
        s = self.spaces[i]
        if isinstance(s, FiniteSpace):
            return float(self.d[i][s.index(u)])
        return exprlang.evaluate(self.d[i], u)

    def characteristics(self, i: int, us) -> tuple:
        """Rows, sojourns and rewards of state ``i`` at each decision in ``us``."""
        s = self.spaces[i]
        if isinstance(s, FiniteSpace):
            idx = [s.index(float(u)) for u in us]
            return self.p[i][idx], self.T[i][idx], self.d[i][idx]
        rows = np.array([self.row(i, float(u)) for u in us]).reshape(len(us), self.n)
        return (rows,
                np.array([self.sojourn(i, float(u)) for u in us]),
                np.array([self.reward(i, float(u)) for u in us]))


def _check_row(r: np.ndarray, i: int, label) -> np.ndarray:
    if not np.all(np.isfinite(r)):
        raise ValidationError(f"non-finite transition probability at state {i + 1}, decision {label}",
                              condition=1, state=i, decision=label)
    if np.any(r < -NEG_CLAMP):
        j = int(np.argmin(r))
        raise ValidationError(
            f"negative probability {r[j]!r} at state {i + 1}, decision {label}, column {j + 1} "
            f"(BPC condition 1)", condition=1, state=i, decision=label)
    r = np.where(r < 0, 0.0, r)
    total = math.fsum(r)
    if abs(total - 1.0) > ROW_SUM_TOL:
        raise ValidationError(
            f"row sum {total:.12g} ≠ 1 at state {i + 1}, decision {label} (BPC condition 1)",
            condition=1, state=i, decision=label)
    return r


def check_model(model: SmdpModel) -> None:
    """Check every table entry, or a 1024-point grid of every interval."""
    for i, s in enumerate(model.spaces):
        if isinstance(s, FiniteSpace):
            for k, lab in enumerate(s.labels):
                _check_row(model.p[i][k], i, lab)
                if not model.T[i][k] > 0:
                    raise ValidationError(
                        f"nonpositive mean sojourn {model.T[i][k]!r} at state {i + 1}, decision {lab} "
                        f"(BPC condition 2)", condition=2, state=i, decision=lab)
                if not math.isfinite(model.d[i][k]):
                    raise ValidationError(f"non-finite reward at state {i + 1}, decision {lab}",
                                          condition=1, state=i, decision=lab)
        else:
            for u in s.grid(VALIDATION_GRID + 2):
                u = float(u)
                try:
                    model.row(i, u)
                    model.sojourn(i, u)
                    model.reward(i, u)
                except exprlang.EvalError as exc:
                    raise ValidationError(f"{exc} at state {i + 1}, decision {u!r} (BPC condition 1)",
                                          condition=1, state=i, decision=u) from None


# --------------------------------------------------------------------------
# documents


def _require(doc, key, kind, where="model"):
    if not isinstance(doc, dict) or key not in doc:
        raise SchemaError(f"{where}: missing field {key!r}")
    v = doc[key]
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(f"{where}: field {key!r} must be a number")
        return float(v)
    if not isinstance(v, kind) or (kind is int and isinstance(v, bool)):
        raise SchemaError(f"{where}: field {key!r} must be {kind.__name__}")
    return v


def _number(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _expr(text, where):
    if not isinstance(text, str):
        raise SchemaError(f"{where}: expected an expression string, got {text!r}")
    try:
        return exprlang.parse(text)
    except exprlang.ParseError as exc:
        raise SchemaError(f"{where}: {exc}") from exc


def _space(doc, i):
    where = f"decision_spaces[{i}]"
    kind = _require(doc, "type", str, where)
    if kind == "finite":
        pts = _require(doc, "points", list, where)
        labels, values = [], []
        for k, pt in enumerate(pts):
            labels.append(_require(pt, "label", str, f"{where}.points[{k}]"))
            values.append(_require(pt, "value", float, f"{where}.points[{k}]"))
        return FiniteSpace(tuple(labels), tuple(values))
    if kind == "interval":
        return IntervalSpace(
            _require(doc, "low", float, where), _require(doc, "high", float, where),
            bool(doc.get("low_open", False)), bool(doc.get("high_open", False)))
    raise SchemaError(f"{where}: unknown space type {kind!r}")


def model_from_dict(doc: dict) -> SmdpModel:
    """Build and fully validate a model from a parsed document."""
    n = _require(doc, "states", int)
    if n < 1:
        raise SchemaError("model: 'states' must be at least 1")
    spaces_doc = _require(doc, "decision_spaces", list)
    p_doc, t_doc, d_doc = (_require(doc, k, list) for k in ("p", "T", "d"))
    for key, lst in (("decision_spaces", spaces_doc), ("p", p_doc), ("T", t_doc), ("d", d_doc)):
        if len(lst) != n:
            raise SchemaError(f"model: {key!r} has {len(lst)} entries, expected {n}")
    try:
        spaces = tuple(_space(s, i) for i, s in enumerate(spaces_doc))
    except ValidationError as exc:
        raise SchemaError(f"model: {exc}") from exc

    p, T, d = [], [], []
    for i, s in enumerate(spaces):
        if isinstance(s, FiniteSpace):
            for key, table in (("p", p_doc[i]), ("T", t_doc[i]), ("d", d_doc[i])):
                if not isinstance(table, dict) or set(table) != set(s.labels):
                    raise SchemaError(f"{key}[{i}]: expected one entry per label {list(s.labels)}")
            rows = []
            for lab in s.labels:
                row = p_doc[i][lab]
                if not isinstance(row, list) or len(row) != n:
                    raise SchemaError(f"p[{i}][{lab!r}]: expected a row of {n} numbers")
                rows.append([_number(x, f"p[{i}][{lab!r}]") for x in row])
            rows = np.array(rows)
            rows = np.where((rows < 0) & (rows >= -NEG_CLAMP), 0.0, rows)
            p.append(_frozen(rows))
            T.append(_frozen([_number(t_doc[i][lab], f"T[{i}][{lab!r}]") for lab in s.labels]))
            d.append(_frozen([_number(d_doc[i][lab], f"d[{i}][{lab!r}]") for lab in s.labels]))
        else:
            row = p_doc[i]
            if not isinstance(row, list) or len(row) != n:
                raise SchemaError(f"p[{i}]: expected {n} expression strings")
            p.append(tuple(_expr(x, f"p[{i}][{j}]") for j, x in enumerate(row)))
            T.append(_expr(t_doc[i], f"T[{i}]"))
            d.append(_expr(d_doc[i], f"d[{i}]"))

    model = SmdpModel(spaces, tuple(p), tuple(T), tuple(d))
    check_model(model)
    return model


def load_model(source) -> SmdpModel:
    """Load a model from a path, a JSON string or an already parsed dict."""
    if isinstance(source, dict):
        return model_from_dict(source)
    return model_from_dict(_read_json(source, "model"))


def _read_json(source, what):
    if isinstance(source, Path) or not source.lstrip().startswith("{"):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{what}: invalid JSON ({exc})") from exc


def model_to_dict(model: SmdpModel) -> dict:
    spaces, p, T, d = [], [], [], []
    for i, s in enumerate(model.spaces):
        if isinstance(s, FiniteSpace):
            spaces.append({"type": "finite",
                           "points": [{"label": l, "value": v} for l, v in zip(s.labels, s.values)]})
            p.append({l: [float(x) for x in model.p[i][k]] for k, l in enumerate(s.labels)})
            T.append({l: float(model.T[i][k]) for k, l in enumerate(s.labels)})
            d.append({l: float(model.d[i][k]) for k, l in enumerate(s.labels)})
        else:
            spaces.append({"type": "interval", "low": s.low, "high": s.high,
                           "low_open": s.low_open, "high_open": s.high_open})
            p.append([exprlang.to_text(e) for e in model.p[i]])
            T.append(exprlang.to_text(model.T[i]))
            d.append(exprlang.to_text(model.d[i]))
    return {"states": model.n, "decision_spaces": spaces, "p": p, "T": T, "d": d}


def dump_model(model: SmdpModel) -> str:
    return json.dumps(model_to_dict(model), indent=2)


def strategy_from_dict(model: SmdpModel, doc: dict):
    """Parse a ``{"pure": [...]}`` or ``{"mixed": [[{point, weight}, ...], ...]}`` document."""
    if not isinstance(doc, dict) or len(doc) != 1 or not ({"pure", "mixed"} & set(doc)):
        raise SchemaError("strategy: expected exactly one of 'pure' or 'mixed'")
    if "pure" in doc:
        items = doc["pure"]
        if not isinstance(items, list) or len(items) != model.n:
            raise SchemaError(f"strategy: 'pure' needs {model.n} entries")
        s = PureStrategy([sp.resolve(x) for sp, x in zip(model.spaces, items)])
        validate_pure(model, s)
        return s
    measures = doc["mixed"]
    if not isinstance(measures, list) or len(measures) != model.n:
        raise SchemaError(f"strategy: 'mixed' needs {model.n} entries")
    support = []
    for i, (sp, m) in enumerate(zip(model.spaces, measures)):
        if not isinstance(m, list):
            raise SchemaError(f"strategy: mixed[{i}] must be a list")
        support.append([(sp.resolve(_require(e, "point", object, f"mixed[{i}]")),
                         _require(e, "weight", float, f"mixed[{i}]")) for e in m])
    psi = MixedStrategy(support)
    validate_mixed(model, psi)
    return psi


def load_strategy(model: SmdpModel, source):
    """Load a strategy from a path, a JSON string or an already parsed dict."""
    if isinstance(source, dict):
        return strategy_from_dict(model, source)
    return strategy_from_dict(model, _read_json(source, "strategy"))


def strategy_to_dict(model: SmdpModel, strategy) -> dict:
    def enc(i, u):
        s = model.spaces[i]
        return s.label_of(u) if isinstance(s, FiniteSpace) else u

    if isinstance(strategy, PureStrategy):
        return {"pure": [enc(i, u) for i, u in enumerate(strategy.u)]}
    return {"mixed": [[{"point": enc(i, u), "weight": w} for u, w in m]
                      for i, m in enumerate(strategy.support)]}


# --------------------------------------------------------------------------
# kernels


def validate_pure(model: SmdpModel, s: PureStrategy) -> None:
    if len(s) != model.n:
        raise ValidationError(f"strategy has {len(s)} components, model has {model.n} states")
    for i, (sp, u) in enumerate(zip(model.spaces, s.u)):
        if not sp.contains(u):
            raise ValidationError(f"decision {u!r} not admissible at state {i + 1}", state=i, decision=u)


def validate_mixed(model: SmdpModel, psi: MixedStrategy) -> None:
    if len(psi) != model.n:
        raise ValidationError(f"strategy has {len(psi)} measures, model has {model.n} states")
    for i, (sp, m) in enumerate(zip(model.spaces, psi.support)):
        for u, _ in m:
            if not sp.contains(u):
                raise ValidationError(f"support point {u!r} not admissible at state {i + 1}",
                                      state=i, decision=u)


def kernel_at(model: SmdpModel, s: PureStrategy):
    """Embedded-chain matrix, mean sojourns and rewards under a pure strategy.

    Returns
    -------
    P : (N, N) ndarray
    T : (N,) ndarray
    d : (N,) ndarray
    """
    validate_pure(model, s)
    P = np.array([model.row(i, u) for i, u in enumerate(s.u)])
    T = np.array([model.sojourn(i, u) for i, u in enumerate(s.u)])
    d = np.array([model.reward(i, u) for i, u in enumerate(s.u)])
    return P, T, d


def mixed_characteristics(model: SmdpModel, psi: MixedStrategy):
    """Characteristics averaged over each state's measure: ``P̄, T̄, d̄``."""
    validate_mixed(model, psi)
    n = model.n
    P = np.empty((n, n))
    T = np.empty(n)
    d = np.empty(n)
    for i in range(n):
        w = psi.weights(i)
        rows, ts, ds = model.characteristics(i, psi.points(i))
        P[i] = w @ rows
        T[i] = w @ ts
        d[i] = w @ ds
    return P, T, d
