"""Closed-form integrands ``A``, ``B`` and the test function ``C = A / B``.

For a pure strategy ``u`` with embedded matrix ``P(u)``::

    A(u) = sum_i d_i(u_i) w_i(u),    B(u) = sum_i T_i(u_i) w_i(u)

where ``w_i`` is the principal minor of ``I - P(u)`` obtained by deleting
row and column ``i``.  Each ``w_i`` is non-negative and the vector ``w`` is
proportional to the stationary distribution of the embedded chain whenever
that distribution is unique, so ``C(u)`` is the long-run reward per unit time
of the deterministic strategy ``u``.

Two routes compute ``w``:

* :func:`cofactor_weights_det` -- LU determinants of the minors (canonical);
* :func:`cofactor_weights_perm` -- the literal signed sum over all
  permutations of the remaining indices with the ``(-1)**(N+i+2)``
  prefactor.  Its magnitudes agree with the determinant route but its sign
  alternates with the state index, which is why it is kept only as a
  cross-check.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import exprlang
from .model import PureStrategy, SmdpModel, ValidationError, kernel_at

ZERO_TOL = 1e-14
PERM_MAX_N = 9
CHUNK = 32768

__all__ = [
    "CofactorWeights", "TestFunctionEval", "DegenerateChainError",
    "shifted_matrix", "cofactor_weights_det", "cofactor_weights_perm",
    "minor_weights", "combine", "integrands",
    "ProductEvaluator", "ProductEvaluation", "integrands_on_product",
]


class DegenerateChainError(ValidationError):
    """The embedded chain at a decision point has no unique stationary law."""


@dataclass(frozen=True)
class CofactorWeights:
    w: np.ndarray
    route: str
    sign_convention: str

    @property
    def total(self) -> float:
        return float(np.sum(self.w))


@dataclass(frozen=True)
class TestFunctionEval:
    A: float
    B: float
    C: float
    weights: CofactorWeights
    flags: tuple = field(default=())

    __test__ = False


def shifted_matrix(model: SmdpModel, s: PureStrategy) -> np.ndarray:
    """``P(u) - I``: entry ``(k, j)`` is ``p_kj(u_k) - [k == j]``."""
    P, _, _ = kernel_at(model, s)
    return P - np.eye(model.n)


def minor_weights(P: np.ndarray) -> np.ndarray:
    """Principal minors of ``I - P`` for a stack of matrices.

    Parameters
    ----------
    P : (..., N, N) ndarray
        Row-stochastic matrices.

    Returns
    -------
    (..., N) ndarray
        ``w[..., i] = det((I - P)[..., -i, -i])``; 1 for ``N == 1``.
        Rounding can push a true zero minor slightly negative; such values
        are clipped to 0 since the exact minors of ``I - P`` are never
        negative.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[-1]
    if n == 1:
        return np.ones(P.shape[:-1])
    M = np.eye(n) - P
    w = np.empty(P.shape[:-1])
    for i in range(n):
        keep = [k for k in range(n) if k != i]
        w[..., i] = np.linalg.det(M[..., keep, :][..., :, keep])
    return np.maximum(w, 0.0)


def cofactor_weights_det(model: SmdpModel, s: PureStrategy) -> CofactorWeights:
    P, _, _ = kernel_at(model, s)
    w = minor_weights(P)
    if np.all(w < ZERO_TOL):
        raise DegenerateChainError(
            f"embedded chain violates condition 4 at this decision point {s.u} "
            "(all cofactor weights vanish)", condition=4)
    return CofactorWeights(w, "determinant", "principal minors of I-P, non-negative")


def _inversions(seq) -> int:
    return sum(1 for a, b in itertools.combinations(seq, 2) if a > b)


def cofactor_weights_perm(model: SmdpModel, s: PureStrategy) -> CofactorWeights:
    """Literal permutation expansion with the ``(-1)**(N+i+2)`` prefactor.

    Inversions are counted on the value word of each permutation of
    ``{1..N} minus {i}``, which equals counting after monotone relabelling.
    Each sum is accumulated with :func:`math.fsum`.
    """
    n = model.n
    if n > PERM_MAX_N:
        raise ValueError(f"permutation route refused for N={n} > {PERM_MAX_N} ((N-1)! terms)")
    shifted = shifted_matrix(model, s)
    w = np.empty(n)
    for i in range(n):
        others = [k for k in range(n) if k != i]
        terms = []
        for alpha in itertools.permutations(others):
            prod = 1.0
            for k, a in zip(others, alpha):
                prod *= shifted[k, a]
            terms.append(-prod if _inversions(alpha) % 2 else prod)
        sign = -1.0 if (n + (i + 1) + 2) % 2 else 1.0
        w[i] = sign * math.fsum(terms)
    return CofactorWeights(w, "permutation", "(-1)^(N+i+2) prefactor as printed; alternates in i")


def combine(w, T, d):
    """``(A, B, C)`` from weights and per-state sojourns/rewards (batched on leading axes)."""
    A = np.sum(np.asarray(d) * w, axis=-1)
    B = np.sum(np.asarray(T) * w, axis=-1)
    return A, B, A / B


def integrands(model: SmdpModel, s: PureStrategy) -> TestFunctionEval:
    """Numerator, denominator and test function at a pure strategy."""
    weights = cofactor_weights_det(model, s)
    _, T, d = kernel_at(model, s)
    A, B, _ = combine(weights.w, T, d)
    A, B = float(A), float(B)
    if not B > ZERO_TOL:
        raise DegenerateChainError(
            f"denominator vanished (B={B!r}): condition 4 or nonpositive sojourns at {s.u}",
            condition=4)
    flags = ()
    if np.any(weights.w <= ZERO_TOL * max(1.0, weights.w.max())):
        flags = ("transient_states",)
    return TestFunctionEval(A, B, A / B, weights, flags)


# --------------------------------------------------------------------------
# batched evaluation over a product of per-state decision sets


@dataclass
class ProductEvaluation:
    """``A``, ``B``, ``C`` over the C-ordered product of ``axes``.

    Points whose characteristics could not be evaluated, or whose
    denominator does not exceed ``ZERO_TOL``, carry NaN in all three arrays.
    """

    axes: list
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    failed_points: int

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    def point(self, flat: int) -> PureStrategy:
        idx = np.unravel_index(flat, self.shape)
        return PureStrategy([self.axes[i][k] for i, k in enumerate(idx)])


def _axis_characteristics(model, i, us):
    n = model.n
    rows = np.full((len(us), n), np.nan)
    ts = np.full(len(us), np.nan)
    ds = np.full(len(us), np.nan)
    for k, u in enumerate(us):
        try:
            rows[k] = model.row(i, u)
            ts[k] = model.sojourn(i, u)
            ds[k] = model.reward(i, u)
        except (ValidationError, exprlang.EvalError):
            rows[k] = np.nan
            ts[k] = ds[k] = np.nan
    return rows, ts, ds


class ProductEvaluator:
    """Chunked evaluation of ``A``, ``B``, ``C`` over a product of decision axes.

    Flat indices follow C order over ``axes``.  Characteristics are computed
    once per axis point; a point whose characteristics fail to evaluate
    poisons (NaN) every product point using it.
    """

    def __init__(self, model: SmdpModel, axes):
        axes = [[float(u) for u in a] for a in axes]
        if len(axes) != model.n:
            raise ValueError("one axis per state required")
        for i, a in enumerate(axes):
            for u in a:
                if not model.spaces[i].contains(u):
                    raise ValidationError(f"decision {u!r} not admissible at state {i + 1}", state=i)
        self.model = model
        self.axes = axes
        self.shape = tuple(len(a) for a in axes)
        self.size = int(np.prod(self.shape, dtype=np.int64))
        self._chars = [_axis_characteristics(model, i, a) for i, a in enumerate(axes)]

    def point(self, flat: int) -> PureStrategy:
        idx = np.unravel_index(flat, self.shape)
        return PureStrategy([self.axes[i][k] for i, k in enumerate(idx)])

    def chunk(self, start: int, stop: int):
        n = self.model.n
        idx = np.unravel_index(np.arange(start, stop), self.shape)
        P = np.stack([self._chars[i][0][idx[i]] for i in range(n)], axis=1)
        T = np.stack([self._chars[i][1][idx[i]] for i in range(n)], axis=1)
        d = np.stack([self._chars[i][2][idx[i]] for i in range(n)], axis=1)
        bad = np.isnan(T).any(axis=1)
        P[bad] = 1.0 / n
        w = minor_weights(P)
        with np.errstate(divide="ignore", invalid="ignore"):
            A, B, C = combine(w, T, d)
        bad |= ~(B > ZERO_TOL)
        A[bad] = B[bad] = C[bad] = np.nan
        return A, B, C

    def map_chunks(self, fn, workers: int = 1, chunk: int = CHUNK):
        """Apply ``fn(start, A, B, C)`` to every chunk; results in chunk order."""
        def run(start):
            return fn(start, *self.chunk(start, min(start + chunk, self.size)))

        starts = range(0, self.size, chunk)
        if workers > 1 and self.size > chunk:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(run, starts))
        return [run(s) for s in starts]


def integrands_on_product(model: SmdpModel, axes, workers: int = 1) -> ProductEvaluation:
    """Evaluate ``A``, ``B``, ``C`` at every point of ``axes[0] x ... x axes[N-1]``.

    Chunks may run on a thread pool; they are reassembled in order, so the
    result does not depend on ``workers``.
    """
    ev = ProductEvaluator(model, axes)
    parts = ev.map_chunks(lambda start, A, B, C: (A, B, C), workers)
    if parts:
        A, B, C = (np.concatenate([p[k] for p in parts]) for k in range(3))
    else:
        A = B = C = np.empty(0)
    return ProductEvaluation(ev.axes, A, B, C, int(np.isnan(C).sum()))
