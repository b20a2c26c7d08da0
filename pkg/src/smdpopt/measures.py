"""The linear-fractional functional ``I(Psi)`` at finite-support strategies.

Two independent routes:

* multilinear -- integrate ``A`` and ``B`` against the product measure by
  summing over every combination of support points;
* averaged kernel -- average the characteristics per state and take the
  stationary reward rate of the averaged chain.

They agree because each cofactor weight is multilinear in the transition
rows of the other states, and rows of different states are mixed
independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import MixedStrategy, PureStrategy, SmdpModel, ValidationError, mixed_characteristics, validate_mixed
from .oracle import stationary_distribution
from .testfn import ZERO_TOL, ProductEvaluator

MAX_TERMS = 10**6


@dataclass(frozen=True)
class FunctionalValue:
    I: float
    numerator: float
    denominator: float
    route: str

    def to_dict(self):
        return {"I": self.I, "numerator": self.numerator,
                "denominator": self.denominator, "route": self.route}


def degenerate(s: PureStrategy) -> MixedStrategy:
    """Strategy whose measure at state ``i`` is concentrated at ``s.u[i]``."""
    return MixedStrategy([[(u, 1.0)] for u in s.u])


def functional_value_multilinear(model: SmdpModel, psi: MixedStrategy, workers: int = 1) -> FunctionalValue:
    validate_mixed(model, psi)
    sizes = [len(m) for m in psi.support]
    terms = math.prod(sizes)
    if terms > MAX_TERMS:
        raise ValueError(f"multilinear expansion needs {terms} terms, bound is {MAX_TERMS}")
    ev = ProductEvaluator(model, [psi.points(i) for i in range(model.n)])
    parts = ev.map_chunks(lambda start, A, B, C: (A, B), workers)
    A = np.concatenate([p[0] for p in parts])
    B = np.concatenate([p[1] for p in parts])
    if np.isnan(B).any():
        k = int(np.flatnonzero(np.isnan(B))[0])
        raise ValidationError(f"integrands undefined at support point {ev.point(k).u} "
                              "(condition 4 or model domain violated)", condition=4)
    # product weights in the same C order as the evaluator
    weight = np.ones(1)
    for i in range(model.n):
        weight = np.multiply.outer(weight, psi.weights(i)).ravel()
    num = math.fsum(weight * A)
    den = math.fsum(weight * B)
    if abs(den) < ZERO_TOL:
        raise ValidationError(f"denominator {den!r} vanished", condition=2)
    return FunctionalValue(num / den, num, den, "multilinear")


def functional_value_averaged(model: SmdpModel, psi: MixedStrategy) -> FunctionalValue:
    P, T, d = mixed_characteristics(model, psi)
    st = stationary_distribution(P)
    if not st.uniqueness_ok:
        raise ValidationError("averaged embedded chain has more than one ergodic class "
                              "(BPC condition 4)", condition=4)
    num = float(d @ st.pi)
    den = float(T @ st.pi)
    if abs(den) < ZERO_TOL:
        raise ValidationError(f"denominator {den!r} vanished", condition=2)
    return FunctionalValue(num / den, num, den, "averaged-kernel")


def functional_values_averaged(model: SmdpModel, strategies) -> np.ndarray:
    """Vectorised averaged-kernel values for many strategies on a finite model.

    Equivalent to ``[functional_value_averaged(model, s).I for s in strategies]``
    but solves all stationary systems in one batched call.  Uniqueness is
    not re-checked; use it only on models whose averaged chains are
    irreducible.
    """
    n = model.n
    k = len(strategies)
    P = np.zeros((k, n, n))
    T = np.zeros((k, n))
    d = np.zeros((k, n))
    for i in range(n):
        for j, psi in enumerate(strategies):
            w = psi.weights(i)
            rows, ts, ds = model.characteristics(i, psi.points(i))
            P[j, i] = w @ rows
            T[j, i] = w @ ts
            d[j, i] = w @ ds
    A = np.transpose(P, (0, 2, 1)) - np.eye(n)
    A[:, -1, :] = 1.0
    b = np.zeros((k, n, 1))
    b[:, -1, 0] = 1.0
    pi = np.linalg.solve(A, b)[..., 0]
    return np.einsum("ki,ki->k", d, pi) / np.einsum("ki,ki->k", T, pi)
