"""Independent brute-force verifiers.

Nothing here calls into :mod:`smdpopt.testfn` or :mod:`smdpopt.measures`;
the checks in the test-suite and in ``smdpopt verify`` compare those
modules against the functions below.

Simulation uses numpy's ``PCG64`` bit generator (``numpy.random.PCG64``
seeded with a 64-bit integer) and draws only uniform doubles through
``Generator.random``; exponential sojourns are obtained by inversion.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import asdict, dataclass

import numpy as np

from .model import (FiniteSpace, MixedStrategy, SmdpModel,
                    ValidationError, model_from_dict, validate_mixed)

PRNG_NAME = "numpy PCG64 (Generator.random, inversion sampling)"
BATCHES = 32


@dataclass(frozen=True)
class StationaryDistribution:
    pi: np.ndarray
    uniqueness_ok: bool


@dataclass(frozen=True)
class SimulationReport:
    jumps: int
    total_time: float
    total_reward: float
    empirical_ratio: float
    half_width_95: float

    def to_dict(self):
        return asdict(self)


def stationary_distribution(P) -> StationaryDistribution:
    """Solve ``pi (P - I) = 0, sum(pi) = 1`` with the last equation replaced.

    ``uniqueness_ok`` is true when ``P - I`` has rank ``N - 1``, judged by the
    second smallest singular value exceeding ``1e-10 * N``.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    M = P - np.eye(n)
    sv = np.linalg.svd(M, compute_uv=False)
    unique = n == 1 or bool(sv[-2] > 1e-10 * n)
    A = M.T.copy()
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    if unique:
        pi = np.linalg.solve(A, b)
    else:
        pi = np.linalg.lstsq(A, b, rcond=None)[0]
    pi = np.maximum(pi, 0.0)
    pi /= pi.sum()
    return StationaryDistribution(pi, unique)


def gth_stationary(P) -> np.ndarray:
    """Stationary vector by Grassmann-Taksar-Heyman state reduction.

    Subtraction-free, so accurate to a few ulps for irreducible chains.
    Assumes a single recurrent class: if a censored chain makes its last
    state absorbing, every lower-numbered state is transient.
    """
    T = np.array(P, dtype=float)
    n = T.shape[0]
    floor = 0
    for k in range(n - 1, 0, -1):
        s = T[k, :k].sum()
        if s <= 0.0:
            floor = k
            break
        T[:k, k] /= s
        T[:k, :k] += np.outer(T[:k, k], T[k, :k])
    pi = np.zeros(n)
    pi[floor] = 1.0
    for k in range(floor + 1, n):
        pi[k] = pi[:k] @ T[:k, k]
    return pi / pi.sum()


def averaged_kernel(model: SmdpModel, psi: MixedStrategy):
    """Weighted characteristics, computed entry by entry with plain loops."""
    n = model.n
    P = np.zeros((n, n))
    T = np.zeros(n)
    d = np.zeros(n)
    for i, measure in enumerate(psi.support):
        for u, w in measure:
            row = model.row(i, u)
            for j in range(n):
                P[i, j] += w * row[j]
            T[i] += w * model.sojourn(i, u)
            d[i] += w * model.reward(i, u)
    return P, T, d


def ratio_value(model: SmdpModel, psi: MixedStrategy) -> float:
    """Long-run reward per unit time ``sum d_i pi_i / sum T_i pi_i`` under ``psi``."""
    validate_mixed(model, psi)
    P, T, d = averaged_kernel(model, psi)
    if not stationary_distribution(P).uniqueness_ok:
        raise ValidationError("averaged embedded chain has no unique stationary distribution "
                              "(BPC condition 4)", condition=4)
    pi = gth_stationary(P)
    den = float(T @ pi)
    if not den > 0:
        raise ValidationError("zero mean sojourn under the stationary law", condition=2)
    return float(d @ pi) / den


def recurrent_states(P, tol: float = 0.0) -> np.ndarray:
    """Boolean mask of states lying in a closed communicating class.

    Reachability by boolean transitive closure over edges ``P > tol``.
    """
    P = np.asarray(P)
    n = P.shape[0]
    R = (P > tol) | np.eye(n, dtype=bool)
    for k in range(n):
        R |= R[:, [k]] & R[[k], :]
    # i recurrent iff every state reachable from i reaches back to i
    return np.array([bool(np.all(R[R[i], i])) for i in range(n)])


# --------------------------------------------------------------------------
# sampling


def sample_mixed_strategies(model: SmdpModel, count: int, max_support: int, seed: int) -> list:
    """``count`` random finite-support strategies, reproducible under ``seed``.

    Support sizes are uniform on ``1..max_support`` (capped by the number of
    points of a finite space); weights are flat-Dirichlet on the simplex.
    Interval supports are drawn uniformly in the interval.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        support = []
        for space in model.spaces:
            if isinstance(space, FiniteSpace):
                k = int(rng.integers(1, min(max_support, len(space)) + 1))
                pts = [space.values[j] for j in sorted(rng.choice(len(space), k, replace=False))]
            else:
                k = int(rng.integers(1, max_support + 1))
                pts = set()
                while len(pts) < k:
                    u = float(space.low + (space.high - space.low) * rng.random())
                    if space.contains(u):
                        pts.add(u)
                pts = sorted(pts)
            w = rng.dirichlet(np.ones(k))
            w = w / math.fsum(w)
            support.append(list(zip(pts, w.tolist())))
        out.append(MixedStrategy(support))
    return out


def random_finite_model(rng: np.random.Generator, n: int, max_points: int = 4,
                        t_range=(0.1, 10.0), d_range=(-10.0, 10.0), min_points: int = 1) -> SmdpModel:
    """Random model with flat-Dirichlet transition rows (hence irreducible)."""
    doc = {"states": n, "decision_spaces": [], "p": [], "T": [], "d": []}
    for _ in range(n):
        k = int(rng.integers(min_points, max_points + 1))
        labels = [chr(ord("a") + j) for j in range(k)]
        doc["decision_spaces"].append(
            {"type": "finite", "points": [{"label": l, "value": float(j)} for j, l in enumerate(labels)]})
        rows = rng.dirichlet(np.ones(n), size=k)
        rows /= rows.sum(axis=1, keepdims=True)
        doc["p"].append({l: rows[j].tolist() for j, l in enumerate(labels)})
        doc["T"].append({l: float(rng.uniform(*t_range)) for l in labels})
        doc["d"].append({l: float(rng.uniform(*d_range)) for l in labels})
    return model_from_dict(doc)


# --------------------------------------------------------------------------
# simulation


def _cdf(weights) -> list:
    c = np.cumsum(weights)
    c[-1] = 1.0
    return c.tolist()


def simulate(model: SmdpModel, psi: MixedStrategy, jumps: int, seed: int,
             sojourn_mode: str = "exponential", initial_reward: float = 0.0) -> SimulationReport:
    """Simulate ``jumps`` transitions of the controlled semi-Markov process.

    At each jump epoch in state ``i`` a decision is drawn from ``psi[i]``, the
    reward ``d_i(u)`` is credited as a lump sum, the sojourn is exponential
    with mean ``T_i(u)`` (or equal to it when ``sojourn_mode`` is
    ``"deterministic"``) and the next state is drawn from ``p_i.(u)``.
    The start state is uniform.
    """
    if jumps < 1:
        raise ValueError("jumps must be at least 1")
    if sojourn_mode not in ("exponential", "deterministic"):
        raise ValueError(f"unknown sojourn mode {sojourn_mode!r}")
    validate_mixed(model, psi)
    exponential = sojourn_mode == "exponential"
    n = model.n
    table = []
    for i, measure in enumerate(psi.support):
        choices = [(_cdf(model.row(i, u)), model.sojourn(i, u), model.reward(i, u)) for u, _ in measure]
        table.append((_cdf([w for _, w in measure]), choices))

    rng = np.random.Generator(np.random.PCG64(seed))
    nb = min(BATCHES, jumps)
    bounds = [(b * jumps) // nb for b in range(nb + 1)]
    batch_time = [0.0] * nb
    batch_reward = [0.0] * nb
    state = min(int(rng.random() * n), n - 1)
    block = 1 << 16
    done = 0
    b = 0
    t_acc = r_acc = 0.0
    while done < jumps:
        m = min(block, jumps - done)
        us = rng.random(3 * m).tolist()
        for k in range(m):
            wcdf, choices = table[state]
            rows, t, d = choices[bisect.bisect_right(wcdf, us[3 * k])] if len(choices) > 1 else choices[0]
            if exponential:
                t = -t * math.log1p(-us[3 * k + 1])
            t_acc += t
            r_acc += d
            state = bisect.bisect_right(rows, us[3 * k + 2])
            if state >= n:
                state = n - 1
            done += 1
            if done == bounds[b + 1]:
                batch_time[b], batch_reward[b] = t_acc, r_acc
                t_acc = r_acc = 0.0
                b += 1
    total_time = math.fsum(batch_time)
    total_reward = initial_reward + math.fsum(batch_reward)
    ratio = total_reward / total_time
    if nb >= 2:
        # ratio-estimator batch means
        t = np.array(batch_time)
        z = np.array(batch_reward) - (ratio - initial_reward / total_time) * t
        se = math.sqrt(float(z @ z) / (nb * (nb - 1))) / float(t.mean())
        half = 1.959963984540054 * se
    else:
        half = math.inf
    return SimulationReport(jumps, total_time, total_reward, ratio, half)
