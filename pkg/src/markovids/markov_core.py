"""Finite-state Markov chain algebra.

Validation (irreducibility, aperiodicity), the stationary distribution,
exact n-step transition matrices and the geometric convergence profile
``eps_n = max_ij |G^n_ij - pi_j| / min_j pi_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import NotErgodicError, ValidationError

# tolerance ladder: construction checks vs derived identities
CONSTRUCTION_TOL = 1e-12
DERIVED_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class MarkovChain:
    """Row-stochastic transition matrix ``G``; ``G[i, j] = Pr[next = j | cur = i]``."""

    G: np.ndarray

    def __post_init__(self) -> None:
        G = np.array(self.G, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape[0] < 1:
            raise ValidationError(f"transition matrix must be square with s >= 1, got shape {G.shape}")
        if not np.all(np.isfinite(G)):
            raise ValidationError("transition matrix has non-finite entries")
        bad = np.argwhere((G < 0) | (G > 1))
        if len(bad):
            i, j = bad[0]
            raise ValidationError(f"row {i}: entry G[{i},{j}]={G[i, j]!r} outside [0, 1]")
        sums = G.sum(axis=1)
        for i, rs in enumerate(sums):
            if abs(rs - 1.0) > CONSTRUCTION_TOL:
                raise ValidationError(f"row {i} sums to {rs!r}, not 1")
        G.setflags(write=False)
        object.__setattr__(self, "G", G)

    @property
    def s(self) -> int:
        return self.G.shape[0]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, MarkovChain) and np.array_equal(self.G, other.G)

    def __hash__(self) -> int:
        return hash(self.G.tobytes())


def two_state_chain(alpha: float, beta: float) -> MarkovChain:
    """Chain of the two-state model: state 0 -> 1 with ``alpha``, 1 -> 0 with ``beta``."""
    return MarkovChain(np.array([[1.0 - alpha, alpha], [beta, 1.0 - beta]]))


@dataclass(frozen=True)
class ChainProperties:
    irreducible: bool
    aperiodic: bool
    period: int

    @property
    def ergodic(self) -> bool:
        return self.irreducible and self.aperiodic


def _period(adj: np.ndarray) -> int:
    # gcd of level[u] + 1 - level[v] over all edges of a BFS tree's graph
    order, _ = breadth_first_order(adj, 0, directed=True)
    level = np.full(adj.shape[0], -1)
    level[0] = 0
    for u in order:
        for v in np.flatnonzero(adj[u]):
            if level[v] < 0:
                level[v] = level[u] + 1
    diffs = [int(level[u] + 1 - level[v]) for u, v in zip(*np.nonzero(adj))]
    return reduce(math.gcd, (abs(d) for d in diffs), 0)


def validate_chain(chain: MarkovChain) -> ChainProperties:
    """Decide irreducibility and aperiodicity on the positive-entry digraph."""
    adj = chain.G > 0
    n_comp, _ = connected_components(adj.astype(np.int8), directed=True, connection="strong")
    irreducible = n_comp == 1
    if not irreducible:
        return ChainProperties(irreducible=False, aperiodic=False, period=0)
    period = _period(adj)
    return ChainProperties(irreducible=True, aperiodic=period == 1, period=period)


def require_ergodic(chain: MarkovChain) -> None:
    props = validate_chain(chain)
    if not props.irreducible:
        raise NotErgodicError("Markov chain is reducible")
    if not props.aperiodic:
        raise NotErgodicError(f"Markov chain is periodic (period {props.period})")


def stationary_distribution(chain: MarkovChain) -> np.ndarray:
    """Solve ``pi G = pi``, ``sum(pi) = 1`` directly (no power iteration)."""
    require_ergodic(chain)
    s = chain.s
    A = chain.G.T - np.eye(s)
    A[-1, :] = 1.0
    b = np.zeros(s)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def n_step_matrix(chain: MarkovChain, n: int) -> np.ndarray:
    """``G^n`` by repeated squaring."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return np.linalg.matrix_power(chain.G, n)


@dataclass(frozen=True)
class ConvergenceProfile:
    epsilon: np.ndarray
    fitted_rate: float
    fitted_scale: float


def convergence_profile(chain: MarkovChain, N: int) -> ConvergenceProfile:
    """Multiplicative deviations ``eps_1..eps_N`` and a fit ``eps_n ~ D exp(-C n)``.

    ``fitted_rate`` is ``inf`` when the chain mixes exactly in finitely many
    steps (no ``eps_n`` above 1e-14 to fit), and ``nan`` with a single point.
    """
    pi = stationary_distribution(chain)
    floor = pi.min()
    eps = np.empty(N)
    P = np.eye(chain.s)
    for n in range(N):
        P = P @ chain.G
        eps[n] = np.abs(P - pi[None, :]).max() / floor
    ns = np.arange(1, N + 1)
    ok = eps > 1e-14
    if ok.sum() == 0:
        return ConvergenceProfile(eps, math.inf, 0.0)
    if ok.sum() == 1:
        return ConvergenceProfile(eps, math.nan, float(eps[ok][0]))
    slope, intercept = np.polyfit(ns[ok], np.log(eps[ok]), 1)
    return ConvergenceProfile(eps, float(-slope), float(math.exp(intercept)))
