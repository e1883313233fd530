"""Information-theoretic kernel (all logarithms base 2).

Channels are :class:`FiniteChannel` objects wrapping a CSR matrix whose row
``x`` is the conditional law ``W(.|x)``.  Degenerate terms follow one rule:
``0 log 0 = 0`` and the information density is 0 wherever ``W(y|x) = 0`` or
the output probability vanishes.  Channel entries are never smoothed.

Capacity is bracketed by Arimoto's bounds.  For any input law ``p`` with
output law ``q = p W`` and ``D_x = D(W(.|x) || q)``,

    sum_x p_x D_x  <=  C  <=  max_x D_x,

so every reported bracket is a certificate, whatever produced ``p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ConvergenceError, ValidationError

LN2 = math.log(2.0)
ROW_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class FiniteChannel:
    """Row-stochastic sparse matrix with optional input/output labels."""

    matrix: sp.csr_array
    outputs: Sequence[Any] | None = None
    inputs: Sequence[Any] | None = None

    def __post_init__(self) -> None:
        W = sp.csr_array(self.matrix, dtype=float)
        W.sum_duplicates()
        W.eliminate_zeros()
        W.sort_indices()
        if W.nnz and (W.data.min() < 0 or not np.all(np.isfinite(W.data))):
            raise ValidationError("channel has negative or non-finite entries")
        rs = np.asarray(W.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(rs - 1.0) > ROW_TOL)
        if len(bad):
            raise ValidationError(f"row {bad[0]} of the channel sums to {rs[bad[0]]!r}")
        object.__setattr__(self, "matrix", W)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def as_channel(W: FiniteChannel | np.ndarray | sp.sparray | sp.spmatrix) -> FiniteChannel:
    if isinstance(W, FiniteChannel):
        return W
    return FiniteChannel(sp.csr_array(W))


def as_distribution(p: Sequence[float] | np.ndarray, n: int | None = None) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or (n is not None and len(p) != n):
        raise ValidationError(f"distribution has shape {p.shape}, expected ({n},)")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValidationError("distribution is not on the simplex")
    return p


def _row_neg_entropy(W: sp.csr_array) -> np.ndarray:
    """``sum_y W(y|x) log2 W(y|x)`` per row."""
    out = np.zeros(W.shape[0])
    if W.nnz:
        t = W.data * np.log2(W.data)
        nz = np.diff(W.indptr) > 0
        out[nz] = np.add.reduceat(t, W.indptr[:-1][nz])
    return out


def information_density(W, p, x: int, y: int) -> float:
    ch = as_channel(W)
    p = as_distribution(p, ch.shape[0])
    w = ch.matrix[[x], :].toarray()[0, y]
    if w == 0:
        return 0.0
    qy = float(p @ ch.matrix[:, [y]].toarray()[:, 0])
    if qy == 0:
        return 0.0
    return math.log2(w / qy)


def density_atoms(W, p) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """All ``(x, y)`` with positive joint mass: indices, joint mass, density."""
    ch = as_channel(W)
    p = as_distribution(p, ch.shape[0])
    M = ch.matrix.tocoo()
    q = ch.matrix.T @ p
    joint = p[M.row] * M.data
    keep = joint > 0
    xi, yi, w, joint = M.row[keep], M.col[keep], M.data[keep], joint[keep]
    dens = np.log2(w / q[yi])
    return xi, yi, joint, dens


def mutual_information(W, p) -> float:
    _, _, joint, dens = density_atoms(W, p)
    return float(joint @ dens)


def mi_variance(W, p) -> float:
    _, _, joint, dens = density_atoms(W, p)
    mean = joint @ dens
    return float(joint @ (dens - mean) ** 2)


def output_entropy(W, x: int) -> float:
    ch = as_channel(W)
    row = ch.matrix[[x], :].data
    return float(-(row @ np.log2(row))) if row.size else 0.0


def min_log_prob(W) -> float:
    """``phi = -log2`` of the smallest positive transition probability."""
    ch = as_channel(W)
    data = ch.matrix.data
    data = data[data > 0]
    if data.size == 0:
        raise ValidationError("channel has no positive entry")
    return float(-math.log2(data.min())) + 0.0


def perturb_distribution(p, delta: float, alphabet_size_log2: float | None = None) -> np.ndarray:
    """Mixture ``(1 - delta) p + delta * uniform`` on the index set of ``p``.

    ``alphabet_size_log2`` (``n log2|X|``) is optional and only checked
    against ``len(p)``.
    """
    p = as_distribution(p)
    if not 0.0 <= delta <= 1.0:
        raise ValidationError(f"delta={delta!r} outside [0, 1]")
    if alphabet_size_log2 is not None and abs(2.0**alphabet_size_log2 - len(p)) > 1e-6 * len(p):
        raise ValidationError(f"2**{alphabet_size_log2} does not match {len(p)} inputs")
    return (1.0 - delta) * p + delta / len(p)


# --------------------------------------------------------------------------
# capacity


@dataclass
class BASolution:
    """Capacity estimate with its Arimoto bracket ``lower <= C <= upper``."""

    capacity_bits: float
    input_dist: np.ndarray
    lower: float
    upper: float
    iterations: int
    method: str = "blahut-arimoto"
    extra: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    @property
    def lower_gap(self) -> float:
        return self.capacity_bits - self.lower

    @property
    def upper_gap(self) -> float:
        return self.upper - self.capacity_bits

    def to_dict(self, include_dist: bool = False) -> dict:
        d = {
            "capacity_bits": self.capacity_bits,
            "lower": self.lower,
            "upper": self.upper,
            "gap": self.gap,
            "iterations": self.iterations,
            "method": self.method,
        }
        if include_dist:
            d["input_dist"] = self.input_dist.tolist()
        return d


DENSE_LIMIT = 1 << 21
# cap on active-set Newton work, in units of |S|^3 (about 16 solves at |S| = 2100)
KKT_WORK = 1.5e11
DIRECT_BARRIER = 1024


class _Op:
    """Channel matrix held dense (small) or as CSR (large), with the products the solvers use."""

    def __init__(self, W: sp.csr_array, dense: bool | None = None):
        self.csr = sp.csr_array(W)
        self.shape = W.shape
        if dense is None:
            dense = W.shape[0] * W.shape[1] <= DENSE_LIMIT
        if dense:
            self.M = self.csr.toarray()
            self.MT = np.ascontiguousarray(self.M.T)
        else:
            self.M = self.csr
            self.MT = self.csr.T.tocsr()
        self.dense = dense

    def rows(self, S: np.ndarray) -> "_Op":
        out = object.__new__(_Op)
        out.csr = self.csr[S]
        out.shape = (len(S), self.shape[1])
        out.dense = self.dense
        if self.dense:
            out.M = self.M[S]
            out.MT = np.ascontiguousarray(out.M.T)
        else:
            out.M = out.csr
            out.MT = out.csr.T.tocsr()
        return out

    def gram(self, w: np.ndarray) -> np.ndarray:
        """Dense ``W diag(w) W^T``."""
        if self.dense:
            return (self.M * w[None, :]) @ self.MT
        W = self.csr
        nx, ny = W.shape
        sparse_cost = float((np.bincount(W.indices, minlength=ny).astype(float) ** 2).sum())
        if sparse_cost <= nx * nx * ny / 30.0 or nx * ny > 4e7:
            return (W @ sp.diags_array(w) @ W.T).toarray()
        Wd = W.toarray()
        return (Wd * w[None, :]) @ Wd.T

    def tgram(self, w: np.ndarray) -> np.ndarray:
        """Dense ``W^T diag(w) W``."""
        if self.dense:
            return (self.MT * w[None, :]) @ self.M
        W = self.csr
        nx, ny = W.shape
        sparse_cost = float((np.diff(W.indptr).astype(float) ** 2).sum())
        if sparse_cost <= ny * ny * nx / 30.0 or nx * ny > 4e7:
            return (self.MT @ sp.diags_array(w) @ W).toarray()
        Wd = W.toarray()
        return (Wd.T * w[None, :]) @ Wd

    def divergences(self, negent: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Output law ``q`` and ``D(W(.|x) || q) - bonus_x`` in bits (``negent`` carries the bonus)."""
        q = self.MT @ p
        zero = q <= 0
        with np.errstate(divide="ignore"):
            lq = np.log2(np.where(zero, 1.0, q))
        D = negent - self.M @ lq
        if zero.any():
            # W(y|x) > 0 where q(y) = 0: infinite divergence
            hit = np.asarray(self.M[:, zero].sum(axis=1)).ravel() > 0
            D[hit] = np.inf
        return q, D


def _divergences(W, WT, negent: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sparse-only helper: ``q`` and row divergences in bits."""
    q = WT @ p
    with np.errstate(divide="ignore"):
        lq = np.log2(q)
    lq[q <= 0] = -np.inf
    with np.errstate(invalid="ignore"):
        D = negent - W @ lq
    D[np.isnan(D)] = np.inf
    return q, D


class _Bracket:
    """Best Arimoto lower and upper values seen so far."""

    def __init__(self, nx: int):
        self.lower = -math.inf
        self.upper = math.inf
        self.p = np.full(nx, 1.0 / nx)

    def update(self, p: np.ndarray, D: np.ndarray) -> None:
        self.upper = min(self.upper, float(D.max()))
        fin = p > 0
        L = float(p[fin] @ D[fin])
        if L > self.lower:
            self.lower = L
            self.p = p
        # both ends are exact bounds; a crossing is rounding noise
        self.lower = min(self.lower, self.upper)

    @property
    def gap(self) -> float:
        return self.upper - self.lower


def blahut_arimoto(W, tolerance: float = 1e-9, max_iters: int = 100_000, p0: np.ndarray | None = None) -> BASolution:
    """Alternating maximization from the uniform input law.

    Stops when ``max_x D_x - sum_x p_x D_x <= tolerance`` and reports the
    bracket midpoint.  Raises :class:`ConvergenceError` after ``max_iters``.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    ch = as_channel(W)
    op = _Op(ch.matrix)
    negent = _row_neg_entropy(ch.matrix)
    nx = ch.shape[0]
    p = np.full(nx, 1.0 / nx) if p0 is None else np.asarray(p0, dtype=float) / np.sum(p0)
    br = _Bracket(nx)
    for it in range(max_iters + 1):
        _, D = op.divergences(negent, p)
        br.update(p, D)
        if br.gap <= tolerance:
            return BASolution(0.5 * (br.lower + br.upper), br.p, br.lower, br.upper, it)
        if it == max_iters:
            break
        # p_x <- p_x 2^{D_x} / Z, shifted for range safety
        p = p * np.exp2(D - D.max())
        p /= p.sum()
    raise ConvergenceError(
        f"Blahut-Arimoto did not close the bracket in {max_iters} iterations "
        f"(lower={br.lower:.12g}, upper={br.upper:.12g})",
        br.lower,
        br.upper,
        max_iters,
    )


def _merge_identical_rows(W: sp.csr_array) -> tuple[sp.csr_array, np.ndarray]:
    keys: dict[bytes, int] = {}
    group = np.empty(W.shape[0], dtype=np.int64)
    ip, ind, dat = W.indptr, W.indices, W.data
    for i in range(W.shape[0]):
        a, b = ip[i], ip[i + 1]
        key = ind[a:b].tobytes() + dat[a:b].tobytes()
        group[i] = keys.setdefault(key, len(keys))
    first = np.unique(group, return_index=True)[1]
    return sp.csr_array(W[first]), group


def _barrier_phase(
    op: _Op,
    negent: np.ndarray,
    target_gap: float,
    max_newton: int = 400,
    start: tuple[np.ndarray, float] | None = None,
) -> tuple[np.ndarray, float, int]:
    """Primal log-barrier path following for ``max_p I(p) + mu sum log p``.

    Locates the optimal support, and finishes large problems where the
    active-set phase is too expensive.  ``start`` resumes from a previous
    ``(p, mu)``.  Returns the iterate with the smallest Arimoto gap and its
    barrier weight; stops early when the Newton systems lose accuracy.
    """
    nx, ny = op.shape
    h = -negent * LN2  # row entropies (minus any bonus) in nats
    if start is None:
        p, mu = np.full(nx, 1.0 / nx), 1.0 / nx
    else:
        p, mu = start[0].copy(), start[1] / 10.0
    steps = 0
    best = (math.inf, p, mu)

    def grad(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        q = op.MT @ p
        return -h - op.M @ np.log(q) + mu / p, q

    while steps < max_newton:
        for _ in range(60):
            g, q = grad(p)
            dg = mu / p**2
            rhs = np.column_stack([g, np.ones(nx)])
            try:
                # the Woodbury form loses accuracy at small mu; only use it to save real work
                if nx <= max(ny, DIRECT_BARRIER):
                    K = op.gram(1.0 / q)
                    K[np.diag_indices(nx)] += dg
                    sc = 1.0 / np.sqrt(np.diag(K))
                    cf = sla.cho_factor(K * sc[:, None] * sc[None, :])
                    sol = sla.cho_solve(cf, rhs * sc[:, None]) * sc[:, None]
                else:
                    # Woodbury with B = W diag(q^-1/2): (diag(dg) + B B^T)^-1
                    r = q**-0.5
                    M = op.tgram(1.0 / dg) * r[:, None] * r[None, :]
                    M[np.diag_indices(ny)] += 1.0
                    sc = 1.0 / np.sqrt(np.diag(M))
                    cf = sla.cho_factor(M * sc[:, None] * sc[None, :])
                    R = rhs / dg[:, None]
                    z = sla.cho_solve(cf, (op.MT @ R) * (r * sc)[:, None]) * (sc * r)[:, None]
                    sol = R - (op.M @ z) / dg[:, None]
            except (np.linalg.LinAlgError, ValueError):
                return best[1], best[2], steps
            if not np.all(np.isfinite(sol)):
                return best[1], best[2], steps
            Kg, K1 = sol[:, 0], sol[:, 1]
            nu = Kg.sum() / K1.sum()
            dp = Kg - nu * K1
            dp -= dp.sum() / nx
            lam2 = float(dp @ (g - nu))
            steps += 1
            neg = dp < 0
            t = min(1.0, 0.995 * float(np.min(-p[neg] / dp[neg]))) if neg.any() else 1.0
            for _ in range(60):
                gn, _q = grad(p + t * dp)
                if gn @ dp >= 0 or t < 1e-14:
                    break
                t *= 0.5
            p = p + t * dp
            p /= p.sum()
            if lam2 < 1e-3 * mu or steps >= max_newton:
                break
        _, D = op.divergences(negent, p)
        gap = float(D.max() - p @ D)
        if gap < best[0]:
            best = (gap, p, mu)
        elif gap > 10 * best[0]:
            break  # lost the central path; the best point is still useful
        if gap <= target_gap:
            break
        mu /= 10.0
        if mu < 1e-20:
            break
    return best[1], best[2], steps


def _newton_on_support(
    op: _Op, negent: np.ndarray, S: np.ndarray, pS: np.ndarray, max_inner: int, work: list[float]
) -> tuple[np.ndarray, np.ndarray, int, bool]:
    """Newton iterations for ``D_x = C`` on ``S`` keeping ``p_S`` nonnegative.

    The last return value says whether the residual reached rounding level;
    it stays ``False`` when the system is inconsistent (too many inputs for
    the outputs they span) and Newton stalls.  ``work[0]`` is a shared
    budget in dense-solve units (``|S|^3``); each step spends from it.
    """
    steps = 0
    best_res, stale = math.inf, 0
    for _ in range(max_inner):
        sub = op.rows(S)
        qS = sub.MT @ pS
        pos = qS > 0
        safe_q = np.where(pos, qS, 1.0)
        DS = negent[S] - sub.M @ np.log2(safe_q)
        C = pS @ DS
        r = DS - C
        res = float(np.abs(r).max())
        if res <= 4e-15 * max(1.0, abs(C)):
            return S, pS, steps, True
        if res < 0.5 * best_res:
            best_res, stale = res, 0
        else:
            stale += 1
            if stale >= 5:
                break
        n = len(S)
        if work[0] <= 0:
            break
        work[0] -= float(n) ** 3
        A = sub.gram(np.where(pos, 1.0 / safe_q, 0.0)) / LN2
        M = np.empty((n + 1, n + 1))
        M[:n, :n] = A
        M[:n, n] = 1.0
        M[n, :n] = 1.0
        M[n, n] = 0.0
        try:
            sol = sla.lstsq(M, np.append(r, 0.0), lapack_driver="gelsy", cond=1e-13)[0]
        except (np.linalg.LinAlgError, ValueError):
            break
        dp = sol[:n]
        if not np.all(np.isfinite(dp)):
            break
        steps += 1
        t = 1.0
        blocking = np.zeros(n, dtype=bool)
        neg = dp < 0
        if neg.any():
            ratios = np.full(n, np.inf)
            ratios[neg] = -pS[neg] / dp[neg]
            t = min(1.0, float(ratios.min()))
            blocking = ratios <= t * (1 + 1e-12)
        pS = pS + t * dp
        keep = ~blocking & (pS > 0)
        if not keep.any():
            break
        S, pS = S[keep], pS[keep] / pS[keep].sum()
    return S, pS, steps, False


def _fill_unreached(op: _Op, negent: np.ndarray, p: np.ndarray, C: float) -> np.ndarray:
    """Give inputs that reach outputs with ``q(y) = 0`` just enough mass.

    Such inputs (e.g. the no-deletion word) can carry optimal mass far below
    any support threshold; at zero their divergence is infinite and the
    Arimoto upper bound is useless.  Since ``q(y) >= p_x W(y|x)``, putting
    ``log2 p_x = (A_x - C) / w_x`` caps ``D_x`` near ``C``, with ``w_x`` the
    mass of ``W(.|x)`` on unreached outputs and ``A_x`` the rest of ``D_x``.
    """
    q = op.MT @ p
    zero = q <= 0
    MZ = sp.csr_array(op.csr[:, np.flatnonzero(zero)])
    w = np.asarray(MZ.sum(axis=1)).ravel()
    need = (w > 0) & (p == 0)
    if not need.any():
        return p
    lq = np.log2(np.where(zero, 1.0, q))
    zdata = MZ.data * np.log2(MZ.data)
    wlogw = np.asarray(sp.csr_array((zdata, MZ.indices, MZ.indptr), shape=MZ.shape).sum(axis=1)).ravel()
    A = negent - wlogw - op.M @ lq
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        logp = np.where(need, (A - C) / np.where(w > 0, w, 1.0), -np.inf)
    out = p.copy()
    out[need] = np.clip(np.exp2(np.minimum(logp[need], 0.0)), 1e-300, 1e-3)
    return out / out.sum()


def _kkt_phase(
    op: _Op, negent: np.ndarray, p: np.ndarray, mu: float, br: _Bracket, tolerance: float,
    max_outer: int = 10, max_inner: int = 40, max_work: float | None = None,
) -> int:
    """Active-set Newton on ``D_x(q) = C`` for ``x`` in a guessed support.

    On the barrier path an input off the optimal support has ``p_x`` close
    to ``mu / g_x`` with ``g_x`` its divergence deficit, so supports are
    guessed as ``{p_x > kappa mu}`` over a ladder of ``kappa``.  Every
    candidate is scored with the full Arimoto bracket, so a wrong guess only
    costs time, and the total Newton work is capped so that large
    degenerate problems fall through to the barrier instead.
    """
    nx = op.shape[0]
    steps = 0
    work = [KKT_WORK if max_work is None else max_work]
    tried: set[bytes] = set()
    # the last guess is every input: it rescues early barrier exits where
    # mu is still large (e.g. nearly useless channels)
    guesses = [np.flatnonzero(p > kappa * mu) for kappa in (1e6, 1e5, 1e4, 1e3, 1e2)]
    guesses.append(np.arange(nx))
    for S in guesses:
        if len(S) == 0 or S.tobytes() in tried:
            continue
        tried.add(S.tobytes())
        pS = p[S] / p[S].sum()
        for _outer in range(max_outer):
            S, pS, n, converged = _newton_on_support(op, negent, S, pS, max_inner, work)
            steps += n
            p_full = np.zeros(nx)
            p_full[S] = pS
            _, D = op.divergences(negent, p_full)
            br.update(p_full, D)
            if br.gap <= tolerance:
                return steps
            C = pS @ D[S]
            if not np.isfinite(D).all():
                p_fill = _fill_unreached(op, negent, p_full, C)
                br.update(p_fill, op.divergences(negent, p_fill)[1])
                if br.gap <= tolerance:
                    return steps
            if work[0] <= 0:
                return steps
            if not converged and len(S) > 1:
                # stalled on a degenerate support: give up its weakest member
                drop = int(np.argmin(D[S]))
                S, pS = np.delete(S, drop), np.delete(pS, drop)
                pS /= pS.sum()
                continue
            outside = np.setdiff1d(np.flatnonzero(D > C + 0.25 * (D.max() - C)), S)
            if len(outside) == 0:
                break
            if len(outside) > 64:
                outside = outside[np.argsort(-D[outside], kind="stable")[:64]]
            S = np.concatenate([S, outside])
            pS = np.concatenate([pS, np.full(len(outside), 1e-6 / len(outside))])
            pS /= pS.sum()
    return steps


def channel_capacity(
    W,
    tolerance: float = 1e-9,
    max_iters: int = 100_000,
    method: str = "auto",
    ba_warmup: int = 300,
    bonus: np.ndarray | None = None,
) -> BASolution:
    """Capacity with an Arimoto bracket no wider than ``tolerance``.

    ``method="ba"`` is plain :func:`blahut_arimoto`.  ``"auto"`` merges
    identical rows, runs ``ba_warmup`` BA iterations and, if the bracket is
    still open, locates the support with a barrier method and finishes with
    active-set Newton steps; leftover slack goes back to BA.

    ``bonus`` adds a fixed reward ``c_x`` per input, i.e. the objective is
    ``I(p) + sum_x p_x c_x``; the bracket uses ``D_x + c_x``.  This is how a
    symmetric channel is solved on half of its inputs.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    ch = as_channel(W)
    if method == "ba":
        if bonus is not None:
            raise ValueError("bonus is only supported by method='auto'")
        return blahut_arimoto(ch, tolerance, max_iters)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    Wfull = ch.matrix
    nx_full = Wfull.shape[0]
    c = np.zeros(nx_full) if bonus is None else np.asarray(bonus, dtype=float)
    if c.shape != (nx_full,):
        raise ValidationError(f"bonus has shape {c.shape}, expected ({nx_full},)")
    used_cols = np.unique(Wfull.indices)
    if len(used_cols) <= 1:
        best = np.flatnonzero(c == c.max())
        p = np.zeros(nx_full)
        p[best] = 1.0 / len(best)
        v = float(c.max())
        return BASolution(v, p, v, v, 0, "trivial")
    Wm, group = _merge_identical_rows(Wfull)
    # inside a group of equal rows only the largest bonus can carry mass
    cm = np.full(Wm.shape[0], -np.inf)
    np.maximum.at(cm, group, c)
    carrier = c == cm[group]
    counts = np.bincount(group, weights=carrier.astype(float))

    def expand(p: np.ndarray) -> np.ndarray:
        return np.where(carrier, p[group] / counts[group], 0.0)

    # drop outputs no input can produce
    Wm = sp.csr_array(Wm[:, used_cols])
    nx = Wm.shape[0]
    if not cm.any() and np.all(np.diff(Wm.indptr) == 1) and len(np.unique(Wm.indices)) == nx:
        # noiseless with distinct outputs: uniform over merged rows is optimal
        v = math.log2(nx)
        return BASolution(v, expand(np.full(nx, 1.0 / nx)), v, v, 0, "noiseless")
    op = _Op(Wm)
    negent = _row_neg_entropy(Wm) + cm
    br = _Bracket(nx)
    p = np.full(nx, 1.0 / nx)
    it = 0
    warm = min(ba_warmup, max_iters)

    def done(method_name: str, extra: dict | None = None) -> BASolution:
        return BASolution(0.5 * (br.lower + br.upper), expand(br.p), br.lower, br.upper, it, method_name, extra or {})

    while it <= warm:
        _, D = op.divergences(negent, p)
        br.update(p, D)
        if br.gap <= tolerance:
            return done("blahut-arimoto")
        p = p * np.exp2(D - D.max())
        p /= p.sum()
        it += 1
    pb, mu, nsteps = _barrier_phase(op, negent, target_gap=max(1e-7, tolerance))
    _, D = op.divergences(negent, pb)
    br.update(pb, D)
    ksteps = _kkt_phase(op, negent, pb, mu, br, tolerance)
    extra = {"ba_warmup": warm, "barrier_steps": nsteps, "kkt_steps": ksteps}
    if br.gap <= tolerance:
        return done("hybrid", extra)
    if tolerance < 1e-7:
        # follow the central path the rest of the way
        pb, mu, more = _barrier_phase(op, negent, target_gap=tolerance, start=(pb, mu))
        extra["barrier_steps"] += more
        _, D = op.divergences(negent, pb)
        br.update(pb, D)
        if br.gap <= tolerance:
            return done("hybrid", extra)
    # BA needs an interior start (zero entries would stay zero) that keeps
    # the precision of the best point so far
    p = np.maximum(_fill_unreached(op, negent, br.p, br.lower), 1e-30)
    p /= p.sum()
    while it < max_iters:
        _, D = op.divergences(negent, p)
        br.update(p, D)
        it += 1
        if br.gap <= tolerance:
            return done("hybrid", extra)
        p = p * np.exp2(D - D.max())
        p /= p.sum()
    raise ConvergenceError(
        f"capacity solver did not close the bracket (lower={br.lower:.12g}, upper={br.upper:.12g})",
        br.lower,
        br.upper,
        it,
    )
