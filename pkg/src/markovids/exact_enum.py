"""Exact block laws of Markov-IDS channels by enumeration.

Two paths compute the same objects.  For pure-deletion states the keep/delete
pattern of a block is independent of the input, so the joint law of
(pattern, final state) given the initial state is computed once by a forward
recursion over ``2^k`` masks and reused for every input.  General IDS states
go through a forward recursion over (input prefix, glued output prefix,
state) that merges equal prefixes level by level.

Indexing conventions, shared by every matrix and CSV in the package:

* an input ``x`` of length ``k`` over ``q`` symbols has index
  ``sum_i x_i q^(k-1-i)`` (first symbol most significant);
* a pattern mask has bit ``k-1-i`` set when symbol ``i`` is kept;
* outputs are ordered by length, then lexicographically; the canonical code
  of ``y`` is ``sum_{l < len(y)} q^l + value(y)``.

The state after a block is the state following the last transition, i.e.
the state in which the next block's first symbol would be sent.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .channel_model import MarkovIDSChannel, Word
from .errors import GuardError, InputDependentSideInfoError, ValidationError
from .info_theory import FiniteChannel, _row_neg_entropy
from .markov_core import MarkovChain, require_ergodic

GENERAL_GUARD = 1 << 28
LAW_GUARD = 1 << 24
SIDE_INFO_TOL = 1e-12


# --------------------------------------------------------------------------
# indexing helpers


def length_offset(length: int, q: int) -> int:
    """Number of words over ``q`` symbols strictly shorter than ``length``."""
    return length if q == 1 else (q**length - 1) // (q - 1)


def word_code(y: Sequence[int], q: int) -> int:
    v = 0
    for a in y:
        v = v * q + int(a)
    return length_offset(len(y), q) + v


def code_word(code: int, q: int) -> Word:
    length = 0
    while length_offset(length + 1, q) <= code:
        length += 1
    v = code - length_offset(length, q)
    out = []
    for _ in range(length):
        v, a = divmod(v, q)
        out.append(a)
    return tuple(reversed(out))


def input_word(index: int, k: int, q: int) -> Word:
    out = []
    for _ in range(k):
        index, a = divmod(index, q)
        out.append(a)
    return tuple(reversed(out))


def input_index(x: Sequence[int], q: int) -> int:
    v = 0
    for a in x:
        v = v * q + int(a)
    return v


def _digits(k: int, q: int) -> np.ndarray:
    """``(q^k, k)`` array of input symbols, first symbol in column 0."""
    xs = np.arange(q**k, dtype=np.int64)
    powers = q ** np.arange(k - 1, -1, -1, dtype=np.int64)
    return (xs[:, None] // powers[None, :]) % q


def _masks_by_weight(k: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Masks with ``m`` kept positions (ascending) and their positions."""
    combos = list(combinations(range(k), m))
    pos = np.array(combos, dtype=np.int64).reshape(len(combos), m)
    masks = np.left_shift(1, k - 1 - pos).sum(axis=1)
    order = np.argsort(masks, kind="stable")
    return masks[order], pos[order]


# --------------------------------------------------------------------------
# deletion fast path


@dataclass(frozen=True)
class PatternLaw:
    """``probs[mask, sigma, tau] = Pr[pattern = mask, final state = tau | initial state = sigma]``."""

    k: int
    probs: np.ndarray

    @property
    def s(self) -> int:
        return self.probs.shape[1]

    def length_law(self) -> np.ndarray:
        """``Pr[tau, m | sigma]`` as an array indexed ``[sigma, tau, m]``."""
        pop = np.array([bin(v).count("1") for v in range(1 << self.k)])
        out = np.zeros((self.s, self.s, self.k + 1))
        for m in range(self.k + 1):
            out[:, :, m] = self.probs[pop == m].sum(axis=0)
        return out


def pattern_state_probs(chain: MarkovChain, deletion_probs: Sequence[float] | np.ndarray, k: int) -> PatternLaw:
    """Forward recursion over keep/delete masks; each symbol is sent, then the state moves."""
    require_ergodic(chain)
    d = np.asarray(deletion_probs, dtype=float)
    if d.shape != (chain.s,) or np.any(d < 0) or np.any(d > 1):
        raise ValidationError(f"need one deletion probability in [0, 1] per state, got {d}")
    if k < 1:
        raise ValueError("k must be >= 1")
    G = chain.G
    P = np.eye(chain.s)[None, :, :]
    for _ in range(k):
        dele = (P * d[None, None, :]) @ G
        keep = (P * (1.0 - d)[None, None, :]) @ G
        P = np.stack([dele, keep], axis=1).reshape(-1, chain.s, chain.s)
    return PatternLaw(k, P)


def _deletion_probs_or_raise(channel: MarkovIDSChannel) -> np.ndarray:
    d = channel.deletion_probs
    if d is None:
        raise ValidationError("channel has non-deletion states; use block_law_general")
    return d


# --------------------------------------------------------------------------
# general path


@dataclass(frozen=True)
class BlockLaw:
    """Sparse ``W_k[sigma -> tau](y | x)`` in canonical order.

    Entry ``j`` says input ``x[j]`` starting in ``sigma[j]`` yields the glued
    output with canonical code ``y[j]`` and ends in ``tau[j]`` with
    probability ``prob[j]``.
    """

    k: int
    s: int
    input_alphabet_size: int
    output_alphabet_size: int
    x: np.ndarray
    y: np.ndarray
    sigma: np.ndarray
    tau: np.ndarray
    prob: np.ndarray

    def output_length(self) -> np.ndarray:
        q = self.output_alphabet_size
        lengths = np.zeros(len(self.y), dtype=np.int64)
        for length in range(1, 64):
            off = length_offset(length, q)
            if off > (self.y.max() if len(self.y) else 0):
                break
            lengths[self.y >= off] = length
        return lengths

    def row_sums(self) -> np.ndarray:
        """``sum_{y, tau} W`` indexed ``[x, sigma]``."""
        nx = self.input_alphabet_size**self.k
        out = np.zeros((nx, self.s))
        np.add.at(out, (self.x, self.sigma), self.prob)
        return out

    def entry(self, x: Sequence[int], y: Sequence[int], sigma: int, tau: int) -> float:
        xi = input_index(x, self.input_alphabet_size)
        yc = word_code(y, self.output_alphabet_size)
        hit = (self.x == xi) & (self.y == yc) & (self.sigma == sigma) & (self.tau == tau)
        return float(self.prob[hit].sum())


def general_guard_estimate(channel: MarkovIDSChannel, k: int) -> int:
    """Upper estimate of (input, output prefix) pairs alive at depth ``k``."""
    qx = channel.input_alphabet_size
    qy = channel.output_alphabet_size
    branch = max(len({y for st in channel.states for y, _ in st.law[a]}) for a in range(qx))
    max_len = k * channel.max_output_len
    n_strings = sum(qy**l for l in range(max_len + 1))
    return qx**k * min(branch**k, n_strings)


def block_law_general(channel: MarkovIDSChannel, k: int, guard: int = GENERAL_GUARD) -> BlockLaw:
    """Exact block law for arbitrary IDS state channels."""
    if k < 1:
        raise ValueError("k must be >= 1")
    est = general_guard_estimate(channel, k)
    if est > guard:
        raise GuardError(f"block law at k={k} needs about {est} entries (limit {guard})", est, guard)
    require_ergodic(channel.chain)
    s, qx, qy = channel.s, channel.input_alphabet_size, channel.output_alphabet_size
    G = channel.chain.G
    # per input symbol: list of (word length, word value, per-state probability)
    branches = []
    for a in range(qx):
        words = sorted({y for st in channel.states for y, _ in st.law[a]}, key=lambda w: (len(w), w))
        branches.append(
            [(len(w), input_index(w, qy), np.array([st.prob(a, w) for st in channel.states])) for w in words]
        )
    xs = np.zeros(1, dtype=np.int64)
    ylen = np.zeros(1, dtype=np.int64)
    yval = np.zeros(1, dtype=np.int64)
    M = np.eye(s)[None, :, :]
    for _ in range(k):
        parts_x, parts_l, parts_v, parts_m = [], [], [], []
        for a in range(qx):
            for wl, wv, f in branches[a]:
                if not f.any():
                    continue
                parts_x.append(xs * qx + a)
                parts_l.append(ylen + wl)
                parts_v.append(yval * qy**wl + wv)
                parts_m.append((M * f[None, None, :]) @ G)
        xs = np.concatenate(parts_x)
        ylen = np.concatenate(parts_l)
        yval = np.concatenate(parts_v)
        M = np.concatenate(parts_m)
        keys = np.stack([xs, ylen, yval], axis=1)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.ravel()
        agg = np.zeros((len(uniq), s, s))
        np.add.at(agg, inv, M)
        xs, ylen, yval, M = uniq[:, 0], uniq[:, 1], uniq[:, 2], agg
    ycode = np.array([length_offset(int(l), qy) for l in ylen], dtype=np.int64) + yval
    n = len(xs)
    X = np.repeat(xs, s * s)
    Y = np.repeat(ycode, s * s)
    SIG = np.tile(np.repeat(np.arange(s), s), n)
    TAU = np.tile(np.tile(np.arange(s), s), n)
    P = M.reshape(-1)
    keep = P > 0
    X, Y, SIG, TAU, P = X[keep], Y[keep], SIG[keep], TAU[keep], P[keep]
    order = np.lexsort((TAU, SIG, Y, X))
    return BlockLaw(k, s, qx, qy, X[order], Y[order], SIG[order], TAU[order], P[order])


def block_law_from_patterns(channel: MarkovIDSChannel, k: int) -> BlockLaw:
    """Same object as :func:`block_law_general`, assembled from the pattern law."""
    d = _deletion_probs_or_raise(channel)
    law = pattern_state_probs(channel.chain, d, k)
    q = channel.input_alphabet_size
    s = channel.s
    digits = _digits(k, q)
    nx = q**k
    rows = []
    for m in range(k + 1):
        masks, pos = _masks_by_weight(k, m)
        yv = _subsequence_values(digits, pos, q)
        ycode = length_offset(m, q) + yv
        for j, mask in enumerate(masks):
            for a in range(s):
                for b in range(s):
                    pr = law.probs[mask, a, b]
                    if pr > 0:
                        rows.append((np.arange(nx), ycode[:, j], a, b, pr))
    X = np.concatenate([r[0] for r in rows])
    Y = np.concatenate([r[1] for r in rows])
    SIG = np.concatenate([np.full(nx, r[2]) for r in rows])
    TAU = np.concatenate([np.full(nx, r[3]) for r in rows])
    P = np.concatenate([np.full(nx, r[4]) for r in rows])
    key = np.stack([X, Y, SIG, TAU], axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    prob = np.bincount(inv.ravel(), weights=P, minlength=len(uniq))
    return BlockLaw(k, s, q, q, uniq[:, 0], uniq[:, 1], uniq[:, 2], uniq[:, 3], prob)


def _subsequence_values(digits: np.ndarray, pos: np.ndarray, q: int) -> np.ndarray:
    """``(nx, n_masks)`` values of ``x`` restricted to each mask."""
    nx = digits.shape[0]
    n_masks, m = pos.shape
    out = np.zeros((nx, n_masks), dtype=np.int64)
    for j in range(m):
        out = out * q + digits[:, pos[:, j]]
    return out


# --------------------------------------------------------------------------
# conditioned DMCs


@dataclass(frozen=True, eq=False)
class ConditionedDMC:
    """Block channel given initial state, final state and output length."""

    k: int
    sigma_init: int
    sigma_final: int
    m: int
    matrix: sp.csr_array
    weight: float

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.sigma_init, self.sigma_final, self.m)

    def channel(self) -> FiniteChannel:
        return FiniteChannel(self.matrix)


def _complement_check(channel: MarkovIDSChannel) -> None:
    if channel.input_alphabet_size != 2 or channel.deletion_probs is None:
        raise ValidationError("complement folding needs binary deletion states")


def conditioned_dmcs(channel: MarkovIDSChannel, k: int, method: str = "auto") -> list[ConditionedDMC]:
    """All conditioned block DMCs with positive weight, sorted by ``(sigma, tau, m)``.

    Weights use the channel's initial-state policy (``rho``).  ``method`` is
    ``"pattern"`` (deletion states only), ``"general"`` or ``"auto"``.
    """
    if method not in ("auto", "pattern", "general"):
        raise ValueError(f"unknown method {method!r}")
    use_pattern = method == "pattern" or (method == "auto" and channel.deletion_probs is not None)
    if use_pattern:
        return _dmcs_from_patterns(channel, k)
    return _dmcs_from_block_law(channel, block_law_general(channel, k))


def _dmcs_from_patterns(channel: MarkovIDSChannel, k: int) -> list[ConditionedDMC]:
    d = _deletion_probs_or_raise(channel)
    law = pattern_state_probs(channel.chain, d, k)
    rho = channel.rho
    s = channel.s
    q = channel.input_alphabet_size
    digits = _digits(k, q)
    nx = q**k
    out: list[ConditionedDMC] = []
    per_m: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = {}
    for m in range(k + 1):
        masks, pos = _masks_by_weight(k, m)
        yv = _subsequence_values(digits, pos, q)
        keys = (np.arange(nx, dtype=np.int64)[:, None] * q**m + yv).ravel()
        uniq, inv = np.unique(keys, return_inverse=True)
        per_m[m] = (masks, uniq, inv.ravel(), np.bincount(uniq // q**m, minlength=nx))
    for a in range(s):
        for b in range(s):
            for m in range(k + 1):
                masks, uniq, inv, _ = per_m[m]
                w_mask = law.probs[masks, a, b]
                total = float(w_mask.sum())
                weight = rho[a] * total
                if weight <= 0:
                    continue
                vals = np.bincount(inv, weights=np.tile(w_mask / total, nx), minlength=len(uniq))
                indptr = np.concatenate([[0], np.cumsum(np.bincount(uniq // q**m, minlength=nx))])
                mat = sp.csr_array((vals, uniq % q**m, indptr), shape=(nx, q**m))
                mat.eliminate_zeros()
                out.append(ConditionedDMC(k, a, b, m, mat, float(weight)))
    return out


def _dmcs_from_block_law(channel: MarkovIDSChannel, law: BlockLaw) -> list[ConditionedDMC]:
    k, s, qy = law.k, law.s, law.output_alphabet_size
    nx = law.input_alphabet_size**k
    rho = channel.rho
    lengths = law.output_length()
    max_m = int(lengths.max()) if len(lengths) else 0
    # Pr[tau, m | sigma, x]
    side = np.zeros((nx, s, s, max_m + 1))
    np.add.at(side, (law.x, law.sigma, law.tau, lengths), law.prob)
    spread = side.max(axis=0) - side.min(axis=0)
    if spread.max() > SIDE_INFO_TOL:
        raise InputDependentSideInfoError(
            f"Pr[tau, m | sigma, x] varies with x by up to {spread.max():.3g}; use joint_upper_bound"
        )
    side_law = side.mean(axis=0)
    out: list[ConditionedDMC] = []
    for a in range(s):
        for b in range(s):
            for m in range(max_m + 1):
                total = side_law[a, b, m]
                weight = rho[a] * total
                if weight <= 0:
                    continue
                sel = (law.sigma == a) & (law.tau == b) & (lengths == m)
                cols = law.y[sel] - length_offset(m, qy)
                mat = sp.csr_array((law.prob[sel] / total, (law.x[sel], cols)), shape=(nx, qy**m))
                mat.sum_duplicates()
                out.append(ConditionedDMC(k, a, b, m, mat, float(weight)))
    return out


def fold_complement(W: sp.csr_array, k: int, m: int) -> tuple[sp.csr_array, np.ndarray]:
    """Halve a binary complement-symmetric DMC.

    Returns the averaged channel ``(W_x + W_xbar) / 2`` over inputs whose
    first symbol is 0 and the per-row bonus ``H(averaged) - H(W_x)`` so that,
    for complement-symmetric input laws, ``D(W_x || q)`` equals the averaged
    row's divergence plus the bonus.
    """
    nx = 1 << k
    reps = np.arange(nx // 2, dtype=np.int64)
    comp_x = (nx - 1) - reps
    ny = 1 << m
    perm_y = (ny - 1) - np.arange(ny)
    Wc = W[comp_x][:, perm_y]
    Wr = W[reps]
    if abs(Wc - Wr).max() > 1e-15:
        raise ValidationError("channel is not complement symmetric")
    # Wc equals Wr with outputs complemented, so Wbar mixes y and its complement
    Wbar = sp.csr_array(0.5 * (Wr + W[comp_x]))
    Wbar.eliminate_zeros()
    return Wbar, _row_neg_entropy(sp.csr_array(Wr)) - _row_neg_entropy(Wbar)


# --------------------------------------------------------------------------
# glued channel law


def exact_channel_law(
    channel: MarkovIDSChannel, n: int, rho: np.ndarray | None = None, guard: int = LAW_GUARD, method: str = "auto"
) -> FiniteChannel:
    """``V_n[rho](y | x)`` as a :class:`FiniteChannel` over the outputs that occur.

    ``rho`` defaults to the channel's own initial policy.  Output labels are
    the glued words in canonical order.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rho = channel.rho if rho is None else np.asarray(rho, dtype=float)
    if rho.shape != (channel.s,) or np.any(rho < 0) or abs(rho.sum() - 1) > 1e-12:
        raise ValidationError(f"initial distribution {rho} is not on the simplex")
    qx, qy = channel.input_alphabet_size, channel.output_alphabet_size
    deletion = channel.deletion_probs is not None
    if deletion:
        est = qx**n * min(2**n, sum(qy**l for l in range(n + 1)))
    else:
        est = general_guard_estimate(channel, n)
    if est > guard:
        raise GuardError(f"exact law at n={n} needs about {est} entries (limit {guard})", est, guard)
    if method == "auto":
        method = "pattern" if deletion else "general"
    if method == "pattern":
        law = pattern_state_probs(channel.chain, _deletion_probs_or_raise(channel), n)
        mix = np.einsum("s,msk->m", rho, law.probs)
        digits = _digits(n, qx)
        nx = qx**n
        xs, ys, ps = [], [], []
        for m in range(n + 1):
            masks, pos = _masks_by_weight(n, m)
            yv = _subsequence_values(digits, pos, qx) + length_offset(m, qx)
            xs.append(np.repeat(np.arange(nx), len(masks)))
            ys.append(yv.ravel())
            ps.append(np.tile(mix[masks], nx))
        X, Y, P = np.concatenate(xs), np.concatenate(ys), np.concatenate(ps)
    elif method == "general":
        law = block_law_general(channel, n, guard=max(guard, GENERAL_GUARD))
        X, Y, P = law.x, law.y, law.prob * rho[law.sigma]
    else:
        raise ValueError(f"unknown method {method!r}")
    keep = P > 0
    X, Y, P = X[keep], Y[keep], P[keep]
    cols, inv = np.unique(Y, return_inverse=True)
    mat = sp.csr_array((P, (X, inv.ravel())), shape=(qx**n, len(cols)))
    mat.sum_duplicates()
    labels = [code_word(int(c), qy) for c in cols]
    inputs = [input_word(i, n, qx) for i in range(qx**n)]
    return FiniteChannel(mat, outputs=labels, inputs=inputs)


# --------------------------------------------------------------------------
# dumps


DMC_CSV_HEADER = ("sigma", "tau", "m", "x_index", "y_index", "prob")


def write_dmc_csv(dmcs: Iterable[ConditionedDMC], path: str | Path | None = None) -> str:
    """Serialize DMC entries in canonical order; returns the CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DMC_CSV_HEADER)
    for dmc in sorted(dmcs, key=lambda d: d.key):
        A = dmc.matrix.tocoo()
        order = np.lexsort((A.col, A.row))
        for i in order:
            w.writerow((dmc.sigma_init, dmc.sigma_final, dmc.m, int(A.row[i]), int(A.col[i]), repr(float(A.data[i]))))
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
