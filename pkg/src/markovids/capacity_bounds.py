"""Genie-aided capacity upper bounds and parameter sweeps.

A block of ``k`` input symbols is sent with the block's initial state, final
state and output length revealed to both ends.  Since pattern and state
statistics of deletion channels do not depend on the input, the block
channel splits into conditioned DMCs and

    bound = (1/k) * sum_{sigma, tau, m} weight * C(DMC_{sigma, tau, m}),

which upper-bounds the capacity of the glued channel because extra side
information cannot lower capacity.

Error budget: each DMC is solved to an Arimoto bracket of width at most
``ba_tolerance / (k * n_dmcs)``, and the report carries
``(1/k) * sum weight * bracket`` as ``ba_budget``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import product
from pathlib import Path
from threading import Lock
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp

from . import __version__
from .channel_model import (
    MarkovIDSChannel,
    TwoStateDeletionParams,
    iid_deletion_channel,
    resolve_two_state_params,
    two_state_deletion_channel,
)
from .errors import ConvergenceError, InfeasibleParametersError, ValidationError
from .exact_enum import ConditionedDMC, block_law_general, conditioned_dmcs, fold_complement
from .info_theory import BASolution, channel_capacity

DROP_WEIGHT = 1e-15
# brackets narrower than this are below double-precision noise of D_x
BRACKET_FLOOR = 1e-13

REFERENCE_GRID = {
    "delta": (0.01, 0.1, 0.5),
    "ratio": (2.0, 4.0, 8.0),
    "alpha": (0.5, 0.25, 0.125, 0.0625),
    "alpha_over_beta": (0.5, 1.0, 2.0),
}

CSV_HEADER = ("delta", "ratio", "alpha", "alpha_over_beta", "inv_alpha", "k", "bound_bits", "dropped_mass", "ba_budget")


@dataclass(frozen=True)
class BoundConfig:
    """One bound evaluation.  ``alpha=None`` selects the single-state i.i.d. channel."""

    delta: float
    ratio: float = 1.0
    alpha: float | None = None
    alpha_over_beta: float | None = None
    k: int = 1
    ba_tolerance: float = 1e-9
    rho: str | tuple[float, ...] = "stationary"
    fold_complement: bool = False

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if not 0.0 <= self.delta <= 1.0:
            raise ValidationError(f"delta={self.delta!r} outside [0, 1]")
        if self.ba_tolerance <= 0:
            raise ValidationError("ba_tolerance must be positive")
        if (self.alpha is None) != (self.alpha_over_beta is None):
            raise ValidationError("alpha and alpha_over_beta go together")
        if self.alpha is None and self.ratio != 1.0:
            raise ValidationError("a ratio other than 1 needs alpha and alpha_over_beta")
        if isinstance(self.rho, str) and self.rho != "stationary":
            raise ValidationError(f"unknown rho policy {self.rho!r}")

    @property
    def is_iid(self) -> bool:
        return self.alpha is None

    def params(self) -> TwoStateDeletionParams:
        if self.alpha is None or self.alpha_over_beta is None:
            raise ValidationError("i.i.d. config has no two-state parameters")
        if self.alpha_over_beta <= 0:
            raise ValidationError("alpha_over_beta must be positive")
        return resolve_two_state_params(self.delta, self.ratio, self.alpha, self.alpha / self.alpha_over_beta)

    def channel(self) -> MarkovIDSChannel:
        rho = None if isinstance(self.rho, str) else np.asarray(self.rho, dtype=float)
        if self.is_iid:
            ch = iid_deletion_channel(self.delta)
            return ch if rho is None else ch.with_initial(rho)
        return two_state_deletion_channel(self.params(), rho)


@dataclass
class DMCResult:
    sigma: int
    tau: int
    m: int
    weight: float
    capacity_bits: float
    lower: float
    upper: float
    iterations: int
    method: str
    dropped: bool = False


@dataclass
class BoundReport:
    """Aggregated bound with per-DMC diagnostics."""

    bound_bits_per_symbol: float
    k: int
    per_dmc: list[DMCResult]
    dropped_weight_mass: float
    ba_budget: float
    wall_time: float
    config: dict[str, Any] = field(default_factory=dict)
    log2_input_alphabet: float = 1.0

    def reconstruct(self) -> float:
        kept = sum(r.weight * r.capacity_bits for r in self.per_dmc if not r.dropped)
        return kept / self.k + self.dropped_weight_mass * self.log2_input_alphabet

    def to_dict(self) -> dict[str, Any]:
        return {
            "bound_bits_per_symbol": self.bound_bits_per_symbol,
            "k": self.k,
            "dropped_weight_mass": self.dropped_weight_mass,
            "ba_budget": self.ba_budget,
            "wall_time": self.wall_time,
            "config": self.config,
            "per_dmc": [asdict(r) for r in self.per_dmc],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)

    def per_dmc_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("sigma", "tau", "m", "weight", "capacity_bits", "lower", "upper", "dropped"))
        for r in self.per_dmc:
            w.writerow((r.sigma, r.tau, r.m, _fmt(r.weight), _fmt(r.capacity_bits), _fmt(r.lower), _fmt(r.upper), int(r.dropped)))
        return buf.getvalue()


def _json_default(o: Any) -> Any:
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _fmt(v: float) -> str:
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.12g}"


# --------------------------------------------------------------------------
# solving


_IID_CACHE: dict[tuple, BASolution] = {}
_IID_LOCK = Lock()


def _solve(matrix: sp.csr_array, k: int, m: int, tol: float, fold: bool) -> BASolution:
    if fold:
        Wb, bonus = fold_complement(matrix, k, m)
        return channel_capacity(Wb, tol, bonus=bonus)
    return channel_capacity(matrix, tol)


def _solve_within_budget(dmc: ConditionedDMC, tol: float, share: float, fold: bool, cache_key: tuple | None) -> BASolution:
    if cache_key is not None:
        with _IID_LOCK:
            hit = _IID_CACHE.get(cache_key)
        if hit is not None:
            return hit
    try:
        sol = _solve(dmc.matrix, dmc.k, dmc.m, tol, fold)
    except ConvergenceError as err:
        # the bracket is still a certificate; accept it if it fits this DMC's budget share
        if dmc.weight * (err.upper - err.lower) / dmc.k > share:
            raise
        mid = 0.5 * (err.lower + err.upper)
        sol = BASolution(mid, np.array([]), err.lower, err.upper, err.iterations, "bracket")
    if cache_key is not None:
        with _IID_LOCK:
            _IID_CACHE[cache_key] = sol
    return sol


def _aggregate(
    dmcs: list[ConditionedDMC], k: int, ba_tolerance: float, fold: bool, threads: int, iid: bool, log2x: float
) -> tuple[float, list[DMCResult], float, float]:
    dmcs = sorted(dmcs, key=lambda d: d.key)
    kept = [d for d in dmcs if d.weight >= DROP_WEIGHT]
    n = max(len(kept), 1)
    tol = max(ba_tolerance / (k * n), BRACKET_FLOOR)
    share = ba_tolerance / n

    def work(d: ConditionedDMC) -> BASolution:
        key = (k, d.m, tol, fold) if iid else None
        return _solve_within_budget(d, tol, share, fold, key)

    if threads > 1 and len(kept) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            sols = list(pool.map(work, kept))
    else:
        sols = [work(d) for d in kept]
    by_key = {d.key: s for d, s in zip(kept, sols)}
    results: list[DMCResult] = []
    total = 0.0
    dropped = 0.0
    budget = 0.0
    # fixed-order reduction
    for d in dmcs:
        if d.weight < DROP_WEIGHT:
            dropped += d.weight
            cap_max = k * log2x
            results.append(DMCResult(d.sigma_init, d.sigma_final, d.m, d.weight, cap_max, cap_max, cap_max, 0, "dropped", True))
            continue
        s = by_key[d.key]
        total += d.weight * s.capacity_bits
        budget += d.weight * (s.upper - s.lower)
        results.append(
            DMCResult(d.sigma_init, d.sigma_final, d.m, d.weight, s.capacity_bits, s.lower, s.upper, s.iterations, s.method)
        )
    bound = total / k + dropped * log2x
    return bound, results, dropped, budget / k


def _config_dict(cfg: BoundConfig) -> dict[str, Any]:
    d = asdict(cfg)
    d["rho"] = cfg.rho if isinstance(cfg.rho, str) else list(cfg.rho)
    return d


def genie_upper_bound(config: BoundConfig, threads: int = 1) -> BoundReport:
    """Side-information bound for the configured channel at block length ``k``."""
    t0 = time.perf_counter()
    ch = config.channel()
    dmcs = conditioned_dmcs(ch, config.k)
    log2x = math.log2(ch.input_alphabet_size)
    bound, results, dropped, budget = _aggregate(
        dmcs, config.k, config.ba_tolerance, config.fold_complement, threads, config.is_iid, log2x
    )
    return BoundReport(bound, config.k, results, dropped, budget, time.perf_counter() - t0, _config_dict(config), log2x)


def iid_upper_bound(delta: float, k: int, ba_tolerance: float = 1e-9, fold_complement: bool = False, threads: int = 1) -> BoundReport:
    """Same bound for the memoryless deletion channel; the side information is the output length only."""
    return genie_upper_bound(BoundConfig(delta=delta, k=k, ba_tolerance=ba_tolerance, fold_complement=fold_complement), threads)


def channel_upper_bound(
    channel: MarkovIDSChannel, k: int, ba_tolerance: float = 1e-9, fold: bool = False, threads: int = 1
) -> BoundReport:
    """Genie bound for an arbitrary channel whose side information is input independent."""
    t0 = time.perf_counter()
    dmcs = conditioned_dmcs(channel, k)
    log2x = math.log2(channel.input_alphabet_size)
    bound, results, dropped, budget = _aggregate(dmcs, k, ba_tolerance, fold, threads, False, log2x)
    return BoundReport(bound, k, results, dropped, budget, time.perf_counter() - t0, {"k": k}, log2x)


def joint_upper_bound(channel: MarkovIDSChannel, k: int, ba_tolerance: float = 1e-9) -> BoundReport:
    """``(1/k) C`` of the block channel ``x -> (y, sigma, tau)``.

    No decomposition is needed, so this also covers insertion and
    substitution states whose output length depends on the input.  The
    encoder does not see the side information here, so the value never
    exceeds the decomposed bound.
    """
    t0 = time.perf_counter()
    law = block_law_general(channel, k)
    rho = channel.rho
    s = channel.s
    nx = channel.input_alphabet_size**k
    col_key = (law.y * s + law.sigma) * s + law.tau
    cols, inv = np.unique(col_key, return_inverse=True)
    mat = sp.csr_array((law.prob * rho[law.sigma], (law.x, inv.ravel())), shape=(nx, len(cols)))
    mat.sum_duplicates()
    mat.eliminate_zeros()
    sol = channel_capacity(mat, ba_tolerance * k)
    log2x = math.log2(channel.input_alphabet_size)
    res = DMCResult(-1, -1, -1, 1.0, sol.capacity_bits, sol.lower, sol.upper, sol.iterations, sol.method)
    return BoundReport(
        sol.capacity_bits / k, k, [res], 0.0, sol.gap / k, time.perf_counter() - t0, {"k": k, "joint": True}, log2x
    )


# --------------------------------------------------------------------------
# sweeps


@dataclass
class SweepRow:
    delta: float
    ratio: float
    alpha: float
    alpha_over_beta: float
    k: int
    bound_bits: float
    dropped_mass: float
    ba_budget: float
    note: str = ""

    @property
    def inv_alpha(self) -> float:
        return 1.0 / self.alpha if not math.isnan(self.alpha) else math.nan

    @property
    def is_baseline(self) -> bool:
        return self.ratio == 1.0 and math.isnan(self.alpha)

    def csv_fields(self) -> tuple[str, ...]:
        return (
            _fmt(self.delta),
            _fmt(self.ratio),
            _fmt(self.alpha),
            _fmt(self.alpha_over_beta),
            _fmt(self.inv_alpha),
            str(self.k),
            _fmt(self.bound_bits),
            _fmt(self.dropped_mass),
            _fmt(self.ba_budget),
        )


@dataclass
class SweepTable:
    rows: list[SweepRow]
    grid: dict[str, Any]

    def markov_rows(self) -> list[SweepRow]:
        return [r for r in self.rows if not r.is_baseline]

    def baseline_rows(self) -> list[SweepRow]:
        return [r for r in self.rows if r.is_baseline]

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.grid, sort_keys=True).encode()).hexdigest()[:16]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# markovids {__version__}\n")
        buf.write(f"# config_sha256 {self.config_hash()}\n")
        buf.write(f"# grid {json.dumps(self.grid, sort_keys=True)}\n")
        for r in self.rows:
            if r.note:
                buf.write(f"# skipped delta={_fmt(r.delta)} ratio={_fmt(r.ratio)} alpha={_fmt(r.alpha)} "
                          f"alpha_over_beta={_fmt(r.alpha_over_beta)}: {r.note}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow(r.csv_fields())
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())


def _grid_points(
    deltas: Sequence[float], ratios: Sequence[float], alphas: Sequence[float], alpha_over_betas: Sequence[float],
    include_baseline: bool,
) -> list[tuple[float, float, float | None, float | None]]:
    points: list[tuple[float, float, float | None, float | None]] = []
    seen = set()
    for delta in deltas:
        if include_baseline or 1.0 in ratios:
            points.append((delta, 1.0, None, None))
        for ratio, aob, alpha in product([r for r in ratios if r != 1.0], alpha_over_betas, alphas):
            pt = (delta, ratio, alpha, aob)
            if pt not in seen:
                seen.add(pt)
                points.append(pt)
    return points


def sweep(
    deltas: Sequence[float],
    ratios: Sequence[float],
    alphas: Sequence[float],
    alpha_over_betas: Sequence[float],
    k: int,
    ba_tolerance: float = 1e-9,
    include_baseline: bool = False,
    fold_complement: bool = False,
    threads: int = 1,
    progress: Any = None,
) -> SweepTable:
    """Evaluate the cartesian grid.  Ratio 1 (or ``include_baseline``) adds one i.i.d. row per delta."""
    grid = {
        "delta": list(deltas),
        "ratio": list(ratios),
        "alpha": list(alphas),
        "alpha_over_beta": list(alpha_over_betas),
        "k": k,
        "ba_tolerance": ba_tolerance,
        "include_baseline": include_baseline,
        "fold_complement": fold_complement,
    }
    rows: list[SweepRow] = []
    for delta, ratio, alpha, aob in _grid_points(deltas, ratios, alphas, alpha_over_betas, include_baseline):
        a = math.nan if alpha is None else alpha
        b = math.nan if aob is None else aob
        try:
            cfg = BoundConfig(delta, ratio, alpha, aob, k, ba_tolerance, fold_complement=fold_complement)
            if not cfg.is_iid:
                cfg.params()
        except InfeasibleParametersError as err:
            rows.append(SweepRow(delta, ratio, a, b, k, math.nan, math.nan, math.nan, f"infeasible ({err})"))
            continue
        rep = genie_upper_bound(cfg, threads=threads)
        rows.append(SweepRow(delta, ratio, a, b, k, rep.bound_bits_per_symbol, rep.dropped_weight_mass, rep.ba_budget))
        if progress is not None:
            progress(rows[-1])
    return SweepTable(rows, grid)


def reference_sweep(k: int, ba_tolerance: float = 1e-9, fold_complement: bool = False, threads: int = 1, progress: Any = None) -> SweepTable:
    return sweep(
        REFERENCE_GRID["delta"], REFERENCE_GRID["ratio"], REFERENCE_GRID["alpha"], REFERENCE_GRID["alpha_over_beta"], k,
        ba_tolerance, include_baseline=True, fold_complement=fold_complement, threads=threads, progress=progress,
    )


def estimate_cost(k: int, n_configs: int) -> dict[str, float]:
    """Rough memory/time figures printed before large runs."""
    nx = 2**k
    pairs = sum(math.comb(k, m) for m in range(k + 1)) * nx
    return {
        "inputs": nx,
        "pattern_entries_per_config": pairs,
        "peak_memory_mb": 8 * 3 * max(math.comb(k, k // 2) * nx, (2 ** (k - 1)) ** 2) / 2**20,
        "configs": n_configs,
    }
