"""Exact small-n diagnostics of information stability.

Everything here enumerates the glued channel law ``V_n[rho]`` exactly and
works with the full distribution of the information density
``i(x, y) = log2 V_n(y|x) / (p V_n)(y)`` under ``p(x) V_n(y|x)``:

* the spectrum itself, bucketed at 1e-12;
* tail masses ``Pr[|i/n - I/n| > band]`` and the L1 gap ``E|i/n - I/n|``;
* the dependence of ``C(V_n[rho]) / n`` on the initial state law;
* two finite-n inequalities for the uniform-perturbed input law
  ``p_hat = (1 - delta) p + delta u``:

      C - I(p_hat) <= delta (C + phi)
      Var(p_hat)   <= phi^2 + log2(delta / (|X|^n 2^phi))^2

  with ``phi`` the minus log of the smallest positive transition probability.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .channel_model import MarkovIDSChannel
from .errors import CertificateError
from .exact_enum import exact_channel_law
from .info_theory import (
    FiniteChannel,
    channel_capacity,
    density_atoms,
    mi_variance,
    min_log_prob,
    mutual_information,
    perturb_distribution,
)

BUCKET = 1e-12
CERT_SLACK = 1e-9


@dataclass
class InformationSpectrum:
    n: int
    values: np.ndarray
    masses: np.ndarray
    mean: float
    variance: float

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return [(float(v), float(m)) for v, m in zip(self.values, self.masses)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("density_bits", "mass"))
        for v, m in zip(self.values, self.masses):
            w.writerow((repr(float(v)), repr(float(m))))
        return buf.getvalue()


def bucket_atoms(values: np.ndarray, masses: np.ndarray, width: float = BUCKET) -> tuple[np.ndarray, np.ndarray]:
    """Merge atoms whose values lie within ``width`` of a bucket's smallest value."""
    order = np.argsort(values, kind="stable")
    v, m = values[order], masses[order]
    out_v: list[float] = []
    out_m: list[float] = []
    for val, mass in zip(v, m):
        if out_v and val - out_v[-1] <= width:
            out_m[-1] += mass
        else:
            out_v.append(float(val))
            out_m.append(float(mass))
    return np.array(out_v), np.array(out_m)


def _input_law(V: FiniteChannel, p: np.ndarray | None) -> np.ndarray:
    nx = V.shape[0]
    return np.full(nx, 1.0 / nx) if p is None else np.asarray(p, dtype=float)


def spectrum_of(V: FiniteChannel, p: np.ndarray | None, n: int) -> InformationSpectrum:
    p = _input_law(V, p)
    _, _, joint, dens = density_atoms(V, p)
    mean = float(joint @ dens)
    var = float(joint @ (dens - mean) ** 2)
    vals, masses = bucket_atoms(dens, joint)
    return InformationSpectrum(n, vals, masses, mean, var)


def information_spectrum(
    channel: MarkovIDSChannel, n: int, rho: np.ndarray | None = None, p: np.ndarray | None = None
) -> InformationSpectrum:
    """Distribution of the block information density; ``p`` defaults to uniform."""
    return spectrum_of(exact_channel_law(channel, n, rho), p, n)


# --------------------------------------------------------------------------
# concentration


@dataclass
class StabilityCertificate:
    n_values: list[int]
    band: float
    policy: str
    tail_masses: list[float]
    l1_gaps: list[float]
    mean_rates: list[float]
    rho_gaps: dict[str, list[float]] = field(default_factory=dict)

    @property
    def tails_nonincreasing(self) -> bool:
        return all(b <= a + 1e-12 for a, b in zip(self.tail_masses, self.tail_masses[1:]))

    @property
    def l1_nonincreasing(self) -> bool:
        return all(b <= a + 1e-12 for a, b in zip(self.l1_gaps, self.l1_gaps[1:]))

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["tails_nonincreasing"] = self.tails_nonincreasing
        d["l1_nonincreasing"] = self.l1_nonincreasing
        return d


def _delta_for(rule: str | float | Callable[[int, float], float], n: int, phi: float) -> float:
    if callable(rule):
        return float(rule(n, phi))
    if rule == "inv_phi":
        return 1.0 if phi <= 1.0 else 1.0 / phi
    return float(rule)


def policy_input(V: FiniteChannel, n: int, policy: str, ba_tolerance: float = 1e-9) -> np.ndarray:
    """Uniform inputs, or the capacity-achieving law mixed with uniform at ``delta_n = 1/phi_n``."""
    if policy == "uniform":
        return _input_law(V, None)
    if policy == "ba":
        sol = channel_capacity(V, ba_tolerance)
        return perturb_distribution(sol.input_dist / sol.input_dist.sum(), _delta_for("inv_phi", n, min_log_prob(V)))
    raise ValueError(f"unknown input policy {policy!r}")


def concentration_curve(
    channel: MarkovIDSChannel,
    n_max: int,
    delta_band: float,
    input_policy: str = "uniform",
    n_min: int = 1,
    rho: np.ndarray | None = None,
) -> StabilityCertificate:
    """Tail mass and L1 gap of ``i/n`` around its mean for ``n = n_min..n_max``."""
    ns, tails, l1s, rates = [], [], [], []
    for n in range(n_min, n_max + 1):
        V = exact_channel_law(channel, n, rho)
        p = policy_input(V, n, input_policy)
        _, _, joint, dens = density_atoms(V, p)
        ref = float(joint @ dens)
        dev = np.abs(dens - ref) / n
        ns.append(n)
        tails.append(float(joint[dev > delta_band].sum()))
        l1s.append(float(joint @ dev))
        rates.append(ref / n)
    return StabilityCertificate(ns, delta_band, input_policy, tails, l1s, rates)


def rho_independence(
    channel: MarkovIDSChannel, n_max: int, ba_tolerance: float = 1e-9, n_min: int = 1
) -> dict[str, list[float]]:
    """``|C(V_n[rho]) - C(V_n[pi])| / n`` for every point-mass ``rho`` and for ``pi`` itself."""
    pi = channel.with_initial(None).rho
    rhos: dict[str, np.ndarray] = {"pi": pi}
    for a in range(channel.s):
        e = np.zeros(channel.s)
        e[a] = 1.0
        rhos[f"state{a}"] = e
    gaps: dict[str, list[float]] = {name: [] for name in rhos}
    for n in range(n_min, n_max + 1):
        ref = channel_capacity(exact_channel_law(channel, n, pi), ba_tolerance).capacity_bits
        for name, r in rhos.items():
            if name == "pi":
                gaps[name].append(0.0)
                continue
            c = channel_capacity(exact_channel_law(channel, n, r), ba_tolerance).capacity_bits
            gaps[name].append(abs(c - ref) / n)
    return gaps


# --------------------------------------------------------------------------
# inequality certificates


@dataclass
class InequalityCheck:
    n: int
    delta: float
    phi: float
    capacity: float
    bracket: float
    perturbed_mi: float
    gap: float
    gap_bound: float
    variance: float
    variance_bound: float | None
    slack: float

    @property
    def gap_ok(self) -> bool:
        return self.gap <= self.gap_bound + self.slack

    @property
    def variance_ok(self) -> bool:
        return self.variance_bound is None or self.variance <= self.variance_bound + self.slack

    @property
    def passed(self) -> bool:
        return self.gap_ok and self.variance_ok


@dataclass
class CertificateReport:
    checks: list[InequalityCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[InequalityCheck]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict[str, Any]:
        rows = []
        for c in self.checks:
            d = asdict(c)
            d.update(gap_ok=c.gap_ok, variance_ok=c.variance_ok, passed=c.passed)
            rows.append(d)
        return {"passed": self.passed, "checks": rows}

    def raise_on_failure(self) -> None:
        bad = self.failures()
        if bad:
            raise CertificateError(f"inequality certificate failed: {json.dumps(asdict(bad[0]))}")


def check_inequalities(V: FiniteChannel, n: int, delta: float, ba_tolerance: float = 1e-9) -> InequalityCheck:
    sol = channel_capacity(V, ba_tolerance)
    p_bar = sol.input_dist / sol.input_dist.sum()
    p_hat = perturb_distribution(p_bar, delta)
    phi = min_log_prob(V)
    nx = V.shape[0]
    i_hat = mutual_information(V, p_hat)
    var = mi_variance(V, p_hat)
    cap = sol.capacity_bits
    var_bound = None
    if delta > 0:
        var_bound = phi**2 + (math.log2(delta) - math.log2(nx) - phi) ** 2
    return InequalityCheck(
        n=n,
        delta=delta,
        phi=phi,
        capacity=cap,
        bracket=sol.gap,
        perturbed_mi=i_hat,
        gap=cap - i_hat,
        gap_bound=delta * (cap + phi),
        variance=var,
        variance_bound=var_bound,
        slack=CERT_SLACK + sol.gap,
    )


def appendixB_certificates(
    channel: MarkovIDSChannel,
    n_range: Sequence[int],
    delta_rule: str | float | Callable[[int, float], float] = "inv_phi",
    ba_tolerance: float = 1e-9,
) -> CertificateReport:
    """Evaluate both perturbation inequalities on the exact law for each ``n``."""
    checks = []
    for n in n_range:
        V = exact_channel_law(channel, n)
        delta = _delta_for(delta_rule, n, min_log_prob(V))
        if not 0.0 <= delta <= 1.0:
            raise ValueError(f"delta_n={delta!r} outside [0, 1]")
        checks.append(check_inequalities(V, n, delta, ba_tolerance))
    return CertificateReport(checks)


def write_json(obj: Any, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_safe) + "\n")


def _json_safe(o: Any) -> Any:
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))
