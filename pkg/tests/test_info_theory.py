from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from markovids.errors import ConvergenceError, ValidationError
from markovids.info_theory import (
    FiniteChannel,
    blahut_arimoto,
    channel_capacity,
    density_atoms,
    information_density,
    mi_variance,
    min_log_prob,
    mutual_information,
    output_entropy,
    perturb_distribution,
)

from conftest import random_stochastic

IDENT = np.eye(2)
FLAT = np.full((3, 4), 0.25)


def bsc(eps: float) -> np.ndarray:
    return np.array([[1 - eps, eps], [eps, 1 - eps]])


def h2(p: float) -> float:
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def grid_capacity(W: np.ndarray, step: float = 1e-4) -> float:
    """Brute-force max of I over binary inputs on a uniform grid."""
    return grid_capacity_with_bonus(W, np.zeros(2), step)


def grid_capacity_with_bonus(W: np.ndarray, c: np.ndarray, step: float) -> float:
    def ent(v: np.ndarray) -> np.ndarray:
        return -np.where(v > 0, v * np.log2(np.where(v > 0, v, 1.0)), 0.0).sum(axis=-1)

    a = np.arange(0, 1 + step / 2, step)
    q = a[:, None] * W[0] + (1 - a[:, None]) * W[1]
    return float(np.max(ent(q) - a * (ent(W[0]) - c[0]) - (1 - a) * (ent(W[1]) - c[1])))


small_channels = st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1)).map(
    lambda t: random_stochastic(np.random.default_rng(t[2]), t[0], t[1], zeros=0.3)
)


def test_finite_channel_validates_rows():
    with pytest.raises(ValidationError, match="row 1"):
        FiniteChannel(sp.csr_array(np.array([[1.0, 0.0], [0.5, 0.4]])))
    with pytest.raises(ValidationError):
        FiniteChannel(sp.csr_array(np.array([[1.5, -0.5]])))


def test_density_examples():
    u = [0.5, 0.5]
    assert information_density(IDENT, u, 0, 0) == 1.0
    assert information_density(IDENT, u, 0, 1) == 0.0  # W(y|x) = 0 convention
    assert all(information_density(FLAT, np.full(3, 1 / 3), x, y) == 0 for x in range(3) for y in range(4))
    assert information_density(bsc(0.25), u, 0, 0) == pytest.approx(math.log2(0.75 / 0.5), abs=1e-15)
    # output never produced under p: zero by convention
    assert information_density(IDENT, [1.0, 0.0], 1, 1) == 0.0


def test_mi_examples():
    assert mutual_information(IDENT, [0.5, 0.5]) == 1.0
    assert mutual_information(bsc(0.11), [0.5, 0.5]) == pytest.approx(1 - h2(0.11), abs=1e-14)
    assert mutual_information(bsc(0.3), [1.0, 0.0]) == 0.0


def test_variance_examples():
    assert mi_variance(IDENT, [0.5, 0.5]) == 0.0
    assert mi_variance(FLAT, np.full(3, 1 / 3)) == 0.0
    # brute force over the four (x, y) outcomes
    W, p = bsc(0.25), np.array([0.5, 0.5])
    i = [[math.log2(W[x, y] / 0.5) for y in range(2)] for x in range(2)]
    m1 = sum(p[x] * W[x, y] * i[x][y] for x in range(2) for y in range(2))
    m2 = sum(p[x] * W[x, y] * i[x][y] ** 2 for x in range(2) for y in range(2))
    assert mi_variance(W, p) == pytest.approx(m2 - m1**2, abs=1e-14)


def test_entropy_and_phi_examples():
    assert output_entropy(IDENT, 0) == 0.0
    assert output_entropy(np.full((1, 4), 0.25), 0) == 2.0
    assert output_entropy(np.array([[0.5, 0.5, 0.0]]), 0) == 1.0
    assert min_log_prob(IDENT) == 0.0
    assert min_log_prob(bsc(0.25)) == 2.0
    assert min_log_prob(np.array([[0.1, 0.9, 0.0], [0.1, 0.0, 0.9]])) == pytest.approx(-math.log2(0.1))
    with pytest.raises(ValidationError):
        min_log_prob(FiniteChannel(sp.csr_array((0, 3))))


def test_perturb_examples():
    p = np.array([0.2, 0.3, 0.5])
    assert np.array_equal(perturb_distribution(p, 0.0), p)
    assert np.allclose(perturb_distribution(p, 1.0), 1 / 3)
    assert np.allclose(perturb_distribution([1.0, 0.0], 0.5), [0.75, 0.25])
    perturb_distribution(np.full(8, 1 / 8), 0.3, alphabet_size_log2=3.0)
    with pytest.raises(ValidationError):
        perturb_distribution(p, 1.5)


@given(small_channels, st.integers(0, 2**32 - 1))
def test_mi_is_mean_density(W, seed):
    p = np.random.default_rng(seed).dirichlet(np.ones(W.shape[0]))
    direct = sum(
        p[x] * W[x, y] * information_density(W, p, x, y) for x in range(W.shape[0]) for y in range(W.shape[1])
    )
    assert mutual_information(W, p) == pytest.approx(direct, abs=1e-12)
    assert mi_variance(W, p) >= 0


def test_ba_examples():
    for q in (2, 3, 5):
        sol = blahut_arimoto(np.eye(q), 1e-9)
        assert abs(sol.capacity_bits - math.log2(q)) <= 1e-9
    sol = blahut_arimoto(bsc(0.11), 1e-10)
    assert sol.capacity_bits == pytest.approx(1 - h2(0.11), abs=1e-10)
    assert np.allclose(sol.input_dist, 0.5)
    z = np.array([[1.0, 0.0], [0.5, 0.5]])
    assert blahut_arimoto(z, 1e-10).capacity_bits == pytest.approx(math.log2(5 / 4), abs=1e-9)


def test_ba_convergence_error_carries_bracket():
    with pytest.raises(ConvergenceError) as err:
        blahut_arimoto(random_stochastic(np.random.default_rng(0), 6, 6), 1e-14, max_iters=3)
    assert err.value.lower <= err.value.upper
    assert err.value.iterations == 3


@given(small_channels)
def test_bracket_invariants(W):
    for method in ("ba", "auto"):
        sol = channel_capacity(W, 1e-9, method=method)
        assert sol.lower - 1e-12 <= sol.capacity_bits <= sol.upper + 1e-12
        assert 0 <= sol.gap <= 1e-9
        assert sol.lower_gap >= -1e-15 and sol.upper_gap >= -1e-15
        assert -1e-9 <= sol.capacity_bits <= math.log2(min(W.shape)) + 1e-9
        assert abs(sol.input_dist.sum() - 1) < 1e-12
        # the returned input achieves the lower end of the bracket
        assert mutual_information(W, sol.input_dist) >= sol.lower - 1e-9


@given(small_channels, st.integers(0, 2**32 - 1))
def test_capacity_dominates_any_input(W, seed):
    C = channel_capacity(W, 1e-9).capacity_bits
    for p in np.random.default_rng(seed).dirichlet(np.ones(W.shape[0]), size=20):
        assert mutual_information(W, p) <= C + 1e-9


@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_binary_input_matches_grid_search(m, seed):
    W = random_stochastic(np.random.default_rng(seed), 2, m, zeros=0.2)
    assert abs(channel_capacity(W, 1e-9).capacity_bits - grid_capacity(W)) < 1e-3


@given(small_channels, st.integers(0, 2**32 - 1))
def test_perturbation_gap_inequality(W, seed):
    sol = channel_capacity(W, 1e-10)
    phi = min_log_prob(W)
    for delta in np.random.default_rng(seed).random(5):
        ph = perturb_distribution(sol.input_dist, delta)
        gap = sol.capacity_bits - mutual_information(W, ph)
        assert gap <= delta * (sol.capacity_bits + phi) + 1e-9 + sol.gap


def test_hybrid_agrees_with_plain_ba_on_larger_channels(rng):
    for nx, ny in ((40, 30), (200, 60), (64, 64)):
        W = random_stochastic(rng, nx, ny, zeros=0.7)
        a = channel_capacity(W, 1e-10)
        b = channel_capacity(W, 1e-10, method="ba")
        assert abs(a.capacity_bits - b.capacity_bits) <= 1e-10
        assert max(a.lower, b.lower) <= min(a.upper, b.upper) + 1e-15


def test_duplicate_rows_and_unused_outputs():
    W = np.array([[0.5, 0.5, 0, 0], [0.5, 0.5, 0, 0], [0, 0, 1.0, 0]])
    sol = channel_capacity(W, 1e-12)
    assert sol.capacity_bits == pytest.approx(1.0, abs=1e-12)
    assert sol.input_dist[0] == sol.input_dist[1]


def test_trivial_and_noiseless_shortcuts():
    assert channel_capacity(np.ones((5, 1))).method == "trivial"
    sol = channel_capacity(np.eye(4)[[0, 1, 2, 3, 3]])
    assert sol.method == "noiseless" and sol.capacity_bits == 2.0


def test_bonus_objective_against_direct_maximisation():
    W = np.array([[0.8, 0.2], [0.3, 0.7]])
    c = np.array([0.1, -0.05])
    sol = channel_capacity(W, 1e-12, bonus=c)
    shifted = grid_capacity_with_bonus(W, c, step=1e-6)
    assert sol.capacity_bits == pytest.approx(shifted, abs=1e-9)


def test_density_atoms_drop_zero_mass():
    x, y, joint, dens = density_atoms(IDENT, [1.0, 0.0])
    assert x.tolist() == [0] and y.tolist() == [0] and joint.tolist() == [1.0] and dens.tolist() == [0.0]


def test_inputs_with_private_outputs_get_a_finite_certificate():
    # i.i.d. deletion law at n=6 and heavy deletion: the no-deletion words are the only
    # source of their outputs and carry almost no optimal mass
    from markovids.channel_model import iid_deletion_channel
    from markovids.exact_enum import exact_channel_law

    V = exact_channel_law(iid_deletion_channel(0.7852109593263714), 6)
    sol = channel_capacity(V, 1e-9)
    assert np.isfinite(sol.upper) and sol.gap <= 1e-9
    ref = blahut_arimoto(V, 1e-6)
    assert ref.lower - 1e-12 <= sol.upper and sol.lower <= ref.upper + 1e-12


def test_barrier_finishes_when_active_set_budget_is_spent(monkeypatch, rng):
    import markovids.info_theory as it

    W = random_stochastic(rng, 200, 40, zeros=0.5)
    free = channel_capacity(W, 1e-11)
    monkeypatch.setattr(it, "KKT_WORK", 0.0)
    capped = channel_capacity(W, 1e-11)
    assert capped.gap <= 1e-11
    assert abs(capped.capacity_bits - free.capacity_bits) <= 1e-11
