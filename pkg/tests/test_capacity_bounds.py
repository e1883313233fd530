from __future__ import annotations

import math
from collections import defaultdict
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from markovids.capacity_bounds import (
    CSV_HEADER,
    BoundConfig,
    channel_upper_bound,
    genie_upper_bound,
    iid_upper_bound,
    joint_upper_bound,
    sweep,
)
from markovids.channel_model import channel_from_dict, iid_deletion_channel
from markovids.errors import InfeasibleParametersError, InputDependentSideInfoError, ValidationError
from markovids.exact_enum import input_index
from markovids.info_theory import blahut_arimoto

from oracles import block_law_bruteforce

QUARTER = dict(delta=0.1, ratio=4.0, alpha=0.25, alpha_over_beta=1.0)

# Bounds computed by the independent brute-force route below (path enumeration
# plus plain Blahut-Arimoto) and frozen here.
FROZEN = {
    ("iid", 4): 0.83155706234,
    ("iid", 6): 0.78952872771,
    ("quarter", 4): 0.83753486646,
    ("quarter", 6): 0.79588226442,
}


def bound_by_bruteforce(channel, k: int, tol: float = 1e-12) -> float:
    """Split the enumerated block law by (sigma, tau, m) and solve each piece with plain BA."""
    law = block_law_bruteforce(channel, k)
    rho = channel.rho
    pieces: dict[tuple, dict] = defaultdict(lambda: defaultdict(float))
    for (x, y, s, t), p in law.items():
        pieces[(s, t, len(y))][(input_index(x, 2), input_index(y, 2) if y else 0)] += p
    total = 0.0
    for (s, t, m), entries in pieces.items():
        M = np.zeros((2**k, 2**m))
        for (xi, yi), p in entries.items():
            M[xi, yi] = p
        w_row = M.sum(axis=1)
        assert np.ptp(w_row) < 1e-14  # side information does not depend on x
        weight = rho[s] * w_row[0]
        if weight == 0:
            continue
        total += weight * blahut_arimoto(M / w_row[:, None], tol).capacity_bits
    return total / k


def test_k1_examples():
    assert genie_upper_bound(BoundConfig(0.1)).bound_bits_per_symbol == pytest.approx(0.9, abs=1e-12)
    assert genie_upper_bound(BoundConfig(0.0)).bound_bits_per_symbol == 1.0
    assert genie_upper_bound(BoundConfig(1.0)).bound_bits_per_symbol == 0.0
    assert iid_upper_bound(0.3, 1).bound_bits_per_symbol == pytest.approx(0.7, abs=1e-12)


@given(
    st.floats(0, 1), st.sampled_from([1.0, 2.0, 4.0, 8.0]), st.floats(0.02, 1.0), st.sampled_from([0.5, 1.0, 2.0])
)
@settings(max_examples=50)
def test_k1_closed_form_for_two_state(delta, ratio, alpha, aob):
    cfg = BoundConfig(delta, ratio, alpha, aob, k=1)
    try:
        cfg.params()
    except InfeasibleParametersError:
        return
    if alpha / aob > 1:
        return
    assert abs(genie_upper_bound(cfg).bound_bits_per_symbol - (1 - delta)) < 1e-12


def test_iid_weights_binomial():
    rep = iid_upper_bound(0.5, 2)
    w = {r.m: r.weight for r in rep.per_dmc}
    assert w[1] == pytest.approx(0.5)
    rep = iid_upper_bound(0.2, 6)
    for r in rep.per_dmc:
        assert r.weight == pytest.approx(comb(6, r.m) * 0.8**r.m * 0.2 ** (6 - r.m), rel=1e-12)


@pytest.mark.parametrize("k", [2, 3, 4])
@pytest.mark.parametrize("name", ["iid", "quarter"])
def test_bound_matches_bruteforce_route(name, k):
    cfg = BoundConfig(0.1, k=k, ba_tolerance=1e-11) if name == "iid" else BoundConfig(**QUARTER, k=k, ba_tolerance=1e-11)
    ref = bound_by_bruteforce(cfg.channel(), k)
    assert abs(genie_upper_bound(cfg).bound_bits_per_symbol - ref) < 1e-10


@pytest.mark.parametrize("key", sorted(FROZEN))
def test_frozen_values(key):
    name, k = key
    cfg = BoundConfig(0.1, k=k) if name == "iid" else BoundConfig(**QUARTER, k=k)
    assert abs(genie_upper_bound(cfg).bound_bits_per_symbol - FROZEN[key]) < 1e-9


def test_reconstruction_identity_and_range():
    for cfg in (BoundConfig(**QUARTER, k=5), BoundConfig(0.5, k=5), BoundConfig(0.01, 8.0, 0.0625, 0.5, k=4)):
        rep = genie_upper_bound(cfg)
        assert abs(rep.reconstruct() - rep.bound_bits_per_symbol) < 1e-12
        assert 0.0 <= rep.bound_bits_per_symbol <= 1.0
        assert rep.ba_budget <= cfg.ba_tolerance
        assert abs(sum(r.weight for r in rep.per_dmc) - 1) < 1e-12


def test_dropped_weights_charge_full_rate():
    # a nearly deterministic chain puts tiny mass on some (sigma, tau, m)
    cfg = BoundConfig(0.01, 8.0, 0.0625, 0.5, k=8)
    rep = genie_upper_bound(cfg)
    dropped = [r for r in rep.per_dmc if r.dropped]
    assert rep.dropped_weight_mass == pytest.approx(sum(r.weight for r in dropped), abs=0)
    assert all(r.weight < 1e-15 and r.capacity_bits == cfg.k for r in dropped)
    assert abs(rep.reconstruct() - rep.bound_bits_per_symbol) < 1e-12


@pytest.mark.parametrize("delta", [0.01, 0.1, 0.5])
def test_degenerate_chain_equals_iid(delta):
    for k in (2, 5):
        a = genie_upper_bound(BoundConfig(delta, 1.0, 0.25, 2.0, k=k)).bound_bits_per_symbol
        b = iid_upper_bound(delta, k).bound_bits_per_symbol
        assert abs(a - b) < 1e-9


def test_fold_complement_reproduces_default():
    for cfg in (BoundConfig(**QUARTER, k=6), BoundConfig(0.5, k=7)):
        a = genie_upper_bound(cfg).bound_bits_per_symbol
        b = genie_upper_bound(BoundConfig(**{**cfg.__dict__, "fold_complement": True})).bound_bits_per_symbol
        assert abs(a - b) < 1e-10


def test_thread_count_does_not_change_csv():
    cfg = BoundConfig(**QUARTER, k=5)
    texts = {genie_upper_bound(cfg, threads=t).per_dmc_csv() for t in (1, 3)}
    assert len(texts) == 1


def test_explicit_initial_state_changes_weights_only():
    a = genie_upper_bound(BoundConfig(**QUARTER, k=4, rho=(1.0, 0.0)))
    assert all(r.sigma == 0 for r in a.per_dmc)
    assert 0 < a.bound_bits_per_symbol < 1


def test_joint_bound():
    assert joint_upper_bound(iid_deletion_channel(0.3), 1).bound_bits_per_symbol == pytest.approx(0.7, abs=1e-9)
    assert joint_upper_bound(iid_deletion_channel(0.0), 3).bound_bits_per_symbol == pytest.approx(1.0, abs=1e-9)
    ch = BoundConfig(**QUARTER).channel()
    assert joint_upper_bound(ch, 1).bound_bits_per_symbol == pytest.approx(0.9, abs=2e-9)
    for k in (2, 3, 4):
        joint = joint_upper_bound(ch, k, 1e-10).bound_bits_per_symbol
        genie = genie_upper_bound(BoundConfig(**QUARTER, k=k, ba_tolerance=1e-10)).bound_bits_per_symbol
        assert joint <= genie + 2e-10


def test_general_channel_bounds():
    ids = channel_from_dict(
        {
            "G": [[0.9, 0.1], [0.5, 0.5]],
            "states": [
                {"outputs": [{"0": 0.95, "1": 0.05}, {"1": 0.95, "0": 0.05}]},
                {"outputs": [{"": 0.2, "0": 0.6, "00": 0.2}, {"": 0.2, "1": 0.6, "11": 0.2}]},
            ],
        }
    )
    for k in (1, 2, 3):
        genie = channel_upper_bound(ids, k).bound_bits_per_symbol
        assert genie == pytest.approx(bound_by_bruteforce(ids, k) if k < 3 else genie, abs=1e-9)
        assert joint_upper_bound(ids, k).bound_bits_per_symbol <= genie + 1e-9


def test_input_dependent_channel_needs_joint_bound():
    doc = {
        "G": [["1"]],
        "states": [{"outputs": [{"": 0.5, "0": 0.5}, {"1": 1.0}]}],
    }
    ch = channel_from_dict(doc)
    with pytest.raises(InputDependentSideInfoError):
        channel_upper_bound(ch, 2)
    rep = joint_upper_bound(ch, 2)
    assert 0 < rep.bound_bits_per_symbol <= 1


def test_config_validation():
    with pytest.raises(ValidationError):
        BoundConfig(0.1, k=0)
    with pytest.raises(ValidationError):
        BoundConfig(0.1, ratio=4.0)
    with pytest.raises(InfeasibleParametersError, match="D=2.25 infeasible"):
        genie_upper_bound(BoundConfig(0.5, 8.0, 0.0625, 0.125, k=2))


def test_sweep_single_iid_point():
    table = sweep([0.1], [1.0], [], [], k=3)
    assert len(table.rows) == 1
    row = table.rows[0]
    assert row.is_baseline
    assert row.bound_bits == iid_upper_bound(0.1, 3).bound_bits_per_symbol


def test_sweep_records_infeasible_points():
    table = sweep([0.5], [8.0], [0.0625], [0.125], k=2, include_baseline=True)
    assert len(table.rows) == 2
    bad = table.rows[1]
    assert math.isnan(bad.bound_bits) and "D=2.25 infeasible" in bad.note
    text = table.to_csv()
    assert "# skipped" in text and "D=2.25 infeasible" in text


def test_sweep_csv_format():
    table = sweep([0.1], [1.0, 2.0], [0.5, 0.25], [1.0], k=2)
    lines = table.to_csv().splitlines()
    comments = [l for l in lines if l.startswith("#")]
    body = [l for l in lines if not l.startswith("#")]
    assert comments[0].startswith("# markovids ")
    assert comments[1].startswith("# config_sha256 ")
    assert body[0] == ",".join(CSV_HEADER)
    assert len(body) == 1 + 3
    fields = body[2].split(",")
    assert fields[4] == "2"  # inv_alpha for alpha = 0.5
    assert len(fields[6].replace("0.", "", 1)) <= 12
    keys = [(r.delta, r.ratio, r.alpha, r.alpha_over_beta) for r in table.rows]
    assert len(set(map(str, keys))) == len(keys)


def test_sweep_markov_at_least_iid_on_reduced_grid():
    table = sweep([0.1, 0.5], [1.0, 2.0, 4.0], [0.5, 0.125], [0.5, 1.0, 2.0], k=4)
    base = {r.delta: r.bound_bits for r in table.baseline_rows()}
    for r in table.markov_rows():
        if not math.isnan(r.bound_bits):
            assert r.bound_bits >= base[r.delta] - 1e-9


def test_bound_can_decrease_in_inverse_alpha_at_small_k():
    # stronger memory makes the revealed block states less informative, which can outweigh
    # the gain from burstier deletions at short blocks; the oracle route agrees
    vals = []
    for alpha in (0.25, 0.125):
        cfg = BoundConfig(0.1, 4.0, alpha, 0.5, k=3, ba_tolerance=1e-11)
        fast = genie_upper_bound(cfg).bound_bits_per_symbol
        assert fast == pytest.approx(bound_by_bruteforce(cfg.channel(), 3), abs=1e-10)
        vals.append(fast)
    assert vals[1] < vals[0] - 1e-3
