import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tacnet.configuration import (
    BLOCK_MAX,
    InfeasibleAntennaError,
    Partition,
    all_partitions,
    assign_channels,
    build_design,
    check_design,
    circular_partitions,
    compute_e_not,
    configure_antenna,
    configure_bearings,
    enumerate_partitions,
    exhaustive_frequency_oracle,
    frequency_groups,
    greedy_frequency_assignment,
    repair_partition,
    single_move_partitions,
)
from tacnet.model import Instance, Node, Topology, root_at
from tacnet.physics import PhysicsParams, angle_deviation, channel_beamwidth, noise_power_dbm

from conftest import random_instance, random_layout_choice, random_rooted

P = PhysicsParams()


# --- partitions -----------------------------------------------------------------

def closed_form(d):
    return d * (d - 1) // 2 + 1 if d <= 10 else d * (21 - d) // 2


@pytest.mark.parametrize("d", range(2, 21))
def test_partition_count_closed_form(d):
    assert len(circular_partitions(list(range(d)))) == closed_form(d)


def test_partition_spot_values():
    assert len(circular_partitions(list(range(4)))) == 7
    assert len(circular_partitions(list(range(18)))) == 27
    assert len(circular_partitions(list(range(20)))) == 10


def test_d4_excludes_alternating_split():
    keys = {p.key for p in circular_partitions([1, 2, 3, 4])}
    assert frozenset((frozenset({1, 3}), frozenset({2, 4}))) not in keys
    every = {p.key for p in all_partitions([1, 2, 3, 4])}
    assert len(every) == 8 and keys < every


@pytest.mark.parametrize("d", [3, 7, 12, 20])
def test_partition_blocks_are_circular_runs(d):
    order = list(range(d))
    for p in circular_partitions(order):
        assert len(p.block_a) <= BLOCK_MAX and len(p.block_b) <= BLOCK_MAX
        assert p.is_valid_for(order)
        for block in (p.block_a, p.block_b):
            if 0 < len(block) < d:
                # a circular run has exactly one entry point
                starts = [v for v in block if (v - 1) % d not in block]
                assert len(starts) == 1


def test_partition_too_many_neighbours():
    with pytest.raises(Exception):
        circular_partitions(list(range(21)))


@pytest.mark.parametrize("d", range(1, 21))
def test_all_partitions_count(d):
    want = sum(math.comb(d, k) for k in range(d + 1) if k <= BLOCK_MAX and d - k <= BLOCK_MAX) // 2
    if d == 0:
        want = 1
    assert len(all_partitions(list(range(d)))) == want


def test_all_partitions_large_hub_counts():
    # counted without building 92k objects: C(20,10)/2 and C(18,8)+C(18,9)/2
    assert math.comb(20, 10) // 2 == 92378
    assert math.comb(18, 8) + math.comb(18, 9) // 2 == 68068


def test_enumerate_partitions_uses_bearing_order():
    hub = Node(0, 0.0, 0.0)
    angles = [10, 100, 190, 280]
    nodes = [hub] + [Node(i + 1, math.cos(math.radians(a)), math.sin(math.radians(a))) for i, a in enumerate(angles)]
    # ids shuffled against angle: node 1 at 10, node 2 at 100, ... ; remap so id order differs
    t = Topology.from_edges([(0, 1), (0, 2), (0, 3), (0, 4)], 5)
    parts = enumerate_partitions(root_at(t, 0), nodes)
    assert len(parts) == 7
    assert frozenset((frozenset({1, 3}), frozenset({2, 4}))) not in {p.key for p in parts}


def test_single_move_partitions():
    p = Partition.of([1, 2], [3])
    moves = {q.key for q in single_move_partitions(p)}
    assert moves == {
        Partition.of([2], [1, 3]).key,
        Partition.of([1], [2, 3]).key,
        Partition.of([1, 2, 3], []).key,
    }


# --- repair ---------------------------------------------------------------------

def _ring_nodes():
    pos = [(0, 0), (100, 0), (0, 100), (-100, 0), (0, -100), (90, 20), (500, 500)]
    return [Node(i, float(x), float(y)) for i, (x, y) in enumerate(pos)]


def test_repair_identity_off_hub():
    nodes = _ring_nodes()
    t = Topology.from_edges([(0, 1), (0, 2), (0, 3), (0, 4), (1, 5), (2, 6)], 7)
    part = Partition.of([1, 2], [3, 4])
    t2 = t.swap((2, 6), (5, 6))
    assert repair_partition(0, part, t2, (2, 6), (5, 6), nodes) == part


def test_repair_inserts_by_nearest_bearing():
    nodes = _ring_nodes()
    t = Topology.from_edges([(0, 1), (0, 2), (0, 3), (0, 4), (1, 5), (2, 6)], 7)
    part = Partition.of([1, 2], [3, 4])
    # node 5 (bearing ~12 deg) replaces its link to 1 with a hub link; nearest neighbour is 1 (block a)
    t2 = t.swap((1, 5), (0, 5))
    assert repair_partition(0, part, t2, (1, 5), (0, 5), nodes) == Partition.of([1, 2, 5], [3, 4])
    # dropping a hub neighbour removes it from its block
    t3 = t.swap((0, 4), (4, 6))
    assert repair_partition(0, part, t3, (0, 4), (4, 6), nodes) == Partition.of([1, 2], [3])


def test_repair_overflow_is_invalid():
    hub = Node(0, 0.0, 0.0)
    nodes = [hub] + [Node(i, math.cos(i * 0.2), math.sin(i * 0.2)) for i in range(1, 13)]
    edges = [(0, i) for i in range(1, 12)] + [(11, 12)]
    t = Topology.from_edges(edges, 13)
    part = Partition.of(range(1, 11), [11])
    t2 = t.swap((11, 12), (0, 12))
    # node 12 sits next to 11 in angle but we force it near the full block
    nodes[12] = Node(12, math.cos(0.45), math.sin(0.45))
    assert repair_partition(0, part, t2, (11, 12), (0, 12), nodes) is None


# --- antennas ---------------------------------------------------------------------

def oracle_min_beams(bearings, channel, params):
    """Fewest beams over all rotations, by exhaustive subset search at critical rotations."""
    s = params.beam_spacing
    hw = channel_beamwidth(channel) / 2.0
    eps = 1e-9
    cands = set()
    for phi in bearings:
        for b in range(params.beams):
            for sign in (-1, 1):
                cands.add((phi - b * s + sign * hw) % (2 * math.pi))
            cands.add((phi - b * s) % (2 * math.pi))
    best = None
    for theta in cands:
        masks = []
        for phi in bearings:
            m = 0
            for b in range(params.beams):
                if angle_deviation(theta + b * s, phi) <= hw + eps:
                    m |= 1 << b
            masks.append(m)
        if any(m == 0 for m in masks):
            continue
        useful = sorted({b for m in masks for b in range(params.beams) if m >> b & 1})
        for k in range(1, len(bearings) + 1):
            if best is not None and k >= best:
                break
            if any(all(any(m >> b & 1 for b in combo) for m in masks) for combo in itertools.combinations(useful, k)):
                best = k
                break
    return best


def covers(cfg, bearings, channel, params):
    hw = channel_beamwidth(channel) / 2.0
    return all(
        min(angle_deviation(cfg.rotation + b * params.beam_spacing, phi) for b in cfg.active_beams) <= hw + 1e-9
        for phi in bearings
    )


def test_single_target_aligns_exactly():
    cfg = configure_antenna(Node(0, 0.0, 0.0), [Node(1, 3.0, 4.0)], "4", P)
    assert len(cfg.active_beams) == 1
    axis = cfg.rotation + cfg.active_beams[0] * P.beam_spacing
    assert angle_deviation(axis, math.atan2(4.0, 3.0)) == pytest.approx(0.0, abs=1e-12)
    assert 0 <= cfg.rotation < P.beam_spacing


def test_opposite_targets_need_two_beams():
    cfg = configure_bearings([0.3, 0.3 + math.pi], "3+", P)
    assert len(cfg.active_beams) == 2


def test_eight_beam_five_target_layout_needs_four_beams():
    params = PhysicsParams(beams=8)
    bearings = [math.radians(a) for a in (0, 55, 110, 165, 170)]
    cfg = configure_bearings(bearings, "4", params)
    assert len(cfg.active_beams) == 4
    assert covers(cfg, bearings, "4", params)
    assert oracle_min_beams(bearings, "4", params) == 4


@settings(max_examples=40, deadline=None)
@given(
    bearings=st.lists(st.floats(0, 2 * math.pi - 1e-6), min_size=1, max_size=6),
    channel=st.sampled_from(["3+", "4"]),
)
def test_antenna_minimal_and_covering(bearings, channel):
    cfg = configure_bearings(bearings, channel, P)
    assert covers(cfg, bearings, channel, P)
    assert len(cfg.active_beams) == oracle_min_beams(bearings, channel, P)
    assert 0 <= cfg.rotation < P.beam_spacing + 1e-12


def test_antenna_rejects_bad_input():
    with pytest.raises(ValueError):
        configure_antenna(Node(0, 0, 0), [], "4", P)
    with pytest.raises(ValueError):
        configure_antenna(Node(0, 0, 0), [Node(1, 0, 0)], "4", P)


def test_antenna_infeasible_with_too_few_beams():
    params = PhysicsParams(beams=2)
    with pytest.raises(InfeasibleAntennaError):
        configure_bearings([0.0, math.pi / 2], "4", params)


# --- channels ---------------------------------------------------------------------

def test_channels_alternate_on_path():
    r = root_at(Topology.from_edges([(i, i + 1) for i in range(5)], 6), 0)
    ch = assign_channels(r, Partition.of([1], []), False).edge_channel
    assert ch[1:] == ("3+", "4", "3+", "4", "3+")
    flipped = assign_channels(r, Partition.of([1], []), True).edge_channel
    assert all(a != b for a, b in zip(ch[1:], flipped[1:]))


def test_star_blocks_share_channel():
    r = root_at(Topology.from_edges([(0, i) for i in range(1, 6)], 6), 0)
    ch = assign_channels(r, Partition.of([1, 2], [3, 4, 5]), False).edge_channel
    assert ch[1] == ch[2] == "3+" and ch[3] == ch[4] == ch[5] == "4"


# --- frequencies -------------------------------------------------------------------

def twelve_edge_tree():
    edges = [(0, 1), (0, 2), (0, 3), (1, 4), (1, 5), (2, 6), (3, 7), (3, 8), (4, 9), (6, 10), (7, 11), (8, 12)]
    return root_at(Topology.from_edges(edges, 13), 0), Partition.of([1, 2], [3])


def test_greedy_groups_on_twelve_edge_tree():
    rooted, part = twelve_edge_tree()
    chans = assign_channels(rooted, part, False)
    assert len(rooted.arcs()) == 12
    assert len(frequency_groups(rooted, chans)) == 9
    assert len(frequency_groups(rooted, chans, per_edge=True)) == 12
    inst = random_instance(13, seed=3)
    assert inst.evaluator.layout(rooted, part, False).n_groups == 9
    # first decision: both hub links of the first block
    assert frequency_groups(rooted, chans)[0] == [1, 2]


def test_single_edge_greedy_matches_oracle():
    inst = Instance((Node(0, 0.0, 0.0), Node(1, 40_000.0, 0.0)))
    r = root_at(Topology.from_edges([(0, 1)], 2), 0)
    for flip in (False, True):
        d, v = greedy_frequency_assignment(inst, r, Partition.of([1], []), flip)
        d2, v2 = exhaustive_frequency_oracle(inst, r, Partition.of([1], []), flip)
        assert v == v2
        # ties go to the higher frequency, otherwise the better one wins
        lo, hi = inst.physics.channel_freqs(d.channels.edge_channel[1])
        tp = {}
        for f in (lo, hi):
            dd = build_design(inst, r, Partition.of([1], []), flip, (None, f))
            from tacnet.objective import evaluate_objective

            tp[f] = evaluate_objective(dd, inst).edges[0]["tp_mbps"]
        want = hi if tp[hi] >= tp[lo] else lo
        assert d.freqs[1] == want


def test_exhaustive_enumerates_all_chain_assignments():
    inst = random_instance(4, seed=8)
    r = root_at(Topology.from_edges([(0, 1), (1, 2), (2, 3)], 4), 0)
    lay = inst.evaluator.layout(r, Partition.of([1], []), False)
    assert lay.n_groups == 3  # 2^3 assignments
    with pytest.raises(ValueError):
        exhaustive_frequency_oracle(inst, r, Partition.of([1], []), False, max_decisions=2)


def test_greedy_never_beats_oracle(rng):
    for k in range(30):
        inst = random_instance(rng.randrange(2, 9), seed=500 + k)
        rooted, part, flip = random_layout_choice(inst, rng)
        d, g = greedy_frequency_assignment(inst, rooted, part, flip)
        _, o = exhaustive_frequency_oracle(inst, rooted, part, flip)
        assert g <= o + 1e-12
        assert not check_design(d, inst)


def test_greedy_matches_oracle_on_two_edges(rng):
    for k in range(20):
        inst = random_instance(3, seed=900 + k)
        rooted, part, flip = random_layout_choice(inst, rng)
        for per_edge in (False, True):
            _, g = greedy_frequency_assignment(inst, rooted, part, flip, per_edge)
            _, o = exhaustive_frequency_oracle(inst, rooted, part, flip, per_edge)
            assert g == o


# --- E_not --------------------------------------------------------------------------

def threshold_distance_m():
    # SINR = 30 + 2*15 - PL - NP >= 2  <=>  PL <= 58 - NP at 5000 MHz
    pl_max = 30 + 15 + 15 - 2 - noise_power_dbm()
    return 1000 * 10 ** ((pl_max - 32.44 - 20 * math.log10(5000)) / 20)


def test_e_not_threshold():
    d = threshold_distance_m()
    near = Instance((Node(0, 0.0, 0.0), Node(1, d * (1 - 1e-6), 0.0)))
    far = Instance((Node(0, 0.0, 0.0), Node(1, d * (1 + 1e-6), 0.0)))
    assert compute_e_not(near) == frozenset()
    assert compute_e_not(far) == {(0, 1)}
    close = Instance((Node(0, 0.0, 0.0), Node(1, 1.0, 0.0)))
    assert compute_e_not(close) == frozenset()


def test_e_not_symmetric():
    d = threshold_distance_m()
    inst = Instance(tuple(Node(i, i * 0.6 * d, 0.0) for i in range(4)))
    e = compute_e_not(inst)
    assert e == {(0, 2), (0, 3), (1, 3)}
    assert all(u < v for u, v in e)


# --- design audit --------------------------------------------------------------------

def test_check_design_flags_problems():
    inst = random_instance(5, seed=2)
    r = root_at(Topology.from_edges([(0, 1), (1, 2), (2, 3), (3, 4)], 5), 0)
    d, _ = greedy_frequency_assignment(inst, r, Partition.of([1], []), False)
    assert check_design(d, inst) == []
    import dataclasses

    bad_freq = dataclasses.replace(d, freqs=(None, 5000.0, 5000.0, 5000.0, 5000.0))
    assert any("frequency" in p for p in check_design(bad_freq, inst))
    missing = dataclasses.replace(d, antennas={k: v for k, v in list(d.antennas.items())[1:]})
    assert any("missing" in p for p in check_design(missing, inst))


def test_design_json_roundtrip(rng):
    from tacnet.configuration import Design

    inst = random_instance(7, seed=77)
    rooted, part, flip = random_layout_choice(inst, rng)
    d, _ = greedy_frequency_assignment(inst, rooted, part, flip)
    back = Design.from_json(d.to_json())
    assert back.to_json() == d.to_json()
