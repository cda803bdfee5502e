"""Turning a rooted tree into a complete radio design.

Covers hub-neighbour partitions, geometric antenna configuration, channel
and frequency assignment, the E_not pair filter, and the partition repair
used when a hub edge is swapped.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from .model import Edge, Instance, InvalidTopologyError, Node, RootedTopology, Topology, norm_edge, root_at
from .physics import (
    AntennaConfig,
    PhysicsParams,
    angle_deviation,
    bearing,
    channel_beamwidth,
    g_max_db,
    signal_strength_dbm,
    sinr_db,
    throughput_mbps,
)

BLOCK_MAX = 10
CHANNEL_LABELS_SET = frozenset(("3+", "4"))
EPS = 1e-12


class InfeasibleAntennaError(ValueError):
    pass


@dataclass(frozen=True)
class Partition:
    block_a: Tuple[int, ...]
    block_b: Tuple[int, ...]

    @classmethod
    def of(cls, a: Iterable[int], b: Iterable[int]) -> "Partition":
        return cls(tuple(sorted(a)), tuple(sorted(b)))

    @property
    def key(self) -> FrozenSet[FrozenSet[int]]:
        return frozenset((frozenset(self.block_a), frozenset(self.block_b)))

    def is_valid_for(self, neighbors: Iterable[int]) -> bool:
        a, b = set(self.block_a), set(self.block_b)
        return (
            len(a) <= BLOCK_MAX
            and len(b) <= BLOCK_MAX
            and not (a & b)
            and (a | b) == set(neighbors)
        )

    def to_json(self) -> dict:
        return {"a": list(self.block_a), "b": list(self.block_b)}


@dataclass(frozen=True)
class ChannelAssignment:
    """Channel of every tree edge, indexed by the edge's child endpoint (None at the hub)."""

    edge_channel: Tuple[Optional[str], ...]
    flip: bool = False

    def downlink(self, rooted: RootedTopology, v: int) -> Optional[str]:
        kids = rooted.children[v]
        return self.edge_channel[kids[0]] if kids else None


@dataclass(frozen=True)
class Design:
    rooted: RootedTopology
    partition: Partition
    channels: ChannelAssignment
    freqs: Tuple[Optional[float], ...]  # MHz per child endpoint, None at the hub
    antennas: Dict[Tuple[int, str], AntennaConfig] = field(hash=False, compare=False)

    @property
    def hub(self) -> int:
        return self.rooted.hub

    @property
    def topology(self) -> Topology:
        return self.rooted.topology

    def edge_freqs(self) -> Dict[Edge, float]:
        return {(p, c): self.freqs[c] for p, c in self.rooted.arcs()}

    def to_json(self) -> dict:
        return {
            "hub": self.hub,
            "n": self.rooted.n,
            "flip": self.channels.flip,
            "partition": self.partition.to_json(),
            "edges": [
                {"u": p, "v": c, "channel": self.channels.edge_channel[c], "freq_mhz": self.freqs[c]}
                for p, c in self.rooted.arcs()
            ],
            "antennas": [
                {"node": node, "channel": ch, **cfg.to_json()}
                for (node, ch), cfg in sorted(self.antennas.items())
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Design":
        n = int(data["n"])
        topo = Topology.from_edges([(e["u"], e["v"]) for e in data["edges"]], n)
        rooted = root_at(topo, int(data["hub"]))
        edge_channel: List[Optional[str]] = [None] * n
        freqs: List[Optional[float]] = [None] * n
        for e in data["edges"]:
            u, v = int(e["u"]), int(e["v"])
            child = v if rooted.parent[v] == u else u
            if rooted.parent[child] not in (u, v):
                raise InvalidTopologyError(f"edge {u}-{v} is not a tree arc")
            edge_channel[child] = e["channel"]
            freqs[child] = float(e["freq_mhz"])
        part = data["partition"]
        antennas = {
            (int(a["node"]), a["channel"]): AntennaConfig.from_json(a) for a in data["antennas"]
        }
        return cls(
            rooted=rooted,
            partition=Partition.of(part["a"], part["b"]),
            channels=ChannelAssignment(tuple(edge_channel), bool(data.get("flip", False))),
            freqs=tuple(freqs),
            antennas=antennas,
        )


# --- partitions ---------------------------------------------------------------

def neighbors_by_angle(rooted_or_topology, hub: int, nodes: Sequence[Node]) -> List[int]:
    topo = getattr(rooted_or_topology, "topology", rooted_or_topology)
    h = nodes[hub]
    return sorted(
        topo.adjacency[hub],
        key=lambda v: (bearing(h.x, h.y, nodes[v].x, nodes[v].y), v),
    )


def circular_partitions(ordered: Sequence[int]) -> List[Partition]:
    """All splits of ``ordered`` (read as a circle) into a consecutive run and its complement.

    Run lengths go from max(0, d-10) to min(10, d); duplicates are dropped
    keeping the first occurrence.
    """
    d = len(ordered)
    if d > 2 * BLOCK_MAX:
        raise InvalidTopologyError(f"hub degree {d} exceeds {2 * BLOCK_MAX}")
    out: List[Partition] = []
    seen = set()
    for x in range(max(0, d - BLOCK_MAX), min(BLOCK_MAX, d) + 1):
        starts = range(d) if 0 < x < d else range(1)
        for s in starts:
            run = [ordered[(s + k) % d] for k in range(x)]
            rest = [v for v in ordered if v not in run]
            part = Partition.of(run, rest)
            if part.key not in seen:
                seen.add(part.key)
                out.append(part)
    return out


def enumerate_partitions(rooted: RootedTopology, nodes: Sequence[Node]) -> List[Partition]:
    """The reduced partition family P(T, r) of the hub's neighbours."""
    return circular_partitions(neighbors_by_angle(rooted, rooted.hub, nodes))


def all_partitions(neighbors: Sequence[int]) -> List[Partition]:
    """Every unordered split of ``neighbors`` into two blocks of size <= 10."""
    nb = sorted(neighbors)
    d = len(nb)
    if d > 2 * BLOCK_MAX:
        raise InvalidTopologyError(f"hub degree {d} exceeds {2 * BLOCK_MAX}")
    if d == 0:
        return [Partition((), ())]
    first, rest = nb[0], nb[1:]
    out = []
    for mask in range(1 << (d - 1)):
        a = [first] + [v for i, v in enumerate(rest) if mask >> i & 1]
        b = [v for i, v in enumerate(rest) if not mask >> i & 1]
        if len(a) <= BLOCK_MAX and len(b) <= BLOCK_MAX:
            out.append(Partition.of(a, b))
    return out


def single_move_partitions(part: Partition) -> List[Partition]:
    """Partitions reachable by moving one neighbour to the other block."""
    out = []
    for v in part.block_a:
        if len(part.block_b) < BLOCK_MAX:
            out.append(Partition.of([u for u in part.block_a if u != v], part.block_b + (v,)))
    for v in part.block_b:
        if len(part.block_a) < BLOCK_MAX:
            out.append(Partition.of(part.block_a + (v,), [u for u in part.block_b if u != v]))
    return out


def repair_partition(
    hub: int,
    partition: Partition,
    new_topology: Topology,
    removed: Edge,
    added: Edge,
    nodes: Sequence[Node],
) -> Optional[Partition]:
    """Carry ``partition`` over an edge swap; None when a block ends up with more than 10 nodes.

    A neighbour cut off from the hub leaves its block; a new hub neighbour joins
    the block of the remaining neighbour whose bearing from the hub is closest
    to its own (block a if the hub has no other neighbour).
    """
    a, b = list(partition.block_a), list(partition.block_b)
    if hub in removed:
        u = removed[0] if removed[1] == hub else removed[1]
        if u in a:
            a.remove(u)
        elif u in b:
            b.remove(u)
    if hub in added:
        v = added[0] if added[1] == hub else added[1]
        h = nodes[hub]
        target = bearing(h.x, h.y, nodes[v].x, nodes[v].y)
        others = [w for w in new_topology.adjacency[hub] if w != v]
        if others:
            w = min(
                others,
                key=lambda w: (angle_deviation(bearing(h.x, h.y, nodes[w].x, nodes[w].y), target), w),
            )
            (a if w in a else b).append(v)
        else:
            a.append(v)
    if len(a) > BLOCK_MAX or len(b) > BLOCK_MAX:
        return None
    return Partition.of(a, b)


# --- antennas -----------------------------------------------------------------

def _beam_arc(pos: float, reach: float, beams: int) -> List[int]:
    """Beam indices within ``reach`` (in beam spacings) of fractional position ``pos``."""
    lo = math.ceil(pos - reach - EPS)
    hi = math.floor(pos + reach + EPS)
    if hi - lo + 1 >= beams:
        return list(range(beams))
    return [k % beams for k in range(lo, hi + 1)]


def _min_stab(arcs: List[List[int]], beams: int) -> Optional[List[int]]:
    """Smallest beam set hitting every arc (arcs are circularly contiguous index runs)."""
    if any(not arc for arc in arcs):
        return None
    best = None
    for k in arcs[0]:
        chosen = [k]
        intervals = []
        for arc in arcs[1:]:
            if k in arc:
                continue
            rel = sorted((j - k) % beams for j in arc)
            intervals.append((rel[0], rel[-1]))
        intervals.sort(key=lambda iv: iv[1])
        last = -1
        for lo, hi in intervals:
            if lo > last:
                last = hi
                chosen.append((hi + k) % beams)
        if best is None or len(chosen) < len(best):
            best = chosen
    return sorted(best)


def _cover_at(offsets: Sequence[float], theta: float, hw: float, beams: int, spacing: float):
    """(beam count, max deviation, beams) of the best cover with beam 0 at ``theta``."""
    pos = [((phi - theta) % (2 * math.pi)) / spacing for phi in offsets]
    full = _min_stab([_beam_arc(p, hw / spacing, beams) for p in pos], beams)
    if full is None:
        return None
    m = len(full)
    devs = sorted({
        abs(p - k) * spacing
        for p in pos
        for k in range(math.floor(p - hw / spacing) - 1, math.ceil(p + hw / spacing) + 2)
        if abs(p - k) * spacing <= hw + EPS
    })
    lo, hi = 0, len(devs) - 1
    best = (hw, full)
    while lo <= hi:
        mid = (lo + hi) // 2
        cand = _min_stab([_beam_arc(p, devs[mid] / spacing, beams) for p in pos], beams)
        if cand is not None and len(cand) <= m:
            best = (devs[mid], cand)
            hi = mid - 1
        else:
            lo = mid + 1
    chosen = best[1]
    maxdev = max(min(angle_deviation(theta + k * spacing, phi) for k in chosen) for phi in offsets)
    return m, maxdev, tuple(chosen)


def configure_bearings(bearings: Sequence[float], channel: str, params: PhysicsParams) -> AntennaConfig:
    """Fewest beams covering every bearing within half the channel's 3 dB width.

    Ties go to the smallest worst-case deviation, then the smallest rotation in
    [0, beam spacing).
    """
    if not bearings:
        raise ValueError("antenna needs at least one target")
    spacing = params.beam_spacing
    beams = params.beams
    if len(bearings) == 1:
        phi = bearings[0] % (2 * math.pi)
        theta = phi % spacing
        k = int(round((phi - theta) / spacing)) % beams
        return AntennaConfig(theta, (k,))
    hw = channel_beamwidth(channel) / 2.0
    cands = set()
    for i, a in enumerate(bearings):
        for off in (a, a - hw, a + hw):
            cands.add(off % spacing)
        for b in bearings[i + 1:]:
            mid = (a + b) / 2.0
            cands.add(mid % spacing)
            cands.add((mid + math.pi) % spacing)
    best = None
    for theta in sorted(cands):
        res = _cover_at(bearings, theta, hw, beams, spacing)
        if res is None:
            continue
        m, dev, chosen = res
        if best is None or m < best[0] or (m == best[0] and dev < best[1] - 1e-12):
            best = (m, dev, theta, chosen)
    if best is None:
        raise InfeasibleAntennaError("targets cannot be covered by the available beams")
    return AntennaConfig(best[2], best[3])


def configure_antenna(origin: Node, targets: Sequence[Node], channel: str, params: PhysicsParams) -> AntennaConfig:
    if not targets:
        raise ValueError("antenna needs at least one target")
    for t in targets:
        if t.x == origin.x and t.y == origin.y:
            raise ValueError(f"target {t.id} coincides with node {origin.id}")
    return configure_bearings([bearing(origin.x, origin.y, t.x, t.y) for t in targets], channel, params)


# --- channels -------------------------------------------------------------------

def assign_channels(rooted: RootedTopology, partition: Partition, flip: bool = False) -> ChannelAssignment:
    """Block a gets channel "3+" and block b "4" (swapped when ``flip``); channels alternate downward."""
    first, second = ("4", "3+") if flip else ("3+", "4")
    ch: List[Optional[str]] = [None] * rooted.n
    for v in partition.block_a:
        ch[v] = first
    for v in partition.block_b:
        ch[v] = second
    hub = rooted.hub
    for v in rooted.order[1:]:
        p = rooted.parent[v]
        if p != hub:
            ch[v] = "4" if ch[p] == "3+" else "3+"
        elif ch[v] is None:
            raise ValueError(f"hub neighbour {v} missing from partition")
    return ChannelAssignment(tuple(ch), flip)


def antenna_targets(rooted: RootedTopology, channels: ChannelAssignment) -> Dict[Tuple[int, str], List[int]]:
    """Nodes each (node, channel) antenna must reach."""
    targets: Dict[Tuple[int, str], List[int]] = {}
    for p, c in rooted.arcs():
        ch = channels.edge_channel[c]
        targets.setdefault((p, ch), []).append(c)
        targets.setdefault((c, ch), []).append(p)
    return targets


def frequency_groups(rooted: RootedTopology, channels: ChannelAssignment, per_edge: bool = False) -> List[List[int]]:
    """Greedy decision steps as lists of child endpoints, in BFS order.

    By default all same-channel edges leaving a node share one decision.
    """
    if per_edge:
        return [[c] for _, c in rooted.arcs()]
    groups: Dict[Tuple[int, str], List[int]] = {}
    for p, c in rooted.arcs():
        groups.setdefault((p, channels.edge_channel[c]), []).append(c)
    return list(groups.values())


def build_design(
    instance: Instance,
    rooted: RootedTopology,
    partition: Partition,
    flip: bool,
    freqs: Sequence[Optional[float]],
) -> Design:
    channels = assign_channels(rooted, partition, flip)
    ev = instance.evaluator
    antennas = {
        key: ev.antenna(key[0], tuple(sorted(t)), key[1])[0]
        for key, t in antenna_targets(rooted, channels).items()
    }
    return Design(rooted, partition, channels, tuple(freqs), antennas)


# --- frequencies ----------------------------------------------------------------

def greedy_frequency_assignment(
    instance: Instance, rooted: RootedTopology, partition: Partition, flip: bool = False, per_edge: bool = False
) -> Tuple[Design, float]:
    """BFS-order greedy frequency choice; returns the design and its objective."""
    ev = instance.evaluator
    lay = ev.layout(rooted, partition, flip, per_edge=per_edge)
    fidx, value = ev.greedy(lay)
    return build_design(instance, rooted, partition, flip, ev.freqs_mhz(lay, fidx)), value


def exhaustive_frequency_oracle(
    instance: Instance,
    rooted: RootedTopology,
    partition: Partition,
    flip: bool = False,
    per_edge: bool = False,
    max_decisions: int = 20,
) -> Tuple[Design, float]:
    """Best frequency assignment by enumerating every decision combination."""
    ev = instance.evaluator
    lay = ev.layout(rooted, partition, flip, per_edge=per_edge)
    if lay.n_groups > max_decisions:
        raise ValueError(f"{lay.n_groups} frequency decisions exceed the limit of {max_decisions}")
    best_val, best_choice = -math.inf, None
    for bits in itertools.product((1, 0), repeat=lay.n_groups):
        fidx = ev.assignment_from_choices(lay, bits)
        val = ev.objective(lay, fidx)
        if val > best_val:
            best_val, best_choice = val, fidx
    return build_design(instance, rooted, partition, flip, ev.freqs_mhz(lay, best_choice)), best_val


# --- E_not ----------------------------------------------------------------------

def ideal_throughput(instance: Instance, u: int, v: int) -> float:
    """Throughput of (u, v) with aligned single beams, highest frequency, no interference."""
    params = instance.physics
    f = params.highest_frequency
    a, b = instance.nodes[u], instance.nodes[v]
    g = g_max_db(1, f, params)
    pl = params.path_loss_db(math.hypot(a.x - b.x, a.y - b.y), f)
    return throughput_mbps(sinr_db(signal_strength_dbm(g, g, pl), 0.0, params.fade_margin_db))


def compute_e_not(instance: Instance) -> FrozenSet[Edge]:
    """Pairs that carry no throughput even under ideal conditions."""
    out = set()
    for u in range(instance.n):
        for v in range(u + 1, instance.n):
            if ideal_throughput(instance, u, v) == 0.0:
                out.add(norm_edge(u, v))
    return frozenset(out)


# --- audit ----------------------------------------------------------------------

def check_design(design: Design, instance: Instance) -> List[str]:
    """Every violated design invariant as a message; empty when the design is sound."""
    from .model import is_valid_hub, is_valid_topology

    problems: List[str] = []
    rooted = design.rooted
    topo = rooted.topology
    n = instance.n
    params = instance.physics
    if topo.n != n:
        return [f"design has {topo.n} nodes, instance has {n}"]
    if not is_valid_topology(topo.edges, n):
        problems.append("topology is not a valid tree")
    bad = topo.edges & instance.evaluator.e_not
    if bad:
        problems.append(f"unusable pairs in topology: {sorted(bad)}")
    if not is_valid_hub(topo, rooted.hub):
        problems.append(f"node {rooted.hub} is not a valid hub")
    for v in range(n):
        kids = rooted.children[v]
        if rooted.subtree_size[v] != 1 + sum(rooted.subtree_size[c] for c in kids):
            problems.append(f"subtree size of {v} is inconsistent")
        if v != rooted.hub and norm_edge(v, rooted.parent[v]) not in topo.edges:
            problems.append(f"parent of {v} is not adjacent")
    if not design.partition.is_valid_for(topo.adjacency[rooted.hub]):
        problems.append("partition does not split the hub neighbours into blocks of <= 10")
    ch = design.channels.edge_channel
    if ch[rooted.hub] is not None:
        problems.append("hub has an uplink channel")
    chans_a = {ch[v] for v in design.partition.block_a}
    chans_b = {ch[v] for v in design.partition.block_b}
    if len(chans_a) > 1 or len(chans_b) > 1 or (chans_a and chans_a == chans_b):
        problems.append("hub blocks do not map to two distinct channels")
    for p, c in rooted.arcs():
        if ch[c] not in CHANNEL_LABELS_SET:
            problems.append(f"edge {p}-{c} has no channel")
            continue
        if p != rooted.hub and ch[c] == ch[p]:
            problems.append(f"edge {p}-{c} reuses its parent's channel")
        f = design.freqs[c]
        if f is None or not any(math.isclose(f, g) for g in params.channel_freqs(ch[c])):
            problems.append(f"edge {p}-{c} frequency {f} is not in channel {ch[c]}")
    nodes = instance.nodes
    for (node, chan), targets in antenna_targets(rooted, design.channels).items():
        cfg = design.antennas.get((node, chan))
        if cfg is None:
            problems.append(f"antenna ({node}, {chan}) is missing")
            continue
        if not cfg.active_beams or any(not 0 <= b < params.beams for b in cfg.active_beams):
            problems.append(f"antenna ({node}, {chan}) has bad beam indices {cfg.active_beams}")
            continue
        hw = channel_beamwidth(chan) / 2.0
        o = nodes[node]
        for t in targets:
            phi = bearing(o.x, o.y, nodes[t].x, nodes[t].y)
            dev = min(angle_deviation(cfg.rotation + b * params.beam_spacing, phi) for b in cfg.active_beams)
            if dev > hw + 1e-9:
                problems.append(f"antenna ({node}, {chan}) misses target {t}")
    return problems
