"""Traffic scenarios, the weighted min+mean throughput objective, and its bounds."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .configuration import (
    Design,
    Partition,
    all_partitions,
    build_design,
    enumerate_partitions,
)
from .model import Instance, RootedTopology, Topology, master_hub_candidates

SCENARIOS = ("A", "B", "C")


@dataclass(frozen=True)
class ScenarioStreams:
    """Stream counts per tree arc, keyed by (parent, child)."""

    a: Dict[Tuple[int, int], int]
    b: Dict[Tuple[int, int], int]
    c: Dict[Tuple[int, int], int]


def scenario_streams(rooted: RootedTopology) -> ScenarioStreams:
    n = rooted.n
    a, b, c = {}, {}, {}
    for arc in rooted.arcs():
        d = rooted.subtree_size[arc[1]]
        a[arc] = 1
        b[arc] = d
        c[arc] = 2 * d * (n - d)
    return ScenarioStreams(a, b, c)


@dataclass(frozen=True)
class ObjectiveBreakdown:
    total: float
    minimum: Dict[str, float]
    mean: Dict[str, float]
    edges: List[dict]

    def to_json(self) -> dict:
        return {
            "objective": self.total,
            "scenarios": {x: {"min": self.minimum[x], "mean": self.mean[x]} for x in SCENARIOS},
            "edges": self.edges,
        }


def combine(tp: np.ndarray, nx: np.ndarray, weights, p: float) -> Tuple[float, Dict[str, float], Dict[str, float]]:
    """Weighted min+mean of effective throughputs ``tp / nx`` (one column per scenario)."""
    eff = tp[:, None] / nx
    lo = eff.min(axis=0)
    avg = eff.mean(axis=0)
    total = float(sum(w * (lo[k] + p * avg[k]) for k, w in enumerate(weights)))
    return total, dict(zip(SCENARIOS, map(float, lo))), dict(zip(SCENARIOS, map(float, avg)))


def evaluate_objective(design: Design, instance: Instance) -> ObjectiveBreakdown:
    """Full objective with interference, using the design's own antenna settings."""
    ev = instance.evaluator
    lay = ev.layout_from_design(design)
    ef = ev.fidx_from_design(lay, design)
    tp, sinr, intf = ev.link_state(lay, ef)
    total, lo, avg = combine(tp, lay.nx, instance.weights, instance.p)
    edges = []
    for e in range(len(lay.eu)):
        u, v = int(lay.eu[e]), int(lay.ev[e])
        edges.append({
            "u": u,
            "v": v,
            "channel": lay.edge_channel[v],
            "freq_mhz": design.freqs[v],
            "sinr_db": float(sinr[e]),
            "interference_mw": float(intf[e]),
            "tp_mbps": float(tp[e]),
            "n_a": int(lay.nx[e, 0]),
            "n_b": int(lay.nx[e, 1]),
            "n_c": int(lay.nx[e, 2]),
        })
    return ObjectiveBreakdown(total, lo, avg, edges)


def estimate_objective(instance: Instance, rooted: RootedTopology, partition: Partition, flip: bool) -> float:
    """Interference-free, frequency-averaged estimate O^Est."""
    ev = instance.evaluator
    return ev.estimate(ev.layout(rooted, partition, flip))


@dataclass(frozen=True)
class Candidate:
    """A scored hub/partition/channel/frequency choice for one topology."""

    value: float
    rooted: RootedTopology
    partition: Partition
    flip: bool
    freqs: Tuple[Optional[float], ...]

    @property
    def topology(self) -> Topology:
        return self.rooted.topology

    @property
    def hub(self) -> int:
        return self.rooted.hub

    def design(self, instance: Instance) -> Design:
        return build_design(instance, self.rooted, self.partition, self.flip, self.freqs)


def hub_partitions(instance: Instance, rooted: RootedTopology) -> List[Partition]:
    return enumerate_partitions(rooted, instance.nodes)


def lb2(topology: Topology, hub: int, partition: Partition, instance: Instance, per_edge: bool = False) -> Candidate:
    """Best of the two channel assignments with greedy frequencies, hub and partition fixed."""
    ev = instance.evaluator
    rooted = ev.rooted(topology, hub)
    best = None
    for flip in (False, True):
        lay = ev.layout(rooted, partition, flip, per_edge=per_edge)
        ef, val = ev.greedy(lay)
        if best is None or val > best[0]:
            best = (val, flip, lay, ef)
    val, flip, lay, ef = best
    return Candidate(val, rooted, partition, flip, ev.freqs_mhz(lay, ef))


def lb1(topology: Topology, instance: Instance, per_edge: bool = False) -> Candidate:
    """Lower bound on f(T): every hub in R(T), every partition in P(T, r), both channel assignments."""
    ev = instance.evaluator
    best = None
    for hub in master_hub_candidates(topology):
        rooted = ev.rooted(topology, hub)
        for part in hub_partitions(instance, rooted):
            for flip in (False, True):
                lay = ev.layout(rooted, part, flip, per_edge=per_edge)
                ef, val = ev.greedy(lay)
                if best is None or val > best[0]:
                    best = (val, part, flip, lay, ef)
    val, part, flip, lay, ef = best
    return Candidate(val, lay.rooted, part, flip, ev.freqs_mhz(lay, ef))


def f_est(topology: Topology, instance: Instance) -> Tuple[float, int, Partition]:
    """Estimated topology value: max O^Est over R(T), every valid partition, both channel assignments."""
    ev = instance.evaluator
    best = None
    for hub in master_hub_candidates(topology):
        rooted = ev.rooted(topology, hub)
        for part in all_partitions(topology.adjacency[hub]):
            for flip in (False, True):
                val = ev.estimate(ev.layout(rooted, part, flip))
                if best is None or val > best[0]:
                    best = (val, hub, part)
    return best
