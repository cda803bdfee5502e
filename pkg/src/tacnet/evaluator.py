"""Instance-bound fast evaluation of designs.

Everything that depends only on node positions (bearings, path losses) is
precomputed once per instance; antenna patterns are cached by
(node, targets, channel). The interference/SINR/objective inner loops are
numba kernels working on a flat array view of a design (a ``Layout``).
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numba
import numpy as np

from .model import Instance, RootedTopology, Topology, root_at
from .physics import (
    NOISE_MW,
    SINR_THRESHOLDS_DB,
    THROUGHPUT_STEPS_MBPS,
    TRANSMIT_POWER_DBM,
    AntennaConfig,
    beam_gain_linear,
)

_THRESH = np.array(SINR_THRESHOLDS_DB)
_STEPS = np.array(THROUGHPUT_STEPS_MBPS)
CHANNEL_INDEX = {"3+": 0, "4": 1}
RULE_ENDPOINTS, RULE_UNCONNECTED, RULE_CONNECTION = 0, 1, 2
RULES = {"endpoints": RULE_ENDPOINTS, "unconnected": RULE_UNCONNECTED, "connection": RULE_CONNECTION}


@numba.njit(cache=True)
def _tp_of(sinr):
    k = 0
    while k < _THRESH.shape[0] and sinr >= _THRESH[k]:
        k += 1
    return _STEPS[k]


@numba.njit(cache=True)
def _link_state(ef, eu, ev, ant_u, ant_v, ant_node, excl, ekey, rule, ag, lf, noise, fade, tp, sinr, intf):
    m = eu.shape[0]
    n_ant = ant_node.shape[0]
    n_freq = lf.shape[0]
    uses = np.zeros((n_ant, n_freq), dtype=np.bool_)
    for e in range(m):
        f = ef[e]
        if f >= 0:
            uses[ant_u[e], f] = True
            uses[ant_v[e], f] = True
    for e in range(m):
        f = ef[e]
        if f < 0:
            tp[e] = 0.0
            sinr[e] = np.nan
            intf[e] = 0.0
            continue
        u = eu[e]
        v = ev[e]
        au = ant_u[e]
        av = ant_v[e]
        sig = ag[au, v] * ag[av, u] * lf[f, u, v]
        acc = 0.0
        for a in range(n_ant):
            if uses[a, f]:
                w = ant_node[a]
                if w == u or w == v:
                    continue
                # w shares the serving antenna of u: (u, w) is itself a link
                linked = excl[w] == ekey[e]
                if linked and rule == RULE_CONNECTION:
                    continue
                if not (linked and rule == RULE_UNCONNECTED):
                    acc += ag[au, w] * ag[a, u] * lf[f, u, w]
                acc += ag[a, v] * ag[av, w] * lf[f, w, v]
        intf[e] = acc
        if sig > 0.0:
            s = 10.0 * math.log10(sig) - fade - 10.0 * math.log10(acc + noise)
        else:
            s = -np.inf
        sinr[e] = s
        tp[e] = _tp_of(s)


@numba.njit(cache=True)
def _objective(tp, ef, nx, weights, p):
    total = 0.0
    m = tp.shape[0]
    for x in range(3):
        if weights[x] == 0.0:
            continue
        lo = np.inf
        acc = 0.0
        cnt = 0
        for e in range(m):
            if ef[e] >= 0:
                val = tp[e] / nx[e, x]
                if val < lo:
                    lo = val
                acc += val
                cnt += 1
        if cnt > 0:
            total += weights[x] * (lo + p * acc / cnt)
    return total


@numba.njit(cache=True)
def _evaluate(ef, eu, ev, ant_u, ant_v, ant_node, excl, ekey, rule, ag, lf, noise, fade, nx, weights, p):
    m = eu.shape[0]
    tp = np.empty(m)
    sinr = np.empty(m)
    intf = np.empty(m)
    _link_state(ef, eu, ev, ant_u, ant_v, ant_node, excl, ekey, rule, ag, lf, noise, fade, tp, sinr, intf)
    return _objective(tp, ef, nx, weights, p)


@numba.njit(cache=True)
def _greedy(grp_ptr, grp_edges, grp_fhi, grp_flo, eu, ev, ant_u, ant_v, ant_node, excl, ekey, rule, ag, lf, noise, fade, nx, weights, p):
    m = eu.shape[0]
    ef = np.full(m, -1, dtype=np.int64)
    tp = np.empty(m)
    sinr = np.empty(m)
    intf = np.empty(m)
    best = -np.inf
    for g in range(grp_ptr.shape[0] - 1):
        best = -np.inf
        best_f = -1
        for k in range(2):
            f = grp_fhi[g] if k == 0 else grp_flo[g]
            for j in range(grp_ptr[g], grp_ptr[g + 1]):
                ef[grp_edges[j]] = f
            _link_state(ef, eu, ev, ant_u, ant_v, ant_node, excl, ekey, rule, ag, lf, noise, fade, tp, sinr, intf)
            val = _objective(tp, ef, nx, weights, p)
            if val > best:
                best = val
                best_f = f
        for j in range(grp_ptr[g], grp_ptr[g + 1]):
            ef[grp_edges[j]] = best_f
    return ef, best


@dataclass
class Layout:
    """A design without frequencies, flattened for the kernels. Edges are in BFS order."""

    rooted: RootedTopology
    partition: object
    flip: bool
    edge_channel: Tuple[Optional[str], ...]
    eu: np.ndarray
    ev: np.ndarray
    ant_u: np.ndarray
    ant_v: np.ndarray
    ant_keys: List[Tuple[int, str]]
    ant_node: np.ndarray
    excl: np.ndarray  # per node: index of the antenna serving it from its parent (-1 at the hub)
    ekey: np.ndarray
    ag: np.ndarray
    ant_cfg: List[AntennaConfig]
    nx: np.ndarray
    e_flo: np.ndarray
    e_fhi: np.ndarray
    grp_ptr: np.ndarray
    grp_edges: np.ndarray
    grp_flo: np.ndarray
    grp_fhi: np.ndarray

    @property
    def n_groups(self) -> int:
        return len(self.grp_ptr) - 1


class Evaluator:
    def __init__(self, instance: Instance, rooted_cache: int = 100_000, antenna_cache: int = 200_000):
        self.instance = instance
        params = instance.physics
        self.params = params
        n = instance.n
        xs = np.array([nd.x for nd in instance.nodes])
        ys = np.array([nd.y for nd in instance.nodes])
        self.bearings = np.mod(np.arctan2(ys[None, :] - ys[:, None], xs[None, :] - xs[:, None]), 2 * np.pi)
        self.dist = np.hypot(xs[None, :] - xs[:, None], ys[None, :] - ys[:, None])
        self.freqs = params.frequencies
        self.fidx = {f: i for i, f in enumerate(self.freqs)}
        self.chan_fidx = {}
        for label in CHANNEL_INDEX:
            lo, hi = params.channel_freqs(label)
            self.chan_fidx[label] = (self.fidx[lo], self.fidx[hi])
        self.pl_db = np.full((len(self.freqs), n, n), np.inf)
        for k, f in enumerate(self.freqs):
            for u in range(n):
                for w in range(n):
                    if u != w:
                        self.pl_db[k, u, w] = params.path_loss_db(self.dist[u, w], f)
        with np.errstate(over="ignore"):
            self.lf = np.where(np.isfinite(self.pl_db), 10.0 ** ((TRANSMIT_POWER_DBM - self.pl_db) / 10.0), 0.0)
        self.noise = NOISE_MW
        self.fade = float(params.fade_margin_db)
        self.rule = RULES[params.interference]
        self.weights = np.array(instance.weights, dtype=float)
        self.p = float(instance.p)
        self._antennas: "OrderedDict[tuple, tuple]" = OrderedDict()
        self._antenna_cap = antenna_cache
        self._rooted: "OrderedDict[tuple, RootedTopology]" = OrderedDict()
        self._rooted_cap = rooted_cache
        self._e_not = None

    # --- caches -------------------------------------------------------------
    def rooted(self, topology: Topology, hub: int) -> RootedTopology:
        key = (topology, hub)
        r = self._rooted.get(key)
        if r is None:
            r = root_at(topology, hub)
            self._rooted[key] = r
            if len(self._rooted) > self._rooted_cap:
                self._rooted.popitem(last=False)
        return r

    def antenna(self, node: int, targets: Tuple[int, ...], channel: str) -> Tuple[AntennaConfig, np.ndarray]:
        key = (node, targets, channel)
        hit = self._antennas.get(key)
        if hit is None:
            from .configuration import configure_bearings

            cfg = configure_bearings([float(self.bearings[node, t]) for t in targets], channel, self.params)
            hit = (cfg, self.gain_vector(node, cfg, channel))
            self._antennas[key] = hit
            if len(self._antennas) > self._antenna_cap:
                self._antennas.popitem(last=False)
        return hit

    def gain_vector(self, node: int, cfg: AntennaConfig, channel: str) -> np.ndarray:
        g = beam_gain_linear(cfg, self.bearings[node], channel, self.params)
        g[node] = 0.0
        return g

    @property
    def e_not(self):
        if self._e_not is None:
            from .configuration import compute_e_not

            self._e_not = compute_e_not(self.instance)
        return self._e_not

    # --- layouts ------------------------------------------------------------
    def layout(self, rooted: RootedTopology, partition, flip: bool, per_edge: bool = False) -> Layout:
        from .configuration import assign_channels

        edge_channel = assign_channels(rooted, partition, flip).edge_channel
        return self._layout(rooted, partition, flip, edge_channel, per_edge, None)

    def layout_from_design(self, design, per_edge: bool = False) -> Layout:
        return self._layout(
            design.rooted, design.partition, design.channels.flip,
            design.channels.edge_channel, per_edge, design.antennas,
        )

    def _layout(self, rooted, partition, flip, edge_channel, per_edge, fixed_antennas) -> Layout:
        arcs = rooted.arcs()
        targets: Dict[Tuple[int, str], List[int]] = {}
        for p, c in arcs:
            ch = edge_channel[c]
            targets.setdefault((p, ch), []).append(c)
            targets.setdefault((c, ch), []).append(p)
        keys = list(targets)
        index = {k: i for i, k in enumerate(keys)}
        vecs, cfgs = [], []
        for node, ch in keys:
            if fixed_antennas is None:
                cfg, vec = self.antenna(node, tuple(sorted(targets[(node, ch)])), ch)
            else:
                cfg = fixed_antennas[(node, ch)]
                vec = self.gain_vector(node, cfg, ch)
            cfgs.append(cfg)
            vecs.append(vec)
        n = rooted.n
        size = rooted.subtree_size
        eu = np.array([p for p, _ in arcs], dtype=np.int64)
        ev = np.array([c for _, c in arcs], dtype=np.int64)
        chans = [edge_channel[c] for _, c in arcs]
        ant_u = np.array([index[(p, edge_channel[c])] for p, c in arcs], dtype=np.int64)
        ant_v = np.array([index[(c, edge_channel[c])] for p, c in arcs], dtype=np.int64)
        nx = np.array([(1.0, size[c], 2.0 * size[c] * (n - size[c])) for _, c in arcs])
        e_flo = np.array([self.chan_fidx[ch][0] for ch in chans], dtype=np.int64)
        e_fhi = np.array([self.chan_fidx[ch][1] for ch in chans], dtype=np.int64)
        if per_edge:
            groups = [[e] for e in range(len(arcs))]
        else:
            by_key: Dict[Tuple[int, str], List[int]] = {}
            for e, (p, c) in enumerate(arcs):
                by_key.setdefault((p, edge_channel[c]), []).append(e)
            groups = list(by_key.values())
        grp_ptr = np.zeros(len(groups) + 1, dtype=np.int64)
        flat = []
        for g, members in enumerate(groups):
            flat.extend(members)
            grp_ptr[g + 1] = len(flat)
        first = [members[0] for members in groups]
        excl = np.full(n, -1, dtype=np.int64)
        excl[ev] = ant_u
        ekey = ant_u
        return Layout(
            rooted=rooted,
            partition=partition,
            flip=flip,
            edge_channel=tuple(edge_channel),
            eu=eu,
            ev=ev,
            ant_u=ant_u,
            ant_v=ant_v,
            ant_keys=keys,
            ant_node=np.array([k[0] for k in keys], dtype=np.int64),
            excl=excl,
            ekey=ekey,
            ag=np.vstack(vecs) if vecs else np.zeros((0, n)),
            ant_cfg=cfgs,
            nx=nx,
            e_flo=e_flo,
            e_fhi=e_fhi,
            grp_ptr=grp_ptr,
            grp_edges=np.array(flat, dtype=np.int64),
            grp_flo=e_flo[first] if first else np.zeros(0, dtype=np.int64),
            grp_fhi=e_fhi[first] if first else np.zeros(0, dtype=np.int64),
        )

    # --- evaluation ---------------------------------------------------------
    def greedy(self, lay: Layout) -> Tuple[np.ndarray, float]:
        ef, val = _greedy(
            lay.grp_ptr, lay.grp_edges, lay.grp_fhi, lay.grp_flo, lay.eu, lay.ev, lay.ant_u, lay.ant_v,
            lay.ant_node, lay.excl, lay.ekey, self.rule, lay.ag, self.lf, self.noise, self.fade, lay.nx, self.weights, self.p,
        )
        return ef, float(val)

    def objective(self, lay: Layout, ef: np.ndarray) -> float:
        return float(_evaluate(
            np.asarray(ef, dtype=np.int64), lay.eu, lay.ev, lay.ant_u, lay.ant_v, lay.ant_node, lay.excl, lay.ekey, self.rule, lay.ag,
            self.lf, self.noise, self.fade, lay.nx, self.weights, self.p,
        ))

    def link_state(self, lay: Layout, ef: np.ndarray):
        """Per-edge (throughput, SINR, interference) arrays in layout edge order."""
        m = len(lay.eu)
        tp, sinr, intf = np.empty(m), np.empty(m), np.empty(m)
        _link_state(
            np.asarray(ef, dtype=np.int64), lay.eu, lay.ev, lay.ant_u, lay.ant_v, lay.ant_node, lay.excl, lay.ekey, self.rule, lay.ag,
            self.lf, self.noise, self.fade, tp, sinr, intf,
        )
        return tp, sinr, intf

    def estimate(self, lay: Layout) -> float:
        """Interference-free objective with each edge's throughput averaged over its two frequencies."""
        rows = np.arange(len(lay.eu))
        g = lay.ag[lay.ant_u, lay.ev] * lay.ag[lay.ant_v, lay.eu]
        total = np.zeros(len(rows))
        for fi in (lay.e_flo, lay.e_fhi):
            sig = g * self.lf[fi, lay.eu, lay.ev]
            with np.errstate(divide="ignore"):
                s = 10.0 * np.log10(sig) - self.fade - 10.0 * math.log10(self.noise)
            total += _STEPS[np.searchsorted(_THRESH, s, side="right")]
        tp = total / 2.0
        eff = tp[:, None] / lay.nx
        per = eff.min(axis=0) + self.p * eff.mean(axis=0)
        return float(per @ self.weights)

    # --- assignments --------------------------------------------------------
    def assignment_from_choices(self, lay: Layout, bits: Sequence[int]) -> np.ndarray:
        ef = np.empty(len(lay.eu), dtype=np.int64)
        for g, bit in enumerate(bits):
            f = lay.grp_fhi[g] if bit else lay.grp_flo[g]
            ef[lay.grp_edges[lay.grp_ptr[g]:lay.grp_ptr[g + 1]]] = f
        return ef

    def freqs_mhz(self, lay: Layout, ef: np.ndarray) -> Tuple[Optional[float], ...]:
        out: List[Optional[float]] = [None] * lay.rooted.n
        for e, c in enumerate(lay.ev):
            out[int(c)] = self.freqs[int(ef[e])]
        return tuple(out)

    def fidx_from_design(self, lay: Layout, design) -> np.ndarray:
        return np.array([self.fidx[design.freqs[int(c)]] for c in lay.ev], dtype=np.int64)
