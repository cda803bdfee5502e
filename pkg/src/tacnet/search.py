"""Topology search: MST start, edge-swap neighbourhood, TABU1, TABU2, TBS and a brute-force oracle."""
from __future__ import annotations

import itertools
import math
import time
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

from .configuration import (
    Design,
    Partition,
    all_partitions,
    check_design,
    exhaustive_frequency_oracle,
    repair_partition,
    single_move_partitions,
)
from .model import (
    HUB_DEGREE_MAX,
    NODE_DEGREE_MAX,
    Edge,
    Instance,
    InvalidTopologyError,
    Topology,
    components_without,
    degree_rule_ok,
    is_valid_hub,
    is_valid_topology,
    master_hub_candidates,
    norm_edge,
)
from .objective import Candidate, hub_partitions

ALGORITHMS = ("tabu1", "tabu2", "tbs")
DEFAULT_KAPPA = 8
RECENT_WINDOW = 5


class InfeasibleInstanceError(ValueError):
    pass


class AuditError(AssertionError):
    pass


# --- tabu lists ---------------------------------------------------------------

def removal_capacity(n: int) -> int:
    return max(1, math.ceil(math.sqrt(n - 1) / 2))


def addition_capacity(n: int) -> int:
    return max(1, math.ceil(math.sqrt(n * (n - 1) / 2)))


class TabuLists:
    """Two FIFO lists: edges that may not be removed and edges that may not be added."""

    def __init__(self, n: int):
        self.removal: deque = deque(maxlen=removal_capacity(n))
        self.addition: deque = deque(maxlen=addition_capacity(n))

    def push(self, removed: Edge, added: Edge) -> None:
        # crosswise: the removed edge may not come back, the added one may not leave
        self.addition.append(removed)
        self.removal.append(added)

    def evict_oldest(self) -> bool:
        """Drop the oldest addition entry (else the oldest removal entry). False if both are empty."""
        if self.addition:
            self.addition.popleft()
            return True
        if self.removal:
            self.removal.popleft()
            return True
        return False

    def __len__(self) -> int:
        return len(self.removal) + len(self.addition)


# --- budget -------------------------------------------------------------------

class Budget:
    """Stop rule: a wall-clock limit, an iteration budget, or both.

    With only an iteration budget the clock is never consulted, which keeps
    runs reproducible.
    """

    def __init__(self, time_limit_s: Optional[float] = None, iterations: Optional[int] = None):
        if time_limit_s is None and iterations is None:
            raise ValueError("give a time limit, an iteration budget, or both")
        if time_limit_s is not None and time_limit_s < 0:
            raise ValueError("time limit must be >= 0")
        if iterations is not None and iterations < 0:
            raise ValueError("iteration budget must be >= 0")
        self.time_limit_s = time_limit_s
        self.iterations = iterations
        self.start = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    def out_of_time(self) -> bool:
        return self.time_limit_s is not None and self.elapsed() >= self.time_limit_s

    def done(self, iteration: int) -> bool:
        if self.iterations is not None and iteration >= self.iterations:
            return True
        return self.out_of_time()


class _Aborted(Exception):
    pass


# --- results ------------------------------------------------------------------

@dataclass
class TracePoint:
    iteration: int
    elapsed_s: float
    value: float


@dataclass
class SearchResult:
    algorithm: str
    value: float
    design: Design
    iterations: int
    elapsed_s: float
    trace: List[TracePoint]
    params: dict
    stop_reason: str
    evaluations: int = 0


class _Run:
    """Shared bookkeeping: incumbent, trace, memo tables, audit hooks."""

    def __init__(self, instance: Instance, algorithm: str, budget: Budget, params: dict,
                 audit: bool = False, per_edge: bool = False, memo_size: int = 50_000):
        self.instance = instance
        self.ev = instance.evaluator
        self.algorithm = algorithm
        self.budget = budget
        self.params = params
        self.audit = audit
        self.per_edge = per_edge
        self.memo_size = memo_size
        self.memo: Dict[str, OrderedDict] = {"lb1": OrderedDict(), "lb2": OrderedDict(), "est": OrderedDict()}
        self.best: Optional[Candidate] = None
        self.trace: List[TracePoint] = []
        self.iteration = 0
        self.evaluations = 0
        self.e_not = self.ev.e_not

    # memo
    def _cached(self, table: str, key, compute):
        memo = self.memo[table]
        hit = memo.get(key)
        if hit is not None:
            memo.move_to_end(key)
            return hit
        hit = compute()
        memo[key] = hit
        if len(memo) > self.memo_size:
            memo.popitem(last=False)
        return hit

    def tick(self) -> None:
        """Called once per evaluated neighbour."""
        self.evaluations += 1
        if self.budget.out_of_time():
            raise _Aborted

    def visit(self, t: Topology) -> None:
        if self.audit and not is_valid_topology(t.edges, t.n):
            raise AuditError(f"search visited an invalid topology {sorted(t.edges)}")
        if self.audit and t.edges & self.e_not:
            raise AuditError(f"search visited a topology with unusable pairs {sorted(t.edges & self.e_not)}")

    # bounds, returned as (value, hub, partition, flip, freqs)
    def lb1(self, t: Topology):
        return self._cached("lb1", t.edges, lambda: _lb1_tuple(self.instance, t, self.per_edge))

    def lb2(self, t: Topology, hub: int, partition: Partition):
        key = (t.edges, hub, partition.key)
        return self._cached("lb2", key, lambda: _lb2_tuple(self.instance, t, hub, partition, self.per_edge))

    def f_est(self, t: Topology):
        return self._cached("est", t.edges, lambda: f_est_tuple(self.instance, t))

    def candidate(self, t: Topology, res) -> Candidate:
        value, hub, part, flip, freqs = res
        return Candidate(value, self.ev.rooted(t, hub), part, flip, freqs)

    def offer(self, t: Topology, res) -> bool:
        """Update the incumbent when ``res`` strictly improves it."""
        if self.best is not None and res[0] <= self.best.value:
            return False
        self.best = self.candidate(t, res)
        self.trace.append(TracePoint(self.iteration, self.budget.elapsed(), self.best.value))
        if self.audit:
            design = self.best.design(self.instance)
            problems = check_design(design, self.instance)
            if problems:
                raise AuditError("; ".join(problems))
        return True

    def result(self, stop_reason: str) -> SearchResult:
        return SearchResult(
            algorithm=self.algorithm,
            value=self.best.value,
            design=self.best.design(self.instance),
            iterations=self.iteration,
            elapsed_s=self.budget.elapsed(),
            trace=list(self.trace),
            params=dict(self.params),
            stop_reason=stop_reason,
            evaluations=self.evaluations,
        )


def _lb1_tuple(instance: Instance, t: Topology, per_edge: bool):
    ev = instance.evaluator
    best = None
    for hub in master_hub_candidates(t):
        rooted = ev.rooted(t, hub)
        for part in hub_partitions(instance, rooted):
            for flip in (False, True):
                lay = ev.layout(rooted, part, flip, per_edge=per_edge)
                ef, val = ev.greedy(lay)
                if best is None or val > best[0]:
                    best = (val, hub, part, flip, lay, ef)
    val, hub, part, flip, lay, ef = best
    return (val, hub, part, flip, ev.freqs_mhz(lay, ef))


def _lb2_tuple(instance: Instance, t: Topology, hub: int, part: Partition, per_edge: bool):
    ev = instance.evaluator
    rooted = ev.rooted(t, hub)
    best = None
    for flip in (False, True):
        lay = ev.layout(rooted, part, flip, per_edge=per_edge)
        ef, val = ev.greedy(lay)
        if best is None or val > best[0]:
            best = (val, flip, lay, ef)
    val, flip, lay, ef = best
    return (val, hub, part, flip, ev.freqs_mhz(lay, ef))


def f_est_tuple(instance: Instance, t: Topology):
    """(f^Est, hub, partition): best interference-free estimate over R(T), all partitions, both channel sides."""
    ev = instance.evaluator
    best = None
    for hub in master_hub_candidates(t):
        rooted = ev.rooted(t, hub)
        for part in all_partitions(t.adjacency[hub]):
            for flip in (False, True):
                val = ev.estimate(ev.layout(rooted, part, flip))
                if best is None or val > best[0]:
                    best = (val, hub, part)
    return best


# --- initial topology -----------------------------------------------------------

def initial_topology(instance: Instance) -> Topology:
    """Greedy minimum-cost valid tree on the mean path loss over all frequencies.

    Pairs are scanned by (cost, u, v); unusable pairs, cycles, degree > 20 and a
    second vertex of degree > 11 are skipped.
    """
    ev = instance.evaluator
    n = instance.n
    cost = ev.pl_db.mean(axis=0)
    e_not = ev.e_not
    pairs = sorted(
        ((float(cost[u, v]), u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in e_not),
    )
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    deg = [0] * n
    edges = []
    for _, u, v in pairs:
        ru, rv = find(u), find(v)
        if ru == rv:
            continue
        if deg[u] + 1 > HUB_DEGREE_MAX or deg[v] + 1 > HUB_DEGREE_MAX:
            continue
        deg[u] += 1
        deg[v] += 1
        if not degree_rule_ok(deg):
            deg[u] -= 1
            deg[v] -= 1
            continue
        parent[ru] = rv
        edges.append((u, v))
        if len(edges) == n - 1:
            break
    if len(edges) != n - 1:
        groups: Dict[int, List[int]] = {}
        for v in range(n):
            groups.setdefault(find(v), []).append(v)
        comps = sorted(groups.values())
        raise InfeasibleInstanceError(
            f"cannot build a valid tree; disconnected components: {comps}"
        )
    return Topology.from_edges(edges, n)


# --- neighbourhood ----------------------------------------------------------------

def neighborhood(
    t: Topology, tabu: Optional[TabuLists], e_not, include_tabu: bool = False
) -> Iterator[Tuple[Edge, Edge, Topology, bool]]:
    """Valid edge swaps of ``t`` as (removed, added, new topology, is_tabu).

    Removed edges are visited in sorted order and, for each, added edges in
    sorted order. Tabu swaps are yielded (flagged) only when ``include_tabu``.
    """
    tabu_r = set(tabu.removal) if tabu else set()
    tabu_a = set(tabu.addition) if tabu else set()
    deg = list(t.degrees)
    for e in t.sorted_edges:
        e_tabu = e in tabu_r
        if e_tabu and not include_tabu:
            continue
        side, other = components_without(t, e)
        side, other = sorted(side), sorted(other)
        deg[e[0]] -= 1
        deg[e[1]] -= 1
        adds = sorted(norm_edge(a, b) for a in side for b in other)
        for f in adds:
            if f == e or f in e_not:
                continue
            tabu_flag = e_tabu or f in tabu_a
            if tabu_flag and not include_tabu:
                continue
            deg[f[0]] += 1
            deg[f[1]] += 1
            ok = deg[f[0]] <= HUB_DEGREE_MAX and deg[f[1]] <= HUB_DEGREE_MAX and degree_rule_ok(deg)
            deg[f[0]] -= 1
            deg[f[1]] -= 1
            if ok:
                yield e, f, t.swap(e, f), tabu_flag
        deg[e[0]] += 1
        deg[e[1]] += 1


def _scan(run: _Run, t: Topology, tabu: TabuLists, aspiration: bool, score: Callable):
    """Best admissible neighbour by ``score`` (returns a result tuple or None to skip).

    Returns (result, removed, added, T') or None when nothing is admissible.
    Raises _Aborted when time runs out mid-scan.
    """
    best = None
    for e, f, t2, is_tabu in neighborhood(t, tabu, run.e_not, include_tabu=aspiration):
        run.tick()
        run.visit(t2)
        res = score(t2, e, f)
        if res is None:
            continue
        if is_tabu and not (run.best is not None and res[0] > run.best.value):
            continue
        if best is None or res[0] > best[0][0]:
            best = (res, e, f, t2)
    return best


def _move(run: _Run, t: Topology, tabu: TabuLists, aspiration: bool, score: Callable):
    """Best admissible move, evicting tabu entries while the admissible set is empty."""
    while True:
        found = _scan(run, t, tabu, aspiration, score)
        if found is not None:
            return found
        if not tabu.evict_oldest():
            return None


def _params(algorithm, budget, aspiration, per_edge, **extra):
    out = {
        "algorithm": algorithm,
        "time_limit_s": budget.time_limit_s,
        "iterations": budget.iterations,
        "aspiration": aspiration,
        "per_edge_frequencies": per_edge,
    }
    out.update(extra)
    return out


# --- TABU1 --------------------------------------------------------------------------

def tabu1(
    instance: Instance,
    time_limit_s: Optional[float] = None,
    iterations: Optional[int] = None,
    aspiration: bool = True,
    per_edge: bool = False,
    audit: bool = False,
    on_iteration: Optional[Callable] = None,
) -> SearchResult:
    """Best-improvement tabu search scoring every neighbour with LB1."""
    budget = Budget(time_limit_s, iterations)
    n = instance.n
    run = _Run(instance, "tabu1", budget, _params(
        "tabu1", budget, aspiration, per_edge,
        tabu_removal=removal_capacity(n), tabu_addition=addition_capacity(n),
    ), audit=audit, per_edge=per_edge)
    t = initial_topology(instance)
    run.visit(t)
    run.offer(t, run.lb1(t))
    tabu = TabuLists(n)
    reason = "budget"
    while not budget.done(run.iteration):
        try:
            found = _move(run, t, tabu, aspiration, lambda t2, e, f: run.lb1(t2))
        except _Aborted:
            break
        if found is None:
            reason = "empty neighbourhood"
            break
        res, e, f, t = found
        tabu.push(e, f)
        run.iteration += 1
        run.offer(t, res)
        if on_iteration:
            on_iteration(run.iteration, t, res[0])
    return run.result(reason)


# --- TABU2 --------------------------------------------------------------------------

def tabu2(
    instance: Instance,
    time_limit_s: Optional[float] = None,
    iterations: Optional[int] = None,
    lam: Optional[float] = None,
    aspiration: bool = True,
    per_edge: bool = False,
    audit: bool = False,
    use_lb1: bool = False,
    on_iteration: Optional[Callable] = None,
) -> SearchResult:
    """Tabu search scoring neighbours with LB2 under the inherited hub and repaired partition.

    Every ``lam``-th iteration (default n) restarts from the best topology of the
    last five iterations with the hub and partition re-derived by LB1.
    ``use_lb1`` scores neighbours with LB1 instead (with ``lam`` = inf this
    reproduces TABU1 move for move).
    """
    budget = Budget(time_limit_s, iterations)
    n = instance.n
    if lam is None:
        lam = n
    if not (lam >= 1):
        raise ValueError("lambda must be >= 1")
    run = _Run(instance, "tabu2", budget, _params(
        "tabu2", budget, aspiration, per_edge,
        **{"lambda": None if math.isinf(lam) else int(lam)},
        tabu_removal=removal_capacity(n), tabu_addition=addition_capacity(n),
        recent_window=RECENT_WINDOW, neighbour_bound="lb1" if use_lb1 else "lb2",
    ), audit=audit, per_edge=per_edge)
    nodes = instance.nodes
    t = initial_topology(instance)
    run.visit(t)
    res = run.lb1(t)
    run.offer(t, res)
    hub, part = res[1], res[2]
    recent: deque = deque(maxlen=RECENT_WINDOW)
    recent.append((res[0], t))
    tabu = TabuLists(n)

    def score(t2: Topology, e: Edge, f: Edge):
        if use_lb1:
            return run.lb1(t2)
        if not is_valid_hub(t2, hub):
            return None
        p2 = repair_partition(hub, part, t2, e, f, nodes)
        if p2 is None:
            return None
        return run.lb2(t2, hub, p2)

    reason = "budget"
    while not budget.done(run.iteration):
        it = run.iteration + 1
        if not math.isinf(lam) and it % int(lam) == 0:
            # restart: best of the recent window, earliest on ties
            top = max(recent, key=lambda r: r[0])
            t = top[1]
            res = run.lb1(t)
            if budget.out_of_time():
                break
            hub, part = res[1], res[2]
        else:
            try:
                found = _move(run, t, tabu, aspiration, score)
            except _Aborted:
                break
            if found is None:
                reason = "empty neighbourhood"
                break
            res, e, f, t = found
            hub, part = res[1], res[2]
            tabu.push(e, f)
        run.iteration = it
        recent.append((res[0], t))
        run.offer(t, res)
        if on_iteration:
            on_iteration(run.iteration, t, res[0])
    return run.result(reason)


# --- TBS ----------------------------------------------------------------------------

def f_lb_tuple(instance: Instance, t: Topology, hub: int, part: Partition, per_edge: bool = False):
    """Lower bound around the estimate's (hub, partition).

    Both channel sides with greedy frequencies for that partition and, when
    the hub has at most 7 neighbours, for every other partition; otherwise
    for the partitions one neighbour move away.
    """
    neighbours = t.adjacency[hub]
    if len(neighbours) <= 7:
        parts = [part] + [p for p in all_partitions(neighbours) if p.key != part.key]
    else:
        parts = [part] + single_move_partitions(part)
    best = None
    for p in parts:
        res = _lb2_tuple(instance, t, hub, p, per_edge)
        if best is None or res[0] > best[0]:
            best = res
    return best


def tbs(
    instance: Instance,
    time_limit_s: Optional[float] = None,
    iterations: Optional[int] = None,
    kappa: int = DEFAULT_KAPPA,
    per_edge: bool = False,
    audit: bool = False,
    on_iteration: Optional[Callable] = None,
) -> SearchResult:
    """Tabu beam search ranking neighbours by f^Est and reporting f^LB of pool members.

    ``on_iteration`` receives (iteration, pool topologies, best pool estimate).
    """
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    budget = Budget(time_limit_s, iterations)
    n = instance.n
    run = _Run(instance, "tbs", budget, _params(
        "tbs", budget, False, per_edge, kappa=kappa,
        tabu_removal=removal_capacity(n), tabu_addition=addition_capacity(n),
    ), audit=audit, per_edge=per_edge)
    t0 = initial_topology(instance)
    run.visit(t0)
    est0 = run.f_est(t0)
    run.offer(t0, f_lb_tuple(instance, t0, est0[1], est0[2], per_edge))
    tabu = TabuLists(n)

    def expand(t: Topology):
        """The kappa best non-tabu neighbours of t by f^Est as (est, removed, added, T')."""
        scored = []
        for e, f, t2, _ in neighborhood(t, tabu, run.e_not):
            run.tick()
            run.visit(t2)
            scored.append((run.f_est(t2), e, f, t2))
        # stable sort keeps neighbourhood order among equal estimates
        scored.sort(key=lambda s: -s[0][0])
        return scored[:kappa]

    def select(cands):
        cands = sorted(cands, key=lambda s: -s[0][0])
        pool, seen = [], set()
        for c in cands:
            if c[3].edges in seen:
                continue
            seen.add(c[3].edges)
            pool.append(c)
            if len(pool) == kappa:
                break
        return pool

    def next_pool(members):
        while True:
            cands = []
            for t in members:
                cands.extend(expand(t))
            if cands:
                return select(cands)
            if not tabu.evict_oldest():
                return None

    def score_pool(pool):
        for est, e, f, t2 in pool:
            tabu.push(e, f)
        for est, e, f, t2 in pool:
            run.offer(t2, f_lb_tuple(instance, t2, est[1], est[2], per_edge))

    reason = "budget"
    if budget.done(0):
        return run.result(reason)
    try:
        pool = next_pool([t0])
    except _Aborted:
        return run.result("budget")
    if pool is None:
        return run.result("empty neighbourhood")
    score_pool(pool)
    while not budget.done(run.iteration):
        try:
            new_pool = next_pool([c[3] for c in pool])
        except _Aborted:
            break
        if new_pool is None:
            reason = "empty neighbourhood"
            break
        pool = new_pool
        run.iteration += 1
        score_pool(pool)
        if on_iteration:
            on_iteration(run.iteration, [c[3] for c in pool], pool[0][0][0])
    return run.result(reason)


# --- dispatch -----------------------------------------------------------------------

def solve(instance: Instance, algorithm: str, time_limit_s=None, iterations=None,
          lam=None, kappa: int = DEFAULT_KAPPA, aspiration: bool = True,
          per_edge: bool = False, audit: bool = False) -> SearchResult:
    if algorithm == "tabu1":
        return tabu1(instance, time_limit_s, iterations, aspiration=aspiration, per_edge=per_edge, audit=audit)
    if algorithm == "tabu2":
        return tabu2(instance, time_limit_s, iterations, lam=lam, aspiration=aspiration,
                     per_edge=per_edge, audit=audit)
    if algorithm == "tbs":
        return tbs(instance, time_limit_s, iterations, kappa=kappa, per_edge=per_edge, audit=audit)
    raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")


# --- brute force ----------------------------------------------------------------------

EXHAUSTIVE_MAX_N = 6


def prufer_trees(n: int) -> Iterator[Topology]:
    """Every labelled tree on n nodes, decoded from Pruefer sequences."""
    if n == 2:
        yield Topology.from_edges([(0, 1)], 2)
        return
    for seq in itertools.product(range(n), repeat=n - 2):
        degree = [1] * n
        for x in seq:
            degree[x] += 1
        edges = []
        for x in seq:
            leaf = min(v for v in range(n) if degree[v] == 1)
            edges.append((leaf, x))
            degree[leaf] -= 1
            degree[x] -= 1
        u, v = [w for w in range(n) if degree[w] == 1]
        edges.append((u, v))
        yield Topology.from_edges(edges, n)


def exhaustive_topology_value(instance: Instance, t: Topology, per_edge: bool = False) -> Tuple[float, Design]:
    """f(T): best objective over every valid hub, every partition, both sides and every frequency choice."""
    ev = instance.evaluator
    best_val, best_design = -math.inf, None
    for hub in range(t.n):
        if not is_valid_hub(t, hub):
            continue
        rooted = ev.rooted(t, hub)
        for part in all_partitions(t.adjacency[hub]):
            for flip in (False, True):
                design, val = exhaustive_frequency_oracle(instance, rooted, part, flip, per_edge=per_edge)
                if val > best_val:
                    best_val, best_design = val, design
    return best_val, best_design


def exhaustive_solver(instance: Instance, per_edge: bool = False) -> Tuple[float, Design]:
    """Global optimum by enumerating every tree; refuses n > 6."""
    n = instance.n
    if n > EXHAUSTIVE_MAX_N:
        raise ValueError(f"exhaustive search is limited to n <= {EXHAUSTIVE_MAX_N} (got {n})")
    e_not = instance.evaluator.e_not
    best_val, best_design = -math.inf, None
    for t in prufer_trees(n):
        if t.edges & e_not or not is_valid_topology(t.edges, n):
            continue
        val, design = exhaustive_topology_value(instance, t, per_edge)
        if val > best_val:
            best_val, best_design = val, design
    if best_design is None:
        raise InfeasibleInstanceError("no valid tree avoids the unusable pairs")
    return best_val, best_design
