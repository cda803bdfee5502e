"""Instance generation, run reports, evaluation reports, DOT export and benchmarks."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .configuration import Design, check_design, ideal_throughput
from .model import Instance, Node
from .objective import evaluate_objective
from .physics import PhysicsParams, link_metrics
from .search import ALGORITHMS, DEFAULT_KAPPA, SearchResult, solve

REPORT_SCHEMA = "tacnet.run_report/1"
SUMMARY_SCHEMA = "tacnet.benchmark_summary/1"
PRNG = "numpy.random.PCG64"
MIN_SEPARATION_M = 1.0
MAX_DRAWS_PER_NODE = 10_000


class GenerationError(RuntimeError):
    pass


def version() -> str:
    from . import __version__

    return __version__


def instance_digest(instance: Instance) -> str:
    blob = json.dumps(instance.to_json(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


# --- generation ---------------------------------------------------------------

def generate_instance(n: int, area_m: float, seed: int, physics: Optional[PhysicsParams] = None,
                      weights=(1.0, 1.0, 1.0), p: float = 1.0) -> Instance:
    """n nodes drawn uniformly in an ``area_m`` square.

    A draw is rejected when it lies within 1 m of an earlier node or cannot
    reach some earlier node even with ideal single-beam alignment.
    """
    if n < 2:
        raise ValueError("need at least 2 nodes")
    if area_m <= 0:
        raise ValueError("area must be positive")
    physics = physics or PhysicsParams()
    rng = np.random.Generator(np.random.PCG64(seed))
    probe = Instance((Node(0, 0.0, 0.0), Node(1, 1.0, 0.0)), physics=physics)
    pts: List[Node] = []
    for i in range(n):
        for _ in range(MAX_DRAWS_PER_NODE):
            x, y = (float(c) for c in rng.uniform(0.0, area_m, size=2))
            cand = Node(i, x, y)
            if all(_compatible(probe, q, cand) for q in pts):
                pts.append(cand)
                break
        else:
            raise GenerationError(
                f"could not place node {i} after {MAX_DRAWS_PER_NODE} draws; try a smaller area"
            )
    return Instance(tuple(pts), weights=tuple(weights), p=p, physics=physics, seed=seed,
                    name=f"gen-n{n}-a{area_m:g}-s{seed}")


def _compatible(probe: Instance, a: Node, b: Node) -> bool:
    if math.hypot(a.x - b.x, a.y - b.y) < MIN_SEPARATION_M:
        return False
    pair = Instance((Node(0, a.x, a.y), Node(1, b.x, b.y)), physics=probe.physics)
    return ideal_throughput(pair, 0, 1) > 0.0


# --- run reports ----------------------------------------------------------------

def provenance(instance: Instance, seed: int) -> dict:
    return {
        "version": version(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "prng": PRNG,
        "seed": seed,
        "weights": {"A": instance.weights[0], "B": instance.weights[1], "C": instance.weights[2], "p": instance.p},
        "physics": instance.physics.to_json(),
        "defaults": {"kappa": DEFAULT_KAPPA, "lambda": "n", "aspiration": True},
    }


def run_report(instance: Instance, result: SearchResult, seed: int) -> dict:
    """JSON-ready report. Wall-clock fields are left out when the run was bounded by iterations only."""
    wall = result.params.get("time_limit_s") is not None
    design = result.design
    breakdown = evaluate_objective(design, instance)
    trace = []
    for pt in result.trace:
        row = {"iteration": pt.iteration, "best_objective": pt.value}
        if wall:
            row["elapsed_s"] = round(pt.elapsed_s, 6)
        trace.append(row)
    return {
        "schema": REPORT_SCHEMA,
        "instance": {"name": instance.name, "n": instance.n, "sha256": instance_digest(instance)},
        "algorithm": result.algorithm,
        "seed": seed,
        "best_objective": result.value,
        "iterations": result.iterations,
        "evaluations": result.evaluations,
        "wall_seconds": round(result.elapsed_s, 6) if wall else None,
        "stop_reason": result.stop_reason,
        "params": result.params,
        "provenance": provenance(instance, seed),
        "trace": trace,
        "design": design_json(design, instance, breakdown),
        "evaluation": breakdown.to_json(),
    }


def design_json(design: Design, instance: Instance, breakdown=None) -> dict:
    """Design JSON with per-edge throughput and SINR attached (ignored when read back)."""
    breakdown = breakdown or evaluate_objective(design, instance)
    out = design.to_json()
    by_arc = {(e["u"], e["v"]): e for e in breakdown.edges}
    for e in out["edges"]:
        b = by_arc[(e["u"], e["v"])]
        e["tp_mbps"] = b["tp_mbps"]
        e["sinr_db"] = b["sinr_db"]
    out["objective"] = breakdown.total
    return out


def write_trace_csv(result: SearchResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["elapsed_s", "best_objective"])
        for pt in result.trace:
            w.writerow([f"{pt.elapsed_s:.6f}", repr(pt.value)])


def dump_json(data, path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=False) + "\n")


def load_design(path) -> Design:
    data = json.loads(Path(path).read_text())
    if "design" in data:
        data = data["design"]
    return Design.from_json(data)


# --- evaluation -------------------------------------------------------------------

class DesignMismatchError(ValueError):
    pass


def evaluation_report(design: Design, instance: Instance) -> dict:
    if design.rooted.n != instance.n:
        raise DesignMismatchError(f"design has {design.rooted.n} nodes but the instance has {instance.n}")
    problems = check_design(design, instance)
    if problems:
        raise DesignMismatchError("design is inconsistent with the instance: " + "; ".join(problems))
    breakdown = evaluate_objective(design, instance)
    links = link_metrics(design, instance.nodes, instance.physics)

    def num(x):
        return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x

    return {
        "instance": {"name": instance.name, "n": instance.n, "sha256": instance_digest(instance)},
        "hub": design.hub,
        "partition": design.partition.to_json(),
        "flip": design.channels.flip,
        **breakdown.to_json(),
        "links": [
            {
                "u": p, "v": c,
                "gain_fwd_db": num(m.gain_fwd_db), "gain_rev_db": num(m.gain_rev_db),
                "path_loss_db": m.path_loss_db, "signal_dbm": num(m.signal_dbm),
                "interference_mw": m.interference_mw, "sinr_db": num(m.sinr_db),
                "tp_mbps": m.throughput_mbps,
            }
            for (p, c), m in links.items()
        ],
    }


# --- DOT --------------------------------------------------------------------------

def export_dot(design: Design, throughputs: Optional[Dict] = None) -> str:
    """Tree directed away from the hub; PMP links (two or more successors) dashed."""
    rooted = design.rooted
    lines = ["digraph design {", "  node [shape=circle];"]
    for v in range(rooted.n):
        attrs = ' [shape=doublecircle, style=filled, fillcolor=lightgrey, label="%d (hub)"]' % v if v == rooted.hub else ""
        lines.append(f"  {v}{attrs};")
    ch = design.channels.edge_channel
    for p, c in rooted.arcs():
        same = sum(1 for k in rooted.children[p] if ch[k] == ch[c])
        style = "dashed" if same >= 2 else "solid"
        f = design.freqs[c]
        label = f"ch {ch[c]}\\n{f:g} MHz"
        if throughputs and (p, c) in throughputs:
            label += f"\\n{throughputs[(p, c)]:g} Mbps"
        lines.append(f'  {p} -> {c} [style={style}, label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def design_throughputs(path) -> Optional[Dict]:
    data = json.loads(Path(path).read_text())
    if "design" in data:
        data = data["design"]
    out = {}
    for e in data.get("edges", []):
        if "tp_mbps" in e:
            out[(int(e["u"]), int(e["v"]))] = float(e["tp_mbps"])
    return out or None


# --- benchmark ----------------------------------------------------------------------

@dataclass
class BenchmarkRow:
    instance: str
    algorithm: str
    runs: int
    failed: int
    best: Optional[float]
    avg: Optional[float]
    worst: Optional[float]
    min_iterations: Optional[int]
    avg_iterations: Optional[float]
    max_iterations: Optional[int]

    def to_json(self) -> dict:
        return dict(self.__dict__)


def benchmark(instances: Sequence[Instance], algorithms: Sequence[str], repeats: int, seed: int,
              time_limit_s=None, iterations=None, lam=None, kappa: int = DEFAULT_KAPPA) -> List[BenchmarkRow]:
    rows = []
    for inst in sorted(instances, key=lambda i: i.name):
        for alg in sorted(algorithms, key=ALGORITHMS.index):
            values, its, failed = [], [], 0
            for k in range(repeats):
                try:
                    res = solve(inst, alg, time_limit_s=time_limit_s, iterations=iterations, lam=lam, kappa=kappa)
                except Exception:  # a failed cell is recorded, not fatal
                    failed += 1
                    continue
                values.append(res.value)
                its.append(res.iterations)
            rows.append(BenchmarkRow(
                inst.name, alg, repeats, failed,
                max(values) if values else None,
                statistics.fmean(values) if values else None,
                min(values) if values else None,
                min(its) if its else None,
                statistics.fmean(its) if its else None,
                max(its) if its else None,
            ))
    return rows


SUMMARY_COLUMNS = ["instance", "algorithm", "runs", "failed", "best", "avg", "worst",
                   "min_iterations", "avg_iterations", "max_iterations"]


def write_summary(rows: Iterable[BenchmarkRow], csv_path, json_path, meta: dict) -> None:
    rows = list(rows)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow(["" if getattr(r, c) is None else getattr(r, c) for c in SUMMARY_COLUMNS])
    dump_json({"schema": SUMMARY_SCHEMA, **meta, "rows": [r.to_json() for r in rows]}, json_path)
