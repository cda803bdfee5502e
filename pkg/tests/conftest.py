import math
import random

import pytest

from tacnet.configuration import all_partitions
from tacnet.model import Instance, Node, Topology, is_valid_hub, root_at
from tacnet.report import generate_instance


def random_tree_edges(n, rng):
    """Uniform random labelled tree (Pruefer decoding, independent of the library's)."""
    if n == 2:
        return [(0, 1)]
    seq = [rng.randrange(n) for _ in range(n - 2)]
    degree = [1] * n
    for x in seq:
        degree[x] += 1
    edges = []
    for x in seq:
        leaf = next(v for v in range(n) if degree[v] == 1)
        edges.append((leaf, x))
        degree[leaf] -= 1
        degree[x] -= 1
    u, v = [w for w in range(n) if degree[w] == 1]
    edges.append((u, v))
    return edges


def random_instance(n, seed, area=3000.0, **kw):
    return generate_instance(n, area, seed, **kw)


def random_rooted(inst, rng, max_degree=11):
    n = inst.n
    while True:
        t = Topology.from_edges(random_tree_edges(n, rng), n)
        if max(t.degrees) <= max_degree and not (t.edges & inst.evaluator.e_not):
            break
    hubs = [v for v in range(n) if is_valid_hub(t, v)]
    return root_at(t, rng.choice(hubs))


def random_layout_choice(inst, rng):
    """(rooted, partition, flip) drawn at random."""
    rooted = random_rooted(inst, rng)
    part = rng.choice(all_partitions(rooted.topology.adjacency[rooted.hub]))
    return rooted, part, rng.random() < 0.5


@pytest.fixture
def rng():
    return random.Random(12345)


def collinear_instance(n, spacing=100.0):
    return Instance(tuple(Node(i, i * spacing, 0.0) for i in range(n)))
