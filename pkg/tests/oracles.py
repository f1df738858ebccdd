"""Independent reference computations used by the tests.

Nothing here imports the package's own graph or influence code.
"""

import itertools
import math
import random

import networkx as nx

from stanceflip.graph import InteractionGraph


def random_interaction_graph(rng: random.Random, n: int, p: float) -> tuple[InteractionGraph, nx.Graph]:
    """A random directed multigraph and its undirected simple projection."""
    nodes = [f"n{i:02d}" for i in range(n)]
    g = nx.Graph()
    g.add_nodes_from(nodes)
    edges = {}
    for a, b in itertools.combinations(nodes, 2):
        if rng.random() < p:
            src, dst = (a, b) if rng.random() < 0.5 else (b, a)
            kind = rng.choice(["mention", "retweet", "quote", "reply"])
            edges[(src, dst, kind)] = rng.randint(1, 3)
            g.add_edge(a, b)
            if rng.random() < 0.3:
                edges[(dst, src, "reply")] = rng.randint(1, 2)
    return InteractionGraph(nodes, edges), g


def brute_force_two_hop(g: nx.Graph, focal: str, scores: dict, second: bool = True) -> float:
    """Enumerate every 1-hop path and every focal-j-k path to a node k that is
    neither the focal agent nor a first-degree neighbor."""
    first = set(g.neighbors(focal))
    if not first:
        return 0.0
    n = len(first)
    total = 0.0
    for j in first:
        total += scores[j] / n
        if not second:
            continue
        onward = [k for k in g.neighbors(j) if k != focal and k not in first]
        for k in onward:
            total += scores[k] / n / len(onward)
    return total


def welch_by_hand(a, b):
    """t and Welch-Satterthwaite df straight from the textbook formulas."""
    na, nb = len(a), len(b)
    ma, mb = sum(a) / na, sum(b) / nb
    va = sum((x - ma) ** 2 for x in a) / (na - 1)
    vb = sum((x - mb) ** 2 for x in b) / (nb - 1)
    se2 = va / na + vb / nb
    t = (ma - mb) / math.sqrt(se2)
    df = se2**2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    return t, df
