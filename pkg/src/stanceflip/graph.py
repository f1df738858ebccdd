"""Agent interaction graph, hop-decayed neighbor weights and centralities.

The neighbor relation is undirected: two agents are neighbors if either one
mentioned, replied to, retweeted or quoted the other.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

import numpy as np
import scipy.sparse as sp

from .records import TweetRecord

log = logging.getLogger(__name__)

EDGE_KINDS = ("mention", "retweet", "quote", "reply")
SPREAD_KINDS = frozenset({"retweet", "mention", "quote"})


@dataclass
class InteractionGraph:
    nodes: list[str]
    edges: dict[tuple[str, str, str], int]
    index: dict[str, int] = field(init=False, repr=False)
    neighbors: dict[str, frozenset[str]] = field(init=False, repr=False)
    out_counts: dict[str, dict[str, int]] = field(init=False, repr=False)

    def __post_init__(self):
        self.nodes = sorted(set(self.nodes) | {e[0] for e in self.edges} | {e[1] for e in self.edges})
        self.index = {a: i for i, a in enumerate(self.nodes)}
        nbrs: dict[str, set[str]] = {a: set() for a in self.nodes}
        out: dict[str, dict[str, int]] = {a: {} for a in self.nodes}
        for (src, dst, kind), count in self.edges.items():
            if src == dst:
                raise ValueError(f"self-loop on {src!r}")
            if count < 1:
                raise ValueError("edge counts must be >= 1")
            if kind not in EDGE_KINDS:
                raise ValueError(f"unknown edge kind {kind!r}")
            nbrs[src].add(dst)
            nbrs[dst].add(src)
            out[src][dst] = out[src].get(dst, 0) + count
        self.neighbors = {a: frozenset(s) for a, s in nbrs.items()}
        self.out_counts = out
        self._adj = None

    def __contains__(self, agent: str) -> bool:
        return agent in self.index

    def directed_count(self, src: str, dst: str) -> int:
        return self.out_counts.get(src, {}).get(dst, 0)

    def adjacency(self) -> sp.csr_matrix:
        """Binary symmetric adjacency of the undirected simple projection."""
        if self._adj is None:
            n = len(self.nodes)
            rows, cols = [], []
            for a, nb in self.neighbors.items():
                i = self.index[a]
                for b in nb:
                    rows.append(i)
                    cols.append(self.index[b])
            data = np.ones(len(rows))
            self._adj = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        return self._adj


def build_graph(
    tweets: Iterable[TweetRecord], agents: Iterable[str] | None = None
) -> InteractionGraph:
    """One edge per (src, dst, kind) with aggregated counts; self-loops dropped.

    When ``agents`` is given, every listed agent becomes a node and ids seen
    only in tweets are added as stub nodes with a warning.
    """
    edges: dict[tuple[str, str, str], int] = {}
    seen: set[str] = set()

    def add(src, dst, kind):
        if src == dst:
            return
        edges[(src, dst, kind)] = edges.get((src, dst, kind), 0) + 1

    for t in tweets:
        seen.add(t.agent_id)
        if t.target_agent is not None and t.kind in ("retweet", "quote", "reply"):
            add(t.agent_id, t.target_agent, t.kind)
            seen.add(t.target_agent)
        for m in t.mentioned_agents:
            add(t.agent_id, m, "mention")
            seen.add(m)
    nodes = set(seen)
    if agents is not None:
        known = set(agents)
        stubs = sorted(nodes - known)
        if stubs:
            log.warning("%d agents referenced in tweets lack metadata; added as stub nodes", len(stubs))
        nodes |= known
    return InteractionGraph(sorted(nodes), edges)


@dataclass(frozen=True)
class TwoHopView:
    agent: str
    first_degree: dict[str, float]
    second_degree: dict[str, float]
    branches: dict[str, tuple[str, ...]]

    @property
    def n(self) -> int:
        return len(self.first_degree)

    @property
    def alpha(self) -> float:
        return 1.0 / self.n if self.n else 0.0

    @property
    def m(self) -> dict[str, int]:
        return {j: len(b) for j, b in self.branches.items()}


def two_hop_view(graph: InteractionGraph, agent: str) -> TwoHopView:
    """Equal-share weights for first- and second-degree neighbors.

    Each of the n first-degree neighbors gets 1/n. A first-degree neighbor j
    passes its 1/n on equally to its m_j neighbors that are neither the focal
    agent nor first-degree; a node reached through several branches sums them.
    """
    if agent not in graph:
        raise KeyError(agent)
    first = sorted(graph.neighbors[agent])
    if not first:
        return TwoHopView(agent, {}, {}, {})
    alpha = 1.0 / len(first)
    excluded = set(first) | {agent}
    second: dict[str, float] = {}
    branches = {}
    for j in first:
        branch = tuple(sorted(graph.neighbors[j] - excluded))
        branches[j] = branch
        if branch:
            w = alpha / len(branch)
            for k in branch:
                second[k] = second.get(k, 0.0) + w
    return TwoHopView(agent, {j: alpha for j in first}, second, branches)


def two_hop_matrices(graph: InteractionGraph) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Sparse (W1, W2) with W1[i, j] and W2[i, k] the hop-1 and hop-2 weights of
    ``two_hop_view`` for every focal agent i, so that hop sums are matvecs."""
    n = len(graph.nodes)
    idx = graph.index
    r1, c1, v1, r2, c2, v2 = [], [], [], [], [], []
    for agent in graph.nodes:
        view = two_hop_view(graph, agent)
        i = idx[agent]
        for j, w in view.first_degree.items():
            r1.append(i)
            c1.append(idx[j])
            v1.append(w)
        for k, w in view.second_degree.items():
            r2.append(i)
            c2.append(idx[k])
            v2.append(w)
    W1 = sp.csr_matrix((v1, (r1, c1)), shape=(n, n))
    W2 = sp.csr_matrix((v2, (r2, c2)), shape=(n, n))
    return W1, W2


@dataclass(frozen=True)
class HopWeights:
    totals: list[float]
    counts: list[int]

    @property
    def per_neighbor(self) -> list[float]:
        return [t / c if c else 0.0 for t, c in zip(self.totals, self.counts)]


def influence_weights(graph: InteractionGraph, agent: str, max_depth: int) -> HopWeights:
    """Per-hop influence totals generalizing the two-hop scheme to any depth.

    Weight flows outward along BFS layers: a node at hop d splits what it
    received equally among its neighbors at hop d+1.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    visited = {agent}
    layer = {agent: 1.0}
    totals, counts = [], []
    for _ in range(max_depth):
        nxt: dict[str, float] = {}
        children_of = {}
        for node in sorted(layer):
            kids = sorted(graph.neighbors[node] - visited)
            children_of[node] = kids
        for node, kids in children_of.items():
            if kids:
                share = layer[node] / len(kids)
                for k in kids:
                    nxt[k] = nxt.get(k, 0.0) + share
        totals.append(sum(nxt.values()))
        counts.append(len(nxt))
        visited |= nxt.keys()
        layer = nxt
    return HopWeights(totals, counts)


def elbow_hop(curve: list[float]) -> int:
    """1-based hop at the elbow: the point farthest below the chord from the
    first to the last point of a decreasing curve."""
    y = np.asarray(curve, dtype=float)
    if y.size < 3:
        return 1
    x = np.arange(1, y.size + 1, dtype=float)
    x0, y0, x1, y1 = x[0], y[0], x[-1], y[-1]
    chord = y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    return int(x[np.argmax(chord - y)])


def eigenvector_centrality(graph: InteractionGraph, tol: float = 1e-8, max_iter: int = 1000) -> dict[str, float]:
    """Power iteration on (A + I) from the all-ones vector, max-normalized.

    The identity shift keeps bipartite components from oscillating without
    changing the eigenvectors. Isolated agents score 0.
    """
    n = len(graph.nodes)
    if n == 0:
        return {}
    A = graph.adjacency()
    deg = np.asarray(A.sum(axis=1)).ravel()
    x = np.where(deg > 0, 1.0, 0.0)
    if not x.any():
        return {a: 0.0 for a in graph.nodes}
    x /= np.linalg.norm(x)
    for _ in range(max_iter):
        x_new = A @ x + x
        x_new /= np.linalg.norm(x_new)
        if np.abs(x_new - x).sum() < n * tol:
            x = x_new
            break
        x = x_new
    else:
        log.warning("eigenvector centrality did not converge in %d iterations", max_iter)
    x = x / x.max()
    return {a: float(x[i]) for i, a in enumerate(graph.nodes)}


def _brandes_batch(A: sp.csr_matrix, sources: np.ndarray) -> np.ndarray:
    """Dependency sums for a batch of BFS sources, level-synchronously."""
    n, b = A.shape[0], len(sources)
    cols = np.arange(b)
    sigma = np.zeros((n, b))
    dist = np.full((n, b), -1, dtype=np.int32)
    sigma[sources, cols] = 1.0
    dist[sources, cols] = 0
    frontier = sigma.copy()
    depth = 0
    while True:
        reach = A @ frontier
        new = (reach > 0) & (dist < 0)
        if not new.any():
            break
        depth += 1
        dist[new] = depth
        sigma[new] = reach[new]
        frontier = np.where(new, reach, 0.0)
    delta = np.zeros((n, b))
    safe_sigma = np.where(sigma > 0, sigma, 1.0)
    for d in range(depth, 0, -1):
        coeff = np.where(dist == d, (1.0 + delta) / safe_sigma, 0.0)
        back = A @ coeff
        delta += np.where(dist == d - 1, sigma * back, 0.0)
    delta[sources, cols] = 0.0
    return delta.sum(axis=1)


def betweenness(graph: InteractionGraph, batch_size: int = 256, threads: int = 1) -> dict[str, float]:
    """Unnormalized shortest-path betweenness on the undirected projection.

    Each unordered pair of endpoints is counted once.
    """
    n = len(graph.nodes)
    if n == 0:
        return {}
    A = graph.adjacency()
    batches = [np.arange(s, min(s + batch_size, n)) for s in range(0, n, batch_size)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda src: _brandes_batch(A, src), batches))
    else:
        parts = [_brandes_batch(A, src) for src in batches]
    total = np.zeros(n)
    for p in parts:
        total += p
    total /= 2.0
    return {a: float(total[i]) for i, a in enumerate(graph.nodes)}


def super_scores(graph: InteractionGraph) -> dict[str, tuple[int, int]]:
    """(super_spreader, super_friend) per agent.

    super_spreader counts distinct agents reached by outgoing retweet, mention
    or quote edges; super_friend counts neighbors with edges in both directions.
    """
    spread: dict[str, set[str]] = {a: set() for a in graph.nodes}
    for (src, dst, kind) in graph.edges:
        if kind in SPREAD_KINDS:
            spread[src].add(dst)
    out = {}
    for a in graph.nodes:
        friends = sum(1 for b in graph.neighbors[a] if graph.directed_count(a, b) and graph.directed_count(b, a))
        out[a] = (len(spread[a]), friends)
    return out


def total_degree(graph: InteractionGraph) -> dict[str, int]:
    """Out-degree plus in-degree of the directed simple projection."""
    deg = {a: len(graph.out_counts[a]) for a in graph.nodes}
    for a in graph.nodes:
        for b in graph.out_counts[a]:
            deg[b] += 1
    return deg


@dataclass(frozen=True)
class CentralityVector:
    followers: int
    eigenvector: float
    total_degree: int
    betweenness: float
    super_friend: float
    super_spreader: float


def centralities(
    graph: InteractionGraph, followers: Mapping[str, int] | None = None, threads: int = 1
) -> dict[str, CentralityVector]:
    followers = followers or {}
    eig = eigenvector_centrality(graph)
    btw = betweenness(graph, threads=threads)
    sup = super_scores(graph)
    deg = total_degree(graph)
    return {
        a: CentralityVector(
            followers=int(followers.get(a, 0)),
            eigenvector=eig[a],
            total_degree=deg[a],
            betweenness=btw[a],
            super_friend=float(sup[a][1]),
            super_spreader=float(sup[a][0]),
        )
        for a in graph.nodes
    }


class Connection(NamedTuple):
    value: float
    labeled_neighbors: int

    @property
    def defined(self) -> bool:
        return self.labeled_neighbors > 0


def connection(
    graph: InteractionGraph, agent: str, stances: Mapping[str, int], own_stance: int | None = None
) -> Connection:
    """Share of labeled first-degree neighbors holding the agent's stance.

    Zero labeled neighbors (or an unlabeled agent) gives 0 with
    ``labeled_neighbors == 0``.
    """
    own = stances.get(agent, 0) if own_stance is None else own_stance
    labeled = [stances.get(b, 0) for b in graph.neighbors[agent]]
    labeled = [s for s in labeled if s != 0]
    if not labeled or own == 0:
        return Connection(0.0, 0 if own == 0 else len(labeled))
    return Connection(sum(1 for s in labeled if s == own) / len(labeled), len(labeled))


@dataclass(frozen=True)
class ReciprocityCount:
    pair: tuple[str, str]
    reciprocal_interactions: int

    @property
    def R(self) -> int:
        return 2 * self.reciprocal_interactions


def reciprocity(graph: InteractionGraph, a: str, b: str) -> ReciprocityCount:
    if a not in graph or b not in graph:
        raise KeyError(a if a not in graph else b)
    k = min(graph.directed_count(a, b), graph.directed_count(b, a))
    return ReciprocityCount(tuple(sorted((a, b))), k)


def reciprocity_matrix(graph: InteractionGraph) -> sp.csr_matrix:
    """Sparse symmetric matrix of R = 2 x reciprocal interactions."""
    n = len(graph.nodes)
    rows, cols, vals = [], [], []
    for a in graph.nodes:
        for b, ab in graph.out_counts[a].items():
            ba = graph.directed_count(b, a)
            if ba:
                rows.append(graph.index[a])
                cols.append(graph.index[b])
                vals.append(2.0 * min(ab, ba))
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def write_edge_csv(graph: InteractionGraph, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["src", "dst", "kind", "count"])
        for (src, dst, kind) in sorted(graph.edges):
            w.writerow([src, dst, kind, graph.edges[(src, dst, kind)]])


def read_edge_csv(path, nodes: Iterable[str] = ()) -> InteractionGraph:
    edges = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            edges[(row["src"], row["dst"], row["kind"])] = int(row["count"])
    return InteractionGraph(list(nodes), edges)


def to_dot(graph: InteractionGraph, node_attrs: Mapping[str, Mapping[str, str]] | None = None) -> str:
    node_attrs = node_attrs or {}
    lines = ["digraph interactions {"]
    for a in graph.nodes:
        attrs = node_attrs.get(a)
        if attrs:
            body = ", ".join(f'{k}="{v}"' for k, v in sorted(attrs.items()))
            lines.append(f'  "{a}" [{body}];')
        else:
            lines.append(f'  "{a}";')
    for (src, dst, kind) in sorted(graph.edges):
        lines.append(f'  "{src}" -> "{dst}" [label="{kind}", weight={graph.edges[(src, dst, kind)]}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
