import random

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_two_hop, random_interaction_graph
from stanceflip.graph import (
    InteractionGraph,
    betweenness,
    build_graph,
    centralities,
    connection,
    eigenvector_centrality,
    elbow_hop,
    influence_weights,
    read_edge_csv,
    reciprocity,
    reciprocity_matrix,
    super_scores,
    to_dot,
    two_hop_matrices,
    two_hop_view,
    write_edge_csv,
)
from stanceflip.records import TweetRecord


def _g(pairs, kind="mention"):
    edges = {}
    for a, b in pairs:
        edges[(a, b, kind)] = edges.get((a, b, kind), 0) + 1
    return InteractionGraph([], edges)


def _tw(tid, agent, kind="original", target=None, mentions=()):
    return TweetRecord(tid, agent, 1.0e9, "", (), kind, tuple(mentions), target)


# -- construction ------------------------------------------------------------

def test_build_graph_examples(caplog):
    g = build_graph(
        [
            _tw("1", "A", mentions=["B"]),
            _tw("2", "A", mentions=["B"]),
            _tw("3", "A", "retweet", "A"),
            _tw("4", "C", "reply", "D"),
            _tw("5", "D", mentions=["C"]),
        ],
        agents=["A", "B", "C"],
    )
    assert g.edges[("A", "B", "mention")] == 2
    assert not any(src == dst for src, dst, _ in g.edges)
    assert "D" in g.neighbors["C"] and "C" in g.neighbors["D"]
    assert "stub" in caplog.text


def test_self_loop_rejected():
    with pytest.raises(ValueError):
        InteractionGraph([], {("a", "a", "reply"): 1})


def test_edge_csv_round_trip(tmp_path):
    g = _g([("a", "b"), ("b", "c"), ("a", "b")])
    write_edge_csv(g, tmp_path / "e.csv")
    h = read_edge_csv(tmp_path / "e.csv", g.nodes)
    assert h.edges == g.edges and h.nodes == g.nodes
    assert '"a" -> "b"' in to_dot(g, {"a": {"color": "red"}})


# -- two-hop view ------------------------------------------------------------

def test_star_center_weights():
    g = _g([("c", x) for x in "wxyz"])
    v = two_hop_view(g, "c")
    assert v.first_degree == {x: 0.25 for x in "wxyz"}
    assert v.second_degree == {}


def test_path_weights():
    # A - B - C, with B also linked to D: m_B = 2
    g = _g([("A", "B"), ("B", "C"), ("B", "D")])
    v = two_hop_view(g, "A")
    assert v.first_degree == {"B": 1.0}
    assert v.second_degree == {"C": 0.5, "D": 0.5}
    assert v.m == {"B": 2}


def test_isolated_node():
    g = InteractionGraph(["z"], {})
    v = two_hop_view(g, "z")
    assert v.n == 0 and not v.first_degree and not v.second_degree


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 50), st.floats(0.02, 0.4))
def test_two_hop_against_brute_force(seed, n, p):
    rng = random.Random(seed)
    graph, nxg = random_interaction_graph(rng, n, p)
    for a in graph.nodes:
        v = two_hop_view(graph, a)
        if v.n:
            assert sum(v.first_degree.values()) == pytest.approx(1.0, abs=1e-12)
        assert a not in v.second_degree and not set(v.first_degree) & set(v.second_degree)
        for j, branch in v.branches.items():
            if branch:
                assert sum(v.second_degree[k] for k in branch) >= v.alpha - 1e-12
        # indicator scores pick out one node's total hop weight
        for k in graph.nodes:
            ind = {x: float(x == k) for x in graph.nodes}
            want = brute_force_two_hop(nxg, a, ind)
            got = v.first_degree.get(k, 0.0) + v.second_degree.get(k, 0.0)
            assert got == pytest.approx(want, abs=1e-12)


def test_matrices_match_views():
    graph, _ = random_interaction_graph(random.Random(3), 30, 0.15)
    W1, W2 = two_hop_matrices(graph)
    for a in graph.nodes:
        v = two_hop_view(graph, a)
        i = graph.index[a]
        for j, w in v.first_degree.items():
            assert W1[i, graph.index[j]] == w
        for k, w in v.second_degree.items():
            assert W2[i, graph.index[k]] == pytest.approx(w, abs=1e-15)


# -- hop decay ------------------------------------------------------------

def test_hop_one_total_is_one():
    graph, _ = random_interaction_graph(random.Random(1), 20, 0.2)
    for a in graph.nodes:
        if graph.neighbors[a]:
            assert influence_weights(graph, a, 3).totals[0] == pytest.approx(1.0)


def test_chain_hop_weights():
    # a - b - c - d : each node passes everything to its single child
    g = _g([("a", "b"), ("b", "c"), ("c", "d")])
    assert influence_weights(g, "a", 3).totals == [1.0, 1.0, 1.0]
    # from b the first hop splits in half; only c's half continues to d
    hw = influence_weights(g, "b", 2)
    assert hw.totals == [1.0, 0.5] and hw.per_neighbor == [0.5, 0.5]


def test_regular_tree_decay():
    g = nx.balanced_tree(2, 4)
    graph = _g([(str(u), str(v)) for u, v in g.edges])
    per = influence_weights(graph, "0", 4).per_neighbor
    assert per == [0.5, 0.25, 0.125, 0.0625]
    assert all(x >= y for x, y in zip(per, per[1:]))


def test_elbow():
    assert elbow_hop([1.0, 0.3, 0.2, 0.15, 0.1]) == 2
    assert elbow_hop([1.0, 0.5]) == 1


# -- centralities ------------------------------------------------------------

def test_eigenvector_examples():
    pair = eigenvector_centrality(_g([("a", "b")]))
    assert pair["a"] == pytest.approx(pair["b"])
    star = eigenvector_centrality(InteractionGraph(["solo"], {("c", x, "reply"): 1 for x in "wxyz"}))
    assert star["c"] == 1.0
    assert star["w"] == pytest.approx(0.5, abs=1e-6)  # leaf/center = 1/sqrt(4)
    assert star["solo"] == 0.0


def test_eigenvector_relabel_invariant():
    graph, nxg = random_interaction_graph(random.Random(5), 25, 0.2)
    base = eigenvector_centrality(graph)
    perm = list(graph.nodes)
    random.Random(0).shuffle(perm)
    rename = dict(zip(graph.nodes, perm))
    moved = InteractionGraph([rename[a] for a in graph.nodes], {(rename[s], rename[d], k): c for (s, d, k), c in graph.edges.items()})
    other = eigenvector_centrality(moved)
    for a in graph.nodes:
        assert other[rename[a]] == pytest.approx(base[a], abs=1e-6)


def test_betweenness_examples():
    assert betweenness(_g([("A", "B"), ("B", "C")])) == {"A": 0.0, "B": 1.0, "C": 0.0}
    assert set(betweenness(_g([("a", "b"), ("b", "c"), ("a", "c")])).values()) == {0.0}
    assert betweenness(_g([("c", x) for x in "wxyz"]))["c"] == 6.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 40), st.integers(1, 300))
def test_betweenness_matches_networkx(seed, n, batch):
    graph, nxg = random_interaction_graph(random.Random(seed), n, 0.15)
    ours = betweenness(graph, batch_size=batch)
    ref = nx.betweenness_centrality(nxg, normalized=False)
    for a in graph.nodes:
        assert ours[a] == pytest.approx(ref[a], abs=1e-9)


def test_betweenness_on_trees_pair_count():
    t = nx.random_labeled_tree(15, seed=2) if hasattr(nx, "random_labeled_tree") else nx.random_tree(15, seed=2)
    graph = _g([(f"t{u:02d}", f"t{v:02d}") for u, v in t.edges])
    ours = betweenness(graph)
    for v in t.nodes:
        # on a tree, v lies on the path of every pair split across two of its branches
        sizes = [len(c) for c in nx.connected_components(t.subgraph(set(t.nodes) - {v}))]
        closed = (sum(sizes) ** 2 - sum(s * s for s in sizes)) / 2
        assert ours[f"t{v:02d}"] == closed


def test_threaded_betweenness_same():
    graph, _ = random_interaction_graph(random.Random(8), 40, 0.1)
    assert betweenness(graph, batch_size=7, threads=3) == betweenness(graph, batch_size=7)


def test_super_scores_examples():
    g = InteractionGraph(
        ["iso"],
        {
            ("x", "hub", "retweet"): 1, ("y", "hub", "retweet"): 1,
            ("f", "p", "reply"): 1, ("p", "f", "reply"): 1,
            ("f", "q", "reply"): 1, ("q", "f", "mention"): 1,
            ("f", "r", "reply"): 2, ("r", "f", "reply"): 1,
        },
    )
    sup = super_scores(g)
    assert sup["hub"][0] == 0
    assert sup["f"][1] == 3
    assert sup["iso"] == (0, 0)
    cv = centralities(g, {"f": 12})
    assert cv["f"].followers == 12 and cv["f"].total_degree == 6


# -- connection and reciprocity ---------------------------------------------------

def test_connection_examples():
    g = _g([("a", x) for x in "bcdez"])
    st_ = {"a": 1, "b": 1, "c": 1, "d": 1, "e": -1, "z": 0}
    assert connection(g, "a", st_) == (0.75, 4)
    assert connection(g, "a", {"a": 1, "b": 1}).value == 1.0
    c = connection(g, "a", {"a": 1})
    assert c.value == 0.0 and not c.defined


def test_reciprocity_examples():
    g = InteractionGraph([], {("a", "b", "reply"): 3, ("b", "a", "mention"): 2, ("b", "a", "retweet"): 4, ("c", "a", "reply"): 1})
    assert reciprocity(g, "a", "b").R == 6
    assert reciprocity(g, "a", "c").R == 0
    assert reciprocity(g, "b", "c").R == 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_reciprocity_symmetric(seed):
    graph, _ = random_interaction_graph(random.Random(seed), 15, 0.3)
    R = reciprocity_matrix(graph)
    assert (R != R.T).nnz == 0
    for a in graph.nodes[:5]:
        for b in graph.nodes:
            if a != b:
                r = reciprocity(graph, a, b)
                assert r == reciprocity(graph, b, a)
                assert r.R % 2 == 0 and R[graph.index[a], graph.index[b]] == r.R
