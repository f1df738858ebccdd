"""Hashtag-seeded stance labeling over a user-hashtag bipartite graph.

Hashtag nodes are keyed by (period index, tag) so that a tag's seed status
follows the lexicon period its tweet falls in.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import date, datetime, time, timezone
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import yaml

from .records import AgentTimeline, TweetRecord, normalize_hashtag

log = logging.getLogger(__name__)

GENERIC_HASHTAGS = frozenset(
    {"vaccine", "vaccines", "covidvaccine", "covid19vaccine", "coronavaccine", "coronavirusvaccine"}
)

DEFAULT_TAU = 0.001
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 100


class LexiconError(ValueError):
    pass


@dataclass(frozen=True)
class LexiconPeriod:
    start: date
    end: date
    pro: frozenset[str]
    anti: frozenset[str]

    def start_ts(self) -> float:
        return datetime.combine(self.start, time.min, tzinfo=timezone.utc).timestamp()

    def end_ts(self) -> float:
        # inclusive end date
        return datetime.combine(self.end, time.max, tzinfo=timezone.utc).timestamp()


@dataclass(frozen=True)
class HashtagLexicon:
    periods: tuple[LexiconPeriod, ...]

    def __post_init__(self):
        if not self.periods:
            raise LexiconError("lexicon has no periods")
        for p in self.periods:
            if p.end < p.start:
                raise LexiconError(f"period {p.start}..{p.end} ends before it starts")
            both = p.pro & p.anti
            if both:
                raise LexiconError(f"hashtags in both camps for {p.start}..{p.end}: {sorted(both)}")
        ordered = sorted(self.periods, key=lambda p: p.start)
        for a, b in zip(ordered, ordered[1:]):
            if b.start <= a.end:
                raise LexiconError(f"periods {a.start}..{a.end} and {b.start}..{b.end} overlap")
        object.__setattr__(self, "periods", tuple(ordered))

    def period_index(self, timestamp: float) -> int:
        """Index of the period containing ``timestamp``, else the nearest one."""
        best, best_gap = 0, float("inf")
        for i, p in enumerate(self.periods):
            lo, hi = p.start_ts(), p.end_ts()
            if lo <= timestamp <= hi:
                return i
            gap = lo - timestamp if timestamp < lo else timestamp - hi
            if gap < best_gap:
                best, best_gap = i, gap
        return best

    def seed_value(self, period: int, tag: str) -> int:
        p = self.periods[period]
        if tag in p.pro:
            return 1
        if tag in p.anti:
            return -1
        return 0

    def flipped(self) -> "HashtagLexicon":
        return HashtagLexicon(tuple(LexiconPeriod(p.start, p.end, p.anti, p.pro) for p in self.periods))


def _as_date(value) -> date:
    if isinstance(value, datetime):
        return value.date()
    if isinstance(value, date):
        return value
    return date.fromisoformat(str(value))


def lexicon_from_dict(data: Mapping) -> HashtagLexicon:
    periods = []
    for raw in data.get("periods") or []:
        tags = {}
        for camp in ("pro", "anti"):
            normalized = {normalize_hashtag(str(t)) for t in raw.get(camp) or []}
            generic = normalized & GENERIC_HASHTAGS
            if generic:
                log.warning("dropping generic hashtags from %s seeds: %s", camp, sorted(generic))
            tags[camp] = frozenset(normalized - GENERIC_HASHTAGS - {""})
        try:
            start, end = _as_date(raw["start"]), _as_date(raw["end"])
        except (KeyError, ValueError) as exc:
            raise LexiconError(f"bad period bounds: {exc}") from None
        periods.append(LexiconPeriod(start, end, tags["pro"], tags["anti"]))
    return HashtagLexicon(tuple(periods))


def load_lexicon(path=None) -> HashtagLexicon:
    """Load a seed lexicon from YAML; ``None`` loads the bundled default."""
    if path is None:
        text = resources.files("stanceflip.data").joinpath("seed_hashtags.yaml").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return lexicon_from_dict(yaml.safe_load(text) or {})


@dataclass(frozen=True)
class StanceScore:
    value: float
    label: int

    @property
    def confidence(self) -> float:
        return abs(self.value)


def score_to_label(value: float, tau: float = DEFAULT_TAU) -> int:
    if abs(value) < tau:
        return 0
    return 1 if value > 0 else -1


HashtagNode = tuple[int, str]


@dataclass
class BipartiteStanceGraph:
    users: list[str]
    hashtags: list[HashtagNode]
    edges: dict[tuple[str, HashtagNode], int]
    tweet_nodes: dict[str, tuple[HashtagNode, ...]]

    def degree(self, node: HashtagNode) -> int:
        return sum(1 for (_, h) in self.edges if h == node)


def build_bipartite(tweets: Iterable[TweetRecord], lexicon: HashtagLexicon | None = None) -> BipartiteStanceGraph:
    """Edge weight is the number of times a user posted a hashtag.

    Without a lexicon every tweet maps to period 0.
    """
    edges: dict[tuple[str, HashtagNode], int] = {}
    tweet_nodes: dict[str, tuple[HashtagNode, ...]] = {}
    users: dict[str, None] = {}
    tags: dict[HashtagNode, None] = {}
    for t in tweets:
        period = lexicon.period_index(t.timestamp) if lexicon is not None else 0
        nodes = tuple((period, h) for h in t.hashtags)
        tweet_nodes[t.tweet_id] = nodes
        for node in nodes:
            users.setdefault(t.agent_id)
            tags.setdefault(node)
            edges[(t.agent_id, node)] = edges.get((t.agent_id, node), 0) + 1
    return BipartiteStanceGraph(sorted(users), sorted(tags), edges, tweet_nodes)


@dataclass
class PropagationResult:
    users: dict[str, StanceScore]
    hashtags: dict[HashtagNode, StanceScore]
    tweets: dict[str, StanceScore]
    iterations: int
    converged: bool


def propagate(
    graph: BipartiteStanceGraph,
    lexicon: HashtagLexicon,
    tau: float = DEFAULT_TAU,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> PropagationResult:
    """Clamped-seed weighted-average propagation, updated synchronously.

    Each sweep computes user scores from the previous hashtag scores and
    hashtag scores from the previous user scores; seeds are re-clamped to
    +/-1 every sweep. Tweet score is the mean of its hashtag scores.
    """
    nu, nh = len(graph.users), len(graph.hashtags)
    u_idx = {u: i for i, u in enumerate(graph.users)}
    h_idx = {h: i for i, h in enumerate(graph.hashtags)}
    seed = np.array([lexicon.seed_value(p, t) for (p, t) in graph.hashtags], dtype=float)
    is_seed = seed != 0

    u = np.zeros(nu)
    h = np.where(is_seed, seed, 0.0)
    iterations, converged = 0, True
    if not is_seed.any():
        log.warning("no seed hashtags present; every score is unlabeled")
    elif nu and nh:
        rows = np.fromiter((u_idx[a] for (a, _) in graph.edges), dtype=np.int64, count=len(graph.edges))
        cols = np.fromiter((h_idx[b] for (_, b) in graph.edges), dtype=np.int64, count=len(graph.edges))
        w = np.fromiter(graph.edges.values(), dtype=float, count=len(graph.edges))
        W = sp.csr_matrix((w, (rows, cols)), shape=(nu, nh))
        user_step = sp.diags(1.0 / np.asarray(W.sum(axis=1)).ravel()) @ W
        WT = W.T.tocsr()
        tag_step = sp.diags(1.0 / np.asarray(WT.sum(axis=1)).ravel()) @ WT
        converged = False
        for iterations in range(1, max_iter + 1):
            u_new = user_step @ h
            h_new = tag_step @ u
            h_new[is_seed] = seed[is_seed]
            delta = max(np.max(np.abs(u_new - u)), np.max(np.abs(h_new - h)))
            u, h = u_new, h_new
            if delta < tol:
                converged = True
                break
        if not converged:
            log.warning("stance propagation stopped at max_iter=%d without converging", max_iter)

    users = {name: StanceScore(float(u[i]), score_to_label(u[i], tau)) for i, name in enumerate(graph.users)}
    tags = {node: StanceScore(float(h[i]), score_to_label(h[i], tau)) for i, node in enumerate(graph.hashtags)}
    tweets = {}
    for tid, nodes in graph.tweet_nodes.items():
        value = float(np.mean([h[h_idx[n]] for n in nodes])) if nodes else 0.0
        tweets[tid] = StanceScore(value, score_to_label(value, tau))
    return PropagationResult(users, tags, tweets, iterations, converged)


def agent_final_stance(timeline: AgentTimeline, tweet_scores: Mapping[str, StanceScore] | None = None) -> int:
    """Label of the agent's last stance-bearing tweet (0 if none)."""
    if tweet_scores is None:
        labels: Sequence[int] = timeline.stances
    else:
        labels = [tweet_scores[t.tweet_id].label for t in timeline.tweets]
    for s in reversed(labels):
        if s != 0:
            return s
    return 0
