"""Collective expression: agent pairs that repeatedly post the same hashtag
within a short window, and the 2-hop neighborhood statistics built on them."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .graph import InteractionGraph, two_hop_view
from .records import TweetRecord

log = logging.getLogger(__name__)

WINDOW = 300.0


@dataclass(frozen=True)
class ActionEvent:
    agent_id: str
    hashtag: str
    timestamp: float


@dataclass(frozen=True)
class PairSimilarity:
    a: str
    b: str
    count: int

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"pair must be ordered and distinct: {self.a!r}, {self.b!r}")


def events_from_tweets(tweets: Iterable[TweetRecord]) -> list[ActionEvent]:
    return [ActionEvent(t.agent_id, h, t.timestamp) for t in tweets for h in t.hashtags]


def pair_counts(events: Iterable[ActionEvent], window: float = WINDOW) -> list[PairSimilarity]:
    """Count, per hashtag, unordered event pairs by different agents with
    |dt| <= window. Result is sorted by (a, b)."""
    by_tag: dict[str, list[ActionEvent]] = {}
    for e in events:
        by_tag.setdefault(e.hashtag, []).append(e)
    agents = sorted({e.agent_id for evs in by_tag.values() for e in evs})
    code = {a: i for i, a in enumerate(agents)}
    n = len(agents)
    keys = []
    for tag in sorted(by_tag):
        evs = by_tag[tag]
        t = np.array([e.timestamp for e in evs], dtype=float)
        a = np.array([code[e.agent_id] for e in evs], dtype=np.int64)
        order = np.argsort(t, kind="stable")
        t, a = t[order], a[order]
        # events i < j with t[j] - t[i] <= window form a contiguous run after i
        hi = np.searchsorted(t, t + window, side="right")
        span = hi - np.arange(len(t)) - 1
        total = int(span.sum())
        if total == 0:
            continue
        ii = np.repeat(np.arange(len(t)), span)
        start = np.cumsum(span) - span
        jj = ii + 1 + (np.arange(total) - start[ii])
        ai, aj = a[ii], a[jj]
        keep = ai != aj
        lo = np.minimum(ai[keep], aj[keep])
        up = np.maximum(ai[keep], aj[keep])
        keys.append(lo * n + up)
    if not keys:
        return []
    uniq, counts = np.unique(np.concatenate(keys), return_counts=True)
    return [PairSimilarity(agents[k // n], agents[k % n], int(c)) for k, c in zip(uniq.tolist(), counts.tolist())]


@dataclass(frozen=True)
class Threshold:
    mean: float
    std: float

    @property
    def cutoff(self) -> float:
        return self.mean + self.std


def pair_threshold(pairs: Sequence[PairSimilarity], sample_std: bool = False) -> Threshold:
    counts = np.array([p.count for p in pairs], dtype=float)
    ddof = 1 if sample_std and len(counts) > 1 else 0
    return Threshold(float(counts.mean()), float(counts.std(ddof=ddof)))


def threshold_pairs(pairs: Sequence[PairSimilarity], sample_std: bool = False) -> list[PairSimilarity]:
    """Keep pairs whose count is at least mean + 1 standard deviation."""
    if not pairs:
        return []
    cut = pair_threshold(pairs, sample_std).cutoff
    return [p for p in pairs if p.count >= cut]


def flag_agents(retained: Iterable[PairSimilarity], agents: Iterable[str] = ()) -> dict[str, bool]:
    flags = {a: False for a in agents}
    for p in retained:
        flags[p.a] = True
        flags[p.b] = True
    return flags


def write_pairs(path, pairs: Sequence[PairSimilarity], retained: Iterable[PairSimilarity]) -> None:
    kept = {(p.a, p.b) for p in retained}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["agent1", "agent2", "count", "retained"])
        for p in pairs:
            w.writerow([p.a, p.b, p.count, int((p.a, p.b) in kept)])


@dataclass(frozen=True)
class NeighborhoodStats:
    agent_id: str
    size: int
    bots: float
    opposite: float
    collective: float
    collective_opposite: float

    @property
    def empty(self) -> bool:
        return self.size == 0


def neighborhood_stats(
    agent: str,
    graph: InteractionGraph,
    flags: Mapping[str, bool],
    stances: Mapping[str, int],
    bot_flags: Mapping[str, bool],
    own_stance: int | None = None,
) -> NeighborhoodStats:
    """Proportions over the union of first- and second-degree neighbors.

    A neighbor is opposite when both it and the focal agent are labeled and
    their stances differ.
    """
    view = two_hop_view(graph, agent)
    hood = sorted(set(view.first_degree) | set(view.second_degree))
    if not hood:
        return NeighborhoodStats(agent, 0, 0.0, 0.0, 0.0, 0.0)
    own = stances.get(agent, 0) if own_stance is None else own_stance
    n = len(hood)
    opposite = [own != 0 and stances.get(b, 0) == -own for b in hood]
    engaged = [bool(flags.get(b, False)) for b in hood]
    return NeighborhoodStats(
        agent,
        n,
        sum(bool(bot_flags.get(b, False)) for b in hood) / n,
        sum(opposite) / n,
        sum(engaged) / n,
        sum(o and e for o, e in zip(opposite, engaged)) / n,
    )
