"""Seeded synthetic corpora with planted flippers, bots and coordinated pairs.

Agents sit in one of two interaction communities keyed by their final
stance, grown by preferential attachment. A planted flipper therefore spends
its history surrounded by the camp it ends up joining. Flippers heading to
the same camp also form small circles of repeated two-way reshares, which
are the only two-way ties unless ``background_reciprocity`` adds some.
Coordinated pairs retweet popular accounts of their camp with the same
hashtag seconds apart, repeatedly.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Mapping

import numpy as np

from .records import AgentRecord, TweetRecord, write_agents, write_tweets
from .stance import GENERIC_HASHTAGS, HashtagLexicon, load_lexicon

log = logging.getLogger(__name__)

START = datetime(2020, 4, 1, tzinfo=timezone.utc).timestamp()
END = datetime(2021, 3, 31, 23, 0, tzinfo=timezone.utc).timestamp()

_FILLER = (
    "the vaccine is here today people get news rollout dose shot clinic week "
    "trial data report update county state health public line wait"
).split()
_PRO_WORDS = "good safe effective hope grateful proud protect trust thanks glad".split()
_ANTI_WORDS = "fear danger risk harm poison scam fake lies sick worst".split()
_PRONOUNS = "i we you they my our your their he she it".split()
_FAMILY = "family mom dad kids parents".split()
_EXCLUSIVE = "but only unless without".split()
_ABUSIVE = "idiots stupid damn hell".split()


@dataclass
class SynthConfig:
    n_agents: int = 5000
    pro_fraction: float = 0.90
    bot_fraction: float = 0.32
    flip_fraction: float = 0.01
    pro_to_anti_share: float = 0.612
    bot_share_of_flippers: float = 0.537
    self_declared_fraction: float = 0.016
    single_tweet_fraction: float = 0.20
    mean_extra_tweets: float = 2.0
    waverer_fraction: float = 0.02
    network: str = "pa"  # "pa" or "er"
    attach_m: int = 3
    cross_fraction: float = 0.02
    reshare_fraction: float = 0.35
    background_reciprocity: float = 0.0  # chance a non-flipper adds one two-way tie
    flipper_ties: int = 3
    flipper_tie_rounds: int = 2
    coordinated_pairs: int | None = None
    coordination_rounds: int = 5
    trending_bursts: int | None = None  # default n_agents // 25
    burst_size: int = 4
    noise_tweets: int = 200
    seed: int = 0

    def __post_init__(self):
        for name in (
            "pro_fraction",
            "bot_fraction",
            "flip_fraction",
            "pro_to_anti_share",
            "bot_share_of_flippers",
            "self_declared_fraction",
            "single_tweet_fraction",
            "waverer_fraction",
            "cross_fraction",
            "reshare_fraction",
            "background_reciprocity",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.n_agents < 10:
            raise ValueError("n_agents must be at least 10")
        if self.network not in ("pa", "er"):
            raise ValueError("network must be 'pa' or 'er'")
        if self.attach_m < 1:
            raise ValueError("attach_m must be >= 1")

    @property
    def n_coordinated(self) -> int:
        if self.coordinated_pairs is not None:
            return self.coordinated_pairs
        return max(1, self.n_agents // 200)

    @property
    def n_bursts(self) -> int:
        return self.n_agents // 25 if self.trending_bursts is None else self.trending_bursts


@dataclass
class AgentTruth:
    agent_id: str
    initial_stance: int
    final_stance: int
    bot: bool
    flipped: bool
    direction: str
    coordinated: bool
    n_stance_tweets: int

    @property
    def eligible(self) -> bool:
        return self.n_stance_tweets >= 2


@dataclass
class GroundTruth:
    agents: dict[str, AgentTruth]
    coordinated_pairs: list[tuple[str, str]] = field(default_factory=list)

    def flippers(self) -> list[str]:
        return sorted(a for a, t in self.agents.items() if t.flipped)


@dataclass
class SynthDataset:
    tweets: list[TweetRecord]
    agents: list[AgentRecord]
    truth: GroundTruth
    config: SynthConfig


def _pa_edges(members: np.ndarray, m: int, rng) -> list[tuple[int, int]]:
    """Preferential attachment: each newcomer links to m distinct earlier
    members picked proportionally to degree. Edges point newcomer -> target."""
    edges = []
    if len(members) < 2:
        return edges
    core = min(m + 1, len(members))
    targets_pool: list[int] = []
    for i in range(1, core):
        for j in range(i):
            edges.append((int(members[i]), int(members[j])))
            targets_pool += [int(members[i]), int(members[j])]
    for i in range(core, len(members)):
        chosen: set[int] = set()
        while len(chosen) < min(m, i):
            chosen.add(targets_pool[rng.integers(len(targets_pool))])
        new = int(members[i])
        for t in sorted(chosen):
            edges.append((new, t))
            targets_pool += [new, t]
    return edges


def _er_edges(members: np.ndarray, m: int, rng) -> list[tuple[int, int]]:
    n = len(members)
    if n < 2:
        return []
    k = min(m * n, n * (n - 1) // 2)
    seen: set[tuple[int, int]] = set()
    edges = []
    while len(edges) < k:
        i, j = rng.integers(n, size=2)
        if i == j:
            continue
        a, b = int(members[max(i, j)]), int(members[min(i, j)])
        if (a, b) in seen:
            continue
        seen.add((a, b))
        edges.append((a, b))
    return edges


def _vaccine_tags(lexicon: HashtagLexicon) -> list[tuple[list[str], list[str]]]:
    return [
        (sorted(t for t in p.pro if "vaccine" in t), sorted(t for t in p.anti if "vaccine" in t))
        for p in lexicon.periods
    ]


def _text(rng, stance: int, bot: bool) -> str:
    words = list(rng.choice(_FILLER, size=int(rng.integers(4, 12))))
    camp = _PRO_WORDS if stance > 0 else _ANTI_WORDS
    words += list(rng.choice(camp, size=int(rng.integers(0, 3))))
    for pool, p in ((_PRONOUNS, 0.7), (_FAMILY, 0.15), (_EXCLUSIVE, 0.3), (_ABUSIVE, 0.1 if stance > 0 else 0.25)):
        if rng.random() < p:
            words.append(str(rng.choice(pool)))
    words = [str(words[i]) for i in rng.permutation(len(words))]
    end = "!" * int(rng.integers(1, 4)) if (bot or rng.random() < 0.3) else "."
    if len(words) > 3 and rng.random() < 0.5:
        cut = int(rng.integers(1, len(words)))
        return " ".join(words[:cut]) + ". " + " ".join(words[cut:]) + end
    return " ".join(words) + end


def generate(config: SynthConfig | None = None, lexicon: HashtagLexicon | None = None) -> SynthDataset:
    cfg = config or SynthConfig()
    lex = lexicon or load_lexicon()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_agents
    ids = [f"a{i:05d}" for i in range(n)]
    tags = _vaccine_tags(lex)
    generic = sorted(GENERIC_HASHTAGS)

    # final stance, flippers and their direction
    perm = rng.permutation(n)
    n_pro = round(cfg.pro_fraction * n)
    final = np.full(n, -1)
    final[perm[:n_pro]] = 1
    n_flip = round(cfg.flip_fraction * n)
    n_p2a = round(cfg.pro_to_anti_share * n_flip)
    n_a2p = n_flip - n_p2a
    anti_pool = np.flatnonzero(final == -1)
    pro_pool = np.flatnonzero(final == 1)
    if n_p2a > len(anti_pool) or n_a2p > len(pro_pool):
        raise ValueError("flip counts exceed the available agents of the required final stance")
    p2a = rng.choice(anti_pool, size=n_p2a, replace=False)
    a2p = rng.choice(pro_pool, size=n_a2p, replace=False)
    flipper = np.zeros(n, dtype=bool)
    flipper[p2a] = True
    flipper[a2p] = True
    initial = final.copy()
    initial[flipper] = -final[flipper]

    # bots: a fixed share of flippers, the rest drawn from everyone else
    n_bots = round(cfg.bot_fraction * n)
    flip_idx = np.flatnonzero(flipper)
    n_flip_bots = min(round(cfg.bot_share_of_flippers * n_flip), n_bots)
    bot = np.zeros(n, dtype=bool)
    bot[rng.choice(flip_idx, size=n_flip_bots, replace=False)] = True
    rest = np.flatnonzero(~flipper)
    bot[rng.choice(rest, size=min(n_bots - n_flip_bots, len(rest)), replace=False)] = True
    bot_idx = np.flatnonzero(bot)
    n_declared = min(round(cfg.self_declared_fraction * n), len(bot_idx))
    declared = set(rng.choice(bot_idx, size=n_declared, replace=False).tolist())

    # stance tweet counts
    n_tweets = 2 + rng.poisson(cfg.mean_extra_tweets, size=n)
    single = (rng.random(n) < cfg.single_tweet_fraction) & ~flipper
    n_tweets[single] = 1
    waverer = (rng.random(n) < cfg.waverer_fraction) & ~flipper & (n_tweets >= 2)
    n_tweets[waverer] = np.maximum(n_tweets[waverer], 4)

    tweets: list[TweetRecord] = []
    stance_tweets: dict[int, list[int]] = {i: [] for i in range(n)}
    counter = [0]

    def new_id():
        counter[0] += 1
        return f"t{counter[0]:07d}"

    def period_of(ts):
        return lex.period_index(ts)

    def seed_tags(stance, ts, k):
        pro, anti = tags[period_of(ts)]
        pool = pro if stance > 0 else anti
        return [str(t) for t in rng.choice(pool, size=min(k, len(pool)), replace=False)]

    # stance-bearing originals
    for i in range(n):
        k = int(n_tweets[i])
        times = np.sort(rng.integers(int(START), int(END), size=k)).astype(float)
        seq = [int(initial[i])] * k
        seq[-1] = int(final[i])
        if waverer[i]:
            seq[int(rng.integers(1, k - 2)) if k > 3 else 1] = -int(final[i])
        for ts, s in zip(times, seq):
            k_tags = 1 + int(rng.random() < 0.5)
            htags = seed_tags(s, ts, k_tags)
            if k_tags == 2 and rng.random() < 0.3:
                htags.append(str(rng.choice(generic)))
            stance_tweets[i].append(len(tweets))
            tweets.append(TweetRecord(new_id(), ids[i], float(ts), _text(rng, s, bool(bot[i])), tuple(htags), "original"))

    # interaction structure: one community per final stance
    build = _pa_edges if cfg.network == "pa" else _er_edges
    pairs: list[tuple[int, int]] = []
    for camp in (1, -1):
        members = rng.permutation(np.flatnonzero(final == camp))
        pairs += build(members, cfg.attach_m, rng)
    for i in range(n):
        if rng.random() < cfg.cross_fraction:
            other = np.flatnonzero(final != final[i])
            if len(other):
                j = int(rng.choice(other))
                pairs.append((i, j))

    def reshare(src: int, dst: int, ts: float | None = None, tag: str | None = None, kind: str | None = None):
        ts = float(rng.integers(int(START), int(END))) if ts is None else ts
        if tag is None:
            tag = seed_tags(int(final[dst]), ts, 1)[0]
        kind = kind or ("retweet" if rng.random() < 0.75 else "quote")
        text = f"RT {_text(rng, int(final[dst]), bool(bot[src]))}" if kind == "retweet" else _text(rng, int(final[src]), bool(bot[src]))
        tweets.append(TweetRecord(new_id(), ids[src], ts, text, (tag,), kind, (), ids[dst]))

    def attach_mention(src: int, dst: int):
        host = int(rng.choice(stance_tweets[src]))
        t = tweets[host]
        if ids[dst] in t.mentioned_agents:
            reshare(src, dst)
            return
        tweets[host] = TweetRecord(
            t.tweet_id, t.agent_id, t.timestamp, f"@{ids[dst]} {t.text}", t.hashtags, t.kind,
            t.mentioned_agents + (ids[dst],), t.target_agent,
        )

    def attach_reply(src: int, dst: int):
        free = [h for h in stance_tweets[src] if tweets[h].kind == "original" and not tweets[h].mentioned_agents]
        if not free:
            attach_mention(src, dst)
            return
        host = int(rng.choice(free))
        t = tweets[host]
        tweets[host] = TweetRecord(t.tweet_id, t.agent_id, t.timestamp, t.text, t.hashtags, "reply", (), ids[dst])

    for src, dst in pairs:
        u = rng.random()
        if u < cfg.reshare_fraction:
            reshare(src, dst)
        elif u < cfg.reshare_fraction + (1 - cfg.reshare_fraction) / 2:
            attach_mention(src, dst)
        else:
            attach_reply(src, dst)

    neighbors: dict[int, set[int]] = {i: set() for i in range(n)}
    for a, b in pairs:
        neighbors[a].add(b)
        neighbors[b].add(a)

    # a few ordinary two-way ties
    for i in range(n):
        if neighbors[i] and not flipper[i] and rng.random() < cfg.background_reciprocity:
            j = int(rng.choice(sorted(neighbors[i])))
            reshare(i, j)
            reshare(j, i)

    # flippers that land in the same camp form small tight-knit circles
    for side in (1, -1):
        group = [int(i) for i in rng.permutation(flip_idx) if final[i] == side]
        size = cfg.flipper_ties + 1
        for g in range(0, len(group), size):
            circle = group[g : g + size]
            for x, i in enumerate(circle):
                for j in circle[x + 1 :]:
                    neighbors[i].add(j)
                    neighbors[j].add(i)
                    for _ in range(cfg.flipper_tie_rounds):
                        reshare(i, j)
                        reshare(j, i)

    # coordinated pairs: same hashtag within a minute, several times over
    coord_pairs: list[tuple[str, str]] = []
    coordinated = np.zeros(n, dtype=bool)
    flip_hood = sorted({int(j) for i in flip_idx for j in neighbors[i] if not flipper[j]})
    used: set[tuple[int, int]] = set()
    chosen: list[tuple[int, int]] = []
    degree = np.array([len(neighbors[i]) for i in range(n)])
    popular = {
        side: sorted(np.flatnonzero((final == side) & ~flipper), key=lambda i: (-degree[i], i))
        for side in (1, -1)
    }
    for c in range(cfg.n_coordinated):
        for _ in range(100):
            if c % 2 == 0 and len(flip_hood) >= 2:
                a = int(rng.choice(flip_hood))
                cands = sorted(j for j in neighbors[a] if final[j] == final[a] and not flipper[j])
                b = int(rng.choice(cands)) if cands else int(rng.integers(n))
            else:
                a, b = (int(x) for x in rng.choice(n, size=2, replace=False))
            key = (min(a, b), max(a, b))
            if a != b and key not in used and final[a] == final[b]:
                break
        used.add(key)
        coordinated[[a, b]] = True
        coord_pairs.append((ids[key[0]], ids[key[1]]))
        chosen.append((a, b))
    for a, b in chosen:
        # amplify popular same-camp accounts neither of them has talked to;
        # targets stay outside every pair so no two-way tie forms
        known = neighbors[a] | neighbors[b]
        hub = [int(x) for x in popular[int(final[a])] if not coordinated[x] and int(x) not in known][:10]
        for _ in range(cfg.coordination_rounds):
            t0 = float(rng.integers(int(START), int(END) - 120))
            tag = seed_tags(int(final[a]), t0, 1)[0]
            target = int(rng.choice(hub))
            reshare(a, target, t0, tag, "retweet")
            reshare(b, target, t0 + float(rng.integers(1, 60)), tag, "retweet")

    # trending moments: a few followers of one popular account retweet it
    # with the same tag within minutes. Only existing one-way ties are used,
    # so neighbor sets and reciprocity stay as they were.
    out_edges = {(a, b) for a, b in pairs}
    fans: dict[int, list[int]] = {}
    for a, b in sorted(out_edges):
        if (b, a) not in out_edges and not (flipper[a] or coordinated[a] or flipper[b] or coordinated[b]):
            fans.setdefault(b, []).append(a)
    stars = [h for side in (1, -1) for h in popular[side] if len(fans.get(int(h), [])) >= 2]
    for h in rng.permutation(stars)[: cfg.n_bursts]:
        h = int(h)
        group = rng.choice(fans[h], size=min(cfg.burst_size, len(fans[h])), replace=False)
        t0 = float(rng.integers(int(START), int(END) - 300))
        tag = seed_tags(int(final[h]), t0, 1)[0]
        for a in group:
            reshare(int(a), h, t0 + float(rng.integers(0, 240)), tag, "retweet")

    # off-topic chatter, dropped at ingest
    for _ in range(cfg.noise_tweets):
        i = int(rng.integers(n))
        ts = float(rng.integers(int(START), int(END)))
        tweets.append(TweetRecord(new_id(), ids[i], ts, _text(rng, 1, False), ("covid19",), "original"))

    tweets.sort(key=lambda t: (t.timestamp, t.tweet_id))

    agents = []
    for i in range(n):
        name = f"user{i:05d}_bot" if i in declared else f"user{i:05d}"
        followers = int(np.floor(rng.lognormal(5.0 + (0.8 if bot[i] else 0.0), 1.5)))
        if bot[i]:
            prob = round(float(rng.uniform(0.70, 1.0)), 4)
        else:
            prob = round(float(rng.uniform(0.0, 0.6999)), 4)
        agents.append(AgentRecord(ids[i], name, followers, prob))

    truth = {}
    for i in range(n):
        direction = "none"
        if flipper[i]:
            direction = "pro_to_anti" if initial[i] > 0 else "anti_to_pro"
        truth[ids[i]] = AgentTruth(
            ids[i], int(initial[i]), int(final[i]), bool(bot[i]), bool(flipper[i]), direction,
            bool(coordinated[i]), int(n_tweets[i]),
        )
    return SynthDataset(tweets, agents, GroundTruth(truth, coord_pairs), cfg)


TRUTH_COLUMNS = (
    "agent_id", "initial_stance", "final_stance", "bot", "flipped", "direction", "coordinated", "n_stance_tweets",
)


def write_truth(path, truth: GroundTruth) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_COLUMNS)
        for a in sorted(truth.agents):
            t = truth.agents[a]
            w.writerow([a, t.initial_stance, t.final_stance, int(t.bot), int(t.flipped), t.direction,
                        int(t.coordinated), t.n_stance_tweets])


def read_truth(path) -> GroundTruth:
    agents = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            agents[row["agent_id"]] = AgentTruth(
                row["agent_id"], int(row["initial_stance"]), int(row["final_stance"]), row["bot"] == "1",
                row["flipped"] == "1", row["direction"], row["coordinated"] == "1", int(row["n_stance_tweets"]),
            )
    return GroundTruth(agents)


def write_dataset(ds: SynthDataset, out_dir) -> dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "tweets": os.path.join(out_dir, "tweets.jsonl"),
        "agents": os.path.join(out_dir, "agents.csv"),
        "ground_truth": os.path.join(out_dir, "ground_truth.csv"),
    }
    write_tweets(paths["tweets"], ds.tweets)
    write_agents(paths["agents"], ds.agents)
    write_truth(paths["ground_truth"], ds.truth)
    return paths


@dataclass(frozen=True)
class RecoveryReport:
    stance_recovery: float
    flip_label_recovery: float
    coordination_recovery: float
    flip_prediction_recall: float
    n_agents: int

    def as_dict(self) -> dict:
        return asdict(self)


def verify_recovery(
    truth: GroundTruth,
    agent_stances: Mapping[str, int],
    flip_labels: Mapping[str, bool],
    collective_flags: Mapping[str, bool],
    flagged: set[str] | None = None,
) -> RecoveryReport:
    """Compare pipeline outputs with the planted truth.

    stance: final stance of agents with stance tweets; flip label: eligible
    agents; coordination: planted coordinated agents flagged as collective;
    flip prediction: planted flippers among the flagged set.
    """
    unknown = (set(agent_stances) | set(flip_labels) | set(collective_flags)) - set(truth.agents)
    if unknown:
        raise KeyError(f"ids absent from ground truth: {sorted(unknown)[:5]}")

    def rate(hits, total):
        return hits / total if total else 1.0

    with_tweets = [a for a, t in truth.agents.items() if t.n_stance_tweets > 0]
    s_hit = sum(agent_stances.get(a, 0) == truth.agents[a].final_stance for a in with_tweets)
    eligible = [a for a, t in truth.agents.items() if t.eligible]
    f_hit = sum(bool(flip_labels.get(a, False)) == truth.agents[a].flipped for a in eligible)
    coord = [a for a, t in truth.agents.items() if t.coordinated]
    c_hit = sum(bool(collective_flags.get(a, False)) for a in coord)
    flips = truth.flippers()
    p_hit = sum(a in (flagged or set()) for a in flips)
    return RecoveryReport(
        rate(s_hit, len(with_tweets)), rate(f_hit, len(eligible)), rate(c_hit, len(coord)), rate(p_hit, len(flips)),
        len(truth.agents),
    )
