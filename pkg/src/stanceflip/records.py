"""Record types, input parsing, per-agent timelines and flip labels."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import Iterable, Mapping, Sequence

log = logging.getLogger(__name__)

KINDS = ("original", "retweet", "quote", "reply")
STANCE_KINDS = frozenset({"original", "reply"})
RESHARE_KINDS = frozenset({"retweet", "quote"})


class ParseError(ValueError):
    """A malformed input line. ``line_no`` is 1-based."""

    def __init__(self, line_no: int, message: str, field_name: str | None = None):
        self.line_no = line_no
        self.field_name = field_name
        super().__init__(f"line {line_no}: {message}")


class DuplicateTweetError(ParseError):
    pass


class IneligibleTimelineError(ValueError):
    pass


def normalize_hashtag(tag: str) -> str:
    return tag.strip().lstrip("#").lower()


def parse_timestamp(value) -> float:
    """Epoch seconds from a number, a numeric string or an ISO-8601 string.

    Naive ISO datetimes are taken as UTC.
    """
    if isinstance(value, bool):
        raise ValueError("boolean is not a timestamp")
    if isinstance(value, (int, float)):
        ts = float(value)
    else:
        text = str(value).strip()
        try:
            ts = float(text)
        except ValueError:
            if text.endswith("Z"):
                text = text[:-1] + "+00:00"
            dt = datetime.fromisoformat(text)
            if dt.tzinfo is None:
                dt = dt.replace(tzinfo=timezone.utc)
            ts = dt.timestamp()
    if not math.isfinite(ts) or ts <= 0:
        raise ValueError(f"timestamp must be positive, got {value!r}")
    return ts


@dataclass(frozen=True)
class TweetRecord:
    tweet_id: str
    agent_id: str
    timestamp: float
    text: str = ""
    hashtags: tuple[str, ...] = ()
    kind: str = "original"
    mentioned_agents: tuple[str, ...] = ()
    target_agent: str | None = None

    def __post_init__(self):
        if self.timestamp <= 0:
            raise ValueError("timestamp must be positive")
        if self.kind not in KINDS:
            raise ValueError(f"unknown tweet kind {self.kind!r}")
        if self.kind in RESHARE_KINDS and not self.target_agent:
            raise ValueError(f"{self.kind} requires target_agent")
        for tag in self.hashtags:
            if tag != normalize_hashtag(tag):
                raise ValueError(f"hashtag {tag!r} is not normalized")

    def to_dict(self) -> dict:
        return {
            "tweet_id": self.tweet_id,
            "agent_id": self.agent_id,
            "timestamp": self.timestamp,
            "text": self.text,
            "hashtags": list(self.hashtags),
            "kind": self.kind,
            "mentioned_agents": list(self.mentioned_agents),
            "target_agent": self.target_agent,
        }


@dataclass(frozen=True)
class AgentRecord:
    agent_id: str
    username: str
    follower_count: int = 0
    bot_probability: float | None = None

    def __post_init__(self):
        if self.follower_count < 0:
            raise ValueError("follower_count must be nonnegative")
        if self.bot_probability is not None and not 0.0 <= self.bot_probability <= 1.0:
            raise ValueError("bot_probability must lie in [0, 1]")

    @property
    def self_declared_bot(self) -> bool:
        return "bot" in self.username.lower()

    def is_bot(self, threshold: float = 0.70) -> bool:
        if self.self_declared_bot:
            return True
        return self.bot_probability is not None and self.bot_probability >= threshold


REQUIRED_TWEET_FIELDS = ("tweet_id", "agent_id", "timestamp")


def _tweet_from_obj(obj: Mapping, line_no: int) -> TweetRecord:
    if not isinstance(obj, Mapping):
        raise ParseError(line_no, "record is not an object")
    for name in REQUIRED_TWEET_FIELDS:
        if obj.get(name) in (None, ""):
            raise ParseError(line_no, f"missing required field '{name}'", name)
    try:
        ts = parse_timestamp(obj["timestamp"])
    except (TypeError, ValueError) as exc:
        raise ParseError(line_no, f"bad field 'timestamp': {exc}", "timestamp") from None
    kind = obj.get("kind") or "original"
    if kind not in KINDS:
        raise ParseError(line_no, f"bad field 'kind': {kind!r}", "kind")
    target = obj.get("target_agent") or None
    if kind in RESHARE_KINDS and target is None:
        raise ParseError(line_no, f"{kind} without 'target_agent'", "target_agent")
    hashtags = obj.get("hashtags") or []
    mentions = obj.get("mentioned_agents") or []
    if not isinstance(hashtags, list) or not isinstance(mentions, list):
        raise ParseError(line_no, "hashtags and mentioned_agents must be lists")
    tags = tuple(t for t in (normalize_hashtag(str(h)) for h in hashtags) if t)
    return TweetRecord(
        tweet_id=str(obj["tweet_id"]),
        agent_id=str(obj["agent_id"]),
        timestamp=ts,
        text=str(obj.get("text") or ""),
        hashtags=tags,
        kind=kind,
        mentioned_agents=tuple(str(m) for m in mentions),
        target_agent=None if target is None else str(target),
    )


def parse_tweets(lines: Iterable[str], strict: bool = True) -> list[TweetRecord]:
    """Parse line-delimited JSON tweet records.

    With ``strict=False`` malformed lines are logged and skipped. Duplicate
    tweet ids always raise.
    """
    out: list[TweetRecord] = []
    seen: set[str] = set()
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, f"invalid JSON ({exc.msg})") from None
            tweet = _tweet_from_obj(obj, line_no)
        except ParseError as exc:
            if strict:
                raise
            log.warning("skipping malformed record: %s", exc)
            continue
        if tweet.tweet_id in seen:
            raise DuplicateTweetError(line_no, f"duplicate tweet_id {tweet.tweet_id!r}", "tweet_id")
        seen.add(tweet.tweet_id)
        out.append(tweet)
    return out


def read_tweets(path, strict: bool = True) -> list[TweetRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_tweets(fh, strict=strict)


def write_tweets(path, tweets: Iterable[TweetRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in tweets:
            fh.write(json.dumps(t.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


AGENT_COLUMNS = ("agent_id", "username", "follower_count", "bot_probability")


def parse_agents(lines: Iterable[str]) -> dict[str, AgentRecord]:
    reader = csv.DictReader(lines)
    missing = [c for c in ("agent_id", "username") if c not in (reader.fieldnames or [])]
    if missing:
        raise ParseError(1, f"agent table missing columns {missing}")
    agents: dict[str, AgentRecord] = {}
    for line_no, row in enumerate(reader, start=2):
        try:
            prob = row.get("bot_probability")
            rec = AgentRecord(
                agent_id=row["agent_id"],
                username=row["username"] or "",
                follower_count=int(row.get("follower_count") or 0),
                bot_probability=float(prob) if prob not in (None, "") else None,
            )
        except (TypeError, ValueError) as exc:
            raise ParseError(line_no, str(exc)) from None
        if rec.agent_id in agents:
            raise ParseError(line_no, f"duplicate agent_id {rec.agent_id!r}", "agent_id")
        agents[rec.agent_id] = rec
    return agents


def read_agents(path) -> dict[str, AgentRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_agents(fh)


def write_agents(path, agents: Iterable[AgentRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGENT_COLUMNS)
        for a in agents:
            prob = "" if a.bot_probability is None else repr(a.bot_probability)
            w.writerow([a.agent_id, a.username, a.follower_count, prob])


def filter_vaccine(tweets: Iterable[TweetRecord], needle: str = "vaccine") -> list[TweetRecord]:
    return [t for t in tweets if any(needle in h for h in t.hashtags)]


def filter_original(tweets: Iterable[TweetRecord]) -> tuple[list[TweetRecord], list[TweetRecord]]:
    """Split into (stance-bearing originals and replies, retweets and quotes).

    Reshares carry no stance of their own but still feed the interaction graph.
    """
    stance, reshares = [], []
    for t in tweets:
        (stance if t.kind in STANCE_KINDS else reshares).append(t)
    return stance, reshares


@dataclass(frozen=True)
class AgentTimeline:
    agent_id: str
    tweets: tuple[TweetRecord, ...]
    stances: tuple[int, ...]

    def __post_init__(self):
        if len(self.tweets) != len(self.stances):
            raise ValueError("stances must parallel tweets")
        ts = [t.timestamp for t in self.tweets]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError("timeline timestamps must be nondecreasing")

    @property
    def labeled(self) -> list[int]:
        """The expressed-stance sequence (nonzero labels only)."""
        return [s for s in self.stances if s != 0]

    @property
    def final_stance(self) -> int:
        lab = self.labeled
        return lab[-1] if lab else 0

    @property
    def eligible(self) -> bool:
        return len(self.labeled) >= 2


def build_timelines(
    tweets: Iterable[TweetRecord], stances: Mapping[str, int]
) -> dict[str, AgentTimeline]:
    """Group tweets into time-ordered per-agent timelines.

    ``stances`` maps tweet_id to +1/-1/0 and must cover every tweet. Ties in
    timestamp are broken by tweet_id so the order is reproducible.
    """
    tweets = list(tweets)
    ids = {t.tweet_id for t in tweets}
    unknown = sorted(set(stances) - ids)
    if unknown:
        raise KeyError(f"stance labels for unknown tweets: {unknown[:5]}")
    by_agent: dict[str, list[TweetRecord]] = {}
    for t in tweets:
        if t.tweet_id not in stances:
            raise KeyError(f"no stance label for tweet {t.tweet_id!r}")
        by_agent.setdefault(t.agent_id, []).append(t)
    out = {}
    for agent_id in sorted(by_agent):
        ts = sorted(by_agent[agent_id], key=lambda t: (t.timestamp, t.tweet_id))
        out[agent_id] = AgentTimeline(agent_id, tuple(ts), tuple(int(stances[t.tweet_id]) for t in ts))
    return out


class FlipDirection(str, Enum):
    PRO_TO_ANTI = "pro_to_anti"
    ANTI_TO_PRO = "anti_to_pro"
    NONE = "none"


@dataclass(frozen=True)
class FlipLabel:
    flipped: bool
    direction: FlipDirection
    flip_count: int


def flip_label_from_sequence(seq: Sequence[int]) -> FlipLabel:
    lab = [s for s in seq if s != 0]
    if len(lab) < 2:
        raise IneligibleTimelineError("need at least two labeled stances")
    count = sum(1 for a, b in zip(lab, lab[1:]) if a != b)
    if lab[0] == lab[-1]:
        return FlipLabel(False, FlipDirection.NONE, count)
    direction = FlipDirection.PRO_TO_ANTI if lab[0] > 0 else FlipDirection.ANTI_TO_PRO
    return FlipLabel(True, direction, count)


def label_flips(timeline: AgentTimeline) -> FlipLabel:
    return flip_label_from_sequence(timeline.stances)
