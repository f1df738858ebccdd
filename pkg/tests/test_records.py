import json

import pytest
from hypothesis import given, strategies as st

from stanceflip.records import (
    AgentRecord,
    DuplicateTweetError,
    FlipDirection,
    IneligibleTimelineError,
    ParseError,
    TweetRecord,
    build_timelines,
    filter_original,
    filter_vaccine,
    flip_label_from_sequence,
    parse_agents,
    parse_timestamp,
    parse_tweets,
)


def _line(**kw):
    base = {"tweet_id": "t1", "agent_id": "a", "timestamp": 1_600_000_000}
    base.update(kw)
    return json.dumps(base)


def _tweet(tid, agent="a", ts=1.0e9, tags=("vaccine",), kind="original", target=None):
    return TweetRecord(tid, agent, ts, "", tuple(tags), kind, (), target)


# -- parsing ---------------------------------------------------------------

def test_hashtags_are_normalized():
    (t,) = parse_tweets([_line(hashtags=["#VaccinesWork"])])
    assert t.hashtags == ("vaccineswork",)


def test_empty_stream():
    assert parse_tweets([]) == []


def test_missing_timestamp_names_field():
    line = json.dumps({"tweet_id": "t1", "agent_id": "a"})
    with pytest.raises(ParseError) as err:
        parse_tweets([line])
    assert err.value.field_name == "timestamp"
    assert err.value.line_no == 1


def test_lenient_mode_skips_bad_lines():
    lines = [_line(), "{not json", _line(tweet_id="t2")]
    assert [t.tweet_id for t in parse_tweets(lines, strict=False)] == ["t1", "t2"]
    with pytest.raises(ParseError) as err:
        parse_tweets(lines)
    assert err.value.line_no == 2


def test_duplicate_id_is_fatal_even_when_lenient():
    with pytest.raises(DuplicateTweetError):
        parse_tweets([_line(), _line()], strict=False)


def test_iso_and_epoch_timestamps_agree():
    assert parse_timestamp("2021-01-01T00:00:00Z") == parse_timestamp(1609459200)
    assert parse_timestamp("2021-01-01T00:00:00") == 1609459200.0
    with pytest.raises(ValueError):
        parse_timestamp(0)


def test_retweet_needs_target():
    with pytest.raises(ParseError):
        parse_tweets([_line(kind="retweet")])
    with pytest.raises(ValueError):
        _tweet("x", kind="quote")


def test_agent_table_and_bot_rule():
    agents = parse_agents(["agent_id,username,follower_count,bot_probability", "a,NewsBOT,10,", "b,carol,3,0.7"])
    assert agents["a"].self_declared_bot and agents["a"].is_bot()
    assert agents["b"].is_bot() and not agents["b"].self_declared_bot
    assert not AgentRecord("c", "dave", 0, 0.6999).is_bot()
    with pytest.raises(ValueError):
        AgentRecord("d", "x", 0, 1.5)


# -- filters -----------------------------------------------------------------

def test_filter_vaccine_examples():
    keep = _tweet("1", tags=("covidvaccine",))
    drop = _tweet("2", tags=("coronavirus",))
    (mixed,) = parse_tweets([_line(tweet_id="3", hashtags=["vaccinesWork", "news"])])
    assert filter_vaccine([keep, drop, mixed]) == [keep, mixed]


def test_filter_original_keeps_reshares_for_edges():
    rt = _tweet("1", kind="retweet", target="b")
    orig = _tweet("2")
    rep = _tweet("3", kind="reply", target="b")
    stance, edges = filter_original([rt, orig, rep])
    assert stance == [orig, rep] and edges == [rt]
    stance, edges = filter_original([rt])
    assert stance == [] and edges == [rt]


tags = st.lists(st.sampled_from(["vaccine", "covidvaccine", "news", "flu", "antivax", "vaccinessavelives"]), max_size=3)


@given(st.lists(tags, max_size=20))
def test_filter_vaccine_idempotent(tag_lists):
    tweets = [_tweet(str(i), tags=t) for i, t in enumerate(tag_lists)]
    once = filter_vaccine(tweets)
    assert filter_vaccine(once) == once


# -- timelines -----------------------------------------------------------------

def test_timelines_sorted_and_eligibility():
    tw = [_tweet("3", "a", 30.0), _tweet("1", "a", 10.0), _tweet("2", "b", 20.0)]
    tl = build_timelines(tw, {"1": 1, "2": 1, "3": -1})
    assert [t.tweet_id for t in tl["a"].tweets] == ["1", "3"]
    assert tl["a"].eligible and not tl["b"].eligible
    assert "b" in tl


def test_timelines_reject_unknown_stance_ids():
    with pytest.raises(KeyError):
        build_timelines([_tweet("1")], {"1": 1, "zz": 1})


@given(st.lists(st.tuples(st.sampled_from("abcd"), st.integers(1, 50), st.sampled_from([-1, 0, 1])), max_size=30))
def test_timelines_preserve_tweet_ids(rows):
    tweets = [_tweet(f"t{i}", a, float(ts)) for i, (a, ts, _) in enumerate(rows)]
    stances = {f"t{i}": s for i, (_, _, s) in enumerate(rows)}
    tl = build_timelines(tweets, stances)
    got = sorted(t.tweet_id for line in tl.values() for t in line.tweets)
    assert got == sorted(stances)


# -- flips -----------------------------------------------------------------

@pytest.mark.parametrize(
    "seq, flipped, direction, count",
    [
        ([1, 1, -1], True, FlipDirection.PRO_TO_ANTI, 1),
        ([-1, 1, -1, 1], True, FlipDirection.ANTI_TO_PRO, 3),
        ([1, 0, 1], False, FlipDirection.NONE, 0),
    ],
)
def test_flip_examples(seq, flipped, direction, count):
    lab = flip_label_from_sequence(seq)
    assert (lab.flipped, lab.direction, lab.flip_count) == (flipped, direction, count)


def test_flip_needs_two_labels():
    with pytest.raises(IneligibleTimelineError):
        flip_label_from_sequence([0, 1, 0])


@given(st.lists(st.sampled_from([-1, 0, 1]), max_size=25))
def test_flip_count_parity(seq):
    if sum(1 for s in seq if s) < 2:
        return
    lab = flip_label_from_sequence(seq)
    assert lab.flipped == (lab.flip_count % 2 == 1)
    assert lab.flipped == (lab.direction != FlipDirection.NONE)
    if lab.flipped:
        assert lab.flip_count >= 1
