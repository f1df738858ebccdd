"""Staged batch pipeline. Each stage reads earlier stage directories under
the output root and replaces its own directory in one rename.

    synth -> ingest -> label-stance -> graph -> features -> train-importance
          -> predict -> collective -> evaluate -> report
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import os
import shutil
import time
from dataclasses import asdict
from importlib import metadata
from typing import Callable

import numpy as np
import scipy
import yaml

from . import collective as coll
from . import evaluation as ev
from .graph import build_graph, centralities, influence_weights, elbow_hop, read_edge_csv, to_dot, write_edge_csv
from .importance import (
    cross_validate,
    published_coefficients,
    read_coefficients,
    to_coefficients,
    write_coefficients,
)
from .influence import (
    FEATURE_NAMES,
    InfluenceModel,
    ModelConfig,
    PredictionTask,
    VARIANTS,
    final_fraction,
    network_state,
    prepare_prediction_task,
    standardize,
)
from .linguistics import aggregate_agent, extract_cues, load_linguistic_lexicon
from .records import (
    build_timelines,
    filter_original,
    filter_vaccine,
    label_flips,
    read_agents,
    read_tweets,
    write_agents,
    write_tweets,
)
from .stance import build_bipartite, load_lexicon, propagate
from .synthgen import SynthConfig, generate, read_truth, verify_recovery, write_dataset

log = logging.getLogger(__name__)

STAGES = (
    "synth",
    "ingest",
    "label-stance",
    "graph",
    "features",
    "train-importance",
    "predict",
    "collective",
    "evaluate",
    "report",
)
STAGE_DIRS = {s: s.replace("label-stance", "stance").replace("train-importance", "importance") for s in STAGES}
STAGE_DIRS["synth"] = "input"

DEFAULT_CONFIG = {
    "seed": 0,
    "variant": 5,
    "flag_fraction": None,
    "stance_weight": "importance",
    "threads": 1,
    "strict_parsing": True,
    "bot_threshold": 0.70,
    "record_timings": False,
    "inputs": {"tweets": None, "agents": None, "ground_truth": None},
    "lexicon": None,
    "linguistic_lexicon": None,
    "stance": {"tau": 0.001, "tol": 1e-6, "max_iter": 100},
    "importance": {"folds": 5, "max_depth": 8, "min_samples_leaf": 5, "file": None},
    "collective": {"window": 300.0, "sample_std": False},
    "hop_decay": {"agents": 200, "max_depth": 6},
    "synth": {},
}


class ConfigError(ValueError):
    pass


class MissingStageError(RuntimeError):
    def __init__(self, stage: str, path: str):
        super().__init__(f"missing output of stage '{stage}' ({path}); run '{stage}' first")
        self.stage = stage


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {where + k!r}")
        if isinstance(base[k], dict) and k != "synth":
            if not isinstance(v, dict):
                raise ConfigError(f"config key {where + k!r} must be a mapping")
            out[k] = _merge(base[k], v, where + k + ".")
        else:
            out[k] = v
    return out


def load_config(path: str | None = None, overrides: dict | None = None) -> dict:
    data = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"bad YAML in {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping")
    cfg = _merge(DEFAULT_CONFIG, data)
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg[k] = v
    if cfg["variant"] not in VARIANTS:
        raise ConfigError(f"variant must be one of {VARIANTS}, got {cfg['variant']}")
    try:
        ModelConfig(cfg["variant"], cfg["flag_fraction"], cfg["stance_weight"])
        SynthConfig(**{"seed": cfg["seed"], **cfg["synth"]})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if int(cfg["threads"]) < 1:
        raise ConfigError("threads must be >= 1")
    return cfg


class Run:
    def __init__(self, out: str, config: dict):
        self.out = os.path.abspath(out)
        self.cfg = config

    def path(self, stage: str, name: str = "") -> str:
        return os.path.join(self.out, STAGE_DIRS[stage], name)

    def need(self, stage: str, name: str) -> str:
        p = self.path(stage, name)
        if not os.path.exists(p):
            raise MissingStageError(stage, os.path.relpath(p, self.out))
        return p

    def input_path(self, key: str, required: bool = True) -> str | None:
        p = self.cfg["inputs"].get(key)
        if p is None:
            p = self.path("synth", {"tweets": "tweets.jsonl", "agents": "agents.csv", "ground_truth": "ground_truth.csv"}[key])
            if not os.path.exists(p):
                if required:
                    raise MissingStageError("synth", os.path.relpath(p, self.out))
                return None
            return p
        if not os.path.exists(p):
            if required:
                raise ConfigError(f"input file {p} does not exist")
            return None
        return p

    def rel(self, p: str) -> str:
        ap = os.path.abspath(p)
        if ap.startswith(self.out + os.sep):
            return os.path.relpath(ap, self.out)
        return ap


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions() -> dict:
    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"stanceflip": own, "numpy": np.__version__, "scipy": scipy.__version__, "pyyaml": yaml.__version__}


def _dump_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _config_snapshot(cfg: dict, run: Run) -> dict:
    snap = copy.deepcopy(cfg)
    snap["inputs"] = {k: (run.rel(v) if v else v) for k, v in cfg["inputs"].items()}
    return snap


def run_stage(stage: str, run: Run) -> None:
    """Run one stage into a scratch directory, write its manifest, then swap
    it into place."""
    fn = STAGE_FUNCS[stage]
    final_dir = os.path.join(run.out, STAGE_DIRS[stage])
    tmp = os.path.join(run.out, f".{STAGE_DIRS[stage]}.tmp")
    shutil.rmtree(tmp, ignore_errors=True)
    os.makedirs(tmp)
    t0 = time.perf_counter()
    try:
        inputs = fn(run, tmp)
        manifest = {
            "stage": stage,
            "config": _config_snapshot(run.cfg, run),
            "versions": _versions(),
            "inputs": {run.rel(p): _digest(p) for p in sorted(inputs)},
            "outputs": sorted(os.listdir(tmp)),
        }
        if run.cfg["record_timings"]:
            manifest["seconds"] = round(time.perf_counter() - t0, 3)
        tmp_manifest = os.path.join(tmp, "manifest.json.part")
        _dump_json(tmp_manifest, manifest)
        os.replace(tmp_manifest, os.path.join(tmp, "manifest.json"))
        if os.path.isdir(final_dir):
            old = final_dir + ".old"
            shutil.rmtree(old, ignore_errors=True)
            os.replace(final_dir, old)
            os.replace(tmp, final_dir)
            shutil.rmtree(old)
        else:
            os.replace(tmp, final_dir)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    log.info("stage %s done in %.2fs", stage, time.perf_counter() - t0)


# ---------------------------------------------------------------- helpers

def _write_rows(path: str, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def _read_rows(path: str) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _fmt_seq(seq) -> str:
    return " ".join(str(int(s)) for s in seq)


def _parse_seq(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in text.split()) if text else ()


def _lexicon(run: Run):
    return load_lexicon(run.cfg["lexicon"])


def _load_ingest(run: Run):
    tweets_p = run.need("ingest", "tweets.jsonl")
    agents_p = run.need("ingest", "agents.csv")
    return read_tweets(tweets_p), read_agents(agents_p), [tweets_p, agents_p]


def _load_stances(run: Run):
    p = run.need("label-stance", "tweet_stances.csv")
    labels = {r["tweet_id"]: int(r["label"]) for r in _read_rows(p)}
    a = run.need("label-stance", "agent_stances.csv")
    agents = {r["agent_id"]: r for r in _read_rows(a)}
    return labels, agents, [p, a]


def _load_graph(run: Run):
    e = run.need("graph", "edges.csv")
    c = run.need("graph", "centralities.csv")
    rows = _read_rows(c)
    return read_edge_csv(e, [r["agent_id"] for r in rows]), rows, [e, c]


def _load_tasks(run: Run) -> tuple[dict[str, PredictionTask], str]:
    p = run.need("features", "tasks.csv")
    tasks = {}
    for r in _read_rows(p):
        tasks[r["agent_id"]] = PredictionTask(
            r["agent_id"], _parse_seq(r["history"]), (), int(r["held_out"]), r["flipped"] == "1"
        )
    return tasks, p


def _bot_flags(agents, threshold: float) -> dict[str, bool]:
    return {a: rec.is_bot(threshold) for a, rec in agents.items()}


# ---------------------------------------------------------------- stages

def stage_synth(run: Run, out: str) -> list[str]:
    scfg = SynthConfig(**{"seed": run.cfg["seed"], **run.cfg["synth"]})
    ds = generate(scfg, _lexicon(run))
    write_dataset(ds, out)
    _dump_json(os.path.join(out, "synth_config.json"), asdict(scfg))
    return []


def stage_ingest(run: Run, out: str) -> list[str]:
    tp, ap = run.input_path("tweets"), run.input_path("agents")
    tweets = read_tweets(tp, strict=run.cfg["strict_parsing"])
    agents = read_agents(ap)
    kept = sorted(filter_vaccine(tweets), key=lambda t: (t.timestamp, t.tweet_id))
    write_tweets(os.path.join(out, "tweets.jsonl"), kept)
    write_agents(os.path.join(out, "agents.csv"), [agents[a] for a in sorted(agents)])
    stance_set, reshares = filter_original(kept)
    _dump_json(
        os.path.join(out, "summary.json"),
        {
            "tweets_read": len(tweets),
            "vaccine_tweets": len(kept),
            "stance_tweets": len(stance_set),
            "reshares": len(reshares),
            "agents": len(agents),
        },
    )
    return [tp, ap]


def stage_label(run: Run, out: str) -> list[str]:
    tweets, agents, used = _load_ingest(run)
    stance_set, _ = filter_original(tweets)
    lex = _lexicon(run)
    sc = run.cfg["stance"]
    res = propagate(build_bipartite(stance_set, lex), lex, sc["tau"], sc["max_iter"], sc["tol"])
    labels = {t.tweet_id: (res.tweets[t.tweet_id].label if t.tweet_id in res.tweets else 0) for t in stance_set}
    _write_rows(
        os.path.join(out, "tweet_stances.csv"),
        ["tweet_id", "agent_id", "value", "label"],
        [(t.tweet_id, t.agent_id, res.tweets[t.tweet_id].value if t.tweet_id in res.tweets else 0.0, labels[t.tweet_id])
         for t in stance_set],
    )
    timelines = build_timelines(stance_set, labels)
    rows = []
    for a in sorted(timelines):
        tl = timelines[a]
        fl = label_flips(tl) if tl.eligible else None
        rows.append((
            a, tl.final_stance, len(tl.labeled), int(tl.eligible), final_fraction(tl.stances),
            int(fl.flipped) if fl else 0, fl.direction.value if fl else "none", fl.flip_count if fl else 0,
        ))
    _write_rows(
        os.path.join(out, "agent_stances.csv"),
        ["agent_id", "final_stance", "n_labeled", "eligible", "final_share", "flipped", "direction", "flip_count"],
        rows,
    )
    _write_rows(
        os.path.join(out, "hashtag_scores.csv"),
        ["period", "hashtag", "value", "label"],
        [(p, h, s.value, s.label) for (p, h), s in sorted(res.hashtags.items())],
    )
    _dump_json(
        os.path.join(out, "summary.json"),
        {
            "iterations": res.iterations,
            "converged": res.converged,
            "labeled_tweets": sum(1 for v in labels.values() if v),
            "unlabeled_tweets": sum(1 for v in labels.values() if not v),
            "eligible_agents": sum(r[3] for r in rows),
        },
    )
    return used


def stage_graph(run: Run, out: str) -> list[str]:
    tweets, agents, used = _load_ingest(run)
    g = build_graph(tweets, agents)
    write_edge_csv(g, os.path.join(out, "edges.csv"))
    cent = centralities(g, {a: r.follower_count for a, r in agents.items()}, threads=int(run.cfg["threads"]))
    _write_rows(
        os.path.join(out, "centralities.csv"),
        ["agent_id", "followers", "eigenvector", "total_degree", "betweenness", "super_friend", "super_spreader"],
        [(a, c.followers, c.eigenvector, c.total_degree, c.betweenness, c.super_friend, c.super_spreader)
         for a, c in ((a, cent[a]) for a in g.nodes)],
    )
    with open(os.path.join(out, "graph.dot"), "w", encoding="utf-8") as fh:
        fh.write(to_dot(g))
    # per-hop influence decay on a seeded sample of connected agents
    hd = run.cfg["hop_decay"]
    connected = [a for a in g.nodes if g.neighbors[a]]
    rng = np.random.default_rng(run.cfg["seed"])
    sample = sorted(rng.choice(connected, size=min(hd["agents"], len(connected)), replace=False)) if connected else []
    depth = int(hd["max_depth"])
    per = np.zeros(depth)
    tot = np.zeros(depth)
    for a in sample:
        w = influence_weights(g, a, depth)
        per += np.array(w.per_neighbor)
        tot += np.array(w.totals)
    if sample:
        per /= len(sample)
        tot /= len(sample)
    _write_rows(
        os.path.join(out, "hop_decay.csv"),
        ["hop", "mean_total_weight", "mean_weight_per_neighbor"],
        [(h + 1, float(tot[h]), float(per[h])) for h in range(depth)],
    )
    _dump_json(
        os.path.join(out, "summary.json"),
        {
            "nodes": len(g.nodes),
            "edges": len(g.edges),
            "isolated": len(g.nodes) - len(connected),
            "hop_decay_sample": len(sample),
            "elbow_hop": elbow_hop(per.tolist()) if sample else None,
        },
    )
    return used


def stage_features(run: Run, out: str) -> list[str]:
    tweets, agents, used = _load_ingest(run)
    labels, agent_st, u2 = _load_stances(run)
    g, cent_rows, u3 = _load_graph(run)
    stance_set, _ = filter_original(tweets)
    timelines = build_timelines(stance_set, labels)
    tasks = prepare_prediction_task(timelines)
    lex = load_linguistic_lexicon(run.cfg["linguistic_lexicon"])
    cent = {r["agent_id"]: r for r in cent_rows}
    rows = []
    for a in g.nodes:
        tl = timelines.get(a)
        if a in tasks:
            texts = [t.text for t in tl.tweets[: len(tasks[a].history)]]
            own = tasks[a].current_stance
        elif tl is not None:
            texts = [t.text for t in tl.tweets]
            own = tl.final_stance
        else:
            texts, own = [], 0
        if texts:
            prof = aggregate_agent(a, [extract_cues(t, lex) for t in texts])
            m, count = prof.mean, prof.tweet_count
        else:
            m, count = None, 0
        c = cent[a]
        values = {
            "tweet_count": float(count),
            "own_stance": float(own),
            "followers": float(c["followers"]),
            "eigenvector": float(c["eigenvector"]),
            "super_spreader": float(c["super_spreader"]),
            "betweenness": float(c["betweenness"]),
            "super_friend": float(c["super_friend"]),
            "total_degree": float(c["total_degree"]),
        }
        for name in FEATURE_NAMES:
            if name not in values:
                values[name] = float(getattr(m, name)) if m is not None else 0.0
        rows.append([a, int(a in tasks)] + [values[n] for n in FEATURE_NAMES])
    _write_rows(os.path.join(out, "features.csv"), ["agent_id", "eligible", *FEATURE_NAMES], rows)
    _write_rows(
        os.path.join(out, "tasks.csv"),
        ["agent_id", "history", "current_stance", "initial_stance", "held_out", "flipped"],
        [(a, _fmt_seq(t.history), t.current_stance, t.initial_stance, t.held_out, int(t.flipped))
         for a, t in sorted(tasks.items())],
    )
    _dump_json(
        os.path.join(out, "summary.json"),
        {"agents": len(rows), "eligible": len(tasks), "flipped": sum(t.flipped for t in tasks.values())},
    )
    return used + u2 + u3


def _load_features(run: Run):
    p = run.need("features", "features.csv")
    rows = _read_rows(p)
    ids = [r["agent_id"] for r in rows]
    X = np.array([[float(r[n]) for n in FEATURE_NAMES] for r in rows]) if rows else np.zeros((0, len(FEATURE_NAMES)))
    eligible = np.array([r["eligible"] == "1" for r in rows], dtype=bool)
    return ids, X, eligible, p


def stage_importance(run: Run, out: str) -> list[str]:
    ic = run.cfg["importance"]
    ids, X, eligible, fp = _load_features(run)
    tasks, tp = _load_tasks(run)
    used = [fp, tp]
    src = ic["file"]
    if src is not None:
        if src == "published":
            coef = published_coefficients(FEATURE_NAMES)
        else:
            if not os.path.exists(src):
                raise ConfigError(f"importance file {src} does not exist")
            coef = read_coefficients(src, FEATURE_NAMES)
            used.append(src)
        write_coefficients(os.path.join(out, "bstar.csv"), coef)
        _dump_json(os.path.join(out, "summary.json"), {"source": run.rel(src) if src != "published" else src})
        return used
    idx = [i for i, a in enumerate(ids) if a in tasks]
    y = np.array([int(tasks[ids[i]].flipped) for i in idx])
    res = cross_validate(X[idx], y, ic["folds"], run.cfg["seed"], ic["max_depth"], ic["min_samples_leaf"])
    coef = to_coefficients(res.importance, FEATURE_NAMES, FEATURE_NAMES)
    write_coefficients(os.path.join(out, "bstar.csv"), coef)
    _write_rows(
        os.path.join(out, "folds.csv"),
        ["agent_id", "fold", "flipped", "cv_prediction"],
        [(ids[i], int(res.folds[j]), int(y[j]), int(res.predictions[j])) for j, i in enumerate(idx)],
    )
    fold_f1 = []
    for f in range(ic["folds"]):
        m = res.folds == f
        fold_f1.append(ev.macro_f1(res.predictions[m] == 1, y[m] == 1).macro_f1)
    _dump_json(
        os.path.join(out, "summary.json"),
        {
            "source": "cross_validation",
            "samples": len(y),
            "positives": int(y.sum()),
            "fold_accuracy": res.fold_scores,
            "fold_macro_f1": fold_f1,
            "tree_depths": [t.depth for t in res.trees],
        },
    )
    return used


def build_model(run: Run):
    """Assemble the influence model from stage artifacts."""
    ids, X, eligible, fp = _load_features(run)
    tasks, tp = _load_tasks(run)
    bp = run.need("train-importance", "bstar.csv")
    coef = read_coefficients(bp, FEATURE_NAMES)
    _, agent_st, su = _load_stances(run)
    g, _, gu = _load_graph(run)
    if list(g.nodes) != ids:
        raise ValueError("feature rows and graph nodes disagree; rerun 'features'")
    Xs = standardize(X, eligible if eligible.any() else None)
    stances = {a: int(r["final_stance"]) for a, r in agent_st.items()}
    fractions = {a: float(r["final_share"]) for a, r in agent_st.items()}
    model = InfluenceModel(g, Xs, coef.values, network_state(g, stances, fractions), tasks)
    return model, tasks, [fp, tp, bp] + su + gu


def stage_predict(run: Run, out: str) -> list[str]:
    model, tasks, used = build_model(run)
    summary = {"flag_rule": "top ceil(fraction * N_eligible) by S, ties to lower agent id", "variants": {}}
    for v in VARIANTS:
        frac = run.cfg["flag_fraction"] if v == run.cfg["variant"] else None
        mc = ModelConfig(v, frac, run.cfg["stance_weight"])
        rows = model.score(mc)
        _write_rows(
            os.path.join(out, f"scores_v{v}.csv"),
            ["agent_id", "variant", "gamma", "connection", "Y", "I", "S", "flagged"],
            [(r.agent_id, r.variant, r.gamma, r.connection, r.Y, r.I, r.S, int(r.flagged)) for r in rows],
        )
        summary["variants"][str(v)] = {
            "flag_fraction": mc.fraction,
            "stance_weight": mc.resolve_stance_weight(model.B, warn=False),
            "scored": len(rows),
            "flagged": sum(r.flagged for r in rows),
        }
    _dump_json(os.path.join(out, "summary.json"), summary)
    return used


def stage_collective(run: Run, out: str) -> list[str]:
    tweets, agents, used = _load_ingest(run)
    _, agent_st, su = _load_stances(run)
    g, _, gu = _load_graph(run)
    tasks, tp = _load_tasks(run)
    cc = run.cfg["collective"]
    pairs = coll.pair_counts(coll.events_from_tweets(tweets), cc["window"])
    kept = coll.threshold_pairs(pairs, cc["sample_std"])
    flags = coll.flag_agents(kept, g.nodes)
    coll.write_pairs(os.path.join(out, "pairs.csv"), pairs, kept)
    _write_rows(os.path.join(out, "flags.csv"), ["agent_id", "engaged"], [(a, int(flags[a])) for a in sorted(flags)])
    stances = {a: int(r["final_stance"]) for a, r in agent_st.items()}
    bots = _bot_flags(agents, run.cfg["bot_threshold"])
    rows = []
    for a in sorted(tasks):
        s = coll.neighborhood_stats(a, g, flags, stances, bots, own_stance=tasks[a].current_stance)
        rows.append((a, s.size, s.bots, s.opposite, s.collective, s.collective_opposite))
    _write_rows(
        os.path.join(out, "neighborhoods.csv"),
        ["agent_id", "size", "bots", "opposite", "collective", "collective_opposite"],
        rows,
    )
    thr = coll.pair_threshold(pairs, cc["sample_std"]) if pairs else None
    _dump_json(
        os.path.join(out, "summary.json"),
        {
            "pairs": len(pairs),
            "retained": len(kept),
            "mean": thr.mean if thr else None,
            "std": thr.std if thr else None,
            "cutoff": thr.cutoff if thr else None,
            "engaged_agents": sum(flags.values()),
            "std_kind": "sample" if cc["sample_std"] else "population",
        },
    )
    return used + su + gu + [tp]


def _load_scores(run: Run, v: int):
    p = run.need("predict", f"scores_v{v}.csv")
    return {r["agent_id"]: r for r in _read_rows(p)}, p


def stage_evaluate(run: Run, out: str) -> list[str]:
    tasks, tp = _load_tasks(run)
    used = [tp]
    agents_p = run.need("ingest", "agents.csv")
    agents = read_agents(agents_p)
    used.append(agents_p)
    bots = _bot_flags(agents, run.cfg["bot_threshold"])
    order = sorted(tasks)
    truth = {a: tasks[a].flipped for a in order}
    metric_rows = []
    for v in VARIANTS:
        scores, p = _load_scores(run, v)
        used.append(p)
        pred = [scores[a]["flagged"] == "1" for a in order]
        m = ev.macro_f1(pred, [truth[a] for a in order], v)
        metric_rows.append((
            v, m.macro_f1, m.accuracy, m.flip.precision, m.flip.recall, m.flip.f1,
            m.no_flip.precision, m.no_flip.recall, m.no_flip.f1, sum(pred), m.flip.support,
        ))
    _write_rows(
        os.path.join(out, "metrics.csv"),
        ["variant", "macro_f1", "accuracy", "flip_precision", "flip_recall", "flip_f1",
         "noflip_precision", "noflip_recall", "noflip_f1", "flagged", "flippers"],
        metric_rows,
    )
    v = run.cfg["variant"]
    scores, _ = _load_scores(run, v)
    predicted = {a: scores[a]["flagged"] == "1" for a in order}
    parts = {
        "all": order,
        "pro_to_anti": [a for a in order if tasks[a].current_stance > 0],
        "anti_to_pro": [a for a in order if tasks[a].current_stance < 0],
        "bots": [a for a in order if bots.get(a, False)],
        "non_bots": [a for a in order if not bots.get(a, False)],
    }
    for cm in ev.confusion(predicted, truth, parts):
        g = cm.grid()
        _write_rows(
            os.path.join(out, f"confusion_{cm.tag}.csv"),
            ["truth", "predicted_flip", "predicted_no_flip"],
            [("flip", g[0][0], g[0][1]), ("no_flip", g[1][0], g[1][1])],
        )
    S = {a: float(scores[a]["S"]) for a in order}
    flips = [S[a] for a in order if truth[a]]
    stays = [S[a] for a in order if not truth[a]]
    try:
        tt = ev.welch_ttest(flips, stays)
        ttest = {**asdict(tt), "significant": tt.significant, "variant": v}
    except ValueError as exc:
        ttest = {"error": str(exc), "variant": v}
    _dump_json(os.path.join(out, "susceptibility_ttest.json"), ttest)

    np_ = run.need("collective", "neighborhoods.csv")
    used.append(np_)
    stats = {
        r["agent_id"]: coll.NeighborhoodStats(
            r["agent_id"], int(r["size"]), float(r["bots"]), float(r["opposite"]), float(r["collective"]),
            float(r["collective_opposite"]),
        )
        for r in _read_rows(np_)
    }
    fl = [a for a in order if truth[a]]
    nf = [a for a in order if not truth[a]]
    if fl and nf:
        comp = ev.compare_neighborhoods(fl, nf, stats, bots)
        _write_rows(
            os.path.join(out, "neighborhood_comparison.csv"),
            ["criterion", "label", "flip_mean", "flip_sd", "noflip_mean", "noflip_sd", "t", "p", "significant"],
            [(c.criterion, c.label, c.flip_mean, c.flip_sd, c.noflip_mean, c.noflip_sd, c.t, c.p, int(c.significant))
             for c in comp],
        )
    gt = run.input_path("ground_truth", required=False)
    if gt is not None:
        used.append(gt)
        truth_data = read_truth(gt)
        _, agent_st, su = _load_stances(run)
        fp_ = run.need("collective", "flags.csv")
        used += su + [fp_]
        cflags = {r["agent_id"]: r["engaged"] == "1" for r in _read_rows(fp_)}
        rep = verify_recovery(
            truth_data,
            {a: int(r["final_stance"]) for a, r in agent_st.items() if a in truth_data.agents},
            {a: r["flipped"] == "1" for a, r in agent_st.items() if r["eligible"] == "1" and a in truth_data.agents},
            {a: f for a, f in cflags.items() if a in truth_data.agents},
            {a for a in order if predicted[a]},
        )
        _dump_json(os.path.join(out, "recovery.json"), rep.as_dict())
    return used


def stage_report(run: Run, out: str) -> list[str]:
    mp = run.need("evaluate", "metrics.csv")
    used = [mp]
    lines = ["# Stance-flip run report", ""]
    lines += ["## Flip prediction by model variant", "", "| variant | macro-F1 | accuracy | flagged | flippers |",
              "|---|---|---|---|---|"]
    for r in _read_rows(mp):
        lines.append(f"| {r['variant']} | {float(r['macro_f1']):.3f} | {float(r['accuracy']):.3f} | "
                     f"{r['flagged']} | {r['flippers']} |")
    lines += ["", "Flags: the top ceil(fraction x eligible agents) by susceptibility S "
              "(10% for variant 1, 1% otherwise unless configured).", ""]
    tp = run.path("evaluate", "susceptibility_ttest.json")
    if os.path.exists(tp):
        used.append(tp)
        with open(tp, encoding="utf-8") as fh:
            tt = json.load(fh)
        lines += ["## Susceptibility, flippers vs non-flippers", ""]
        if "error" in tt:
            lines.append(f"not computed: {tt['error']}")
        else:
            lines.append(f"Welch t = {tt['t']:.3f}, df = {tt['df']:.1f}, p = {tt['p']:.3g} "
                         f"(means {tt['mean_a']:.4g} vs {tt['mean_b']:.4g}, variant {tt['variant']})")
        lines.append("")
    cp = run.path("evaluate", "neighborhood_comparison.csv")
    if os.path.exists(cp):
        used.append(cp)
        lines += ["## Neighborhoods (1- and 2-degree)", "", "| criterion | flip | no flip | p |", "|---|---|---|---|"]
        for r in _read_rows(cp):
            mark = "*" if r["significant"] == "1" else ""
            lines.append(f"| {r['label']} | {float(r['flip_mean']):.4f} ± {float(r['flip_sd']):.4f} | "
                         f"{float(r['noflip_mean']):.4f} ± {float(r['noflip_sd']):.4f} | {float(r['p']):.3g}{mark} |")
        lines += ["", "* p < 0.05 (Welch two-sample t-test)", ""]
    lines += ["## Confusion matrices (configured variant)", ""]
    for tag in ev.PARTITIONS:
        p = run.path("evaluate", f"confusion_{tag}.csv")
        if os.path.exists(p):
            used.append(p)
            rows = _read_rows(p)
            lines.append(f"- {tag}: TP={rows[0]['predicted_flip']} FN={rows[0]['predicted_no_flip']} "
                         f"FP={rows[1]['predicted_flip']} TN={rows[1]['predicted_no_flip']}")
    rp = run.path("evaluate", "recovery.json")
    if os.path.exists(rp):
        used.append(rp)
        with open(rp, encoding="utf-8") as fh:
            rec = json.load(fh)
        lines += ["", "## Recovery against planted truth", ""]
        lines += [f"- {k}: {v:.4f}" if isinstance(v, float) else f"- {k}: {v}" for k, v in sorted(rec.items())]
    with open(os.path.join(out, "report.md"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return used


STAGE_FUNCS: dict[str, Callable[[Run, str], list[str]]] = {
    "synth": stage_synth,
    "ingest": stage_ingest,
    "label-stance": stage_label,
    "graph": stage_graph,
    "features": stage_features,
    "train-importance": stage_importance,
    "predict": stage_predict,
    "collective": stage_collective,
    "evaluate": stage_evaluate,
    "report": stage_report,
}


def run_all(run: Run, with_synth: bool = False) -> None:
    for stage in STAGES:
        if stage == "synth" and not with_synth:
            continue
        run_stage(stage, run)
