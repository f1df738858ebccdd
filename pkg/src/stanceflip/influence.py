"""Five incremental influence models, susceptibility scoring and flip flags.

Variants:
    1  agent score X.B, first-degree influence only (flags top 10%)
    2  adds second-degree neighbors (flags top 1% from here on)
    3  scales scores by stance strength gamma
    4  further scales by connection C
    5  adds reciprocity R with the focal agent to each first-degree neighbor

Scores carry the sign of the agent's stance (pro +, anti -), so that
S = (I - Y)^2 grows when neighbors pull the other way.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtr

from .graph import InteractionGraph, TwoHopView, connection, two_hop_matrices, reciprocity_matrix
from .records import AgentTimeline

log = logging.getLogger(__name__)

FEATURE_NAMES = (
    "tweet_count",
    "avg_word_length",
    "reading_difficulty",
    "positive_sentiment",
    "negative_sentiment",
    "own_stance",
    "num_identities",
    "num_pronouns",
    "first_person",
    "second_person",
    "third_person",
    "num_exclamations",
    "num_family",
    "num_exclusive",
    "num_abusive",
    "followers",
    "eigenvector",
    "super_spreader",
    "betweenness",
    "super_friend",
    "total_degree",
)
OWN_STANCE = FEATURE_NAMES.index("own_stance")
VARIANTS = (1, 2, 3, 4, 5)


def default_flag_fraction(variant: int) -> float:
    return 0.10 if variant == 1 else 0.01


@dataclass(frozen=True)
class ModelConfig:
    variant: int = 5
    flag_fraction: float | None = None
    stance_weight: float | str = "importance"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant}")
        frac = self.fraction
        if not 0.0 < frac <= 1.0:
            raise ValueError("flag fraction must lie in (0, 1]")

    @property
    def fraction(self) -> float:
        return default_flag_fraction(self.variant) if self.flag_fraction is None else self.flag_fraction

    def resolve_stance_weight(self, coefficients: Sequence[float], warn: bool = True) -> float:
        if self.stance_weight != "importance":
            return float(self.stance_weight)
        w = float(coefficients[OWN_STANCE])
        if w <= 0.0:
            w = 1.0 / len(coefficients)
            if warn:
                log.warning("own-stance importance is zero; using uniform stance weight %.4f", w)
        return w


def standardize(X: np.ndarray, reference_rows: np.ndarray | None = None) -> np.ndarray:
    """Z-score each column against ``reference_rows``, then map through the
    standard normal CDF so every entry lies in (0, 1).

    The CDF step keeps X.B nonnegative, which the sign convention needs.
    Constant columns map to 0.5.
    """
    X = np.asarray(X, dtype=float)
    ref = X if reference_rows is None else X[reference_rows]
    if ref.shape[0] == 0:
        ref = X
    mu = ref.mean(axis=0)
    sd = ref.std(axis=0)
    z = np.divide(X - mu, sd, out=np.zeros_like(X), where=sd > 0)
    return ndtr(z)


def stance_strength(stances: Sequence[int], w_s: float) -> float:
    """gamma = (labeled tweets matching the final stance / labeled tweets) * w_s."""
    if w_s < 0:
        raise ValueError("w_s must be nonnegative")
    lab = [s for s in stances if s != 0]
    if not lab:
        raise ValueError("no labeled tweets")
    return sum(1 for s in lab if s == lab[-1]) / len(lab) * w_s


def _uses(variant: int) -> tuple[bool, bool, bool, bool]:
    """(second degree, gamma, connection, reciprocity) switches."""
    return variant >= 2, variant >= 3, variant >= 4, variant >= 5


def _check(x, b):
    x = np.asarray(x, dtype=float)
    b = np.asarray(b, dtype=float)
    if x.shape != b.shape:
        raise ValueError(f"dimension mismatch: X has {x.shape}, B has {b.shape}")
    return x, b


def agent_score(x, b, gamma: float = 1.0, conn: float = 1.0, variant: int = 5, sign: int = 1) -> float:
    x, b = _check(x, b)
    _, use_g, use_c, _ = _uses(variant)
    g = gamma if use_g else 1.0
    c = conn if use_c else 1.0
    return sign * g * c * float(x @ b)


def neighbor_score(
    x, b, gamma: float = 1.0, conn: float = 1.0, R: float = 0.0, variant: int = 5, sign: int = 1
) -> float:
    base = agent_score(x, b, gamma, conn, variant, sign)
    if _uses(variant)[3]:
        return base + sign * R
    return base


def influence(view: TwoHopView, scores: Mapping[str, float], variant: int = 5) -> float:
    """Hop-weighted sum of neighbor scores; 0.0 for an isolated agent.

    ``scores`` must hold every first-degree neighbor (and, from variant 2 on,
    every second-degree neighbor) scored under the same variant.
    """
    if view.n == 0:
        return 0.0
    total = 0.0
    for j, w in view.first_degree.items():
        total += w * scores[j]
    if _uses(variant)[0]:
        for k, w in view.second_degree.items():
            total += w * scores[k]
    return total


def susceptibility(I: float, Y: float) -> float:
    return (I - Y) ** 2


def flag_count(n: int, fraction: float) -> int:
    # round first so 0.07 * 100 does not ceil to 8
    return min(n, max(1, math.ceil(round(fraction * n, 9))))


def predict_flips(scores: Mapping[str, float], fraction: float) -> set[str]:
    """Flag the ceil(fraction * N) agents with the highest S; ties go to the
    lower agent id."""
    if not scores:
        raise ValueError("no scores to rank")
    k = flag_count(len(scores), fraction)
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return {a for a, _ in ranked[:k]}


@dataclass(frozen=True)
class PredictionTask:
    agent_id: str
    history: tuple[int, ...]
    history_tweet_ids: tuple[str, ...]
    held_out: int
    flipped: bool

    @property
    def current_stance(self) -> int:
        return [s for s in self.history if s != 0][-1]

    @property
    def initial_stance(self) -> int:
        return [s for s in self.history if s != 0][0]


def prepare_prediction_task(timelines: Mapping[str, AgentTimeline]) -> dict[str, PredictionTask]:
    """Withhold each eligible agent's last labeled tweet as ground truth.

    History is every tweet before the withheld one. The agent counts as
    flipped when the withheld stance differs from its last historical stance.
    """
    tasks = {}
    for agent in sorted(timelines):
        tl = timelines[agent]
        if not tl.eligible:
            continue
        last = max(i for i, s in enumerate(tl.stances) if s != 0)
        history = tl.stances[:last]
        if not any(history):
            log.warning("agent %s has no labeled history; excluded", agent)
            continue
        current = [s for s in history if s != 0][-1]
        held = tl.stances[last]
        tasks[agent] = PredictionTask(
            agent,
            tuple(history),
            tuple(t.tweet_id for t in tl.tweets[:last]),
            held,
            held != current,
        )
    return tasks


@dataclass
class AgentState:
    """Per-agent inputs to scoring, aligned with ``graph.nodes``."""

    sign: np.ndarray
    gamma_frac: np.ndarray
    connection: np.ndarray


def network_state(graph: InteractionGraph, stances: Mapping[str, int], fractions: Mapping[str, float]) -> AgentState:
    """Stance sign, final-stance fraction and connection from full timelines."""
    sign = np.array([stances.get(a, 0) for a in graph.nodes], dtype=float)
    frac = np.array([fractions.get(a, 0.0) for a in graph.nodes], dtype=float)
    conn = np.array([connection(graph, a, stances).value for a in graph.nodes])
    return AgentState(sign, frac, conn)


def final_fraction(stances: Sequence[int]) -> float:
    lab = [s for s in stances if s != 0]
    if not lab:
        return 0.0
    return sum(1 for s in lab if s == lab[-1]) / len(lab)


@dataclass
class ScoreRow:
    agent_id: str
    variant: int
    gamma: float
    connection: float
    Y: float
    I: float
    S: float
    flagged: bool = False


class InfluenceModel:
    """Vectorized scorer over a frozen graph, feature matrix and B*.

    ``features`` rows follow ``graph.nodes`` and are already standardized.
    ``network`` describes every agent as a neighbor (full timeline);
    ``tasks`` gives focal agents their held-out history view.
    """

    def __init__(
        self,
        graph: InteractionGraph,
        features: np.ndarray,
        coefficients: Sequence[float],
        network: AgentState,
        tasks: Mapping[str, PredictionTask],
    ):
        self.graph = graph
        self._warned = False
        self.B = np.asarray(coefficients, dtype=float)
        X = np.asarray(features, dtype=float)
        if X.shape != (len(graph.nodes), len(self.B)):
            raise ValueError(f"feature matrix shape {X.shape} does not match graph and B*")
        self.dot = X @ self.B
        self.network = network
        self.tasks = dict(tasks)
        self.focal = [a for a in graph.nodes if a in self.tasks]
        missing = sorted(set(self.tasks) - set(self.focal))
        if missing:
            raise KeyError(f"prediction agents missing from graph: {missing[:5]}")
        self.focal_idx = np.array([graph.index[a] for a in self.focal], dtype=np.int64)
        self.W1, self.W2 = two_hop_matrices(graph)
        R = reciprocity_matrix(graph)
        self.W1R = self.W1.multiply(R).tocsr()
        stance_by_agent = {a: int(s) for a, s in zip(graph.nodes, network.sign)}
        self.focal_sign = np.array([self.tasks[a].current_stance for a in self.focal], dtype=float)
        self.focal_frac = np.array([final_fraction(self.tasks[a].history) for a in self.focal])
        self.focal_conn = np.array(
            [connection(graph, a, stance_by_agent, own_stance=self.tasks[a].current_stance).value for a in self.focal]
        )

    def score(
        self,
        config: ModelConfig,
        force_gamma: float | None = None,
        force_connection: float | None = None,
        force_reciprocity_zero: bool = False,
    ) -> list[ScoreRow]:
        second, use_g, use_c, use_r = _uses(config.variant)
        w_s = config.resolve_stance_weight(self.B, warn=use_g and not self._warned)
        self._warned = self._warned or use_g
        net = self.network
        n = len(self.graph.nodes)

        def factors(frac, conn, size):
            g = np.full(size, 1.0)
            c = np.full(size, 1.0)
            if use_g:
                g = frac * w_s if force_gamma is None else np.full(size, force_gamma)
            if use_c:
                c = conn if force_connection is None else np.full(size, force_connection)
            return g, c

        g_net, c_net = factors(net.gamma_frac, net.connection, n)
        y_net = net.sign * g_net * c_net * self.dot
        I = self.W1 @ y_net
        if second:
            I = I + self.W2 @ y_net
        if use_r:
            recip = self.W1R @ net.sign
            if force_reciprocity_zero:
                recip = np.zeros_like(recip)
            I = I + recip
        I = I[self.focal_idx]

        g_f, c_f = factors(self.focal_frac, self.focal_conn, len(self.focal))
        Y = self.focal_sign * g_f * c_f * self.dot[self.focal_idx]
        S = (I - Y) ** 2
        rows = [
            ScoreRow(a, config.variant, float(g_f[i]), float(c_f[i]), float(Y[i]), float(I[i]), float(S[i]))
            for i, a in enumerate(self.focal)
        ]
        if rows:
            flagged = predict_flips({r.agent_id: r.S for r in rows}, config.fraction)
            for r in rows:
                r.flagged = r.agent_id in flagged
        return rows
