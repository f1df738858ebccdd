"""Flip-prediction metrics, partitioned confusion matrices, Welch t-tests and
the flipper vs non-flipper neighborhood comparison."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .collective import NeighborhoodStats

log = logging.getLogger(__name__)

PARTITIONS = ("all", "pro_to_anti", "anti_to_pro", "bots", "non_bots")
ALPHA = 0.05


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    macro_f1: float
    accuracy: float
    flip: ClassScores
    no_flip: ClassScores
    variant: int | None = None


def _class_scores(pred: np.ndarray, truth: np.ndarray, positive) -> ClassScores:
    tp = int(np.sum((pred == positive) & (truth == positive)))
    fp = int(np.sum((pred == positive) & (truth != positive)))
    fn = int(np.sum((pred != positive) & (truth == positive)))
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return ClassScores(p, r, f, tp + fn)


def macro_f1(predictions: Sequence[bool], truths: Sequence[bool], variant: int | None = None) -> MetricsReport:
    pred = np.asarray(predictions, dtype=bool)
    truth = np.asarray(truths, dtype=bool)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    flip = _class_scores(pred, truth, True)
    stay = _class_scores(pred, truth, False)
    for name, cs in (("flip", flip), ("no-flip", stay)):
        if cs.support == 0:
            log.warning("class %s absent from truth; its F1 counts as 0", name)
    acc = float(np.mean(pred == truth)) if len(pred) else 0.0
    return MetricsReport((flip.f1 + stay.f1) / 2.0, acc, flip, stay, variant)


@dataclass(frozen=True)
class ConfusionMatrix:
    tag: str
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def grid(self) -> list[list[int]]:
        """Rows are truth (flip, no flip), columns prediction (flip, no flip)."""
        return [[self.tp, self.fn], [self.fp, self.tn]]


def confusion(
    predictions: Mapping[str, bool],
    truths: Mapping[str, bool],
    partitions: Mapping[str, Sequence[str]],
) -> list[ConfusionMatrix]:
    """One matrix per partition tag over the agent ids it lists."""
    out = []
    for tag, members in partitions.items():
        if tag not in PARTITIONS:
            raise ValueError(f"unknown partition tag {tag!r}")
        tp = fp = tn = fn = 0
        for a in members:
            p, t = bool(predictions[a]), bool(truths[a])
            if p and t:
                tp += 1
            elif p:
                fp += 1
            elif t:
                fn += 1
            else:
                tn += 1
        out.append(ConfusionMatrix(tag, tp, fp, tn, fn))
    return out


def _betacf(a: float, b: float, x: float, max_iter: int = 300, eps: float = 1e-15) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    log.warning("incomplete beta continued fraction did not converge (a=%g, b=%g, x=%g)", a, b, x)
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(log_front)
    # the fraction converges fast on the side below the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return min(1.0, max(0.0, betainc(df / 2.0, 0.5, df / (df + t * t))))


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: float
    mean_a: float
    mean_b: float
    sd_a: float
    sd_b: float

    @property
    def significant(self) -> bool:
        return self.p < ALPHA


def welch_ttest(sample_a: Sequence[float], sample_b: Sequence[float]) -> TTestResult:
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least two values")
    ma, mb = float(a.mean()), float(b.mean())
    va, vb = float(a.var(ddof=1)), float(b.var(ddof=1))
    qa, qb = va / len(a), vb / len(b)
    if qa + qb == 0.0:
        raise ValueError("both samples have zero variance")
    t = (ma - mb) / math.sqrt(qa + qb)
    df = (qa + qb) ** 2 / (qa * qa / (len(a) - 1) + qb * qb / (len(b) - 1))
    return TTestResult(t, t_two_sided_p(t, df), df, ma, mb, math.sqrt(va), math.sqrt(vb))


CRITERIA = (
    ("bot_share", "Proportion of bots"),
    ("neighbor_bots", "Proportion of neighbors that are bots"),
    ("neighbor_opposite", "Proportion of neighbors of the opposite stance"),
    ("neighbor_collective", "Proportion of neighbors participating in collective expression"),
    ("neighbor_collective_opposite", "Proportion of neighbors in collective expression and of opposite stance"),
)


@dataclass(frozen=True)
class ComparisonRow:
    criterion: str
    label: str
    flip_mean: float
    flip_sd: float
    noflip_mean: float
    noflip_sd: float
    t: float
    p: float

    @property
    def significant(self) -> bool:
        return self.p < ALPHA


def _compare(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    try:
        r = welch_ttest(a, b)
        return r.t, r.p
    except ValueError:
        # both groups constant: no evidence when equal, certainty otherwise
        if len(a) and len(b) and a.mean() != b.mean():
            return math.copysign(math.inf, a.mean() - b.mean()), 0.0
        return 0.0, 1.0


def compare_neighborhoods(
    flippers: Sequence[str],
    non_flippers: Sequence[str],
    stats: Mapping[str, NeighborhoodStats],
    bot_flags: Mapping[str, bool],
) -> list[ComparisonRow]:
    if not flippers or not non_flippers:
        raise ValueError("both groups must be nonempty")
    getters = {
        "bot_share": lambda a: float(bool(bot_flags.get(a, False))),
        "neighbor_bots": lambda a: stats[a].bots,
        "neighbor_opposite": lambda a: stats[a].opposite,
        "neighbor_collective": lambda a: stats[a].collective,
        "neighbor_collective_opposite": lambda a: stats[a].collective_opposite,
    }
    rows = []
    for key, label in CRITERIA:
        fa = np.array([getters[key](a) for a in flippers])
        fb = np.array([getters[key](a) for a in non_flippers])
        t, p = _compare(fa, fb)
        sd_a = float(fa.std(ddof=1)) if len(fa) > 1 else 0.0
        sd_b = float(fb.std(ddof=1)) if len(fb) > 1 else 0.0
        rows.append(ComparisonRow(key, label, float(fa.mean()), sd_a, float(fb.mean()), sd_b, t, p))
    return rows
