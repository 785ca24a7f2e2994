"""Verification scoring, equal error rate, and the divergence between
matched and unmatched distance distributions.

Scores are distances: smaller means more likely matched. A pair is accepted
at threshold t when its score falls below t; false accepts count unmatched
scores strictly below t and false rejects count matched scores strictly
above t, so a score exactly at the threshold penalizes neither side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ._linalg import freeze_array
from .errors import ValidationError
from .features import FeatureMatrix, PairSet

DEFAULT_BINS = 100
KL_SMOOTHING = 1e-10


@dataclass(frozen=True)
class ScoredPairs:
    """Per-pair distance scores with their match labels (1 = matched)."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if scores.ndim != 1 or labels.ndim != 1 or scores.size != labels.size:
            raise ValidationError("scores and labels must be 1-D arrays of equal length")
        if scores.size == 0:
            raise ValidationError("scored pair set is empty")
        if not np.isfinite(scores).all():
            raise ValidationError("scores contain non-finite values")
        if not np.isin(labels, (0, 1)).all():
            raise ValidationError("labels must be 0 or 1")
        if not (labels == 1).any() or not (labels == 0).any():
            raise ValidationError("need at least one matched and one unmatched score")
        object.__setattr__(self, "scores", freeze_array(scores))
        object.__setattr__(self, "labels", freeze_array(labels))

    def __len__(self) -> int:
        return self.scores.size

    @property
    def pos(self) -> np.ndarray:
        return self.scores[self.labels == 1]

    @property
    def neg(self) -> np.ndarray:
        return self.scores[self.labels == 0]


class EerResult(NamedTuple):
    eer: float
    threshold: float
    degenerate: bool = False


@dataclass(frozen=True)
class EvalReport:
    """Verification summary: EER, its threshold, ROC points, and KL(Pos||Neg)."""

    eer: float
    threshold: float
    kl_pos_neg: float
    roc: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    degenerate: bool = False

    def __post_init__(self):
        roc = np.asarray(self.roc, dtype=np.float64).reshape(-1, 3)
        if not 0.0 <= self.eer <= 1.0:
            raise ValidationError(f"eer must lie in [0, 1], got {self.eer}")
        if self.kl_pos_neg < 0.0:
            raise ValidationError(f"kl must be nonnegative, got {self.kl_pos_neg}")
        object.__setattr__(self, "eer", float(self.eer))
        object.__setattr__(self, "threshold", float(self.threshold))
        object.__setattr__(self, "kl_pos_neg", float(self.kl_pos_neg))
        object.__setattr__(self, "roc", freeze_array(roc))
        object.__setattr__(self, "degenerate", bool(self.degenerate))


def score_pairs(distance_fn, features: FeatureMatrix, pairs: PairSet) -> ScoredPairs:
    """Score every pair with ``distance_fn(x_i, x_j)``."""
    pairs.check_against(features)
    x = features.data
    scores = np.fromiter(
        (distance_fn(x[a], x[b]) for a, b in zip(pairs.i, pairs.j)),
        dtype=np.float64,
        count=len(pairs),
    )
    return ScoredPairs(scores=scores, labels=np.asarray(pairs.y))


def _operating_points(scored: ScoredPairs):
    """FAR/FRR step values at every distinct score, thresholds ascending."""
    thresholds = np.unique(scored.scores)
    pos = np.sort(scored.pos)
    neg = np.sort(scored.neg)
    far = np.searchsorted(neg, thresholds, side="left") / neg.size
    frr = (pos.size - np.searchsorted(pos, thresholds, side="right")) / pos.size
    return thresholds, far, frr


def compute_eer(scored: ScoredPairs) -> EerResult:
    """Equal error rate with linear interpolation at the FAR/FRR crossing.

    Sweeps thresholds over the distinct scores; FAR - FRR is nondecreasing,
    and the result interpolates linearly between the bracketing thresholds
    where the sign changes. With every score identical the crossing is
    undefined and (0.5, score, degenerate=True) is returned. The value is a
    rank statistic: strictly increasing score transformations preserve it.
    """
    thresholds, far, frr = _operating_points(scored)
    if thresholds.size == 1:
        return EerResult(eer=0.5, threshold=float(thresholds[0]), degenerate=True)
    diff = far - frr
    k = int(np.argmax(diff >= 0.0))
    if diff[k] == 0.0 or k == 0:
        return EerResult(eer=float(0.5 * (far[k] + frr[k])), threshold=float(thresholds[k]))
    w = -diff[k - 1] / (diff[k] - diff[k - 1])
    eer = far[k - 1] + w * (far[k] - far[k - 1])
    thr = thresholds[k - 1] + w * (thresholds[k] - thresholds[k - 1])
    return EerResult(eer=float(eer), threshold=float(thr))


def kl_divergence(scored: ScoredPairs, bins: int = DEFAULT_BINS) -> float:
    """KL(Pos||Neg) in nats between histogram estimates of the two score
    distributions.

    Both histograms share equal-width bins over [min(scores), max(scores)];
    counts get additive smoothing of ``KL_SMOOTHING`` per bin before
    normalization. Estimates depend on ``bins``; with heavily separated
    distributions the smoothing inflates bins observed on one side only.
    """
    if bins < 1:
        raise ValidationError(f"bins must be >= 1, got {bins}")
    scores = scored.scores
    lo, hi = float(scores.min()), float(scores.max())
    if lo == hi:
        raise ValidationError("need at least 2 distinct scores to compare distributions")
    hist_pos, _ = np.histogram(scored.pos, bins=bins, range=(lo, hi))
    hist_neg, _ = np.histogram(scored.neg, bins=bins, range=(lo, hi))
    p = hist_pos + KL_SMOOTHING
    q = hist_neg + KL_SMOOTHING
    p = p / p.sum()
    q = q / q.sum()
    return max(float(np.sum(p * np.log(p / q))), 0.0)


def build_report(scored: ScoredPairs, bins: int = DEFAULT_BINS) -> EvalReport:
    """Assemble the full report; ROC rows hold (threshold, far, frr) with
    thresholds descending so FAR is non-increasing down the table."""
    res = compute_eer(scored)
    if res.degenerate:
        thr = np.asarray([res.threshold])
        roc = np.column_stack([thr, [0.0], [0.0]])
        return EvalReport(
            eer=res.eer, threshold=res.threshold, kl_pos_neg=0.0, roc=roc, degenerate=True
        )
    thresholds, far, frr = _operating_points(scored)
    roc = np.column_stack([thresholds, far, frr])[::-1]
    return EvalReport(
        eer=res.eer,
        threshold=res.threshold,
        kl_pos_neg=kl_divergence(scored, bins),
        roc=roc,
    )


# ---------------------------------------------------------------------------
# report persistence: flat key=value text plus an optional ROC CSV table


def save_report(report: EvalReport, path, roc_path=None) -> None:
    lines = [
        f"eer={report.eer!r}",
        f"threshold={report.threshold!r}",
        f"kl={report.kl_pos_neg!r}",
        f"degenerate={'true' if report.degenerate else 'false'}",
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if roc_path is not None:
        rows = ["threshold,far,frr"]
        rows.extend(
            f"{float(t)!r},{float(a)!r},{float(r)!r}" for t, a, r in report.roc
        )
        Path(roc_path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def load_report(path, roc_path=None) -> EvalReport:
    fields = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValidationError(f"{path}: line {lineno}: expected key=value, got {line!r}")
        fields[key.strip()] = value.strip()
    try:
        eer = float(fields["eer"])
        threshold = float(fields["threshold"])
        kl = float(fields["kl"])
        degenerate = fields.get("degenerate", "false") == "true"
    except KeyError as exc:
        raise ValidationError(f"{path}: missing report field {exc}") from None
    roc = np.empty((0, 3))
    if roc_path is not None:
        rows = []
        text = Path(roc_path).read_text(encoding="utf-8").splitlines()
        for lineno, line in enumerate(text):
            if lineno == 0 or not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValidationError(f"{roc_path}: line {lineno}: expected 3 columns")
            rows.append([float(p) for p in parts])
        roc = np.asarray(rows, dtype=np.float64).reshape(-1, 3)
    return EvalReport(eer=eer, threshold=threshold, kl_pos_neg=kl, roc=roc, degenerate=degenerate)
