"""Summary F-Score, rank correlations and the two corpus-level protocols."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .selection import DEFAULT_FRACTION, knapsack_summary, top_fraction_select

log = logging.getLogger(__name__)


class UndefinedCorrelation(ValueError):
    """A rank coefficient is undefined (constant input)."""


def f_score(pred, gt):
    pred = np.asarray(pred).ravel().astype(bool)
    gt = np.asarray(gt).ravel().astype(bool)
    if pred.size != gt.size:
        raise ValueError(f"mask lengths differ: {pred.size} vs {gt.size}")
    n_pred, n_gt = pred.sum(), gt.sum()
    if n_pred == 0 and n_gt == 0:
        return 1.0
    overlap = np.logical_and(pred, gt).sum()
    if overlap == 0:
        return 0.0
    precision = overlap / n_pred
    recall = overlap / n_gt
    return float(2 * precision * recall / (precision + recall))


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError(f"lengths differ: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError("rank correlation needs at least 2 values")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise UndefinedCorrelation("rank correlation undefined for a constant vector")
    return a, b


def kendall_tau(a, b):
    """Kendall's tau-b (tie-corrected)."""
    a, b = _check_pair(a, b)
    iu = np.triu_indices(a.size, k=1)
    da = np.sign(a[:, None] - a[None, :])[iu]
    db = np.sign(b[:, None] - b[None, :])[iu]
    s = float((da * db).sum())
    n_a = float(np.count_nonzero(da))
    n_b = float(np.count_nonzero(db))
    return s / np.sqrt(n_a * n_b)


def spearman_rho(a, b):
    """Pearson correlation of mean ranks."""
    a, b = _check_pair(a, b)
    ra = rankdata(a) - (a.size + 1) / 2
    rb = rankdata(b) - (b.size + 1) / 2
    return float((ra * rb).sum() / np.sqrt((ra * ra).sum() * (rb * rb).sum()))


def _safe_corr(fn, a, b):
    try:
        return fn(a, b)
    except UndefinedCorrelation:
        return None


# --------------------------------------------------------------------------
# reports


@dataclass
class VideoResult:
    video_id: str
    f_score: float
    tau: float | None = None
    rho: float | None = None
    pairs: int = 1


@dataclass
class EvalReport:
    protocol: str
    videos: list[VideoResult] = field(default_factory=list)
    rank_reference: str = "importance"
    skipped_videos: int = 0

    @property
    def f_score(self):
        return float(np.mean([v.f_score for v in self.videos])) if self.videos else float("nan")

    def _mean(self, key):
        vals = [getattr(v, key) for v in self.videos if getattr(v, key) is not None]
        return float(np.mean(vals)) if vals else None

    @property
    def tau(self):
        return self._mean("tau")

    @property
    def rho(self):
        return self._mean("rho")

    @property
    def rank_skipped(self):
        return sum(1 for v in self.videos if v.tau is None)

    def to_dict(self):
        return {
            "protocol": self.protocol,
            "n_videos": len(self.videos),
            "f_score": self.f_score,
            "f_score_pct": round(100 * self.f_score, 1),
            "tau": self.tau,
            "rho": self.rho,
            "rank_reference": self.rank_reference,
            "rank_skipped": self.rank_skipped,
            "skipped_videos": self.skipped_videos,
            "per_video": [asdict(v) for v in self.videos],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table(self, name="sdmvsum"):
        def fmt(x):
            return "N/A" if x is None else f"{x:.3f}"

        head = f"{'Model':<20} | {'F1':>6} | {'tau':>6} | {'rho':>6}"
        row = f"{name:<20} | {100 * self.f_score:6.1f} | {fmt(self.tau):>6} | {fmt(self.rho):>6}"
        note = f"# protocol={self.protocol} videos={len(self.videos)} rank_reference={self.rank_reference}"
        return "\n".join([head, "-" * len(head), row, note]) + "\n"


# --------------------------------------------------------------------------
# protocols


def _scorer(model):
    """Accept either a parameter set or a callable ``(video, script, corpus) -> scores``."""
    if callable(model):
        return model
    from .model import forward

    def score(video, script, corpus):
        tr = corpus.expanded_transcripts(video.video_id) if model.config.use_transcript_branch else None
        return forward(model, video.frames, script.sentences, tr)

    return score


def eval_multi_gt(model, corpus, split="test", fraction=DEFAULT_FRACTION) -> EvalReport:
    """Top-fraction protocol averaged over every (script, ground truth) pair of a video.

    tau/rho compare the frame-wise mean of the predicted scores against the
    frame-wise mean of the binary ground truths.
    """
    score = _scorer(model)
    report = EvalReport("multi-gt", rank_reference="averaged-binary-gt")
    for video in corpus.split(split):
        pairs = [
            (s, corpus.ground_truths[s.script_id])
            for s in corpus.scripts_for(video.video_id)
            if s.script_id in corpus.ground_truths
        ]
        if not pairs:
            log.warning("video %s has no scored scripts; skipped", video.video_id)
            report.skipped_videos += 1
            continue
        fs, preds, gts = [], [], []
        for script, gt in pairs:
            scores = np.asarray(score(video, script, corpus), dtype=np.float64)
            fs.append(f_score(top_fraction_select(scores, fraction), gt.summary_mask))
            preds.append(scores)
            gts.append(gt.summary_mask)
        p, g = np.mean(preds, axis=0), np.mean(gts, axis=0)
        report.videos.append(VideoResult(
            video.video_id, float(np.mean(fs)),
            _safe_corr(kendall_tau, p, g), _safe_corr(spearman_rho, p, g), len(pairs),
        ))
    return report


def eval_single_gt(model, corpus, split="test", fraction=DEFAULT_FRACTION) -> EvalReport:
    """Knapsack protocol against the single ground truth of each video."""
    score = _scorer(model)
    report = EvalReport("single-gt")
    for video in corpus.split(split):
        pairs = [
            (s, corpus.ground_truths[s.script_id])
            for s in corpus.scripts_for(video.video_id)
            if s.script_id in corpus.ground_truths
        ]
        if not pairs:
            log.warning("video %s has no scored scripts; skipped", video.video_id)
            report.skipped_videos += 1
            continue
        if len(pairs) > 1:
            log.warning("video %s has %d ground truths; using the first", video.video_id, len(pairs))
        script, gt = pairs[0]
        scores = np.asarray(score(video, script, corpus), dtype=np.float64)
        summary = knapsack_summary(scores, video.fragments, fraction)
        tau = rho = None
        if gt.frame_importance is not None:
            tau = _safe_corr(kendall_tau, scores, gt.frame_importance)
            rho = _safe_corr(spearman_rho, scores, gt.frame_importance)
        report.videos.append(
            VideoResult(video.video_id, f_score(summary, gt.summary_mask), tau, rho)
        )
    return report


PROTOCOLS = {"multi-gt": eval_multi_gt, "single-gt": eval_single_gt}


def evaluate(model, corpus, protocol, split="test", fraction=DEFAULT_FRACTION):
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")
    return PROTOCOLS[protocol](model, corpus, split, fraction)
