"""Deterministic synthetic corpora with a planted script/frame signal.

Each video is a sequence of random unit frame embeddings. For every script
a set of whole fragments totalling exactly ``summary_capacity(N)`` frames is
planted: each planted frame gets cosine ``strength`` with one sentence of
that script. The ground-truth summary is the planted set. Transcripts repeat
the matching script sentence over a ``coverage`` fraction of the planted
spans; a few random distractor transcripts cover unplanted time.

With ``vocab_size > 0`` script sentences are drawn from a corpus-wide pool of
concept vectors, and ``decoy_fraction`` of the unplanted fragments are
matched to concepts that are *not* in the video's scripts, so a frame that
resembles some concept is only relevant if the script mentions it.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus_io import (
    Corpus, GroundTruth, ScriptRecord, TimedTranscript, VideoRecord, save_corpus,
)
from .selection import summary_capacity


class SynthSpecError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    n_videos: int = 8
    frames_range: tuple[int, int] = (40, 60)
    dim: int = 32
    scripts_per_video: int = 1
    sentences_per_script: int = 3
    coverage: float = 0.5
    strength: float = 1.0
    distractor_transcripts: int = 2
    vocab_size: int = 0
    decoy_fraction: float = 0.0
    splits: tuple[int, int, int] | None = None
    importance: bool = True
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.frames_range
        if min(self.n_videos, self.dim, self.scripts_per_video, self.sentences_per_script, lo) < 1:
            raise SynthSpecError("all counts must be positive")
        if hi < lo:
            raise SynthSpecError(f"bad frames range {self.frames_range}")
        if not 0 <= self.coverage <= 1 or not 0 <= self.strength <= 1:
            raise SynthSpecError("coverage and strength must lie in [0, 1]")
        if not 0 <= self.decoy_fraction <= 1:
            raise SynthSpecError("decoy_fraction must lie in [0, 1]")
        if self.vocab_size and self.vocab_size < self.sentences_per_script * self.scripts_per_video + (
            1 if self.decoy_fraction > 0 else 0
        ):
            raise SynthSpecError("vocabulary too small for the requested scripts and decoys")
        if self.splits is not None and sum(self.splits) != self.n_videos:
            raise SynthSpecError(f"splits {self.splits} do not add up to {self.n_videos} videos")


def _unit(rng, *shape):
    v = rng.standard_normal(shape)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _with_cosine(rng, target, strength):
    """Unit vector whose cosine with unit ``target`` is exactly ``strength``."""
    noise = rng.standard_normal(target.shape)
    noise -= noise.dot(target) * target
    noise /= np.linalg.norm(noise)
    return strength * target + np.sqrt(max(0.0, 1 - strength ** 2)) * noise


def _split_run(rng, length, lo=2, hi=6):
    parts = []
    while length > 0:
        p = min(length, int(rng.integers(lo, hi + 1)))
        if 0 < length - p < lo:
            p = length
        parts.append(p)
        length -= p
    return parts


def _plan_video(rng, n, n_scripts, k):
    """Fragment plan: planted spans per script plus filler, in frame order."""
    pieces = []
    for s in range(n_scripts):
        pieces += [("plant", s, p) for p in _split_run(rng, k, 1, 4)]
    filler = n - k * n_scripts
    if filler < 0:
        raise SynthSpecError(
            f"planted frames ({k} x {n_scripts} scripts) exceed video length {n}"
        )
    order = rng.permutation(len(pieces))
    pieces = [pieces[i] for i in order]
    # scatter the filler into len(pieces)+1 gaps
    cuts = np.sort(rng.integers(0, filler + 1, size=len(pieces)))
    gaps = np.diff(np.concatenate([[0], cuts, [filler]]))
    plan = []
    for gap, piece in zip(gaps, pieces + [None]):
        plan += [("fill", None, p) for p in _split_run(rng, int(gap))]
        if piece is not None:
            plan.append(piece)
    return plan


def build(spec: SynthSpec) -> Corpus:
    rng = np.random.default_rng(spec.seed)
    if spec.splits is None:
        n_val = n_test = max(1, spec.n_videos // 5) if spec.n_videos >= 3 else 0
        splits = (spec.n_videos - n_val - n_test, n_val, n_test)
    else:
        splits = spec.splits
    split_names = ["train"] * splits[0] + ["val"] * splits[1] + ["test"] * splits[2]

    vocab = _unit(rng, spec.vocab_size, spec.dim) if spec.vocab_size else None
    videos, scripts, gts = {}, {}, {}
    for vi in range(spec.n_videos):
        vid = f"v{vi:03d}"
        n = int(rng.integers(spec.frames_range[0], spec.frames_range[1] + 1))
        k = summary_capacity(n)
        frames = _unit(rng, n, spec.dim)
        if vocab is None:
            sentences = [_unit(rng, spec.sentences_per_script, spec.dim)
                         for _ in range(spec.scripts_per_video)]
            off_script = None
        else:
            picks = rng.permutation(spec.vocab_size)
            m = spec.sentences_per_script
            sentences = [vocab[picks[i * m:(i + 1) * m]] for i in range(spec.scripts_per_video)]
            off_script = vocab[picks[m * spec.scripts_per_video:]]
        plan = _plan_video(rng, n, spec.scripts_per_video, k)

        fragments, transcripts = [], []
        masks = [np.zeros(n, dtype=np.int8) for _ in range(spec.scripts_per_video)]
        filler_frags = []
        start = 0
        for kind, s, length in plan:
            a, b = start, start + length - 1
            fragments.append((a, b))
            if kind == "plant":
                sent = sentences[s][int(rng.integers(spec.sentences_per_script))]
                for f in range(a, b + 1):
                    frames[f] = _with_cosine(rng, sent, spec.strength)
                masks[s][a:b + 1] = 1
                if rng.random() < spec.coverage:
                    transcripts.append(TimedTranscript(sent.astype(np.float32), float(a), float(b + 1)))
            elif off_script is not None and rng.random() < spec.decoy_fraction:
                decoy = off_script[int(rng.integers(len(off_script)))]
                for f in range(a, b + 1):
                    frames[f] = _with_cosine(rng, decoy, spec.strength)
                filler_frags.append((a, b))
            else:
                filler_frags.append((a, b))
            start = b + 1
        n_dis = min(spec.distractor_transcripts, len(filler_frags))
        for i in rng.choice(len(filler_frags), size=n_dis, replace=False) if n_dis else []:
            a, b = filler_frags[int(i)]
            transcripts.append(TimedTranscript(_unit(rng, spec.dim).astype(np.float32), float(a), float(b + 1)))
        transcripts.sort(key=lambda t: t.start_s)

        videos[vid] = VideoRecord(vid, frames.astype(np.float32), fragments, split_names[vi], transcripts)
        for s in range(spec.scripts_per_video):
            sid = f"{vid}_s{s}"
            scripts[sid] = ScriptRecord(sid, vid, sentences[s].astype(np.float32))
            imp = None
            if spec.importance:
                imp = np.convolve(masks[s], [0.25, 0.5, 0.25], mode="same")
                imp = np.clip(imp + 0.5 * masks[s], 0, 1).astype(np.float32)
            gts[sid] = GroundTruth(sid, masks[s], imp)
    return Corpus(spec.dim, videos, scripts, gts)


def generate(spec: SynthSpec, out_dir) -> Path:
    """Write a synthetic corpus and return its manifest path."""
    return save_corpus(build(spec), out_dir)
