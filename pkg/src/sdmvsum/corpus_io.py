"""On-disk corpus: SDMV tensor files, JSON manifest, transcripts, outputs.

SDMV layout (little-endian)::

    b"SDMV" | version u16 | rows u32 | cols u32 | rows*cols float32, row-major

The manifest is a single JSON document; every file it names is relative to
the manifest's directory::

    {
      "format": "sdmv-corpus", "version": 1, "dim": D,
      "videos": [{"video_id", "frames", "fragments", "split",
                  "transcripts": {"meta": "*.jsonl", "embeddings": "*.sdmv"} | null}],
      "scripts": [{"script_id", "video_id", "sentences"}],
      "ground_truths": [{"script_id", "summary", "importance": path | null}]
    }

``fragments`` is a JSON file holding ``[[start, end], ...]`` (inclusive
frame indices); it may be null, in which case uniform 5-frame fragments are
used. Transcript metadata is JSON lines ``{"index", "start_s", "end_s"}``;
line ``i`` pairs with row ``index`` of the embeddings file.
"""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

MAGIC = b"SDMV"
VERSION = 1
_HEADER = struct.Struct("<4sHII")
DEFAULT_FRAGMENT_LEN = 5


class CorpusError(ValueError):
    """Base class for corpus loading/validation failures."""


class MissingFileError(CorpusError, FileNotFoundError):
    pass


class FormatError(CorpusError):
    pass


class CorpusDimensionError(CorpusError):
    pass


class DanglingReferenceError(CorpusError):
    pass


class ValidationError(CorpusError):
    pass


# --------------------------------------------------------------------------
# SDMV tensors


def encode_tensor(array) -> bytes:
    array = np.asarray(array)
    if array.ndim == 1:
        array = array.reshape(1, -1)
    if array.ndim != 2:
        raise ValueError(f"SDMV holds 2-D tensors, got shape {array.shape}")
    rows, cols = array.shape
    payload = np.ascontiguousarray(array, dtype="<f4").tobytes()
    return _HEADER.pack(MAGIC, VERSION, rows, cols) + payload


def decode_tensor(blob: bytes, source="<bytes>") -> np.ndarray:
    if len(blob) < _HEADER.size:
        raise FormatError(f"{source}: truncated SDMV header")
    magic, version, rows, cols = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported SDMV version {version}")
    expected = _HEADER.size + 4 * rows * cols
    if len(blob) != expected:
        raise FormatError(f"{source}: expected {expected} bytes, found {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    return data.reshape(rows, cols).astype(np.float32)


def write_tensor(path, array):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_tensor(array))
    except OSError as exc:
        raise OSError(f"cannot write tensor to {path}: {exc}") from exc


def read_tensor(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"tensor file not found: {path}")
    return decode_tensor(path.read_bytes(), source=str(path))


# --------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class TimedTranscript:
    embedding: np.ndarray
    start_s: float
    end_s: float


@dataclass
class VideoRecord:
    video_id: str
    frames: np.ndarray
    fragments: list[tuple[int, int]]
    split: str = "train"
    transcripts: list[TimedTranscript] = field(default_factory=list)

    @property
    def n_frames(self):
        return self.frames.shape[0]


@dataclass
class ScriptRecord:
    script_id: str
    video_id: str
    sentences: np.ndarray


@dataclass
class GroundTruth:
    script_id: str
    summary_mask: np.ndarray
    frame_importance: np.ndarray | None = None


@dataclass
class Corpus:
    dim: int
    videos: dict[str, VideoRecord]
    scripts: dict[str, ScriptRecord]
    ground_truths: dict[str, GroundTruth]

    def scripts_for(self, video_id):
        return [s for s in self.scripts.values() if s.video_id == video_id]

    def split(self, name):
        return [v for v in self.videos.values() if v.split == name]

    def expanded_transcripts(self, video_id, frame_rate=1.0):
        v = self.videos[video_id]
        return expand_transcripts(v.transcripts, v.n_frames, frame_rate, dim=self.dim)

    def samples(self, split):
        """(video, script, ground truth) triplets of one split, in manifest order."""
        out = []
        for v in self.split(split):
            for s in self.scripts_for(v.video_id):
                gt = self.ground_truths.get(s.script_id)
                if gt is not None:
                    out.append((v, s, gt))
        return out


# --------------------------------------------------------------------------
# fragments and transcripts


def uniform_fragments(n_frames, length=DEFAULT_FRAGMENT_LEN):
    return [(s, min(s + length, n_frames) - 1) for s in range(0, n_frames, length)]


def validate_fragments(fragments, n_frames, video_id="?"):
    expected = 0
    for start, end in fragments:
        if start != expected or end < start:
            raise ValidationError(
                f"video {video_id}: fragments must be sorted, contiguous and "
                f"non-overlapping; got [{start}, {end}] where start {expected} was expected"
            )
        expected = end + 1
    if expected != n_frames:
        raise ValidationError(
            f"video {video_id}: fragments cover 0..{expected - 1}, video has {n_frames} frames"
        )


def expand_transcripts(transcripts, n_frames, frame_rate=1.0, dim=None):
    """Frame-aligned ``n_frames x D`` transcript matrix.

    Frame ``n`` spans ``[n, n+1) / frame_rate`` seconds and takes the embedding
    of the transcript covering it; uncovered frames are zero. Overlaps go to
    the earlier start, then the longer span, then the earlier list position.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if dim is None:
        if not transcripts:
            raise ValueError("dim is required when the transcript list is empty")
        dim = len(transcripts[0].embedding)
    out = np.zeros((n_frames, dim), dtype=np.float32)
    owner = np.full(n_frames, -1)
    order = sorted(
        range(len(transcripts)),
        key=lambda i: (transcripts[i].start_s, -(transcripts[i].end_s - transcripts[i].start_s), i),
    )
    for i in order:
        t = transcripts[i]
        # frame n intersects [start, end) with positive length iff n < end*fr and n+1 > start*fr
        lo = max(0, int(np.floor(t.start_s * frame_rate)))
        hi = min(n_frames, int(np.ceil(t.end_s * frame_rate)))
        for n in range(lo, hi):
            if owner[n] < 0:
                owner[n] = i
                out[n] = t.embedding
    return out


def read_transcripts(meta_path, emb_path, n_frames=None, frame_rate=1.0, video_id="?"):
    meta_path, emb_path = Path(meta_path), Path(emb_path)
    if not meta_path.is_file():
        raise MissingFileError(f"video {video_id}: transcript file not found: {meta_path}")
    lines = [ln for ln in meta_path.read_text().splitlines() if ln.strip()]
    if not lines:
        return []
    emb = read_tensor(emb_path)
    duration = None if n_frames is None else n_frames / frame_rate
    out = []
    for ln in lines:
        rec = json.loads(ln)
        start, end = float(rec["start_s"]), float(rec["end_s"])
        if duration is not None and (start < 0 or end > duration):
            log.warning(
                "video %s: transcript %s [%g, %g) clipped to [0, %g)",
                video_id, rec["index"], start, end, duration,
            )
            start, end = max(start, 0.0), min(end, duration)
        if end <= start:
            log.warning("video %s: transcript %s dropped (empty span)", video_id, rec["index"])
            continue
        out.append(TimedTranscript(emb[int(rec["index"])].copy(), start, end))
    return out


def write_transcripts(meta_path, emb_path, transcripts, dim):
    meta_path = Path(meta_path)
    meta_path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        json.dumps({"index": i, "start_s": t.start_s, "end_s": t.end_s})
        for i, t in enumerate(transcripts)
    ]
    meta_path.write_text("".join(ln + "\n" for ln in lines))
    emb = (
        np.stack([t.embedding for t in transcripts])
        if transcripts
        else np.zeros((0, dim), dtype=np.float32)
    )
    write_tensor(emb_path, emb)


# --------------------------------------------------------------------------
# scores and summary masks


def write_scores(video_id, scores, out_path):
    scores = np.asarray(scores, dtype=np.float32).ravel()
    if scores.size == 0:
        raise ValueError(f"video {video_id}: refusing to write empty scores")
    write_tensor(out_path, scores.reshape(1, -1))


def read_scores(path):
    return read_tensor(path).ravel()


def write_summary(video_id, mask, out_path):
    mask = np.asarray(mask).ravel()
    if mask.size == 0:
        raise ValueError(f"video {video_id}: refusing to write empty mask")
    if not np.isin(mask, (0, 1)).all():
        raise ValueError(f"video {video_id}: mask must be binary")
    out_path = Path(out_path)
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(
            json.dumps({"video_id": video_id, "mask": [int(b) for b in mask]}) + "\n"
        )
    except OSError as exc:
        raise OSError(f"cannot write summary to {out_path}: {exc}") from exc


def read_summary(path):
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"summary file not found: {path}")
    return np.asarray(json.loads(path.read_text())["mask"], dtype=np.int8)


# --------------------------------------------------------------------------
# manifest


def _resolve(root, rel, what):
    path = root / rel
    if not path.is_file():
        raise MissingFileError(f"{what}: file not found: {path}")
    return path


def load_corpus(manifest_path, frame_rate=1.0) -> Corpus:
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise MissingFileError(f"manifest not found: {manifest_path}")
    root = manifest_path.parent
    doc = json.loads(manifest_path.read_text())
    if doc.get("format") != "sdmv-corpus":
        raise FormatError(f"{manifest_path}: not an sdmv-corpus manifest")
    dim = doc.get("dim")

    videos = {}
    for entry in doc["videos"]:
        vid = entry["video_id"]
        if vid in videos:
            raise ValidationError(f"duplicate video_id {vid}")
        frames = read_tensor(_resolve(root, entry["frames"], f"video {vid}"))
        if dim is None:
            dim = frames.shape[1]
        if frames.shape[1] != dim:
            raise CorpusDimensionError(
                f"video {vid}: embedding size {frames.shape[1]} != corpus size {dim}"
            )
        n = frames.shape[0]
        if n < 1:
            raise ValidationError(f"video {vid}: no frames")
        if entry.get("fragments"):
            raw = json.loads(_resolve(root, entry["fragments"], f"video {vid}").read_text())
            fragments = [(int(a), int(b)) for a, b in raw]
        else:
            fragments = uniform_fragments(n)
        validate_fragments(fragments, n, vid)

        transcripts = []
        tr = entry.get("transcripts")
        if tr:
            meta = root / tr["meta"]
            if meta.is_file():
                transcripts = read_transcripts(meta, root / tr["embeddings"], n, frame_rate, vid)
                for t in transcripts:
                    if len(t.embedding) != dim:
                        raise CorpusDimensionError(
                            f"video {vid}: transcript size {len(t.embedding)} != corpus size {dim}"
                        )
            else:
                log.warning("video %s: transcript file %s missing; using zeros", vid, meta)
        videos[vid] = VideoRecord(vid, frames, fragments, entry.get("split", "train"), transcripts)

    scripts = {}
    for entry in doc.get("scripts", []):
        sid, vid = entry["script_id"], entry["video_id"]
        if vid not in videos:
            raise DanglingReferenceError(f"script {sid}: unknown video_id {vid}")
        if sid in scripts:
            raise ValidationError(f"duplicate script_id {sid}")
        sentences = read_tensor(_resolve(root, entry["sentences"], f"script {sid}"))
        if sentences.shape[0] < 1:
            raise ValidationError(f"script {sid}: no sentences")
        if sentences.shape[1] != dim:
            raise CorpusDimensionError(
                f"script {sid}: embedding size {sentences.shape[1]} != corpus size {dim}"
            )
        scripts[sid] = ScriptRecord(sid, vid, sentences)

    gts = {}
    for entry in doc.get("ground_truths", []):
        sid = entry["script_id"]
        if sid not in scripts:
            raise DanglingReferenceError(f"ground truth: unknown script_id {sid}")
        n = videos[scripts[sid].video_id].n_frames
        mask = read_summary(_resolve(root, entry["summary"], f"ground truth {sid}"))
        if mask.size != n:
            raise ValidationError(
                f"ground truth {sid}: mask length {mask.size} != video length {n}"
            )
        importance = None
        if entry.get("importance"):
            importance = read_tensor(
                _resolve(root, entry["importance"], f"ground truth {sid}")
            ).ravel()
            if importance.size != n:
                raise ValidationError(
                    f"ground truth {sid}: importance length {importance.size} != video length {n}"
                )
        gts[sid] = GroundTruth(sid, mask, importance)

    return Corpus(int(dim), videos, scripts, gts)


def save_corpus(corpus: Corpus, out_dir) -> Path:
    """Write ``corpus`` under ``out_dir`` and return the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {"format": "sdmv-corpus", "version": 1, "dim": corpus.dim,
           "videos": [], "scripts": [], "ground_truths": []}
    for v in corpus.videos.values():
        frames = f"videos/{v.video_id}.frames.sdmv"
        frags = f"videos/{v.video_id}.fragments.json"
        write_tensor(out_dir / frames, v.frames)
        (out_dir / frags).write_text(json.dumps([list(f) for f in v.fragments]) + "\n")
        meta = f"transcripts/{v.video_id}.jsonl"
        emb = f"transcripts/{v.video_id}.sdmv"
        write_transcripts(out_dir / meta, out_dir / emb, v.transcripts, corpus.dim)
        doc["videos"].append({
            "video_id": v.video_id, "frames": frames, "fragments": frags,
            "split": v.split, "transcripts": {"meta": meta, "embeddings": emb},
        })
    for s in corpus.scripts.values():
        path = f"scripts/{s.script_id}.sdmv"
        write_tensor(out_dir / path, s.sentences)
        doc["scripts"].append({"script_id": s.script_id, "video_id": s.video_id, "sentences": path})
    for g in corpus.ground_truths.values():
        vid = corpus.scripts[g.script_id].video_id
        summary = f"ground_truth/{g.script_id}.summary.json"
        write_summary(vid, g.summary_mask, out_dir / summary)
        entry = {"script_id": g.script_id, "summary": summary, "importance": None}
        if g.frame_importance is not None:
            entry["importance"] = f"ground_truth/{g.script_id}.importance.sdmv"
            write_tensor(out_dir / entry["importance"], np.asarray(g.frame_importance).reshape(1, -1))
        doc["ground_truths"].append(entry)
    manifest = out_dir / "manifest.json"
    manifest.write_text(json.dumps(doc, indent=2) + "\n")
    return manifest
