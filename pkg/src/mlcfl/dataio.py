"""Sensor stream ingestion, framing, cross-validation splits, synthetic data.

Streams are (channels x samples) arrays with per-sample integer labels and a
subject id. Frames are fixed-length windows cut with a configurable overlap;
each frame carries one label chosen by the labeling policy. Splits cover
random k-fold, per-class temporal blocks and subject-grouped folds.
"""

from __future__ import annotations

import csv as _csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import binio
from .errors import ContainerError, DataFormatError, SchemaError, SplitError

Source = tuple[str, int]

SPLIT_MODES = ("random-kfold", "temporal-blocks", "subject-groups")
LABEL_POLICIES = ("single", "dominant")

_FRAMES_MAGIC = b"MLFR"
_FRAMES_VERSION = 1


@dataclass
class SensorStream:
    """Multi-channel sample series with per-sample labels.

    ``channels`` has shape (n_channels, n_samples); label 0 is the null class
    and is treated like any other class downstream.
    """

    channels: np.ndarray
    labels: np.ndarray
    subject_id: str
    sample_rate: float = 1.0

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.channels.ndim != 2 or self.channels.shape[0] < 1:
            raise ValueError("channels must be a (n_channels, n_samples) array")
        if self.channels.shape[1] < 1:
            raise ValueError("stream must contain at least one sample")
        if self.labels.shape != (self.channels.shape[1],):
            raise ValueError("labels length must equal the channel length")

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]


@dataclass(frozen=True)
class Frame:
    """One fixed-length window: (n_channels, window) samples plus label."""

    samples: np.ndarray
    label: int
    source: Source

    @property
    def window(self) -> int:
        return self.samples.shape[1]

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class SubFrame:
    """Unlabeled sub-window of a frame; ``offset`` is relative to the frame."""

    samples: np.ndarray
    offset: int


@dataclass(frozen=True)
class SplitPlan:
    """Per-fold (train_idx, test_idx) pairs over a frame list."""

    folds: tuple[tuple[np.ndarray, np.ndarray], ...]
    mode: str

    @property
    def k(self) -> int:
        return len(self.folds)

    def validate(self, n_frames: int) -> None:
        """Check disjointness and (for covering modes) exact coverage."""
        seen = np.zeros(n_frames, dtype=np.int64)
        for train_idx, test_idx in self.folds:
            if np.intersect1d(train_idx, test_idx).size:
                raise SplitError("train and test overlap within a fold")
            seen[test_idx] += 1
        if self.mode in ("random-kfold", "temporal-blocks", "subject-groups"):
            if not np.all(seen == 1):
                raise SplitError("test folds do not cover every frame exactly once")


def _window_offsets(length: int, window: int, overlap: float) -> tuple[list[int], int]:
    if window < 2:
        raise ValueError("window must be >= 2")
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must be in [0, 1)")
    stride = int(round(window * (1.0 - overlap)))
    if stride < 1:
        raise ValueError("window and overlap give a stride < 1")
    if length < window:
        return [], stride
    return list(range(0, length - window + 1, stride)), stride


def _frame_label(window_labels: np.ndarray, policy: str) -> int | None:
    """Label for one window, or None when the policy drops it."""
    if policy == "single":
        first = window_labels[0]
        if np.all(window_labels == first):
            return int(first)
        return None
    if policy == "dominant":
        values, counts = np.unique(window_labels, return_counts=True)
        top = counts.max()
        winners = values[counts == top]
        if winners.size > 1:
            return None  # ambiguous majority: drop
        return int(winners[0])
    raise ValueError(f"unknown label policy {policy!r}")


def frame_stream(stream: SensorStream, window: int = 64, overlap: float = 0.5,
                 policy: str = "single") -> list[Frame]:
    """Cut a stream into overlapping frames; drops the last partial window.

    Frames whose window labels fail the policy ("single": mixed labels,
    "dominant": tied majority) are dropped.
    """
    offsets, _ = _window_offsets(stream.n_samples, window, overlap)
    frames = []
    for off in offsets:
        label = _frame_label(stream.labels[off:off + window], policy)
        if label is None:
            continue
        frames.append(Frame(
            samples=stream.channels[:, off:off + window].copy(),
            label=label,
            source=(stream.subject_id, off),
        ))
    return frames


def subframes(frame: Frame, sub_window: int = 20, sub_overlap: float = 0.5) -> list[SubFrame]:
    """Cut a frame into overlapping sub-frames (no labels)."""
    if sub_window > frame.window:
        raise ValueError("sub_window must not exceed the frame window")
    offsets, _ = _window_offsets(frame.window, sub_window, sub_overlap)
    return [SubFrame(samples=frame.samples[:, o:o + sub_window].copy(), offset=o)
            for o in offsets]


def _even_partition(n: int, k: int) -> list[int]:
    """Split n items into k group sizes differing by at most one."""
    base, extra = divmod(n, k)
    return [base + (1 if i < extra else 0) for i in range(k)]


def make_splits(frames: Sequence[Frame], mode: str, k: int, seed: int = 0,
                stratified: bool = False) -> SplitPlan:
    """Build a k-fold split plan over frames; deterministic given seed."""
    if mode not in SPLIT_MODES:
        raise SplitError(f"unknown split mode {mode!r}")
    if k < 2:
        raise SplitError("fold count k must be >= 2")
    n = len(frames)
    if n < k:
        raise SplitError(f"{n} frames cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    all_idx = np.arange(n)

    if mode == "random-kfold":
        fold_of = np.empty(n, dtype=np.int64)
        if stratified:
            labels = np.asarray([f.label for f in frames])
            cursor = 0
            for lab in np.unique(labels):
                members = all_idx[labels == lab]
                members = rng.permutation(members)
                for j, idx in enumerate(members):
                    fold_of[idx] = (cursor + j) % k
                cursor += members.size
        else:
            order = rng.permutation(n)
            sizes = _even_partition(n, k)
            start = 0
            for fold, size in enumerate(sizes):
                fold_of[order[start:start + size]] = fold
                start += size
        folds = []
        for fold in range(k):
            test = all_idx[fold_of == fold]
            train = all_idx[fold_of != fold]
            folds.append((train, np.sort(test)))
        return SplitPlan(folds=tuple(folds), mode=mode)

    if mode == "temporal-blocks":
        labels = np.asarray([f.label for f in frames])
        fold_of = np.empty(n, dtype=np.int64)
        for lab in np.unique(labels):
            members = all_idx[labels == lab]
            # time order within the class: by subject, then stream offset
            keys = sorted(range(members.size),
                          key=lambda i: frames[members[i]].source)
            ordered = members[np.asarray(keys)]
            start = 0
            for fold, size in enumerate(_even_partition(ordered.size, k)):
                fold_of[ordered[start:start + size]] = fold
                start += size
        folds = []
        for fold in range(k):
            test = all_idx[fold_of == fold]
            train = all_idx[fold_of != fold]
            folds.append((train, np.sort(test)))
        return SplitPlan(folds=tuple(folds), mode=mode)

    # subject-groups
    subjects = sorted({f.source[0] for f in frames})
    if len(subjects) < k:
        raise SplitError(
            f"subject-groups mode needs at least {k} distinct subjects, got {len(subjects)}"
        )
    order = rng.permutation(len(subjects))
    group_of = {subjects[idx]: pos % k for pos, idx in enumerate(order)}
    folds = []
    for fold in range(k):
        test_mask = np.asarray([group_of[f.source[0]] == fold for f in frames])
        folds.append((all_idx[~test_mask], all_idx[test_mask]))
    return SplitPlan(folds=tuple(folds), mode=mode)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for delimiter-separated input.

    Columns may be named (requires a header row) or given as 0-based indices.
    ``null_label`` pins one label string to class index 0; remaining labels
    get dense indices in lexicographic order.
    """

    subject: str | int
    timestamp: str | int
    channels: tuple[str | int, ...]
    label: str | int
    delimiter: str = ","
    null_label: str | None = None
    sample_rate: float | None = None

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "timestamp": self.timestamp,
            "channels": list(self.channels),
            "label": self.label,
            "delimiter": self.delimiter,
            "null_label": self.null_label,
            "sample_rate": self.sample_rate,
        }

    @staticmethod
    def from_dict(d: dict) -> "CsvSchema":
        known = {"subject", "timestamp", "channels", "label", "delimiter",
                 "null_label", "sample_rate"}
        unknown = set(d) - known
        if unknown:
            raise SchemaError(f"unknown schema keys: {sorted(unknown)}")
        for key in ("subject", "timestamp", "channels", "label"):
            if key not in d:
                raise SchemaError(f"schema is missing required key {key!r}")
        return CsvSchema(
            subject=d["subject"],
            timestamp=d["timestamp"],
            channels=tuple(d["channels"]),
            label=d["label"],
            delimiter=d.get("delimiter", ","),
            null_label=d.get("null_label"),
            sample_rate=d.get("sample_rate"),
        )

    def _uses_names(self) -> bool:
        cols = [self.subject, self.timestamp, self.label, *self.channels]
        return any(isinstance(c, str) for c in cols)


def _resolve_columns(schema: CsvSchema, header: list[str] | None) -> dict:
    def resolve(col):
        if isinstance(col, int):
            return col
        if header is None or col not in header:
            raise SchemaError(f"column {col!r} not found in header")
        return header.index(col)

    return {
        "subject": resolve(schema.subject),
        "timestamp": resolve(schema.timestamp),
        "channels": [resolve(c) for c in schema.channels],
        "label": resolve(schema.label),
    }


def load_csv(path, schema: CsvSchema) -> tuple[list[SensorStream], dict[str, int]]:
    """Parse one stream per subject plus the label-string index table.

    Rows may interleave subjects; within a subject, timestamps must be
    monotonic non-decreasing. Returns streams sorted by subject id.
    """
    path = Path(path)
    if len(schema.channels) < 1:
        raise SchemaError("schema must map at least one channel column")
    rows_by_subject: dict[str, list[tuple[float, list[float], str]]] = {}
    label_strings: set[str] = set()

    with open(path, newline="") as fh:
        reader = _csv.reader(fh, delimiter=schema.delimiter)
        header = None
        start_line = 1
        if schema._uses_names():
            try:
                header = next(reader)
            except StopIteration:
                raise SchemaError("file is empty but schema maps columns by name")
            start_line = 2
        cols = _resolve_columns(schema, header)
        max_col = max([cols["subject"], cols["timestamp"], cols["label"], *cols["channels"]])
        for line_number, row in enumerate(reader, start=start_line):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue  # blank line
            if len(row) <= max_col:
                raise DataFormatError(
                    f"expected at least {max_col + 1} columns, got {len(row)}",
                    line_number=line_number,
                )
            try:
                ts = float(row[cols["timestamp"]])
                values = [float(row[c]) for c in cols["channels"]]
            except ValueError as exc:
                raise DataFormatError(str(exc), line_number=line_number) from None
            subject = row[cols["subject"]].strip()
            label = row[cols["label"]].strip()
            label_strings.add(label)
            rows_by_subject.setdefault(subject, []).append((ts, values, label))

    if not rows_by_subject:
        return [], {}

    label_table = _label_table(sorted(label_strings), schema.null_label)
    streams = []
    for subject in sorted(rows_by_subject):
        rows = rows_by_subject[subject]
        times = np.asarray([r[0] for r in rows])
        if np.any(np.diff(times) < 0):
            raise DataFormatError(
                f"non-monotonic timestamps for subject {subject!r}"
            )
        channels = np.asarray([r[1] for r in rows], dtype=np.float64).T
        labels = np.asarray([label_table[r[2]] for r in rows], dtype=np.int64)
        if schema.sample_rate is not None:
            rate = float(schema.sample_rate)
        elif times.size >= 2:
            dt = float(np.median(np.diff(times)))
            rate = 1.0 / dt if dt > 0 else 1.0
        else:
            rate = 1.0
        streams.append(SensorStream(channels=channels, labels=labels,
                                    subject_id=subject, sample_rate=rate))
    return streams, label_table


def _label_table(sorted_labels: list[str], null_label: str | None) -> dict[str, int]:
    table: dict[str, int] = {}
    if null_label is not None and null_label in sorted_labels:
        table[null_label] = 0
        rest = [s for s in sorted_labels if s != null_label]
    else:
        rest = sorted_labels
    for s in rest:
        table[s] = len(table)
    return table


# ---------------------------------------------------------------------------
# Frame container export
# ---------------------------------------------------------------------------

def export_frames(frames: Sequence[Frame], path) -> None:
    """Write frames to a versioned binary container (exact float64 values)."""
    if not frames:
        raise ValueError("cannot export an empty frame list")
    n_channels = frames[0].n_channels
    window = frames[0].window
    samples = np.stack([f.samples for f in frames])
    labels = np.asarray([f.label for f in frames], dtype=np.int64)
    starts = np.asarray([f.source[1] for f in frames], dtype=np.int64)
    header = {
        "kind": "mlcfl-frames",
        "n_channels": n_channels,
        "window": window,
        "subjects": [f.source[0] for f in frames],
    }
    binio.write_container(path, _FRAMES_MAGIC, _FRAMES_VERSION, header, [
        ("samples", samples),
        ("labels", labels),
        ("starts", starts),
    ])


def load_frames(path) -> list[Frame]:
    header, arrays = binio.read_container(path, _FRAMES_MAGIC, _FRAMES_VERSION)
    if header.get("kind") != "mlcfl-frames":
        raise ContainerError(f"{path}: not a frame container")
    samples = arrays["samples"]
    labels = arrays["labels"]
    starts = arrays["starts"]
    subjects = header["subjects"]
    return [Frame(samples=samples[i], label=int(labels[i]),
                  source=(subjects[i], int(starts[i])))
            for i in range(samples.shape[0])]


# ---------------------------------------------------------------------------
# Synthetic streams
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Motif:
    """One periodic pattern: per-channel amplitude/offset around a base tone."""

    freq_hz: float
    amps: tuple[float, ...]
    offsets: tuple[float, ...]
    waveform: str = "sine"  # sine | square | triangle


@dataclass(frozen=True)
class SynthSpec:
    """Generator parameters: ``classes[c][p]`` is the motif of pattern p."""

    classes: tuple[tuple[Motif, ...], ...]
    segment_len: int = 256
    segments_per_pattern: int | tuple[tuple[int, ...], ...] = 8
    n_subjects: int = 1
    sample_rate: float = 32.0
    noise: float = 0.0

    def segment_count(self, class_idx: int, pattern_idx: int) -> int:
        if isinstance(self.segments_per_pattern, int):
            return self.segments_per_pattern
        return self.segments_per_pattern[class_idx][pattern_idx]


@dataclass
class SynthResult:
    """Streams plus per-sample ground-truth pattern ids for test oracles."""

    streams: list[SensorStream]
    pattern_ids: list[np.ndarray]
    pattern_table: list[tuple[int, int]]  # global pattern id -> (class, pattern)


def random_motifs(n_classes: int, patterns_per_class: int, n_channels: int = 3,
                  seed: int = 0, max_freq: float | None = None,
                  sample_rate: float = 32.0) -> tuple[tuple[Motif, ...], ...]:
    """Draw distinct motif parameters; patterns get well-separated tones."""
    rng = np.random.default_rng(seed)
    limit = max_freq if max_freq is not None else sample_rate / 2.2
    total = n_classes * patterns_per_class
    freqs = np.linspace(1.0, limit, total)
    waveforms = ("sine", "square", "triangle")
    classes = []
    g = 0
    for _ in range(n_classes):
        motifs = []
        for _ in range(patterns_per_class):
            motifs.append(Motif(
                freq_hz=float(freqs[g]),
                amps=tuple(float(a) for a in rng.uniform(0.6, 1.8, n_channels)),
                offsets=tuple(float(o) for o in rng.uniform(-1.5, 1.5, n_channels)),
                waveform=waveforms[g % len(waveforms)],
            ))
            g += 1
        classes.append(tuple(motifs))
    return tuple(classes)


def _waveform(kind: str, phase: np.ndarray) -> np.ndarray:
    if kind == "sine":
        return np.sin(phase)
    if kind == "square":
        return np.sign(np.sin(phase))
    if kind == "triangle":
        return (2.0 / np.pi) * np.arcsin(np.sin(phase))
    raise ValueError(f"unknown waveform {kind!r}")


def synth_streams(spec: SynthSpec, seed: int = 0) -> SynthResult:
    """Generate labeled streams of shuffled motif segments plus noise.

    Deterministic given ``seed``. Every segment of one pattern repeats the
    same motif with a fresh phase, so noise-free frames of a pattern are
    identical up to phase.
    """
    n_channels = len(spec.classes[0][0].amps)
    pattern_table = [(c, p)
                     for c, motifs in enumerate(spec.classes)
                     for p in range(len(motifs))]
    streams = []
    pattern_ids = []
    for subject in range(spec.n_subjects):
        rng = np.random.default_rng(np.random.SeedSequence((seed, subject)))
        schedule = []
        for gid, (c, p) in enumerate(pattern_table):
            schedule.extend([gid] * spec.segment_count(c, p))
        schedule = [schedule[i] for i in rng.permutation(len(schedule))]

        chunks = []
        label_chunks = []
        pattern_chunks = []
        t = np.arange(spec.segment_len) / spec.sample_rate
        for gid in schedule:
            c, p = pattern_table[gid]
            motif = spec.classes[c][p]
            phase0 = rng.uniform(0.0, 2.0 * np.pi)
            base = _waveform(motif.waveform, 2.0 * np.pi * motif.freq_hz * t + phase0)
            seg = np.empty((n_channels, spec.segment_len))
            for ch in range(n_channels):
                seg[ch] = motif.offsets[ch] + motif.amps[ch] * base
            if spec.noise > 0:
                seg += spec.noise * rng.standard_normal(seg.shape)
            chunks.append(seg)
            label_chunks.append(np.full(spec.segment_len, c, dtype=np.int64))
            pattern_chunks.append(np.full(spec.segment_len, gid, dtype=np.int64))
        streams.append(SensorStream(
            channels=np.concatenate(chunks, axis=1),
            labels=np.concatenate(label_chunks),
            subject_id=f"s{subject:02d}",
            sample_rate=spec.sample_rate,
        ))
        pattern_ids.append(np.concatenate(pattern_chunks))
    return SynthResult(streams=streams, pattern_ids=pattern_ids,
                       pattern_table=pattern_table)


def frame_pattern_ids(result: SynthResult, stream_idx: int, frames: Sequence[Frame],
                      window: int) -> np.ndarray:
    """Ground-truth pattern id per frame; -1 where a frame straddles patterns."""
    ids = result.pattern_ids[stream_idx]
    out = np.empty(len(frames), dtype=np.int64)
    for i, frame in enumerate(frames):
        start = frame.source[1]
        span = ids[start:start + window]
        out[i] = span[0] if np.all(span == span[0]) else -1
    return out
