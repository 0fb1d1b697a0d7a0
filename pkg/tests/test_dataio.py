import numpy as np
import pytest

from mlcfl import dataio
from mlcfl.dataio import (
    CsvSchema,
    Frame,
    Motif,
    SensorStream,
    SynthSpec,
    export_frames,
    frame_stream,
    load_csv,
    load_frames,
    make_splits,
    subframes,
    synth_streams,
)
from mlcfl.errors import DataFormatError, SchemaError, SplitError


def _stream(length, n_channels=3, labels=None, subject="s0"):
    rng = np.random.default_rng(length + n_channels)
    channels = rng.normal(size=(n_channels, length))
    if labels is None:
        labels = np.zeros(length, dtype=np.int64)
    return SensorStream(channels=channels, labels=labels, subject_id=subject)


class TestFrameStream:
    def test_frame_count_256(self):
        frames = frame_stream(_stream(256), window=64, overlap=0.5)
        assert len(frames) == 7
        assert [f.source[1] for f in frames] == [0, 32, 64, 96, 128, 160, 192]

    def test_exact_fit(self):
        assert len(frame_stream(_stream(64), window=64, overlap=0.5)) == 1

    def test_too_short(self):
        assert frame_stream(_stream(63), window=64, overlap=0.5) == []

    def test_offsets_formula_random(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            window = int(rng.integers(2, 40))
            length = int(rng.integers(window, 400))
            overlap = float(rng.uniform(0, 0.9))
            stride = int(round(window * (1 - overlap)))
            if stride < 1:
                continue
            frames = frame_stream(_stream(length), window=window, overlap=overlap)
            expected = (length - window) // stride + 1
            assert len(frames) == expected
            offsets = [f.source[1] for f in frames]
            assert offsets == list(range(0, length - window + 1, stride))

    def test_single_policy_drops_mixed(self):
        labels = np.zeros(128, dtype=np.int64)
        labels[64:] = 1
        frames = frame_stream(_stream(128, labels=labels), window=64, overlap=0.5)
        # offsets 0, 32, 64; the frame at 32 spans the label change -> dropped
        assert [f.source[1] for f in frames] == [0, 64]
        assert [f.label for f in frames] == [0, 1]

    def test_dominant_policy_majority_and_tie(self):
        labels = np.zeros(64, dtype=np.int64)
        labels[:20] = 1
        frames = frame_stream(_stream(64, labels=labels), window=64,
                              overlap=0.5, policy="dominant")
        assert [f.label for f in frames] == [0]
        labels_tie = np.zeros(64, dtype=np.int64)
        labels_tie[:32] = 1
        assert frame_stream(_stream(64, labels=labels_tie), window=64,
                            overlap=0.5, policy="dominant") == []

    def test_bad_params(self):
        with pytest.raises(ValueError):
            frame_stream(_stream(100), window=1, overlap=0.5)
        with pytest.raises(ValueError):
            frame_stream(_stream(100), window=10, overlap=1.0)


class TestSubframes:
    def test_default_five(self):
        frame = frame_stream(_stream(64), window=64, overlap=0.5)[0]
        subs = subframes(frame, sub_window=20, sub_overlap=0.5)
        assert [s.offset for s in subs] == [0, 10, 20, 30, 40]

    def test_subframe_equal_window(self):
        frame = frame_stream(_stream(64), window=64, overlap=0.5)[0]
        assert len(subframes(frame, sub_window=64, sub_overlap=0.5)) == 1

    def test_no_overlap(self):
        frame = frame_stream(_stream(64), window=64, overlap=0.5)[0]
        assert len(subframes(frame, sub_window=20, sub_overlap=0.0)) == 3

    def test_sub_window_too_large(self):
        frame = frame_stream(_stream(64), window=64, overlap=0.5)[0]
        with pytest.raises(ValueError):
            subframes(frame, sub_window=65)


def _label_frames(labels, subjects=None):
    frames = []
    for i, lab in enumerate(labels):
        subject = subjects[i] if subjects else "s0"
        frames.append(Frame(samples=np.zeros((1, 4)) + i, label=int(lab),
                            source=(subject, i)))
    return frames


class TestSplits:
    def test_random_kfold_even(self):
        frames = _label_frames([0] * 100)
        plan = make_splits(frames, "random-kfold", 4, seed=0)
        assert [len(test) for _, test in plan.folds] == [25, 25, 25, 25]
        plan.validate(100)

    def test_subject_groups_too_few(self):
        frames = _label_frames([0, 1], subjects=["a", "b"])
        with pytest.raises(SplitError):
            make_splits(frames, "subject-groups", 10, seed=0)

    def test_temporal_blocks_contiguous(self):
        frames = _label_frames([0] * 60)
        plan = make_splits(frames, "temporal-blocks", 6, seed=0)
        for fold, (_, test) in enumerate(plan.folds):
            assert len(test) == 10
            assert list(test) == list(range(fold * 10, fold * 10 + 10))

    def test_temporal_blocks_per_class(self):
        labels = [0] * 30 + [1] * 30
        plan = make_splits(_label_frames(labels), "temporal-blocks", 3, seed=0)
        for fold, (_, test) in enumerate(plan.folds):
            class0 = [i for i in test if i < 30]
            class1 = [i for i in test if i >= 30]
            assert class0 == list(range(fold * 10, fold * 10 + 10))
            assert class1 == list(range(30 + fold * 10, 40 + fold * 10))

    def test_coverage_and_disjointness_random(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            n = int(rng.integers(10, 120))
            k = int(rng.integers(2, min(8, n) + 1))
            labels = rng.integers(0, 4, n)
            mode = ["random-kfold", "temporal-blocks"][int(rng.integers(2))]
            plan = make_splits(_label_frames(labels), mode, k, seed=int(rng.integers(1000)))
            plan.validate(n)

    def test_subject_groups_no_leak(self):
        rng = np.random.default_rng(2)
        subjects = [f"subj{rng.integers(6)}" for _ in range(80)]
        frames = _label_frames(rng.integers(0, 3, 80), subjects=subjects)
        plan = make_splits(frames, "subject-groups", 3, seed=5)
        plan.validate(80)
        for train, test in plan.folds:
            train_subjects = {frames[i].source[0] for i in train}
            test_subjects = {frames[i].source[0] for i in test}
            assert not train_subjects & test_subjects

    def test_deterministic(self):
        frames = _label_frames(np.arange(50) % 3)
        p1 = make_splits(frames, "random-kfold", 5, seed=9)
        p2 = make_splits(frames, "random-kfold", 5, seed=9)
        for (tr1, te1), (tr2, te2) in zip(p1.folds, p2.folds):
            assert np.array_equal(tr1, tr2) and np.array_equal(te1, te2)

    def test_stratified_option(self):
        labels = [0] * 40 + [1] * 8
        plan = make_splits(_label_frames(labels), "random-kfold", 4, seed=0,
                           stratified=True)
        plan.validate(48)
        for _, test in plan.folds:
            assert sum(1 for i in test if i >= 40) == 2

    def test_too_few_frames(self):
        with pytest.raises(SplitError):
            make_splits(_label_frames([0, 1]), "random-kfold", 3, seed=0)


CSV_BODY = """subject,timestamp,ch0,ch1,ch2,label
s0,0.0,1.0,2.0,3.0,walk
s0,0.1,1.5,2.5,3.5,walk
s0,0.2,2.0,3.0,4.0,run
s0,0.3,2.5,3.5,4.5,run
s0,0.4,3.0,4.0,5.0,null
s0,0.5,3.5,4.5,5.5,null
"""

SCHEMA = CsvSchema(subject="subject", timestamp="timestamp",
                   channels=("ch0", "ch1", "ch2"), label="label",
                   null_label="null")


class TestLoadCsv:
    def test_single_subject(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text(CSV_BODY)
        streams, table = load_csv(path, SCHEMA)
        assert len(streams) == 1
        assert streams[0].n_samples == 6
        assert streams[0].n_channels == 3
        assert table == {"null": 0, "run": 1, "walk": 2}
        assert streams[0].labels.tolist() == [2, 2, 1, 1, 0, 0]

    def test_two_subjects_interleaved(self, tmp_path):
        rows = ["subject,timestamp,ch0,ch1,ch2,label"]
        for i in range(4):
            rows.append(f"a,{i}.0,1,2,3,x")
            rows.append(f"b,{i}.0,4,5,6,y")
        path = tmp_path / "two.csv"
        path.write_text("\n".join(rows) + "\n")
        streams, _ = load_csv(path, SCHEMA)
        assert [s.subject_id for s in streams] == ["a", "b"]
        assert all(s.n_samples == 4 for s in streams)

    def test_short_row_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("subject,timestamp,ch0,ch1,ch2,label\n"
                        "s0,0.0,1.0,2.0,3.0,walk\n"
                        "s0,0.1,1.0,2.0\n")
        with pytest.raises(DataFormatError) as err:
            load_csv(path, SCHEMA)
        assert "line 3" in str(err.value)

    def test_non_numeric_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("subject,timestamp,ch0,ch1,ch2,label\n"
                        "s0,0.0,1.0,oops,3.0,walk\n")
        with pytest.raises(DataFormatError) as err:
            load_csv(path, SCHEMA)
        assert "line 2" in str(err.value)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "cols.csv"
        path.write_text("subject,timestamp,ch0,ch1,label\ns0,0,1,2,x\n")
        with pytest.raises(SchemaError):
            load_csv(path, SCHEMA)

    def test_non_monotonic_names_subject(self, tmp_path):
        path = tmp_path / "mono.csv"
        path.write_text("subject,timestamp,ch0,ch1,ch2,label\n"
                        "s7,1.0,1,2,3,x\n"
                        "s7,0.5,1,2,3,x\n")
        with pytest.raises(DataFormatError) as err:
            load_csv(path, SCHEMA)
        assert "s7" in str(err.value)

    def test_roundtrip_exact_values(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text(CSV_BODY)
        streams, _ = load_csv(path, SCHEMA)
        frames = frame_stream(streams[0], window=2, overlap=0.0)
        out = tmp_path / "frames.bin"
        export_frames(frames, out)
        loaded = load_frames(out)
        assert len(loaded) == len(frames)
        for a, b in zip(frames, loaded):
            assert np.array_equal(a.samples, b.samples)
            assert a.label == b.label and a.source == b.source


class TestSynth:
    def _spec(self, classes, noise=0.0, **kwargs):
        return SynthSpec(classes=classes, noise=noise, **kwargs)

    def test_single_pattern_frames_identical_up_to_phase(self):
        # on-bin tone: FFT magnitudes are exactly phase-invariant
        motif = Motif(freq_hz=4.0, amps=(1.0, 0.5, 2.0), offsets=(0.0, 1.0, -1.0))
        spec = self._spec(((motif,),) * 3, segment_len=128,
                          segments_per_pattern=3, sample_rate=32.0)
        result = synth_streams(spec, seed=0)
        stream = result.streams[0]
        frames = frame_stream(stream, window=64, overlap=0.5)
        # keep frames fully inside one segment (no phase jump in the window)
        class0 = [f for f in frames
                  if f.label == 0 and f.source[1] % 128 + 64 <= 128]
        assert len(class0) >= 3
        mags = [np.abs(np.fft.rfft(f.samples, axis=1)) for f in class0]
        for m in mags[1:]:
            assert np.allclose(m, mags[0], atol=1e-9)

    def test_two_patterns_tagged(self):
        motifs = (Motif(freq_hz=2.0, amps=(1.0,), offsets=(0.0,)),
                  Motif(freq_hz=6.0, amps=(1.0,), offsets=(0.0,)))
        spec = self._spec((motifs,), segment_len=64, segments_per_pattern=2)
        result = synth_streams(spec, seed=1)
        assert result.pattern_table == [(0, 0), (0, 1)]
        assert set(np.unique(result.pattern_ids[0])) == {0, 1}

    def test_deterministic(self):
        classes = dataio.random_motifs(2, 2, seed=3)
        spec = self._spec(classes, noise=0.3, segments_per_pattern=2)
        r1 = synth_streams(spec, seed=9)
        r2 = synth_streams(spec, seed=9)
        assert np.array_equal(r1.streams[0].channels, r2.streams[0].channels)
        assert np.array_equal(r1.streams[0].labels, r2.streams[0].labels)

    def test_stream_invariants(self):
        classes = dataio.random_motifs(3, 2, seed=0)
        result = synth_streams(self._spec(classes, segments_per_pattern=2), seed=0)
        stream = result.streams[0]
        assert stream.channels.shape[1] == stream.labels.shape[0]
        assert set(np.unique(stream.labels)) == {0, 1, 2}
