"""Command line interface: train, eval, predict, synth.

Every run resolves the config (file keys + flag overrides + defaults) and
echoes the resolved form into its outputs. Exit status is 0 only on
success; partially written outputs are removed on failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import container
from .dataio import (
    CsvSchema,
    load_csv,
    make_splits,
    random_motifs,
    synth_streams,
    SynthSpec,
)
from .errors import MlcflError
from .evaluation import compare_levels, metrics_table, report_text, run_cv
from .pipeline import (
    FEATURE_LEVELS,
    CLASSIFIER_KINDS,
    PipelineConfig,
    fit_full,
    frames_from_streams,
    prediction_scores,
)

_DEFAULT_SCHEMA = {
    "subject": "subject",
    "timestamp": "timestamp",
    "channels": ["ch0", "ch1", "ch2"],
    "label": "label",
}


def _load_config(args) -> PipelineConfig:
    raw: dict = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            raw = json.load(fh)
    if raw.get("data") is None:
        raw["data"] = dict(_DEFAULT_SCHEMA)
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "level", None):
        raw["level"] = args.level
    if getattr(args, "classifier", None):
        section = dict(raw.get("classifier", {}))
        section["kind"] = args.classifier
        raw["classifier"] = section
    return PipelineConfig.from_dict(raw)


def _load_frames(data_path, config: PipelineConfig):
    streams, label_table = load_csv(data_path, config.data)
    frames = frames_from_streams(streams, config)
    return frames, label_table


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def cmd_train(args) -> int:
    config = _load_config(args)
    frames, label_table = _load_frames(args.data, config)
    if not frames:
        raise MlcflError("no frames could be cut from the input data")
    model = fit_full(frames, config, label_table)
    container.save_model(model, args.model)
    dims = model.stack.dimensions()
    print("resolved config: " + json.dumps(config.to_dict(), sort_keys=True))
    print(f"frames: {len(frames)}")
    for level in FEATURE_LEVELS:
        if level in dims:
            print(f"{level} dim: {dims[level]}")
    mlpl_model = model.stack.mlpl_model
    if mlpl_model is not None:
        for (scale, cid) in sorted(mlpl_model.models):
            latent = mlpl_model.models[(scale, cid)]
            finals = [trace[-1] for trace in latent.objective_traces]
            print(f"mlpl scale={scale} class={cid} objective trace: "
                  + " ".join(_fmt(v) for v in finals))
    print(f"model written: {args.model}")
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args)
    frames, _ = _load_frames(args.data, config)
    if not frames:
        raise MlcflError("no frames could be cut from the input data")
    plan = make_splits(frames, config.split.mode, config.split.k,
                       seed=config.seed, stratified=config.split.stratified)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if args.compare_levels:
        cells = compare_levels(frames, plan, config, jobs=args.jobs)
        table_path = out_dir / "compare_levels.tsv"
        table_path.write_text(metrics_table(cells))
        written.append(table_path)
        for (level, kind), report in sorted(cells.items()):
            path = out_dir / f"report_{level}_{kind}.txt"
            path.write_text(report_text(report))
            written.append(path)
        headline = cells[(config.level, config.classifier.kind)]
    else:
        report = run_cv(frames, plan, config, jobs=args.jobs)
        report_path = out_dir / f"report_{report.level}_{report.classifier}.txt"
        report_path.write_text(report_text(report))
        written.append(report_path)
        table_path = out_dir / "metrics.tsv"
        table_path.write_text(metrics_table(report))
        written.append(table_path)
        headline = report
    print("resolved config: " + json.dumps(config.to_dict(), sort_keys=True))
    print(
        f"weighted F1 ({headline.level}, {headline.classifier}): "
        f"{_fmt(headline.weighted_f1_pooled)} "
        f"(per-fold mean {_fmt(headline.weighted_f1_mean)} "
        f"+/- {_fmt(headline.weighted_f1_std)})"
    )
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_predict(args) -> int:
    model = container.load_model(args.model)
    config = model.config
    streams, _ = load_csv(args.data, config.data)
    n_channels_model = model.stack.n_channels
    for stream in streams:
        if n_channels_model is not None and stream.n_channels != n_channels_model:
            raise MlcflError(
                f"data has {stream.n_channels} channels but the model was "
                f"fitted on {n_channels_model}"
            )
    frames = frames_from_streams(streams, config)
    features = model.stack.transform(frames, config.level)
    inverse = model.inverse_labels
    lines = ["# config: " + json.dumps(config.to_dict(), sort_keys=True)]
    class_ids = None
    rows = []
    for i, frame in enumerate(frames):
        ids, scores = prediction_scores(model.classifier, features[i])
        if class_ids is None:
            class_ids = ids
        best = ids[int(np.argmax(scores))]
        label = inverse.get(int(best), str(int(best)))
        rows.append((frame.source[0], frame.source[1], label, scores))
    if class_ids is None:
        class_ids = ()
    header_cols = ["subject", "start", "prediction"] + [
        f"score_{inverse.get(int(c), str(int(c)))}" for c in class_ids
    ]
    lines.append("\t".join(header_cols))
    for subject, start, label, scores in rows:
        cols = [subject, str(start), label] + [_fmt(s) for s in scores]
        lines.append("\t".join(cols))
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"predictions written: {args.out} ({len(rows)} frames)")
    return 0


def cmd_synth(args) -> int:
    motifs = random_motifs(args.classes, args.patterns, n_channels=args.channels,
                           seed=args.seed, sample_rate=args.sample_rate)
    spec = SynthSpec(
        classes=motifs,
        segment_len=args.segment_len,
        segments_per_pattern=args.segments,
        n_subjects=args.subjects,
        sample_rate=args.sample_rate,
        noise=args.noise,
    )
    result = synth_streams(spec, seed=args.seed)
    lines = ["subject,timestamp," +
             ",".join(f"ch{i}" for i in range(args.channels)) + ",label"]
    for stream in result.streams:
        times = np.arange(stream.n_samples) / stream.sample_rate
        for i in range(stream.n_samples):
            values = ",".join(_fmt(stream.channels[ch, i])
                              for ch in range(stream.n_channels))
            lines.append(
                f"{stream.subject_id},{_fmt(times[i])},{values},"
                f"act{stream.labels[i]:02d}"
            )
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"synthetic data written: {args.out} "
          f"({sum(s.n_samples for s in result.streams)} samples)")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlcfl",
        description="Multi-level feature learning for sensor action recognition",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="fit the pipeline and write a model file")
    train.add_argument("--config", help="JSON config file")
    train.add_argument("--data", required=True, help="CSV input data")
    train.add_argument("--model", required=True, help="model output path")
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--level", choices=FEATURE_LEVELS, default=None)
    train.add_argument("--classifier", choices=CLASSIFIER_KINDS, default=None)
    train.set_defaults(func=cmd_train, outputs=lambda a: [a.model])

    ev = sub.add_parser("eval", help="cross-validated evaluation")
    ev.add_argument("--config", help="JSON config file")
    ev.add_argument("--data", required=True)
    ev.add_argument("--out", required=True, help="report output directory")
    ev.add_argument("--seed", type=int, default=None)
    ev.add_argument("--level", choices=FEATURE_LEVELS, default=None)
    ev.add_argument("--classifier", choices=CLASSIFIER_KINDS, default=None)
    ev.add_argument("--compare-levels", action="store_true")
    ev.add_argument("--jobs", type=int, default=1)
    ev.set_defaults(func=cmd_eval, outputs=lambda a: [])

    pred = sub.add_parser("predict", help="per-frame predictions from a model file")
    pred.add_argument("--model", required=True)
    pred.add_argument("--data", required=True)
    pred.add_argument("--out", required=True)
    pred.set_defaults(func=cmd_predict, outputs=lambda a: [a.out])

    synth = sub.add_parser("synth", help="emit a synthetic labeled CSV")
    synth.add_argument("--out", required=True)
    synth.add_argument("--classes", type=int, default=3)
    synth.add_argument("--patterns", type=int, default=2)
    synth.add_argument("--segments", type=int, default=8)
    synth.add_argument("--segment-len", type=int, default=256)
    synth.add_argument("--channels", type=int, default=3)
    synth.add_argument("--subjects", type=int, default=1)
    synth.add_argument("--sample-rate", type=float, default=32.0)
    synth.add_argument("--noise", type=float, default=0.0)
    synth.add_argument("--seed", type=int, default=0)
    synth.set_defaults(func=cmd_synth, outputs=lambda a: [a.out])

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MlcflError as exc:
        _cleanup(args)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        _cleanup(args)
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 1


def _cleanup(args) -> None:
    for path in args.outputs(args):
        try:
            Path(path).unlink(missing_ok=True)
        except OSError:
            pass


if __name__ == "__main__":
    sys.exit(main())
