"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 data error (bad or missing input),
4 configuration error.  Every output is a deterministic function of the
inputs apart from an optional ``# generated:`` header line, which
``--no-timestamp`` suppresses.
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import logging
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, ModelFormatError
from .features import FEATURE_NAMES
from .ingest import load_labels, load_recording, resolve_label, write_recording
from .model import DEFAULT_K, fit_model, knn_classify, knn_regress, load_model, save_model
from .pipeline import (
    PipelineConfig,
    featurize,
    load_config,
    read_feature_matrix,
    select_and_gate,
    write_feature_matrix,
)
from .preprocess import preprocess_channel
from .scoring import format_epochs, format_hourly, format_summary, read_epoch_scores, score_recording
from .select import format_selection_report
from .stats import KL_FEATURES, compare_datasets, format_kl_table, welch_ttest
from .synth import PRESETS, BreathSpec, preset, synthesize, write_truth

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONFIG = 0, 2, 3, 4

log = logging.getLogger("dyspnea")


# -- shared helpers -------------------------------------------------------------


def _stamp(args) -> list:
    if args.no_timestamp:
        return []
    return [f"generated: {dt.datetime.now(dt.timezone.utc).isoformat(timespec='seconds')}"]


def _emit(text: str, out, args) -> None:
    header = "".join(f"# {c}\n" for c in _stamp(args))
    if out is None or str(out) == "-":
        sys.stdout.write(header + text)
    else:
        Path(out).write_text(header + text, encoding="utf-8")


def build_config(args) -> PipelineConfig:
    """Defaults, then the config file, then explicit flags."""
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {}
    for flag, key in (("epoch_s", "preprocess.epoch_s"), ("slide_s", "preprocess.slide_s"),
                      ("cov_threshold", "quality.cov_threshold")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    return cfg.updated(overrides) if overrides else cfg.validate()


# -- subcommands ------------------------------------------------------------------


def cmd_synth(args) -> int:
    base = dict(PRESETS[args.preset]) if args.preset else {}
    for f in dataclasses.fields(BreathSpec):
        value = getattr(args, f.name, None)
        if value is not None:
            base[f.name] = value
    base["seed"] = args.seed
    if args.imu:
        base["imu_channels"] = ("acc_x", "acc_y", "acc_z")
    spec = BreathSpec(**base).validate()
    rec, truth = synthesize(spec)
    write_recording(rec, args.output, comments=_stamp(args))
    if args.truth:
        write_truth(truth, args.truth, spec)
    return EXIT_OK


def cmd_preprocess(args) -> int:
    cfg = build_config(args)
    rec = load_recording(args.input, format=args.format)
    filtered = [preprocess_channel(c, cfg.preprocess)[0] for c in rec.channels]
    out = dataclasses.replace(rec, channels=tuple(filtered))
    write_recording(out, args.output, comments=_stamp(args))
    return EXIT_OK


def cmd_features(args) -> int:
    cfg = build_config(args)
    rows = []
    for path in args.inputs:
        rec = load_recording(path, format=args.format)
        channels = [args.channel] if args.channel else None
        result = featurize(rec, cfg, channels)
        for d in result.dropped:
            log.info("%s: dropped %s epoch %d (%s)", path, d.channel, d.epoch_index, d.reason)
        rows += result.rows
    write_feature_matrix(rows, args.output, comments=_stamp(args))
    return EXIT_OK


def _by_subject(rows) -> dict:
    groups = defaultdict(list)
    for r in rows:
        groups[r.subject_id].append(r)
    return dict(groups)


def cmd_select(args) -> int:
    cfg = build_config(args)
    matrix = read_feature_matrix(args.input)
    kept, reports = [], []
    for subject, rows in _by_subject(matrix.rows).items():
        sel = select_and_gate(rows, cfg, args.channel)
        kept += sel.retained
        reports.append(format_selection_report(subject, sel.channel, sel.scores, len(sel.retained), sel.total))
    write_feature_matrix(kept, args.output, comments=_stamp(args))
    _emit("\n".join(reports), args.report, args)
    return EXIT_OK


def cmd_compare(args) -> int:
    reference = read_feature_matrix(args.reference)
    names = tuple(args.features) if args.features else KL_FEATURES
    columns = {}
    for path in args.others:
        label = f"{Path(args.reference).stem}||{Path(path).stem}"
        columns[label] = compare_datasets(reference, read_feature_matrix(path), names)
    _emit(format_kl_table(columns, args.precision), args.output, args)
    return EXIT_OK


def cmd_train(args) -> int:
    rows = []
    for path in args.inputs:
        rows += read_feature_matrix(path).rows
    records = load_labels(args.labels)
    matrix, classes, borg = [], [], []
    for r in rows:
        cls, score = resolve_label(records, r.subject_id, r.epoch_index)
        if cls is None and score is None:
            log.warning("no label for %s epoch %d; skipped", r.subject_id, r.epoch_index)
            continue
        matrix.append(r.values)
        classes.append(cls)
        borg.append(score)
    if not matrix:
        raise DataError("no labeled feature rows to train on")
    labels = None if any(c is None for c in classes) else classes
    scores = None if any(s is None for s in borg) else borg
    if labels is None and scores is None:
        raise DataError("labels must give every training row a class, a Borg score, or both")
    model = fit_model(np.vstack(matrix), labels, scores, k=args.k, k_regress=args.k_regress)
    save_model(model, args.output)
    return EXIT_OK


def cmd_classify(args) -> int:
    model = load_model(args.model)
    matrix = read_feature_matrix(args.input)
    lines = ["subject_id,dataset_tag,channel,epoch_index,start_s,class,vote_fraction,d_obj"]
    for r in matrix.rows:
        cls, frac = "-", "nan"
        if model.labels is not None:
            c, f = knn_classify(model, r.values, args.k)
            cls, frac = str(c), repr(f)
        d_obj = repr(knn_regress(model, r.values)) if model.scores is not None else "nan"
        lines.append(f"{r.subject_id},{r.dataset_tag},{r.channel},{r.epoch_index},{r.start_s!r},{cls},{frac},{d_obj}")
    _emit("\n".join(lines) + "\n", args.output, args)
    return EXIT_OK


def cmd_score(args) -> int:
    cfg = build_config(args)
    model = load_model(args.model)
    rec = load_recording(args.input, format=args.format)
    report = score_recording(model, rec, cfg, args.channel)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prefix = args.prefix or rec.subject_id
    _emit(format_summary(report), out / f"{prefix}_summary.txt", args)
    _emit(format_hourly(report), out / f"{prefix}_hourly.csv", args)
    _emit(format_epochs(report), out / f"{prefix}_epochs.csv", args)
    sys.stdout.write(format_summary(report))
    return EXIT_OK


def cmd_report(args) -> int:
    entries = []
    for path in args.inputs:
        entries += read_epoch_scores(path)
    if not entries:
        raise DataError("no epoch scores to report")
    by_subject = defaultdict(list)
    by_tag = defaultdict(list)
    for subject, tag, e in entries:
        by_subject[(subject, tag)].append(e)
        by_tag[tag].append(e.d_obj)

    lines = ["# per subject", "subject_id,dataset_tag,n_epochs,mean_d_obj,sd_d_obj,dyspnea_pct"]
    for (subject, tag), eps in sorted(by_subject.items()):
        d = np.array([e.d_obj for e in eps])
        sd = float(d.std(ddof=1)) if d.size > 1 else float("nan")
        cls = [e.dyspnea_class for e in eps]
        pct = "nan" if None in cls else repr(100.0 * sum(cls) / len(cls))
        lines.append(f"{subject},{tag},{d.size},{float(d.mean())!r},{sd!r},{pct}")

    lines += ["# D_obj distribution, unit-width bins", "dataset_tag,bin_lo,bin_hi,count"]
    edges = np.arange(11.0)
    for tag in sorted(by_tag):
        counts, _ = np.histogram(by_tag[tag], bins=edges)
        lines += [f"{tag},{lo:g},{lo + 1:g},{c}" for lo, c in zip(edges[:-1], counts)]

    groups = args.groups or sorted(by_tag)
    if len(groups) == 2 and all(g in by_tag for g in groups):
        a, b = groups
        try:
            res = welch_ttest(by_tag[a], by_tag[b])
        except DataError as exc:
            lines.append(f"# Welch t-test on D_obj not computed: {exc}")
        else:
            lines += ["# Welch t-test on D_obj", "group_a,group_b,t,p,df",
                      f"{a},{b},{res.t!r},{res.p!r},{res.df!r}"]
    elif args.groups:
        raise DataError(f"groups {args.groups} not both present in the inputs")
    _emit("\n".join(lines) + "\n", args.output, args)
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------------


def _pipeline_flags(p, gate=True) -> None:
    p.add_argument("--config", help="key=value config file (section.key=value lines)")
    p.add_argument("--epoch-s", type=float, help="epoch length in seconds")
    p.add_argument("--slide-s", type=float, help="epoch slide in seconds")
    if gate:
        p.add_argument("--cov-threshold", type=float, help="quality gate on mean CoV")


def _input_format(p) -> None:
    p.add_argument("--format", choices=("csv", "iq_csv"), default="csv", help="recording file layout")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--no-timestamp", action="store_true", help="omit the '# generated:' header line")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="dyspnea", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic recording")
    p.add_argument("--preset", choices=sorted(PRESETS))
    for name, typ in (("mean_br", float), ("br_jitter", float), ("amplitude", float), ("amp_jitter", float),
                      ("ier", float), ("noise_snr_db", float), ("drift_hz", float), ("drift_amp", float),
                      ("duration_s", float), ("rate_hz", float), ("jitter_corr", float),
                      ("subject_id", str), ("dataset_tag", str)):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--imu", action="store_true", help="add three weaker accelerometer channels")
    p.add_argument("--truth", help="also write the ground-truth cycle sidecar here")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", parents=[common], help="resample, band-pass and smooth every channel")
    p.add_argument("input")
    _input_format(p)
    _pipeline_flags(p, gate=False)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("features", parents=[common], help="per-epoch 51-feature matrix")
    p.add_argument("inputs", nargs="+")
    _input_format(p)
    _pipeline_flags(p, gate=False)
    p.add_argument("--channel", help="featurize only this channel")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("select", parents=[common], help="choose a channel per subject and gate epochs")
    p.add_argument("input")
    _pipeline_flags(p)
    p.add_argument("--channel", help="force this channel instead of the lowest-CoV one")
    p.add_argument("-o", "--output", required=True, help="retained feature rows")
    p.add_argument("--report", help="selection report path (default stdout)")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("compare", parents=[common], help="per-feature KL divergence table")
    p.add_argument("reference")
    p.add_argument("others", nargs="+")
    p.add_argument("--features", nargs="+", choices=FEATURE_NAMES, metavar="NAME")
    p.add_argument("--precision", type=int, default=2)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("train", parents=[common], help="fit the kNN model on labeled feature rows")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--labels", required=True)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--k-regress", type=int)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", parents=[common], help="classify and score feature rows")
    p.add_argument("input")
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int, help="override the model's neighbor count")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("score", parents=[common], help="score a recording: epochs, hourly series, summary")
    p.add_argument("input")
    _input_format(p)
    _pipeline_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--channel", help="bypass automatic channel selection")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--prefix", help="output file prefix (default: subject id)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", parents=[common], help="aggregate epoch-score files")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--groups", nargs=2, metavar=("A", "B"), help="dataset tags for the t-test, A vs B")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ModelFormatError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
