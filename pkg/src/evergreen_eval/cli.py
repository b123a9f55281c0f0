"""Command-line surface for the four experiment pipelines.

Subcommands: features, selfknow, filter, verbal-bench, correlate,
train-evergreen, score-evergreen. Every command is a pure function of
(inputs, config, seeds): rerunning writes byte-identical outputs, figures
included. Exit codes: 0 success, 2 validation error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import figures
from .corpus import (
    load_correctness,
    load_question_set,
    load_trace_set,
    save_jsonl,
)
from .errors import EvalError, ValidationError
from .evalmetrics import (
    TIE_POLICY_EXPECTED,
    auprc,
    auroc,
    mcfadden_pseudo_r2,
    point_biserial,
    prr,
    rejection_curve,
    spearman,
)
from .evergreen import (
    LinearEvergreenModel,
    TrainingHyper,
    evergreen_probability,
    evergreen_report,
    parse_verbal_judgment,
    train_evergreen_baseline,
)
from .reports import (
    render_table,
    report_metadata,
    write_json_report,
    write_text_report,
)
from .selfknow import (
    EG_FEATURE,
    UE_FEATURES,
    FeatureRow,
    build_feature_table,
    fast_grids,
    full_grids,
    train_selfknowledge,
)
from .uncertainty import UncertaintyConfig, compute_uncertainty

QUALITY_METRIC = "in_accuracy"


# ---------------------------------------------------------------------------
# Shared helpers


def _subset_per_dataset(questions, n: int | None):
    """First n questions of each (source_dataset, split) in file order, the
    convention for comparable evaluation over external QA datasets."""
    if n is None:
        return questions
    if n < 1:
        raise ValidationError(f"--subset must be >= 1, got {n}")
    kept = []
    counts: dict[tuple[str, str], int] = {}
    for q in questions:
        key = (q.source_dataset, q.split)
        if counts.get(key, 0) < n:
            counts[key] = counts.get(key, 0) + 1
            kept.append(q)
    return kept


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(part) for part in text.split(",") if part.strip() != "")
    except ValueError as exc:
        raise ValidationError(f"bad --seeds value {text!r}") from exc
    if not seeds:
        raise ValidationError("--seeds must name at least one seed")
    return seeds


def _parse_channels(pairs: list[str], flag: str) -> list[tuple[str, str]]:
    """Parse repeated name=path channel flags, preserving order."""
    channels = []
    for pair in pairs:
        name, sep, path = pair.partition("=")
        if not sep or not name or not path:
            raise ValidationError(f"{flag} expects NAME=PATH, got {pair!r}")
        channels.append((name, path))
    names = [n for n, _ in channels]
    if len(set(names)) != len(names):
        raise ValidationError(f"duplicate channel names in {flag}")
    return channels


def _require_paths(*paths) -> None:
    for path in paths:
        if path is not None and not os.path.exists(path):
            raise ValidationError(f"input path does not exist: {path}")


def _out_dir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _load_score_file(path) -> dict[str, float]:
    scores: dict[str, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            qid = str(obj["question_id"])
            if qid in scores:
                raise ValidationError(f"{path}:{lineno}: duplicate score for {qid!r}")
            p = float(obj["p_evergreen"])
            if not (0.0 < p < 1.0):
                raise ValidationError(
                    f"{path}:{lineno}: p_evergreen must lie in (0, 1), got {p}"
                )
            scores[qid] = p
    return scores


def _load_feature_file(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def _load_verbal_outputs(path) -> dict[str, str]:
    outputs: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            qid = str(obj["question_id"])
            if qid in outputs:
                raise ValidationError(f"{path}:{lineno}: duplicate output for {qid!r}")
            outputs[qid] = str(obj["raw_output"])
    return outputs


# ---------------------------------------------------------------------------
# features


def cmd_features(args) -> int:
    _require_paths(args.questions, args.traces, args.evergreen_scores)
    out = _out_dir(args)
    config = UncertaintyConfig(
        tail_mode=args.tail_mode,
        vocab_size=args.vocab_size,
        laplacian_variant=args.laplacian_variant,
    )
    questions = load_question_set(args.questions)
    known = {q.id for q in questions}
    traces = load_trace_set(args.traces)
    orphans = sorted({t.question_id for t in traces} - known)
    if orphans:
        raise ValidationError(
            f"{len(orphans)} traces reference unknown questions: {orphans[:10]}"
        )
    scores = _load_score_file(args.evergreen_scores) if args.evergreen_scores else None

    lines = []
    absent = 0
    unscored = 0
    for trace in traces:
        vector = compute_uncertainty(trace, config)
        obj = vector.to_json_obj()
        if vector.neg_lexical_similarity is None:
            absent += 1
        if scores is None:
            obj["p_evergreen"] = None
        else:
            p = scores.get(trace.question_id)
            if p is None:
                unscored += 1
            obj["p_evergreen"] = p
        lines.append(obj)

    path = os.path.join(out, "features.jsonl")
    save_jsonl(path, lines)
    print(f"wrote {len(lines)} feature rows to {path}")
    print(f"config fingerprint: {config.fingerprint()}")
    if absent:
        print(f"consistency metrics absent (fewer than 2 samples): {absent}")
    if scores is not None and unscored:
        print(f"traces without an evergreen score (p_evergreen null): {unscored}")
    return 0


# ---------------------------------------------------------------------------
# train-evergreen / score-evergreen


def cmd_train_evergreen(args) -> int:
    _require_paths(args.questions)
    out = _out_dir(args)
    questions = load_question_set(args.questions)
    train = [q for q in questions if q.split == args.split and q.evergreen_label is not None]
    if not train:
        raise ValidationError(
            f"no labeled questions with split {args.split!r} in {args.questions}"
        )
    hyper = TrainingHyper(
        l2=args.l2, epochs=args.epochs, lr=args.lr, seed=_parse_seeds(args.seeds)[0]
    )
    model = train_evergreen_baseline(train, hyper)
    path = os.path.join(out, "evergreen_model.json")
    model.save(path)
    print(f"trained on {len(train)} questions; model written to {path}")
    for entry in model.training_log:
        print(f"  {json.dumps(entry, sort_keys=True)}")
    return 0


def cmd_score_evergreen(args) -> int:
    _require_paths(args.questions, args.model)
    out = _out_dir(args)
    questions = load_question_set(args.questions)
    model = LinearEvergreenModel.load(args.model)
    rows = [
        {
            "question_id": q.id,
            "p_evergreen": evergreen_probability(model, q),
            "source": args.source,
        }
        for q in questions
    ]
    path = os.path.join(out, "evergreen_scores.jsonl")
    save_jsonl(path, rows)
    print(f"scored {len(rows)} questions to {path}")
    return 0


# ---------------------------------------------------------------------------
# selfknow


def _selfknow_configurations(has_eg: bool) -> list[tuple[str, tuple[str, ...]]]:
    configs = [(metric, (metric,)) for metric in UE_FEATURES]
    if has_eg:
        configs += [
            (f"{metric}+eg", (metric, EG_FEATURE)) for metric in UE_FEATURES
        ]
        configs.append(("eg", (EG_FEATURE,)))
    return configs


def cmd_selfknow(args) -> int:
    _require_paths(args.features, args.correctness, args.questions)
    out = _out_dir(args)
    seeds = _parse_seeds(args.seeds)
    grids = full_grids() if args.grid == "full" else fast_grids()

    feature_objs = _load_feature_file(args.features)
    correctness = {c.question_id: c.y for c in load_correctness(args.correctness)}
    question_list = _subset_per_dataset(load_question_set(args.questions), args.subset)
    questions = {q.id: q for q in question_list}
    if args.subset is not None:
        feature_objs = [o for o in feature_objs if o["question_id"] in questions]

    has_eg = any(obj.get("p_evergreen") is not None for obj in feature_objs)
    feature_names = list(UE_FEATURES) + ([EG_FEATURE] if has_eg else [])

    grouped: dict[str, dict[str, list[FeatureRow]]] = {}
    for obj in feature_objs:
        qid = obj["question_id"]
        if qid not in questions:
            raise ValidationError(f"feature row for unknown question {qid!r}")
        if qid not in correctness:
            raise ValidationError(f"no correctness label for question {qid!r}")
        q = questions[qid]
        row = FeatureRow(
            question_id=qid,
            features={name: obj.get(name) for name in feature_names},
            y=correctness[qid],
        )
        bucket = grouped.setdefault(q.source_dataset, {"train": [], "test": []})
        if q.split == "train":
            bucket["train"].append(row)
        elif q.split == "test":
            bucket["test"].append(row)

    report_rows = []
    score_lines = []
    curve_rows = []
    curve_figs: dict[str, tuple] = {}
    model_dir = os.path.join(out, "models")
    os.makedirs(model_dir, exist_ok=True)

    for dataset in sorted(grouped):
        train_rows = grouped[dataset]["train"]
        test_rows = grouped[dataset]["test"]
        if not train_rows:
            raise ValidationError(f"dataset {dataset!r} has no training rows")
        if not test_rows:
            raise ValidationError(f"dataset {dataset!r} has an empty test split")
        test_y = np.array([r.y for r in test_rows], dtype=int)
        for config_name, names in _selfknow_configurations(has_eg):
            model = train_selfknowledge(
                config_name, names, train_rows, grids=grids, seeds=seeds[:3]
            )
            test_table = build_feature_table(test_rows, names, require_labels=True)
            f_x = model.score_table(test_table)
            metrics = {
                "auroc": auroc(f_x, test_y),
                "auprc": auprc(f_x, test_y),
                "prr": prr(-f_x, test_y.astype(float)),
            }
            report_rows.append(
                {"dataset": dataset, "configuration": config_name, "n_test": len(test_rows), **metrics}
            )
            for qid, value in zip(test_table.question_ids, f_x):
                score_lines.append(
                    {
                        "question_id": qid,
                        "f_x": float(value),
                        "configuration": config_name,
                        "dataset": dataset,
                    }
                )
            curve = rejection_curve(-f_x, test_y.astype(float), ordering=config_name)
            for rho, q_val in zip(curve.rhos, curve.quality):
                curve_rows.append((dataset, config_name, rho, q_val))
            curve_figs[f"{dataset}:{config_name}"] = (curve.rhos, curve.quality)
            with open(
                os.path.join(model_dir, f"{dataset}__{config_name}.json"),
                "w",
                encoding="utf-8",
            ) as fh:
                json.dump(model.to_json_obj(), fh, sort_keys=True)
                fh.write("\n")

    metadata = report_metadata(
        "selfknow",
        {
            "grid": args.grid,
            "subset": args.subset,
            "seeds": list(seeds),
            "tie_policy": TIE_POLICY_EXPECTED,
            "quality_metric": QUALITY_METRIC,
        },
        {"features": args.features, "correctness": args.correctness, "questions": args.questions},
    )
    write_json_report(
        os.path.join(out, "selfknow_report.json"),
        {"metadata": metadata, "rows": report_rows},
    )
    save_jsonl(os.path.join(out, "selfknow_scores.jsonl"), score_lines)

    headers = ["dataset", "configuration", "AUROC", "AUPRC", "PRR", "n"]
    table_rows = [
        [r["dataset"], r["configuration"], r["auroc"], r["auprc"], r["prr"], r["n_test"]]
        for r in report_rows
    ]
    write_text_report(
        os.path.join(out, "selfknow_report.txt"),
        render_table(headers, table_rows, title="Self-knowledge identification"),
    )

    with open(os.path.join(out, "rejection_curves.csv"), "w", encoding="utf-8") as fh:
        fh.write("dataset,configuration,rho,q\n")
        for dataset, config_name, rho, q_val in curve_rows:
            fh.write(f"{dataset},{config_name},{rho!r},{q_val!r}\n")

    if not args.no_figures:
        figures.bar_chart(
            os.path.join(out, "selfknow_auroc.png"),
            [f"{r['dataset']}:{r['configuration']}" for r in report_rows],
            [r["auroc"] for r in report_rows],
            ylabel="AUROC",
            title="Self-knowledge AUROC by configuration",
            ylim=(0.0, 1.0),
        )
        figures.rejection_curve_plot(
            os.path.join(out, "rejection_curves.png"),
            curve_figs,
            title="Rejection curves (reject most-uncertain first)",
        )
    print(f"wrote self-knowledge report for {len(grouped)} dataset(s) to {out}")
    return 0


# ---------------------------------------------------------------------------
# filter


def _subset_accuracy(ids: list[str], channel: dict[str, int]):
    hits = [channel[qid] for qid in ids if qid in channel]
    if not hits:
        return None, 0
    return sum(hits) / len(hits), len(hits)


def cmd_filter(args) -> int:
    _require_paths(args.questions, args.evergreen_scores)
    out = _out_dir(args)
    if not (0.0 < args.tau < 1.0):
        raise ValidationError(f"--tau must lie in (0, 1), got {args.tau}")
    questions = _subset_per_dataset(load_question_set(args.questions), args.subset)
    scores = _load_score_file(args.evergreen_scores)
    missing = [q.id for q in questions if q.id not in scores]
    if missing:
        raise ValidationError(
            f"{len(missing)} questions lack evergreen scores, e.g. {missing[:5]}"
        )
    channels = _parse_channels(args.correctness or [], "--correctness")
    _require_paths(*(path for _, path in channels))
    channel_labels = {
        name: {c.question_id: c.y for c in load_correctness(path)}
        for name, path in channels
    }

    evergreen = [q for q in questions if scores[q.id] >= args.tau]
    mutable = [q for q in questions if scores[q.id] < args.tau]
    assert len(evergreen) + len(mutable) == len(questions)

    save_jsonl(os.path.join(out, "evergreen_subset.jsonl"), evergreen)
    save_jsonl(os.path.join(out, "mutable_subset.jsonl"), mutable)

    eg_ids = [q.id for q in evergreen]
    mut_ids = [q.id for q in mutable]
    stats: dict = {
        "n": len(questions),
        "n_evergreen": len(evergreen),
        "n_mutable": len(mutable),
        "mutable_pct": 100.0 * len(mutable) / len(questions) if questions else None,
        "tau": args.tau,
        "channels": {},
    }
    for name, _ in channels:
        labels = channel_labels[name]
        acc_eg, n_eg = _subset_accuracy(eg_ids, labels)
        acc_mut, n_mut = _subset_accuracy(mut_ids, labels)
        gap = None
        if acc_eg is not None and acc_mut not in (None, 0.0):
            gap = 100.0 * (acc_eg - acc_mut) / acc_mut
        stats["channels"][name] = {
            "evergreen_accuracy": acc_eg,
            "evergreen_n": n_eg,
            "mutable_accuracy": acc_mut,
            "mutable_n": n_mut,
            "eg_minus_mut_gap_pct": gap,
        }
    if len(channels) >= 2:
        base_name, aug_name = channels[0][0], channels[1][0]
        base = stats["channels"][base_name]
        aug = stats["channels"][aug_name]
        gain = None
        if None not in (
            base["evergreen_accuracy"],
            base["mutable_accuracy"],
            aug["evergreen_accuracy"],
            aug["mutable_accuracy"],
        ):
            delta_mut = aug["mutable_accuracy"] - base["mutable_accuracy"]
            delta_eg = aug["evergreen_accuracy"] - base["evergreen_accuracy"]
            if delta_mut != 0.0:
                gain = 100.0 * (delta_mut - delta_eg) / delta_mut
        stats["mutable_gain"] = {
            "baseline_channel": base_name,
            "augmented_channel": aug_name,
            "mutable_gain_pct": gain,
        }

    metadata = report_metadata(
        "filter",
        {"tau": args.tau, "subset": args.subset, "channels": [n for n, _ in channels]},
        {
            "questions": args.questions,
            "evergreen_scores": args.evergreen_scores,
            **{f"correctness:{n}": p for n, p in channels},
        },
    )
    write_json_report(
        os.path.join(out, "filter_report.json"), {"metadata": metadata, "stats": stats}
    )

    headers = ["channel", "EG acc", "Mut acc", "dEG-Mut %"]
    rows = [
        [
            name,
            stats["channels"][name]["evergreen_accuracy"],
            stats["channels"][name]["mutable_accuracy"],
            stats["channels"][name]["eg_minus_mut_gap_pct"],
        ]
        for name, _ in channels
    ]
    text = render_table(
        headers,
        rows,
        title=(
            f"Filtering at tau={args.tau}: N={stats['n']}, "
            f"mutable {stats['mutable_pct']:.1f}%"
        ),
    )
    if "mutable_gain" in stats:
        gain = stats["mutable_gain"]
        gain_val = gain["mutable_gain_pct"]
        gain_str = "-" if gain_val is None else f"{gain_val:.1f}%"
        text += (
            f"mutable gain ({gain['baseline_channel']} -> {gain['augmented_channel']}): "
            f"{gain_str}\n"
        )
    write_text_report(os.path.join(out, "filter_report.txt"), text)

    if not args.no_figures and channels:
        series = {}
        for name, _ in channels:
            ch = stats["channels"][name]
            series[name] = [
                ch["evergreen_accuracy"] if ch["evergreen_accuracy"] is not None else 0.0,
                ch["mutable_accuracy"] if ch["mutable_accuracy"] is not None else 0.0,
            ]
        figures.grouped_bar_chart(
            os.path.join(out, "filter_accuracy.png"),
            ["evergreen", "mutable"],
            series,
            ylabel="mean in-accuracy",
            title=f"Accuracy by subset (tau={args.tau})",
        )
    print(
        f"partitioned {len(questions)} questions into {len(evergreen)} evergreen / "
        f"{len(mutable)} mutable (tau={args.tau})"
    )
    return 0


# ---------------------------------------------------------------------------
# verbal-bench


def cmd_verbal_bench(args) -> int:
    _require_paths(args.questions)
    out = _out_dir(args)
    seeds = _parse_seeds(args.seeds)
    questions = load_question_set(args.questions)
    test = [q for q in questions if q.evergreen_label is not None]
    if not test:
        raise ValidationError("no labeled questions to benchmark against")
    channels = _parse_channels(args.verbal_outputs or [], "--verbal-outputs")
    if not channels:
        raise ValidationError("verbal-bench requires at least one --verbal-outputs NAME=PATH")
    _require_paths(*(path for _, path in channels))

    sources = {}
    for name, path in channels:
        outputs = _load_verbal_outputs(path)
        sources[name] = {
            qid: parse_verbal_judgment(raw, question_id=qid)
            for qid, raw in outputs.items()
        }
    rows = evergreen_report(
        sources,
        test,
        baseline_seed=seeds[0],
        baseline_trials=args.trials,
    )

    languages = sorted({q.language for q in test})
    metadata = report_metadata(
        "verbal-bench",
        {"trials": args.trials, "seeds": list(seeds)},
        {"questions": args.questions, **{f"verbal:{n}": p for n, p in channels}},
    )
    write_json_report(
        os.path.join(out, "verbal_report.json"),
        {
            "metadata": metadata,
            "rows": [
                {
                    "source": r.source,
                    "per_language": r.per_language,
                    "average": r.average,
                    "unparseable_rate": r.unparseable_rate,
                }
                for r in rows
            ],
        },
    )
    headers = ["source"] + languages + ["AVG", "unparseable"]
    table_rows = [
        [r.source]
        + [r.per_language.get(lang) for lang in languages]
        + [r.average, r.unparseable_rate]
        for r in rows
    ]
    write_text_report(
        os.path.join(out, "verbal_report.txt"),
        render_table(headers, table_rows, title="Verbal evergreen benchmark (weighted F1)"),
    )
    if not args.no_figures:
        figures.grouped_bar_chart(
            os.path.join(out, "verbal_f1.png"),
            languages,
            {r.source: [r.per_language.get(lang, 0.0) for lang in languages] for r in rows},
            ylabel="weighted F1",
            title="Verbal evergreen benchmark",
        )
    print(f"benchmarked {len(channels)} source(s) on {len(test)} questions")
    return 0


# ---------------------------------------------------------------------------
# correlate


def cmd_correlate(args) -> int:
    _require_paths(args.features, args.questions, args.labels)
    out = _out_dir(args)
    seeds = _parse_seeds(args.seeds)
    feature_objs = _load_feature_file(args.features)

    if args.labels:
        label_map = {c.question_id: c.y for c in load_correctness(args.labels)}
        label_source = "external"
    elif args.questions:
        questions = load_question_set(args.questions)
        label_map = {
            q.id: q.evergreen_label for q in questions if q.evergreen_label is not None
        }
        label_source = "evergreen_label"
    else:
        raise ValidationError("correlate needs --labels or --questions for the binary column")
    if not label_map:
        raise ValidationError("no binary labels available")

    metric_names = [name for name in (*UE_FEATURES, EG_FEATURE)]
    paired: dict[str, list[tuple[float, int]]] = {name: [] for name in metric_names}
    matched_ids = []
    for obj in feature_objs:
        qid = obj["question_id"]
        if qid not in label_map:
            continue
        matched_ids.append(qid)
        for name in metric_names:
            value = obj.get(name)
            if value is not None:
                paired[name].append((float(value), int(label_map[qid])))
    if not matched_ids:
        raise ValidationError("no overlap between feature rows and labels")

    rng = np.random.default_rng(seeds[0])
    entries = []
    for name in metric_names:
        pairs = paired[name]
        if len(pairs) < 3:
            continue
        if args.balanced is not None:
            per_class = args.balanced
            zero = [p for p in pairs if p[1] == 0]
            one = [p for p in pairs if p[1] == 1]
            if len(zero) < per_class or len(one) < per_class:
                raise ValidationError(
                    f"balanced subsample of {per_class}/{per_class} impossible for "
                    f"{name!r}: have {len(zero)} vs {len(one)}"
                )
            idx0 = rng.choice(len(zero), size=per_class, replace=False)
            idx1 = rng.choice(len(one), size=per_class, replace=False)
            pairs = [zero[i] for i in sorted(idx0)] + [one[i] for i in sorted(idx1)]
        values = [v for v, _ in pairs]
        labels = [y for _, y in pairs]
        if min(labels) == max(labels) or min(values) == max(values):
            continue
        r, p_value = point_biserial(labels, values)
        entry = {
            "metric": name,
            "n": len(pairs),
            "point_biserial_r": r,
            "p_value": p_value,
            "mcfadden_r2": mcfadden_pseudo_r2(values, labels),
        }
        if args.rank:
            rho, rho_p = spearman(labels, values)
            entry["spearman_rho"] = rho
            entry["spearman_p"] = rho_p
        entries.append(entry)
    if not entries:
        raise ValidationError("no metric had enough paired, non-constant data")

    metadata = report_metadata(
        "correlate",
        {
            "balanced": args.balanced,
            "rank": bool(args.rank),
            "seeds": list(seeds),
            "label_source": label_source,
        },
        {
            "features": args.features,
            **({"questions": args.questions} if args.questions else {}),
            **({"labels": args.labels} if args.labels else {}),
        },
    )
    write_json_report(
        os.path.join(out, "correlation_report.json"),
        {"metadata": metadata, "rows": entries},
    )
    headers = ["metric", "r", "p", "pseudo-R2", "n"]
    table_rows = [
        [e["metric"], e["point_biserial_r"], e["p_value"], e["mcfadden_r2"], e["n"]]
        for e in entries
    ]
    write_text_report(
        os.path.join(out, "correlation_report.txt"),
        render_table(headers, table_rows, title="Correlation with the binary column"),
    )
    if not args.no_figures:
        figures.correlation_plot(
            os.path.join(out, "correlation.png"),
            [e["metric"] for e in entries],
            [e["point_biserial_r"] for e in entries],
            [e["p_value"] for e in entries],
            title="Point-biserial correlation",
        )
    print(f"correlated {len(entries)} metrics against {label_source} labels")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seeds", default="0,1,2", help="comma-separated seeds")
    parser.add_argument(
        "--no-figures", action="store_true", help="skip figure rendering"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evergreen-eval",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="compute uncertainty features from traces")
    p.add_argument("--questions", required=True)
    p.add_argument("--traces", required=True)
    p.add_argument("--evergreen-scores")
    p.add_argument("--tail-mode", choices=["bucket", "spread"], default="bucket")
    p.add_argument("--vocab-size", type=int)
    p.add_argument(
        "--laplacian-variant", choices=["lin_clipped", "raw_sum"], default="lin_clipped"
    )
    _add_common(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train-evergreen", help="train the evergreen baseline classifier")
    p.add_argument("--questions", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--l2", type=float, default=1e-6)
    _add_common(p)
    p.set_defaults(func=cmd_train_evergreen)

    p = sub.add_parser("score-evergreen", help="score questions with a trained model")
    p.add_argument("--questions", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--source", default="ngram-baseline")
    _add_common(p)
    p.set_defaults(func=cmd_score_evergreen)

    p = sub.add_parser("selfknow", help="self-knowledge grid search and evaluation")
    p.add_argument("--features", required=True)
    p.add_argument("--correctness", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--grid", choices=["fast", "full"], default="fast")
    p.add_argument(
        "--subset", type=int, default=None, metavar="N",
        help="keep the first N questions of each dataset split (evaluation convention: 500)",
    )
    _add_common(p)
    p.set_defaults(func=cmd_selfknow)

    p = sub.add_parser("filter", help="partition questions by evergreen probability")
    p.add_argument("--questions", required=True)
    p.add_argument("--evergreen-scores", required=True)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument(
        "--correctness",
        action="append",
        metavar="NAME=PATH",
        help="named correctness channel (repeatable; first is the baseline)",
    )
    p.add_argument(
        "--subset", type=int, default=None, metavar="N",
        help="keep the first N questions of each dataset split (evaluation convention: 500)",
    )
    _add_common(p)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("verbal-bench", help="score verbal evergreen judgments")
    p.add_argument("--questions", required=True)
    p.add_argument(
        "--verbal-outputs",
        action="append",
        metavar="NAME=PATH",
        help="named raw-output file (repeatable)",
    )
    p.add_argument("--trials", type=int, default=10_000)
    _add_common(p)
    p.set_defaults(func=cmd_verbal_bench)

    p = sub.add_parser("correlate", help="correlate metrics with a binary column")
    p.add_argument("--features", required=True)
    p.add_argument("--questions")
    p.add_argument("--labels", help="external binary labels ({question_id, y} JSONL)")
    p.add_argument(
        "--balanced",
        type=int,
        nargs="?",
        const=200,
        default=None,
        metavar="N",
        help="subsample a balanced N/N subset (default N=200)",
    )
    p.add_argument("--rank", action="store_true", help="also report Spearman rho")
    _add_common(p)
    p.set_defaults(func=cmd_correlate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EvalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
