"""Command-line interface.

Commands mirror the experiment surface: `agreement`, `disagreements`,
`baseline-zero-one`, `baseline-logreg`, `odds-ratios`,
`calibrate-thresholds`, `train-student`, `predict`, `pipeline-visual`,
`compare`, and `synth`. Tables are emitted as CSV, JSON, or markdown;
model artifacts (student, thresholds) are JSON documents. Exit codes:
0 success, 1 validation error, 2 I/O error. A flat key=value config file
supplies defaults that explicit flags override.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import warnings
from pathlib import Path

import numpy as np

from . import fileio, reporting
from .distill import StudentModel, TrainConfig, train_student
from .glm import (
    ClassWeighting,
    Penalty,
    ThresholdSet,
    apply_thresholds,
    loocv_binary_predictions,
    odds_ratio_table,
    youden_thresholds,
)
from .labels import (
    CONDITIONS,
    CONDITION_INDEX,
    FEATURE_NAMES,
    Corpus,
    Study,
    UncertaintyPolicy,
    binarize_corpus,
    join_corpora,
    one_hot_matrix,
)
from .metrics import (
    agreement_bounds,
    bootstrap_paired_average_f1_diff,
    bootstrap_paired_f1_diff,
    confusion_counts,
    disagreement_counts,
    f1_score,
    select_evaluation_conditions,
)
from .synthetic import ConditionProfile, SyntheticSpec, generate_synthetic_corpus

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


class _Parser(argparse.ArgumentParser):
    """Argument errors are validation errors: exit 1, not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _parse_bool(text: str) -> bool:
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def load_config(path) -> dict[str, str]:
    """Flat key=value lines; blank lines and # comments are ignored."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}: line {lineno}: expected key=value")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _opt(parser, registry, flag, *, type, default, help="", choices=None):
    action = parser.add_argument(flag, type=type, default=None, help=help, choices=choices)
    registry[action.dest] = (type, default)


def _switch(parser, registry, flag, *, help=""):
    action = parser.add_argument(flag, action="store_const", const=True, default=None, help=help)
    registry[action.dest] = (_parse_bool, False)


def _resolve_options(args) -> None:
    """Fill unset options from the config file, then from hard defaults."""
    registry = getattr(args, "_registry", {})
    config = load_config(args.config) if getattr(args, "config", None) else {}
    for dest, (convert, default) in registry.items():
        if getattr(args, dest) is not None:
            continue
        if dest in config:
            setattr(args, dest, convert(config[dest]))
        else:
            setattr(args, dest, default)


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _emit_table(args, table: reporting.Table) -> None:
    _emit(args, reporting.render(table, args.format))


def _parse_condition_list(text: str) -> list[str]:
    names = [part.strip() for part in text.split(",") if part.strip()]
    unknown = [n for n in names if n not in CONDITION_INDEX]
    if unknown:
        raise ValueError(f"unknown conditions: {unknown}")
    chosen = set(names)
    return [c for c in CONDITIONS if c in chosen]


def _conditions_for(args, truth_corpus: Corpus) -> list[str]:
    if args.conditions:
        return _parse_condition_list(args.conditions)
    selected = select_evaluation_conditions(truth_corpus, args.min_positive)
    if not selected:
        raise ValueError(
            f"no condition reaches {args.min_positive} positive studies;"
            " pass --conditions or lower --min-positive"
        )
    return selected


def _prevalence(truth: np.ndarray, conds: list[str]) -> list[int]:
    return [int(truth[:, CONDITION_INDEX[c]].sum()) for c in conds]


# ---------------------------------------------------------------------------
# commands


def cmd_agreement(args) -> int:
    corpus = join_corpora(
        [fileio.ingest_report_labels(args.report), fileio.ingest_image_truth(args.truth)]
    )
    conds = _conditions_for(args, corpus)
    truth = corpus.truth_matrix()
    bounds = agreement_bounds(corpus, corpus)
    weights = _prevalence(truth, conds)
    rows = [
        {
            "condition": c,
            "n_positive": w,
            "low_f1": bounds[c].low_f1,
            "high_f1": bounds[c].high_f1,
            "low_kappa": bounds[c].low_kappa,
            "high_kappa": bounds[c].high_kappa,
        }
        for c, w in zip(conds, weights)
    ]
    table = reporting.multi_score_table(
        ("condition", "n_positive", "low_f1", "high_f1", "low_kappa", "high_kappa"),
        rows,
        score_columns=("low_f1", "high_f1", "low_kappa", "high_kappa"),
        weights=weights,
    )
    _emit_table(args, table)
    return EXIT_OK


def cmd_disagreements(args) -> int:
    corpus = join_corpora(
        [fileio.ingest_report_labels(args.report), fileio.ingest_image_truth(args.truth)]
    )
    conds = _parse_condition_list(args.conditions) if args.conditions else list(CONDITIONS)
    counts = disagreement_counts(corpus, corpus)
    rows = [
        {
            "condition": c,
            "positive_image_negative_report": counts[c].positive_image_negative_report,
            "negative_image_positive_report": counts[c].negative_image_positive_report,
        }
        for c in conds
    ]
    table = reporting.Table(
        columns=("condition", "positive_image_negative_report", "negative_image_positive_report"),
        rows=tuple(rows),
    )
    _emit_table(args, table)
    return EXIT_OK


def cmd_baseline_zero_one(args) -> int:
    corpus = join_corpora(
        [fileio.ingest_report_labels(args.report), fileio.ingest_image_truth(args.truth)]
    )
    conds = _conditions_for(args, corpus)
    truth = corpus.truth_matrix()
    zeros = binarize_corpus(corpus, UncertaintyPolicy.ZEROS)
    ones = binarize_corpus(corpus, UncertaintyPolicy.ONES)
    weights = _prevalence(truth, conds)
    rows = []
    for c, w in zip(conds, weights):
        i = CONDITION_INDEX[c]
        f1_zeros = f1_score(confusion_counts(zeros[:, i], truth[:, i]))
        f1_ones = f1_score(confusion_counts(ones[:, i], truth[:, i]))
        rows.append(
            {
                "condition": c,
                "n_positive": w,
                "f1_zeros": f1_zeros,
                "f1_ones": f1_ones,
                "f1_best": max(f1_zeros, f1_ones),
            }
        )
    table = reporting.multi_score_table(
        ("condition", "n_positive", "f1_zeros", "f1_ones", "f1_best"),
        rows,
        score_columns=("f1_zeros", "f1_ones", "f1_best"),
        weights=weights,
    )
    _emit_table(args, table)
    return EXIT_OK


def _loocv_f1_table(args, features: np.ndarray, truth: np.ndarray, conds: list[str]):
    weights = _prevalence(truth, conds)
    rows = []
    for c, w in zip(conds, weights):
        t = truth[:, CONDITION_INDEX[c]]
        preds = loocv_binary_predictions(
            features,
            t,
            Penalty.l2(args.l2_c),
            ClassWeighting.INVERSE_PREVALENCE,
            decision_threshold=args.threshold,
            max_iter=args.max_iter,
        )
        rows.append(
            {"condition": c, "n_positive": w, "f1": f1_score(confusion_counts(preds, t))}
        )
    return reporting.multi_score_table(
        ("condition", "n_positive", "f1"), rows, score_columns=("f1",), weights=weights
    )


def cmd_baseline_logreg(args) -> int:
    corpus = join_corpora(
        [fileio.ingest_report_labels(args.report), fileio.ingest_image_truth(args.truth)]
    )
    conds = _conditions_for(args, corpus)
    table = _loocv_f1_table(args, one_hot_matrix(corpus), corpus.truth_matrix(), conds)
    _emit_table(args, table)
    return EXIT_OK


def cmd_odds_ratios(args) -> int:
    corpus = join_corpora(
        [fileio.ingest_report_labels(args.report), fileio.ingest_image_truth(args.truth)]
    )
    conds = _conditions_for(args, corpus)
    features = one_hot_matrix(corpus)
    truth = corpus.truth_matrix()
    rows = []
    for c in conds:
        result = odds_ratio_table(
            features,
            truth[:, CONDITION_INDEX[c]],
            feature_names=FEATURE_NAMES,
            alpha=args.alpha,
            p_threshold=args.p_threshold,
        )
        if result.refit_report is not None and not result.refit_report.converged:
            warnings.warn(f"{c}: unpenalized refit did not converge")
        for entry in result.entries:
            rows.append(
                {
                    "target_condition": c,
                    "feature": entry.feature_name,
                    "odds_ratio": entry.odds_ratio,
                    "std_error": entry.std_error,
                    "statistic": entry.statistic,
                    "p_value": entry.p_value,
                }
            )
    table = reporting.Table(
        columns=("target_condition", "feature", "odds_ratio", "std_error", "statistic", "p_value"),
        rows=tuple(rows),
    )
    _emit_table(args, table)
    return EXIT_OK


def cmd_calibrate_thresholds(args) -> int:
    corpus = join_corpora(
        [fileio.ingest_probabilities(args.probabilities), fileio.ingest_image_truth(args.truth)]
    )
    conds = _parse_condition_list(args.conditions) if args.conditions else list(CONDITIONS)
    cols = [CONDITION_INDEX[c] for c in conds]
    tset = youden_thresholds(
        corpus.probability_matrix()[:, cols], corpus.truth_matrix()[:, cols], conditions=conds
    )
    _emit(args, tset.to_json())
    return EXIT_OK


def cmd_train_student(args) -> int:
    corpus = join_corpora(
        [fileio.ingest_impressions(args.impressions), fileio.ingest_probabilities(args.probabilities)]
    )
    config = TrainConfig(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        split_fraction=args.split_fraction,
        patience=args.patience,
        max_epochs=args.max_epochs,
        seed=args.seed,
        n_range=tuple(int(n) for n in args.ngrams.split(",")),
        min_count=args.min_count,
    )
    model = train_student(corpus, config)
    history = model.history
    print(
        f"trained on {len(corpus)} studies; vocabulary {model.vocabulary.size};"
        f" best epoch {history.best_epoch} of {len(history.val_losses) - 1};"
        f" validation loss {history.val_losses[history.best_epoch]:.6f}",
        file=sys.stderr,
    )
    _emit(args, model.to_json())
    return EXIT_OK


def cmd_predict(args) -> int:
    model = StudentModel.from_json(Path(args.model).read_text(encoding="utf-8"))
    corpus = fileio.ingest_impressions(args.impressions)
    probabilities = model.predict_matrix(corpus.impressions())
    target = args.out if args.out else sys.stdout
    if args.thresholds:
        tset = ThresholdSet.from_json(Path(args.thresholds).read_text(encoding="utf-8"))
        missing = [c for c in CONDITIONS if c not in tset]
        if missing:
            raise ValueError(f"threshold file lacks conditions: {missing}")
        binary = apply_thresholds(probabilities, tset, conditions=CONDITIONS)
        fileio.write_binary_predictions(corpus.ids(), binary, target)
    else:
        fileio.write_probability_predictions(corpus.ids(), probabilities, target)
    return EXIT_OK


def cmd_pipeline_visual(args) -> int:
    if args.probabilities and (args.model or args.impressions):
        raise ValueError("pass either --probabilities or --model with --impressions")
    if args.probabilities:
        probs_corpus = fileio.ingest_probabilities(args.probabilities)
    elif args.model and args.impressions:
        model = StudentModel.from_json(Path(args.model).read_text(encoding="utf-8"))
        text_corpus = fileio.ingest_impressions(args.impressions)
        matrix = model.predict_matrix(text_corpus.impressions())
        probs_corpus = Corpus(
            studies=tuple(
                Study(id=sid, probabilities=tuple(float(v) for v in row))
                for sid, row in zip(text_corpus.ids(), matrix)
            ),
            provenance="student",
        )
    else:
        raise ValueError("pass either --probabilities or --model with --impressions")
    corpus = join_corpora([probs_corpus, fileio.ingest_image_truth(args.truth)])
    conds = _conditions_for(args, corpus)
    table = _loocv_f1_table(args, corpus.probability_matrix(), corpus.truth_matrix(), conds)
    _emit_table(args, table)
    return EXIT_OK


def cmd_compare(args) -> int:
    preds_a = fileio.ingest_image_truth(args.preds_a)
    preds_b = fileio.ingest_image_truth(args.preds_b)
    truth = fileio.ingest_image_truth(args.truth)
    ids = truth.ids()
    for name, corpus in (("preds-a", preds_a), ("preds-b", preds_b)):
        if set(corpus.ids()) != set(ids):
            raise ValueError(f"{name} study ids do not match the truth file")
    a_by = {s.id: s.image_truth for s in preds_a.studies}
    b_by = {s.id: s.image_truth for s in preds_b.studies}
    a = np.array([a_by[i] for i in ids], dtype=np.int64)
    b = np.array([b_by[i] for i in ids], dtype=np.int64)
    t = truth.truth_matrix()
    conds = _conditions_for(args, truth)
    cols = [CONDITION_INDEX[c] for c in conds]
    weights = _prevalence(t, conds)
    rows = []
    for c, w in zip(conds, weights):
        i = CONDITION_INDEX[c]
        r = bootstrap_paired_f1_diff(
            a[:, i], b[:, i], t[:, i], replicates=args.replicates, level=args.level, seed=args.seed
        )
        rows.append(
            {
                "condition": c,
                "n_positive": w,
                "mean_diff": r.mean_diff,
                "ci_low": r.ci_low,
                "ci_high": r.ci_high,
            }
        )
    macro = bootstrap_paired_average_f1_diff(
        a[:, cols], b[:, cols], t[:, cols],
        replicates=args.replicates, level=args.level, seed=args.seed,
    )
    weighted = bootstrap_paired_average_f1_diff(
        a[:, cols], b[:, cols], t[:, cols], weights=weights,
        replicates=args.replicates, level=args.level, seed=args.seed,
    )
    rows.append(
        {"condition": "Average", "mean_diff": macro.mean_diff,
         "ci_low": macro.ci_low, "ci_high": macro.ci_high}
    )
    rows.append(
        {"condition": "Weighted Average", "mean_diff": weighted.mean_diff,
         "ci_low": weighted.ci_low, "ci_high": weighted.ci_high}
    )
    table = reporting.Table(
        columns=("condition", "n_positive", "mean_diff", "ci_low", "ci_high"), rows=tuple(rows)
    )
    _emit_table(args, table)
    return EXIT_OK


_PROFILE_FLAGS = (
    "prevalence", "uncertain_pos", "uncertain_neg", "blank_pos", "blank_neg", "flip", "hierarchy"
)


def _parse_hierarchy(text: str) -> tuple[tuple[str, str], ...]:
    pairs = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ">" not in chunk:
            raise ValueError(f"hierarchy pair {chunk!r} must look like 'Child>Parent'")
        child, parent = (part.strip() for part in chunk.split(">", 1))
        pairs.append((child, parent))
    return tuple(pairs)


def cmd_synth(args) -> int:
    overridden = [f for f in _PROFILE_FLAGS if getattr(args, f) not in (None, False)]
    if args.noiseless:
        spec = SyntheticSpec.noiseless(prevalence=args.prevalence or 0.3)
    elif overridden:
        profile = ConditionProfile(
            prevalence=args.prevalence if args.prevalence is not None else 0.3,
            uncertain_pos=args.uncertain_pos or 0.0,
            uncertain_neg=args.uncertain_neg or 0.0,
            blank_pos=args.blank_pos or 0.0,
            blank_neg=args.blank_neg or 0.0,
            flip=args.flip or 0.0,
        )
        spec = SyntheticSpec.uniform(
            profile, hierarchy=_parse_hierarchy(args.hierarchy) if args.hierarchy else ()
        )
    else:
        spec = SyntheticSpec.demo()
    replacements = {}
    if args.detail_leak is not None:
        replacements["detail_leak"] = args.detail_leak
    if args.teacher_sharpness is not None:
        replacements["teacher_sharpness"] = args.teacher_sharpness
    if args.teacher_noise is not None:
        replacements["teacher_noise"] = args.teacher_noise
    if replacements:
        spec = dataclasses.replace(spec, **replacements)
    corpus = generate_synthetic_corpus(spec, args.n, args.seed)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    fileio.write_report_labels(corpus, outdir / "report_labels.csv")
    fileio.write_image_truth(corpus, outdir / "image_truth.csv")
    fileio.write_probabilities(corpus, outdir / "probabilities.csv")
    fileio.write_impressions(corpus, outdir / "impressions.csv")
    print(f"wrote {len(corpus)} studies to {outdir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser assembly


def _add_common(sub, registry, *, conditions=True):
    sub.add_argument("--out", default=None, help="output path (default: stdout)")
    sub.add_argument("--config", default=None, help="key=value defaults file")
    _opt(sub, registry, "--format", type=str, default="markdown",
         choices=list(reporting.FORMATS), help="table format")
    _opt(sub, registry, "--seed", type=int, default=0, help="random seed")
    if conditions:
        sub.add_argument("--conditions", default=None,
                         help="comma-separated condition filter (default: evaluation conditions)")
        _opt(sub, registry, "--min-positive", type=int, default=50,
             help="positive-count floor for evaluation conditions")


def _add_loocv_options(sub, registry):
    _opt(sub, registry, "--l2-c", type=float, default=1.0, help="L2 inverse strength C")
    _opt(sub, registry, "--max-iter", type=int, default=500, help="fit iteration cap")
    _opt(sub, registry, "--threshold", type=float, default=0.5, help="decision threshold")


def build_parser() -> _Parser:
    parser = _Parser(prog="radlabel", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help):
        registry: dict = {}
        sub = subs.add_parser(name, help=help)
        sub.set_defaults(func=func, _registry=registry)
        return sub, registry

    sub, reg = command("agreement", cmd_agreement,
                       "low/high F1 and kappa between report labels and image truth")
    sub.add_argument("--report", required=True)
    sub.add_argument("--truth", required=True)
    _add_common(sub, reg)

    sub, reg = command("disagreements", cmd_disagreements,
                       "per-condition counts of the two disagreement directions")
    sub.add_argument("--report", required=True)
    sub.add_argument("--truth", required=True)
    _add_common(sub, reg)

    sub, reg = command("baseline-zero-one", cmd_baseline_zero_one,
                       "F1 of the zeros/ones uncertainty mappings")
    sub.add_argument("--report", required=True)
    sub.add_argument("--truth", required=True)
    _add_common(sub, reg)

    sub, reg = command("baseline-logreg", cmd_baseline_logreg,
                       "leave-one-out logistic mapping from one-hot report labels")
    sub.add_argument("--report", required=True)
    sub.add_argument("--truth", required=True)
    _add_common(sub, reg)
    _add_loocv_options(sub, reg)

    sub, reg = command("odds-ratios", cmd_odds_ratios,
                       "significant odds ratios of report labels for image labels")
    sub.add_argument("--report", required=True)
    sub.add_argument("--truth", required=True)
    _add_common(sub, reg)
    _opt(sub, reg, "--alpha", type=float, default=0.5, help="L1 strength for selection")
    _opt(sub, reg, "--p-threshold", type=float, default=0.05, help="significance cut")

    sub, reg = command("calibrate-thresholds", cmd_calibrate_thresholds,
                       "Youden-index thresholds from probabilities and truth")
    sub.add_argument("--probabilities", required=True)
    sub.add_argument("--truth", required=True)
    _add_common(sub, reg)

    sub, reg = command("train-student", cmd_train_student,
                       "distill teacher probabilities into an n-gram text model")
    sub.add_argument("--impressions", required=True)
    sub.add_argument("--probabilities", required=True)
    _add_common(sub, reg, conditions=False)
    _opt(sub, reg, "--learning-rate", type=float, default=0.1)
    _opt(sub, reg, "--batch-size", type=int, default=18)
    _opt(sub, reg, "--split-fraction", type=float, default=0.85)
    _opt(sub, reg, "--patience", type=int, default=5)
    _opt(sub, reg, "--max-epochs", type=int, default=100)
    _opt(sub, reg, "--ngrams", type=str, default="1,2", help="n-gram orders, e.g. 1,2")
    _opt(sub, reg, "--min-count", type=int, default=1)

    sub, reg = command("predict", cmd_predict,
                       "run the student on impressions; probabilities or thresholded labels")
    sub.add_argument("--model", required=True)
    sub.add_argument("--impressions", required=True)
    sub.add_argument("--thresholds", default=None, help="threshold JSON for binary output")
    _add_common(sub, reg, conditions=False)

    sub, reg = command("pipeline-visual", cmd_pipeline_visual,
                       "student probabilities through leave-one-out logistic heads")
    sub.add_argument("--truth", required=True)
    sub.add_argument("--model", default=None)
    sub.add_argument("--impressions", default=None)
    sub.add_argument("--probabilities", default=None)
    _add_common(sub, reg)
    _add_loocv_options(sub, reg)

    sub, reg = command("compare", cmd_compare,
                       "paired bootstrap of F1 differences between two prediction files")
    sub.add_argument("--preds-a", required=True)
    sub.add_argument("--preds-b", required=True)
    sub.add_argument("--truth", required=True)
    _add_common(sub, reg)
    _opt(sub, reg, "--replicates", type=int, default=1000)
    _opt(sub, reg, "--level", type=float, default=0.95)

    sub, reg = command("synth", cmd_synth, "generate a synthetic corpus")
    sub.add_argument("--outdir", required=True)
    _add_common(sub, reg, conditions=False)
    _opt(sub, reg, "--n", type=int, default=500, help="number of studies")
    _switch(sub, reg, "--noiseless", help="faithful reports, no hierarchy")
    _opt(sub, reg, "--prevalence", type=float, default=None)
    _opt(sub, reg, "--uncertain-pos", type=float, default=None)
    _opt(sub, reg, "--uncertain-neg", type=float, default=None)
    _opt(sub, reg, "--blank-pos", type=float, default=None)
    _opt(sub, reg, "--blank-neg", type=float, default=None)
    _opt(sub, reg, "--flip", type=float, default=None)
    _opt(sub, reg, "--hierarchy", type=str, default=None,
         help="semicolon-separated Child>Parent pairs")
    _opt(sub, reg, "--detail-leak", type=float, default=None)
    _opt(sub, reg, "--teacher-sharpness", type=float, default=None)
    _opt(sub, reg, "--teacher-noise", type=float, default=None)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _resolve_options(args)
        return args.func(args)
    except OSError as exc:
        print(f"radlabel: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"radlabel: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
