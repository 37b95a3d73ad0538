"""Command-line pipeline: extract, vectorize, stats, train, predict, evaluate.

Exit codes: 0 on success, 1 for usage errors, 2 for data errors. All
outputs are deterministic for fixed inputs and flags, including under
``--jobs`` parallelism (results are merged in input order).
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor

from .dataset import (
    DataError,
    dataset_stats,
    read_labels,
    read_matrix,
    to_matrix,
)
from .features import extract_raw_with_status, record_to_json
from .gbdt import ModelFormatError, TrainParams, load_model, save_model, train
from .metrics import evaluation_report, read_scores, write_scores
from .vectorizer import layout_manifest

JOBS_ENV_VAR = "PEVEC_JOBS"
_APPEARED_RE = re.compile(r"^\d{4}-\d{2}$")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); usage errors are 1
        raise UsageError(message)


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(JOBS_ENV_VAR, "1")))
    except ValueError:
        return 1


def _extract_worker(task: tuple[str, str, int]) -> tuple[str, str, str, str]:
    path, appeared, label = task
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        return ("ioerror", f"cannot read {path}: {exc}", "", "")
    record, status = extract_raw_with_status(data, appeared, label)
    return ("ok", record_to_json(record), status.level, status.reason)


def _cmd_extract(args) -> int:
    if not _APPEARED_RE.match(args.appeared):
        raise UsageError(f"--appeared must match YYYY-MM, got {args.appeared!r}")
    jobs = args.jobs if args.jobs is not None else _default_jobs()
    if jobs < 1:
        raise UsageError("--jobs must be >= 1")

    tasks = [(path, args.appeared, args.label) for path in args.files]
    had_error = False

    def drain(results) -> None:
        nonlocal had_error
        with open(args.out, "w", encoding="utf-8") as out:
            for (path, _, _), (kind, payload, level, reason) in zip(tasks, results):
                if kind == "ioerror":
                    print(f"error: {payload}", file=sys.stderr)
                    had_error = True
                    continue
                if level != "ok":
                    print(f"warning: {path}: parse {level}: {reason}", file=sys.stderr)
                out.write(payload)
                out.write("\n")

    if jobs == 1:
        drain(map(_extract_worker, tasks))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            drain(pool.map(_extract_worker, tasks))
    return 2 if had_error else 0


def _cmd_vectorize(args) -> int:
    rows = to_matrix([args.features], args.out, args.labels, args.include_unlabeled)
    print(f"wrote {rows} rows to {args.out}", file=sys.stderr)
    return 0


def _cmd_stats(args) -> int:
    stats = dataset_stats(args.features)
    print(json.dumps(stats.to_json_obj(), indent=2))
    return 0


def _cmd_train(args) -> int:
    X = read_matrix(args.matrix)
    y = read_labels(args.labels)
    if -1 in y:
        raise DataError("labels contain -1; vectorize without --include-unlabeled to train")
    try:
        params = TrainParams(
            num_trees=args.trees,
            max_leaves=args.leaves,
            learning_rate=args.learning_rate,
            min_samples_leaf=args.min_samples_leaf,
            l2_reg=args.l2_reg,
            feature_bins=args.feature_bins,
            exact_splits=args.exact_splits,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    try:
        model = train(X, y, params)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    save_model(model, args.out)
    print(f"trained {len(model.trees)} trees on {X.shape[0]} rows", file=sys.stderr)
    return 0


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    X = read_matrix(args.matrix)
    if X.shape[1] != model.num_features:
        raise DataError(
            f"matrix has {X.shape[1]} columns but the model expects {model.num_features}"
        )
    scores = model.predict_proba(X)
    # EMBV rows carry no identifiers, so the id column holds row ordinals.
    write_scores(args.out, (str(i) for i in range(len(scores))), scores)
    print(f"scored {len(scores)} rows", file=sys.stderr)
    return 0


def _cmd_evaluate(args) -> int:
    budgets = []
    for part in args.fpr.split(","):
        try:
            budget = float(part)
        except ValueError:
            raise UsageError(f"bad --fpr value {part!r}") from None
        if not 0.0 < budget < 1.0:
            raise UsageError(f"--fpr values must be in (0, 1), got {part}")
        budgets.append(budget)
    _, scores = read_scores(args.scores)
    y = read_labels(args.labels)
    if len(y) != len(scores):
        raise DataError(f"{len(scores)} scores but {len(y)} labels")
    if -1 in y:
        raise DataError("labels contain -1; evaluation needs 0/1 labels")
    try:
        report = evaluation_report(scores, y, budgets)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    print(json.dumps(report, indent=2))
    return 0


def _cmd_layout(args) -> int:
    text = json.dumps(layout_manifest(), indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.write("\n")
    else:
        print(text)
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="pevec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract raw features from PE files to JSONL")
    p.add_argument("files", nargs="+", metavar="FILE")
    p.add_argument("--appeared", required=True, help="YYYY-MM first-seen month")
    p.add_argument("--label", required=True, type=int, choices=(-1, 0, 1))
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=None, help=f"workers (default ${JOBS_ENV_VAR} or 1)")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("vectorize", help="vectorize a JSONL shard to EMBV/EMBL files")
    p.add_argument("features")
    p.add_argument("--out", required=True, help="output EMBV matrix path")
    p.add_argument("--labels", required=True, help="output EMBL label path")
    p.add_argument("--include-unlabeled", action="store_true")
    p.set_defaults(func=_cmd_vectorize)

    p = sub.add_parser("stats", help="print dataset statistics as JSON")
    p.add_argument("features", nargs="+")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("train", help="train the boosted-tree baseline")
    p.add_argument("matrix")
    p.add_argument("labels")
    p.add_argument("--out", required=True)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--leaves", type=int, default=31)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--min-samples-leaf", type=int, default=20)
    p.add_argument("--l2-reg", type=float, default=0.0)
    p.add_argument("--feature-bins", type=int, default=255)
    p.add_argument("--exact-splits", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="score an EMBV matrix with a trained model")
    p.add_argument("model")
    p.add_argument("matrix")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", help="report AUC and TPR at FPR budgets")
    p.add_argument("scores")
    p.add_argument("labels")
    p.add_argument("--fpr", default="0.001,0.01", help="comma-separated FPR budgets")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("layout", help="print the feature-vector layout manifest")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_layout)

    return parser


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ModelFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
