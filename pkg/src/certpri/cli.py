"""Command-line entry point: ``certpri <subcommand> ...``.

Exit codes: 0 success, 1 input error, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from ._io import atomic_write_text
from .data import DatasetError, load_dataset, save_dataset
from .gevt import FitError, fit_reverse_weibull
from .metrics import CUTOFFS, MetricWarning, deepgini_order, genrew, method_ranks, metric_report, robr, welch_t_test
from .model import ModelError, load_model, save_model
from .prioritizer import CertPriConfig, prioritize
from .sampling import make_rng
from .synthetic import GENERATORS, SyntheticSubjectSpec, generate
from .training import TrainingDiverged, accuracy, mse, train_toy

RESULT_SCHEMA = "certpri.result/1"
REPORT_SCHEMA = "certpri.report/1"


class InvariantViolation(RuntimeError):
    pass


class InputError(ValueError):
    pass


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def _write_sidecar_log(out: Path, lines: list[str]) -> None:
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    atomic_write_text(out.with_name(out.name + ".log"), "".join(f"{stamp} {l}\n" for l in lines))


def parse_radius(text: str) -> tuple[float, bool]:
    """``"0.04x"`` means 0.04 * max|x|; a plain number is an absolute radius."""
    t = text.strip().lower()
    relative = t.endswith("x")
    if relative:
        t = t[:-1]
    try:
        r = float(t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad radius {text!r}; use e.g. 0.04x or 0.5") from None
    if not r > 0:
        raise argparse.ArgumentTypeError("radius must be > 0")
    return r, relative


def _seed_default() -> int:
    env = os.environ.get("CERTPRI_SEED")
    if env is None:
        return 0
    try:
        return int(env, 0)
    except ValueError:
        raise InputError(f"CERTPRI_SEED is not an integer: {env!r}") from None


# gen-synthetic ---------------------------------------------------------------

def cmd_gen_synthetic(args) -> int:
    spec = SyntheticSubjectSpec(
        generator=args.generator, classes=args.classes, input_dim=args.dim, output_dim=args.outputs,
        n_train=args.n_train, n_test=args.n_test, label_noise=args.label_noise,
        test_label_noise=args.test_label_noise, spread=args.spread, separation=args.separation,
        truncate=not args.overlap, target_noise=args.target_noise, seed=args.seed,
    )
    subject = generate(spec)
    out = Path(args.out_dir)
    save_dataset(subject.train, out / "train.csv")
    save_dataset(subject.test, out / "test.csv")
    atomic_write_text(out / "meta.json", _dump(subject.meta))
    print(f"wrote {out / 'train.csv'} ({len(subject.train)} rows) and {out / 'test.csv'} ({len(subject.test)} rows)")
    return 0


# train-toy -------------------------------------------------------------------

def cmd_train_toy(args) -> int:
    task = args.task
    train_ds = load_dataset(args.train)
    if task == "classification" and train_ds.labels is None:
        raise InputError("classification training data needs a label column")
    if task == "regression" and train_ds.targets is None:
        raise InputError("regression training data needs t0.. target columns")
    bounds = None
    if task == "regression":
        if args.output_min is not None and args.output_max is not None:
            bounds = (args.output_min, args.output_max)
        else:
            lo, hi = float(train_ds.targets.min()), float(train_ds.targets.max())
            pad = 0.1 * (hi - lo) if hi > lo else 1.0
            bounds = (lo - pad, hi + pad)
    hidden = tuple(int(h) for h in args.hidden.split(",") if h.strip())
    model = train_toy(train_ds, hidden=hidden, activation=args.activation, task=task,
                      num_outputs=args.classes, epochs=args.epochs, lr=args.lr, seed=args.seed,
                      output_bounds=bounds)
    save_model(model, args.out)
    summary = {"model": str(args.out), "epochs": args.epochs}
    score = accuracy if task == "classification" else mse
    key = "accuracy" if task == "classification" else "mse"
    summary[f"train_{key}"] = score(model, train_ds)
    if args.test:
        summary[f"test_{key}"] = score(model, load_dataset(args.test))
    print(_dump(summary), end="")
    return 0


# prioritize ------------------------------------------------------------------

def config_from_args(args) -> CertPriConfig:
    radius, relative = args.radius
    return CertPriConfig(
        p=args.norm, radius=radius, radius_relative=relative, batches=args.batches,
        samples_per_batch=args.samples_per_batch, mode=args.mode.replace("-", "_"),
        fd_step=args.fd_step, seed=args.seed if args.seed is not None else _seed_default(),
        endpoint_variant=args.endpoint_variant.replace("-", "_"),
    )


def result_document(result, model_path, data_path) -> dict:
    doc = {"schema": RESULT_SCHEMA, "model": str(model_path), "dataset": str(data_path)}
    doc.update(result.to_dict())
    return doc


def cmd_prioritize(args) -> int:
    config = config_from_args(args)
    model = load_model(args.model)
    # only the feature matrix goes further; labels are dropped at the door
    inputs = load_dataset(args.data).inputs
    if inputs.shape[1] != model.input_dim:
        raise InputError(f"dataset has {inputs.shape[1]} features, model expects {model.input_dim}")
    start = time.perf_counter()
    result = prioritize(model, inputs, config, workers=args.workers)
    elapsed = time.perf_counter() - start
    omega = result.omega
    if not np.array_equal(np.sort(omega), np.arange(inputs.shape[0])):
        raise InvariantViolation("omega is not a permutation of the input indices")
    doc = result_document(result, args.model, args.data)
    out = Path(args.out)
    atomic_write_text(out, _dump(doc))
    fallbacks = sum(1 for c in result.costs if c.fit is None)
    _write_sidecar_log(out, [f"prioritized {len(omega)} inputs in {elapsed:.2f}s",
                             f"fit fallbacks: {fallbacks}", f"certpri {__version__}"])
    print(f"wrote {out}: {len(omega)} inputs, {fallbacks} fit fallbacks, {elapsed:.1f}s")
    return 0


# evaluate --------------------------------------------------------------------

def _load_result(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON: {exc}") from exc
    if doc.get("schema") != RESULT_SCHEMA or "omega" not in doc:
        raise InputError(f"{path}: not a prioritization result ({RESULT_SCHEMA})")
    return doc


def _gammas(doc) -> np.ndarray:
    return np.array([math.inf if e["gamma_L"] is None else e["gamma_L"] for e in doc["inputs"]])


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def format_table(report: dict) -> str:
    rauc_cols = [k for k in report["methods"][0] if k.startswith("rauc_")] if report["methods"] else []
    cols = ["method", *rauc_cols, "robr", "genrew", "t", "p"]
    rows = [cols]
    for m in report["methods"]:
        row = []
        for c in cols:
            v = m.get(c)
            if v is None:
                row.append("n/a")
            elif isinstance(v, float):
                row.append(f"{v:.4g}" if c in ("t", "p") else f"{v:.4f}")
            else:
                row.append(str(v))
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(cols))]
    lines = ["  ".join(v.ljust(w) if i == 0 else v.rjust(w) for i, (v, w) in enumerate(zip(r, widths))) for r in rows]
    extra = [f"inputs: {report['n']}  bug-revealing: {report['bugs']}"]
    if report.get("rank_correlation") is not None:
        extra.append(f"rank correlation (Spearman) between first two results: {report['rank_correlation']:.4f}")
    return "\n".join(lines + extra) + "\n"


def cmd_evaluate(args) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", MetricWarning)
        report = _evaluate(args)
    notes = list(dict.fromkeys(str(w.message) for w in caught if issubclass(w.category, MetricWarning)))
    report["warnings"] = notes
    for note in notes:
        print(f"warning: {note}", file=sys.stderr)
    text = _dump(report) if args.format == "json" else format_table(report)
    if args.out:
        atomic_write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def _evaluate(args) -> dict:
    model = load_model(args.model)
    ds = load_dataset(args.data, model.output_dim if model.task == "classification" else None)
    n = len(ds)
    if model.task == "classification":
        if ds.labels is None:
            raise InputError("evaluation needs a label column")
        flags, err = model.predict_label(ds.inputs) != ds.labels, None
        n_bugs = int(flags.sum())
    else:
        if ds.targets is None:
            raise InputError("evaluation needs target columns")
        err = np.mean((model.forward(ds.inputs) - ds.targets) ** 2, axis=1)
        flags = None
        n_bugs = None
    cutoffs = CUTOFFS if not args.cutoffs else tuple(None if c == "all" else int(c) for c in args.cutoffs.split(","))

    methods = []
    docs = []
    for i, path in enumerate(args.results):
        doc = _load_result(path)
        if len(doc["omega"]) != n:
            raise InputError(f"{path}: {len(doc['omega'])} inputs, labeled dataset has {n}")
        docs.append(doc)
        name = Path(path).stem
        entry = {"method": name, **metric_report(doc["omega"], flags, err, cutoffs)}
        g = _gammas(doc)
        if flags is not None and flags.sum() >= 2 and (~flags).sum() >= 2 and np.all(np.isfinite(g)):
            try:
                tt = welch_t_test(g[flags], g[~flags])
                entry["t"], entry["p"] = tt.t, tt.p
            except ValueError:
                pass
        methods.append(entry)
    if args.deepgini:
        if model.task != "classification":
            raise InputError("the DeepGini baseline needs a classification model")
        order = deepgini_order(model.forward(ds.inputs))
        methods.append({"method": "deepgini", **metric_report(order, flags, err, cutoffs)})
    if args.random:
        rng = make_rng(args.seed)
        reports = [metric_report(rng.permutation(n), flags, err, cutoffs) for _ in range(args.random)]
        mean = {k: float(np.mean([r[k] for r in reports])) for k in reports[0]}
        methods.append({"method": f"random_mean_{args.random}", **mean})

    reference = None
    if args.reference_report:
        ref = json.loads(Path(args.reference_report).read_text(encoding="utf-8"))
        reference = {m["method"]: m["rauc_all"] for m in ref.get("methods", [])}
    for m in methods:
        m.setdefault("t", None)
        m.setdefault("p", None)
        base = reference.get(m["method"]) if reference else None
        m["robr"] = robr(m["rauc_all"], base) if base else None
    if len(methods) >= 2:
        ranks = method_ranks([m["rauc_all"] for m in methods])
        for m, k in zip(methods, ranks):
            m["genrew"] = genrew([[k]], len(methods))
    else:
        for m in methods:
            m["genrew"] = None

    report = {"schema": REPORT_SCHEMA, "n": n, "bugs": n_bugs,
              "methods": [{k: _clean(v) for k, v in m.items()} for m in methods], "rank_correlation": None}
    if len(docs) >= 2:
        rho = stats.spearmanr(_gammas(docs[0]), _gammas(docs[1])).statistic
        report["rank_correlation"] = _clean(float(rho))
    return report


# fit-gevt --------------------------------------------------------------------

def cmd_fit_gevt(args) -> int:
    raw = Path(args.values).read_text(encoding="utf-8").split()
    try:
        values = np.array([float(v) for v in raw])
    except ValueError as exc:
        raise InputError(f"{args.values}: {exc}") from None
    if values.size == 0:
        raise InputError(f"{args.values}: no values")
    try:
        fit = fit_reverse_weibull(values)
        doc = fit.to_dict()
    except FitError as exc:
        doc = {"xi": None, "u": None, "sigma": None, "endpoint": float(values.max()), "loglik": None,
               "fallback": str(exc)}
    text = _dump(doc)
    if args.out:
        atomic_write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="certpri", description="Test input prioritization by certified movement cost.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synthetic", help="write a synthetic train/test subject")
    g.add_argument("--generator", choices=GENERATORS, default="gaussian_blobs")
    g.add_argument("--classes", type=int, default=3)
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--outputs", type=int, default=1, help="regression output dimension")
    g.add_argument("--n-train", type=int, default=600)
    g.add_argument("--n-test", type=int, default=500)
    g.add_argument("--label-noise", type=float, default=0.0, help="fraction of training labels flipped")
    g.add_argument("--test-label-noise", type=float, default=0.0)
    g.add_argument("--spread", type=float, default=1.0)
    g.add_argument("--separation", type=float, default=4.0)
    g.add_argument("--overlap", action="store_true", help="do not truncate blobs to their Voronoi cells")
    g.add_argument("--target-noise", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=cmd_gen_synthetic)

    t = sub.add_parser("train-toy", help="train a small dense model")
    t.add_argument("--train", required=True)
    t.add_argument("--test")
    t.add_argument("--task", choices=("classification", "regression"), default="classification")
    t.add_argument("--classes", type=int, help="number of classes (default: max label + 1)")
    t.add_argument("--hidden", default="16", help="comma-separated hidden widths")
    t.add_argument("--activation", choices=("tanh", "relu", "sigmoid", "identity"), default="tanh")
    t.add_argument("--epochs", type=int, default=300)
    t.add_argument("--lr", type=float, default=0.02)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--output-min", type=float)
    t.add_argument("--output-max", type=float)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("prioritize", help="rank test inputs by certified movement cost")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--norm", "--p", dest="norm", default="2", help="1, 2 or inf")
    p.add_argument("--radius", type=parse_radius, default=(0.04, True), help="e.g. 0.04x (times max|x|) or 0.5")
    p.add_argument("--batches", type=int, default=6)
    p.add_argument("--samples-per-batch", type=int, default=10)
    p.add_argument("--mode", choices=("white-box", "black-box", "white_box", "black_box"), default="white-box")
    p.add_argument("--fd-step", type=float, default=1e-4, help="black-box step relative to feature scale")
    p.add_argument("--seed", type=int, help="default: $CERTPRI_SEED or 0")
    p.add_argument("--endpoint-variant", choices=("location-scale", "standardized"), default="location-scale")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prioritize)

    e = sub.add_parser("evaluate", help="score prioritization results against labels")
    e.add_argument("results", nargs="+", help="result JSON files from `prioritize`")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True, help="labeled dataset the results were computed on")
    e.add_argument("--cutoffs", help="comma-separated, e.g. 100,200,all")
    e.add_argument("--deepgini", action="store_true", help="add the DeepGini baseline")
    e.add_argument("--random", type=int, default=0, metavar="K", help="add the mean of K random orders")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--reference-report", help="report on original inputs, for RobR")
    e.add_argument("--format", choices=("json", "table"), default="json")
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    f = sub.add_parser("fit-gevt", help="fit a reverse Weibull to newline-separated values")
    f.add_argument("values")
    f.add_argument("--out")
    f.set_defaults(func=cmd_fit_gevt)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; those are input errors here
        return 1 if exc.code == 2 else int(exc.code or 0)
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"error: internal invariant violated: {exc}", file=sys.stderr)
        return 2
    except (InputError, ModelError, DatasetError, TrainingDiverged, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
