"""Command line interface: ``ignh <subcommand> ...``.

Exit codes are 0 on success, 1 on a runtime failure and 2 on a usage error
(bad flags, missing input files, malformed config or schema).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .dataset import RawTable, SchemaError, encode, fit_encoders, load_csv, load_schema, split
from .explain import top_k, write_reports_json, write_top_k_csv
from .graph import FormatError, association_table, build_graph, load_graph, save_graph
from .metrics import evaluate, mse
from .estimator import estimator_for
from .modelfile import load_model, save_model
from .seeding import substream
from .shapval import convergence_trace
from .train import TrainingDiverged

DEFAULT_SPLITS = (0.6, 0.2, 0.2)
DEFAULT_SHAP_ROWS = 500
DEFAULT_BUDGETS = "16,32,64,128,256"

# config keys that map onto estimator parameters
_EST_KEYS = (
    "alpha", "self_loop", "self_loop_frac", "embed_dim", "layer_dims", "activation",
    "weight_sharing", "aggregation", "anchored", "learning_rate", "max_epochs", "patience", "batch_size",
)


class UsageError(Exception):
    """Bad invocation; reported with exit code 2."""


def _existing(path, what) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} file not found: {path}")
    return p


def _schema(path):
    p = _existing(path, "schema")
    try:
        return load_schema(p)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"invalid schema {path}: {exc}") from None


def _threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        n = args.threads
    else:
        env = os.environ.get("IGNH_THREADS")
        try:
            n = int(env) if env else 1
        except ValueError:
            raise UsageError(f"IGNH_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise UsageError("thread count must be >= 1")
    return n


def _floats(text, what):
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise UsageError(f"{what}: expected comma separated numbers, got {text!r}") from None


def _load_model(args, schema=None):
    return load_model(_existing(args.model, "model"), schema)


def _optional_schema(args):
    return _schema(args.schema) if getattr(args, "schema", None) else None


# -- subcommands --------------------------------------------------------------


def _features_only(args, schema):
    table = load_csv(_existing(args.data, "data"), schema, require_target=False)
    table = RawTable({n: table.column(n) for n in schema.names})
    return encode(table, fit_encoders(table, schema), schema)


def cmd_build_graph(args) -> int:
    schema = _schema(args.schema)
    enc = _features_only(args, schema)
    g = build_graph(enc, args.alpha, _threads(args))
    save_graph(g, args.out)
    kinds = g.kind_counts()
    print(f"nodes: {g.n_nodes}")
    print(f"edges: {len(g.edges)}")
    for k in sorted(kinds):
        print(f"  {k}: {kinds[k]}")
    return 0


def cmd_assoc(args) -> int:
    schema = _schema(args.schema)
    enc = _features_only(args, schema)
    names = schema.names
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["feature_i", "feature_j", "kind", "r", "p", "n"])
        for (i, j), a in association_table(enc, args.alpha, _threads(args)):
            if a is None:
                w.writerow([names[i], names[j], "", "", "", ""])
            else:
                w.writerow([names[i], names[j], a.kind, repr(a.r), repr(a.p_value), a.n])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _train_settings(args) -> dict:
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(_existing(args.config, "config").read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config} is not valid JSON: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
        unknown = set(cfg) - set(_EST_KEYS) - {"splits", "seed"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    # flags win over the config file
    for key in _EST_KEYS + ("seed",):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if args.self_loop is not None:
        cfg.pop("self_loop_frac", None)
    elif args.self_loop_frac is not None:
        cfg["self_loop"] = None
    if args.splits is not None:
        cfg["splits"] = _floats(args.splits, "--splits")
    if isinstance(cfg.get("layer_dims"), str):
        cfg["layer_dims"] = tuple(int(v) for v in _floats(cfg["layer_dims"], "--layer-dims"))
    elif cfg.get("layer_dims") is not None:
        cfg["layer_dims"] = tuple(int(v) for v in cfg["layer_dims"])
    return cfg


def cmd_train(args) -> int:
    schema = _schema(args.schema)
    cfg = _train_settings(args)
    seed = int(cfg.pop("seed", 0))
    fractions = tuple(cfg.pop("splits", DEFAULT_SPLITS))
    table = load_csv(_existing(args.data, "data"), schema)
    graph = load_graph(_existing(args.graph, "graph"), schema) if args.graph else None
    try:
        est = estimator_for(schema, graph=graph, threads=_threads(args), seed=seed, **cfg)
        tr, va, te = split(table, fractions, substream(seed, "split"))
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    est._fit_tables(tr, va, schema)
    save_model(est, args.out)
    if args.history:
        est.history_.to_csv(args.history)
    if args.test_out:
        _write_table(te, schema, args.test_out)
    h = est.history_
    print(json.dumps({"best_epoch": h.best_epoch, h.metric_name: h.best_metric,
                      "epochs_run": len(h.records), "n_train": tr.n_rows,
                      "n_val": va.n_rows, "n_test": te.n_rows}))
    return 0


def _write_table(table, schema, path) -> None:
    cols = schema.names + [schema.target]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        data = [table.column(c) for c in cols]
        for r in range(table.n_rows):
            w.writerow(["" if col[r] is None else col[r] for col in data])


def _model_and_data(args, require_target=False):
    est = _load_model(args, _optional_schema(args))
    table = load_csv(_existing(args.data, "data"), est.schema_, require_target=require_target)
    return est, table


def cmd_predict(args) -> int:
    est, table = _model_and_data(args)
    task = est.schema_.task
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if task == "regression":
            w.writerow(["row", "prediction"])
            for r, v in enumerate(est.predict(table)):
                w.writerow([r, repr(float(v))])
        else:
            labels = list(est.classes_labels_)
            proba = est.predict_proba(table)
            w.writerow(["row", "predicted_class"] + [f"p_{c}" for c in labels])
            for r, p in enumerate(proba):
                w.writerow([r, labels[int(np.argmax(p))]] + [repr(float(v)) for v in p])
    return 0


def cmd_explain(args) -> int:
    if args.top_k < 1:
        raise UsageError("--top-k must be >= 1")
    est, table = _model_and_data(args)
    reports = est.explain(table, all_classes=args.all_classes)
    write_reports_json(reports, args.out)
    if args.top_k_csv:
        write_top_k_csv(reports, args.top_k, args.top_k_csv)
    for rep in reports[: min(3, len(reports))]:
        shown = ", ".join(f"{rep.names[i]}" for i in top_k(rep, args.top_k))
        print(f"row {rep.instance_id}: {shown}")
    return 0


def cmd_eval(args) -> int:
    est, table = _model_and_data(args, require_target=True)
    enc = encode(table, est.encoder_, est.schema_, est.classes_labels_)
    if est.schema_.task == "regression":
        out = {"mse": mse(est.predict(table), enc.y)}
    else:
        proba = est.predict_proba(table)
        pred = proba[:, 1] if est.schema_.task == "binary" else proba
        out = evaluate(pred, enc.y, est.schema_.task).to_dict()
    print(json.dumps(out))
    return 0


def _budgets(text):
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok == "full":
            out.append(None)
            continue
        try:
            out.append(int(tok))
        except ValueError:
            raise UsageError(f"--budgets: expected integers or 'full', got {tok!r}") from None
    return out


def cmd_shap_verify(args) -> int:
    est, table = _model_and_data(args)
    budgets = _budgets(args.budgets)
    if args.rows < 1:
        raise UsageError("--rows must be >= 1")
    enc = encode(table, est.encoder_, est.schema_, est.classes_labels_)
    n = min(args.rows, len(enc))
    pick = np.sort(substream(args.seed, "shap").choice(len(enc), size=n, replace=False))
    X = enc.X[pick]
    reports = est.explain(table.take(pick), decode=False)
    scores = np.stack([r.scores for r in reports])
    multiclass = est.config_.task == "multiclass"

    def f_per_row(r):
        if not multiclass:
            return lambda B: est.decision_function_encoded(B)
        c = list(est.classes_labels_).index(reports[r].predicted_class)
        return lambda B: est.decision_function_encoded(B)[:, c]

    m = X.shape[1]
    compare = m <= 10 and budgets and budgets[-1] is None
    try:
        trace = convergence_trace(None, X, scores, est.baseline_row(), budgets, seed=args.seed,
                                  compare_exact=bool(compare), f_per_row=f_per_row,
                                  threads=_threads(args))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    trace.to_csv(args.out)
    for p in trace.points:
        print(f"budget {p.budget}: cosine {p.mean_cosine:.4f} spearman {p.mean_spearman:.4f}")
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ignh", description="Interpretable graph networks for tabular data.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        if data:
            p.add_argument("--data", required=True, help="input CSV with a header row")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: $IGNH_THREADS or 1)")
        return p

    p = common(sub.add_parser("build-graph", help="correlation graph from training data"))
    p.add_argument("--schema", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_graph)

    p = common(sub.add_parser("assoc", help="dump every pairwise association as CSV"))
    p.add_argument("--schema", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_assoc)

    p = common(sub.add_parser("train", help="split, train with early stopping, write a model file"))
    p.add_argument("--schema", required=True)
    p.add_argument("--graph", default=None, help="prebuilt graph file")
    p.add_argument("--config", default=None, help="JSON file of settings; flags take precedence")
    loop = p.add_mutually_exclusive_group()
    loop.add_argument("--self-loop", dest="self_loop", type=float, default=None)
    loop.add_argument("--self-loop-frac", dest="self_loop_frac", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--embed-dim", dest="embed_dim", type=int, default=None)
    p.add_argument("--layer-dims", dest="layer_dims", default=None, help="e.g. 16,16,16")
    p.add_argument("--activation", choices=["relu", "tanh"], default=None)
    p.add_argument("--weight-sharing", dest="weight_sharing", choices=["per_node", "shared"], default=None)
    p.add_argument("--aggregation", choices=["normalized", "raw"], default=None)
    p.add_argument("--unanchored", dest="anchored", action="store_const", const=False, default=None,
                   help="learn layer biases and a missing-token embedding")
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--max-epochs", dest="max_epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--splits", default=None, help="train,val,test fractions (default 0.6,0.2,0.2)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--history", default=None, help="write the epoch history CSV here")
    p.add_argument("--test-out", dest="test_out", default=None, help="write the held-out test rows here")
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("predict", help="predictions CSV"))
    p.add_argument("--model", required=True)
    p.add_argument("--schema", default=None, help="check the model against this schema")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = common(sub.add_parser("explain", help="per-feature attribution JSON"))
    p.add_argument("--model", required=True)
    p.add_argument("--schema", default=None)
    p.add_argument("--top-k", dest="top_k", type=int, default=10)
    p.add_argument("--top-k-csv", dest="top_k_csv", default=None)
    p.add_argument("--all-classes", dest="all_classes", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_explain)

    p = common(sub.add_parser("eval", help="AUC (or MSE) on labelled data as JSON"))
    p.add_argument("--model", required=True)
    p.add_argument("--schema", default=None)
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("shap-verify", help="KernelSHAP convergence trace against model scores"))
    p.add_argument("--model", required=True)
    p.add_argument("--schema", default=None)
    p.add_argument("--rows", type=int, default=DEFAULT_SHAP_ROWS)
    p.add_argument("--budgets", default=DEFAULT_BUDGETS, help="comma list of sample counts; 'full' enumerates")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_shap_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ignh: error: {exc}", file=sys.stderr)
        return 2
    except (SchemaError, FormatError, TrainingDiverged, ValueError, OSError) as exc:
        print(f"ignh: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
