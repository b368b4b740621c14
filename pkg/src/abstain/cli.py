"""Command-line pipeline: generate a benchmark, fit scorers, score a
split, evaluate rejection curves, and render a report.

Exit codes: 0 success, 1 usage errors, 2 data errors.  ABSTAIN_THREADS
caps the worker threads used for per-instance scoring; output order is
independent of it.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import baselines, density, hybrid, mc, rejection, report, synth
from .core import LabeledSplit
from .dataio import (
    DataError,
    ScoreRow,
    load_models,
    load_split,
    read_scores_csv,
    save_dataset,
    save_models,
    validate_manifest,
    write_scores_csv,
)

MULTICLASS_METHODS = (
    "SR", "Entropy", "Delta", "Beta", "SMP", "PV", "BALD",
    "MD", "RDE", "DDU", "NUQ",
    "HUQ-MD", "HUQ-RDE", "HUQ-DDU", "HUQ2-MD", "HUQ2-RDE", "HUQ2-DDU",
)
MULTILABEL_METHODS = ("MP", "MP-mean", "MP-max", "MD", "RDE", "DDU", "NUQ")
FIT_METHODS = ("md", "rde", "ddu", "nuq", "beta")
_CHUNK = 256


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _threads() -> int:
    raw = os.environ.get("ABSTAIN_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"ABSTAIN_THREADS must be an integer, got {raw!r}")


def _chunked_map(fn, items) -> np.ndarray:
    """Apply fn per item with fixed chunking; order never depends on the
    worker count, so results are reproducible for any thread setting."""
    n = len(items)
    chunks = [range(i, min(i + _CHUNK, n)) for i in range(0, n, _CHUNK)]

    def run(idx_range):
        return [fn(items[i]) for i in idx_range]

    workers = _threads()
    if workers == 1 or len(chunks) <= 1:
        parts = [run(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    return np.array([v for part in parts for v in part], dtype=float)


def _resolve_methods(raw: str, task: str) -> List[str]:
    available = MULTICLASS_METHODS if task == "multiclass" else MULTILABEL_METHODS
    if raw.strip().lower() == "all":
        return list(available)
    lookup = {name.lower(): name for name in available}
    out = []
    for token in raw.split(","):
        token = token.strip()
        if not token:
            continue
        name = lookup.get(token.lower())
        if name is None:
            raise UsageError(
                f"unknown method {token!r} for task {task}; available: {', '.join(available)}"
            )
        if name not in out:
            out.append(name)
    if not out:
        raise UsageError("no methods requested")
    return out


def _need_model(models: Dict[str, object], key: str, method: str):
    model = models.get(key)
    if model is None:
        raise UsageError(f"method {method} needs a fitted {key!r} model; rerun fit with --methods {key}")
    return model


def _density_scores(method: str, split: LabeledSplit, models: Dict[str, object]) -> np.ndarray:
    X = split.embeddings
    if X is None:
        raise DataError("split has no embeddings")
    if method == "MD":
        model = _need_model(models, "md", method)
        return _chunked_map(lambda e: density.score_md(e, model), X)
    if method == "RDE":
        model = _need_model(models, "rde", method)
        return _chunked_map(lambda e: density.score_rde(e, model), X)
    if method == "DDU":
        model = _need_model(models, "ddu", method)
        return _chunked_map(lambda e: density.score_ddu(e, model), X)
    model = _need_model(models, "nuq", method)
    return _chunked_map(lambda e: density.score_nuq(e, model), X)


def _instance_scores(method: str, split: LabeledSplit, models: Dict[str, object]) -> np.ndarray:
    probs = split.probs
    if method == "SR":
        return _chunked_map(baselines.score_sr, probs)
    if method == "Entropy":
        return _chunked_map(baselines.score_entropy, probs)
    if method == "Delta":
        return _chunked_map(baselines.score_delta, probs)
    if method == "Beta":
        model = _need_model(models, "beta", method)
        return _chunked_map(lambda p: baselines.score_beta(p, model), probs)
    if method in ("SMP", "PV", "BALD"):
        if split.mc is None:
            raise DataError("split has no stochastic-pass tensor; SMP/PV/BALD unavailable")
        fn = {"SMP": mc.score_smp, "PV": mc.score_pv, "BALD": mc.score_bald}[method]
        return _chunked_map(fn, split.mc)
    if method in ("MD", "RDE", "DDU", "NUQ"):
        return _density_scores(method, split, models)
    if method in ("MP-mean", "MP-max"):
        per_label = 1.0 - np.maximum(probs, 1.0 - probs)
        return per_label.mean(axis=1) if method == "MP-mean" else per_label.max(axis=1)
    raise UsageError(f"method {method} is not an instance-level scorer")


def _cmd_gen_synth(args) -> int:
    if args.spec:
        spec = synth.SynthSpec.from_json(Path(args.spec).read_text())
    else:
        spec = synth.SynthSpec()
    if args.seed is not None:
        spec = synth.SynthSpec(**{**json.loads(spec.to_json()), "seed": args.seed})
    dataset = synth.generate(spec)
    manifest_path = save_dataset(dataset, args.out)
    print(manifest_path)
    return 0


def _cmd_fit(args) -> int:
    manifest = validate_manifest(args.manifest)
    base = Path(args.manifest).parent
    train = load_split(manifest, base, "train")
    if args.methods is None:
        args.methods = "md,rde,ddu,nuq,beta" if manifest.task == "multiclass" else "md,rde,ddu,nuq"
    requested = [m.strip().lower() for m in args.methods.split(",") if m.strip()]
    for m in requested:
        if m not in FIT_METHODS:
            raise UsageError(f"unknown fit method {m!r}; available: {', '.join(FIT_METHODS)}")
    if not requested:
        raise UsageError("no methods requested")
    models: Dict[str, object] = {}
    for m in requested:
        if m == "md":
            models["md"] = density.fit_md(train)
        elif m == "rde":
            models["rde"] = density.fit_rde(train, seed=args.seed)
        elif m == "ddu":
            models["ddu"] = density.fit_ddu(train)
        elif m == "nuq":
            models["nuq"] = density.fit_nuq(train)
        else:
            if manifest.task != "multiclass":
                raise UsageError("beta fitting needs a multiclass manifest")
            validation = load_split(manifest, base, "validation")
            models["beta"] = baselines.fit_beta(validation)
    save_models(args.out, models)
    print(args.out)
    return 0


def _hybrid_scores(method: str, target: LabeledSplit, calib: LabeledSplit,
                   models: Dict[str, object], objective: str) -> np.ndarray:
    prefix, density_name = method.split("-", 1)
    variant = "huq2" if prefix.upper() == "HUQ2" else "huq"
    u_a_cal = _instance_scores("SR", calib, models)
    u_e_cal = _density_scores(density_name, calib, models)
    config = hybrid.fit_hybrid(calib, u_a_cal, u_e_cal, variant, objective)
    u_a = _instance_scores("SR", target, models)
    u_e = _density_scores(density_name, target, models)
    return hybrid.score_hybrid_batch(u_a, u_e, config)


def _cmd_score(args) -> int:
    manifest = validate_manifest(args.manifest)
    base = Path(args.manifest).parent
    target = load_split(manifest, base, args.split)
    methods = _resolve_methods(args.methods, manifest.task)
    models: Dict[str, object] = {}
    if args.models:
        models = load_models(args.models)
    hybrids = [m for m in methods if m.startswith(("HUQ-", "HUQ2-"))]
    calib: Optional[LabeledSplit] = None
    if hybrids:
        if not args.calibrate:
            raise UsageError("hybrid methods need --calibrate <split> (typically validation)")
        calib = load_split(manifest, base, args.calibrate)
    rows: List[ScoreRow] = []
    for method in methods:
        if method == "MP":
            per_label = 1.0 - np.maximum(target.probs, 1.0 - target.probs)
            for i in range(per_label.shape[0]):
                for j in range(per_label.shape[1]):
                    rows.append(ScoreRow(i, j, "MP", float(per_label[i, j])))
            continue
        if method in hybrids:
            scores = _hybrid_scores(method, target, calib, models, args.objective)
        else:
            scores = _instance_scores(method, target, models)
        rows.extend(ScoreRow(i, None, method, float(s)) for i, s in enumerate(scores))
    write_scores_csv(args.out, rows)
    print(args.out)
    return 0


def _clean(value: float) -> Optional[float]:
    return None if (isinstance(value, float) and math.isnan(value)) else value


def _auc_payload(res: rejection.NormalizedAuc) -> dict:
    return {
        "raw_auc": _clean(res.raw_auc),
        "rand_auc": _clean(res.rand_auc),
        "oracle_auc": _clean(res.oracle_auc),
        "normalized": _clean(res.normalized),
        "flag": res.flag,
    }


def _write_curve_csv(path: Path, curve: rejection.RejectionCurve) -> None:
    lines = ["coverage,value"]
    lines += [f"{float(c)!r},{float(v)!r}" for c, v in zip(curve.coverages, curve.values)]
    path.write_text("\n".join(lines) + "\n")


def _cmd_evaluate(args) -> int:
    manifest = validate_manifest(args.manifest)
    base = Path(args.manifest).parent
    split = load_split(manifest, base, args.split)
    span = {"full": "full", "first50": "first_50"}.get(args.span)
    if span is None:
        raise UsageError("span must be full or first50")
    if args.mode == "label" and manifest.task != "multilabel":
        raise UsageError("label mode needs a multilabel manifest")
    out_paths = list(args.out)
    metrics_path = Path(out_paths[0])
    curves_dir = Path(out_paths[1]) if len(out_paths) > 1 else metrics_path.parent / "curves"
    curves_dir.mkdir(parents=True, exist_ok=True)

    table = read_scores_csv(args.scores)
    by_method: Dict[str, list] = {}
    for row in table:
        want_pairs = args.mode == "label"
        if (row.label is not None) == want_pairs:
            by_method.setdefault(row.method, []).append(row)
    if not by_method:
        raise DataError(f"score table holds no {args.mode}-level rows")

    n = len(split)
    methods_payload: Dict[str, dict] = {}
    plots: Dict[str, Dict[str, tuple]] = {}
    for method in sorted(by_method):
        rows = by_method[method]
        if args.mode == "label":
            L = split.probs.shape[1]
            scores = np.full(n * L, np.nan)
            for r in rows:
                if not (0 <= r.instance < n and 0 <= r.label < L):
                    raise DataError(f"score row out of range: {r}")
                scores[r.instance * L + r.label] = r.score
            if np.any(np.isnan(scores)):
                raise DataError(f"method {method}: score table misses some label pairs")
            pred, truth = rejection.multilabel_pair_arrays(split.probs, split.labels)
            entry = {}
            curves = {}
            losses = (pred != truth).astype(float)
            for mode_name, data in (("accuracy", losses), ("f1_micro", (pred, truth))):
                curve = rejection.build_curve(scores, data, mode_name)
                entry[mode_name] = _auc_payload(rejection.normalized_auc(scores, data, mode_name, span))
                curves[mode_name] = curve
        else:
            if len(rows) != n:
                raise DataError(f"method {method}: {len(rows)} rows for {n} instances")
            scores = np.full(n, np.nan)
            for r in rows:
                if not 0 <= r.instance < n:
                    raise DataError(f"score row out of range: {r}")
                scores[r.instance] = r.score
            if np.any(np.isnan(scores)):
                raise DataError(f"method {method}: missing instances in score table")
            entry = {}
            curves = {}
            if manifest.task == "multiclass":
                losses = rejection.multiclass_losses(split.probs, split.labels)
                curve = rejection.build_curve(scores, losses, "risk")
                entry["risk"] = _auc_payload(rejection.normalized_auc(scores, losses, "risk", span))
                curves["risk"] = curve
            else:
                pred = (split.probs >= 0.5).astype(int)
                truth = split.labels
                wrong = (pred != truth).sum(axis=1).astype(float)
                totals = np.full(n, split.probs.shape[1], dtype=float)
                tp = ((pred == 1) & (truth == 1)).sum(axis=1).astype(float)
                fp = ((pred == 1) & (truth == 0)).sum(axis=1).astype(float)
                fn = ((pred == 0) & (truth == 1)).sum(axis=1).astype(float)
                for mode_name, data in (("accuracy", (wrong, totals)), ("f1_micro", (tp, fp, fn))):
                    curve = rejection.build_curve(scores, data, mode_name)
                    entry[mode_name] = _auc_payload(rejection.normalized_auc(scores, data, mode_name, span))
                    curves[mode_name] = curve
        methods_payload[method] = entry
        for mode_name, curve in curves.items():
            suffix = "" if len(curves) == 1 else f".{mode_name}"
            _write_curve_csv(curves_dir / f"{method}{suffix}.csv", curve)
            plots.setdefault(mode_name, {})[method] = (curve.coverages.tolist(), curve.values.tolist())

    for mode_name, curve_map in sorted(plots.items()):
        svg = report.plot_curves_svg(curve_map, f"{mode_name} vs coverage", mode_name)
        (curves_dir / f"{mode_name}_curves.svg").write_text(svg)

    payload = {
        "task": manifest.task,
        "split": args.split,
        "mode": args.mode,
        "span": args.span,
        "methods": methods_payload,
    }
    metrics_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(metrics_path)
    return 0


def _cmd_report(args) -> int:
    metrics_path = Path(args.metrics)
    try:
        metrics = json.loads(metrics_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{metrics_path}: not valid JSON: {exc}")
    curves_dir = Path(args.curves) if args.curves else metrics_path.parent / "curves"
    report.render_report(metrics, curves_dir, args.out)
    print(args.out)
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="abstain", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic benchmark directory")
    p.add_argument("--spec", help="SynthSpec JSON file (defaults used when omitted)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.set_defaults(func=_cmd_gen_synth)

    p = sub.add_parser("fit", help="fit density/beta models on the train split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--methods", default=None,
                   help="comma list from md,rde,ddu,nuq,beta; default all that fit the task")
    p.add_argument("--out", required=True, help="models container path")
    p.add_argument("--seed", type=int, default=0, help="subsampling seed for robust fits")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("score", help="score one split with the requested methods")
    p.add_argument("--manifest", required=True)
    p.add_argument("--models", default=None, help="models container from fit")
    p.add_argument("--split", default="test")
    p.add_argument("--methods", default="all")
    p.add_argument("--out", required=True, help="score table CSV path")
    p.add_argument("--calibrate", default=None, help="split used to fit hybrid combinators")
    p.add_argument("--objective", default="rc_auc", choices=("rc_auc", "fr_auc"))
    p.add_argument("--seed", type=int, default=0, help="accepted for interface uniformity")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("evaluate", help="rejection curves and normalized areas from a score table")
    p.add_argument("--scores", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--mode", default="instance", choices=("instance", "label"))
    p.add_argument("--span", default="full", choices=("full", "first50"))
    p.add_argument("--out", required=True, nargs="+",
                   help="metrics JSON path, optionally followed by a curves directory")
    p.add_argument("--seed", type=int, default=0, help="accepted for interface uniformity")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="render an HTML comparison from metrics JSON")
    p.add_argument("--metrics", required=True)
    p.add_argument("--curves", default=None, help="curves directory (defaults next to metrics)")
    p.add_argument("--out", required=True, help="report HTML path")
    p.add_argument("--seed", type=int, default=0, help="accepted for interface uniformity")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error [{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error [io]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
