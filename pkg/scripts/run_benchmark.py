#!/usr/bin/env python3
"""Desk-scale benchmark: every scorer against the synthetic generator.

Generates seeded datasets, fits the density and calibration models,
scores the test split with every applicable method, and prints mean
normalized rejection-curve areas (higher is better for every column).

Examples:
    python3 scripts/run_benchmark.py
    python3 scripts/run_benchmark.py --task multilabel --seeds 3
    python3 scripts/run_benchmark.py --overlap 0.3 --ood 0.2 --json out.json
"""
import argparse
import json
import sys
import time

import numpy as np

from abstain import baselines, density, hybrid, mc, rejection
from abstain.synth import SynthSpec, generate

HYBRID_PAIRS = (("MD", "huq"), ("RDE", "huq"), ("DDU", "huq"),
                ("MD", "huq2"), ("RDE", "huq2"), ("DDU", "huq2"))


def per_row(fn, X, *args):
    return np.array([fn(row, *args) for row in X])


def multiclass_scores(data):
    """Method name -> test score vector, plus what hybrids calibrate on."""
    train = data.splits["train"]
    val = data.splits["validation"]
    test = data.splits["test"]
    models = {
        "MD": (density.score_md, density.fit_md(train)),
        "RDE": (density.score_rde, density.fit_rde(train)),
        "DDU": (density.score_ddu, density.fit_ddu(train)),
        "NUQ": (density.score_nuq, density.fit_nuq(train)),
    }
    beta = baselines.fit_beta(val)
    out = {
        "SR": per_row(baselines.score_sr, test.probs),
        "Entropy": per_row(baselines.score_entropy, test.probs),
        "Delta": per_row(baselines.score_delta, test.probs),
        "Beta": per_row(lambda p: baselines.score_beta(p, beta), test.probs),
        "SMP": per_row(mc.score_smp, test.mc),
        "PV": per_row(mc.score_pv, test.mc),
        "BALD": per_row(mc.score_bald, test.mc),
    }
    density_val = {}
    for name, (fn, model) in models.items():
        out[name] = per_row(fn, test.embeddings, model)
        density_val[name] = per_row(fn, val.embeddings, model)
    sr_val = per_row(baselines.score_sr, val.probs)
    for density_name, variant in HYBRID_PAIRS:
        config = hybrid.fit_hybrid(val, sr_val, density_val[density_name], variant, "rc_auc")
        label = f"{'HUQ2' if variant == 'huq2' else 'HUQ'}-{density_name}"
        out[label] = hybrid.score_hybrid_batch(out["SR"], out[density_name], config)
    return out, test


def run_multiclass(spec_kwargs, seeds):
    table = {}
    for seed in seeds:
        data = generate(SynthSpec(seed=seed, **spec_kwargs))
        scores, test = multiclass_scores(data)
        losses = rejection.multiclass_losses(test.probs, test.labels)
        for name, vec in scores.items():
            entry = table.setdefault(name, {"full": [], "first_50": []})
            for span in ("full", "first_50"):
                entry[span].append(
                    rejection.normalized_auc(vec, losses, "risk", span).normalized
                )
    return table


def run_multilabel(spec_kwargs, seeds):
    table = {}
    for seed in seeds:
        data = generate(SynthSpec(seed=seed, task="multilabel", **spec_kwargs))
        train, test = data.splits["train"], data.splits["test"]
        models = {
            "MD": (density.score_md, density.fit_md(train)),
            "RDE": (density.score_rde, density.fit_rde(train)),
            "DDU": (density.score_ddu, density.fit_ddu(train)),
            "NUQ": (density.score_nuq, density.fit_nuq(train)),
        }
        per_label = 1.0 - np.maximum(test.probs, 1.0 - test.probs)
        scores = {
            "MP-mean": per_label.mean(axis=1),
            "MP-max": per_label.max(axis=1),
        }
        for name, (fn, model) in models.items():
            scores[name] = per_row(fn, test.embeddings, model)
        pred = (test.probs >= 0.5).astype(int)
        tp = ((pred == 1) & (test.labels == 1)).sum(axis=1).astype(float)
        fp = ((pred == 1) & (test.labels == 0)).sum(axis=1).astype(float)
        fn_ = ((pred == 0) & (test.labels == 1)).sum(axis=1).astype(float)
        for name, vec in scores.items():
            entry = table.setdefault(name, {"full": [], "first_50": []})
            for span in ("full", "first_50"):
                entry[span].append(
                    rejection.normalized_auc(vec, (tp, fp, fn_), "f1_micro", span).normalized
                )
        # pooled label-pair rejection, the finer-grained alternative
        pair_scores = rejection.labelwise_uncertainty(test.probs)
        pair_pred, pair_truth = rejection.multilabel_pair_arrays(test.probs, test.labels)
        entry = table.setdefault("MP (label-wise)", {"full": [], "first_50": []})
        for span in ("full", "first_50"):
            entry[span].append(
                rejection.normalized_auc(
                    pair_scores, (pair_pred, pair_truth), "f1_micro", span
                ).normalized
            )
    return table


def print_table(table, metric_name):
    ranked = sorted(
        table.items(), key=lambda kv: -np.mean(kv[1]["first_50"])
    )
    name_width = max(len(name) for name in table)
    header = f"{'method':<{name_width}}  {metric_name + ' (full)':>18}  {metric_name + ' (first 50%)':>22}"
    print(header)
    print("-" * len(header))
    for name, spans in ranked:
        full = np.mean(spans["full"])
        fifty = np.mean(spans["first_50"])
        sd = np.std(spans["first_50"])
        print(f"{name:<{name_width}}  {full:>18.4f}  {fifty:>16.4f} ± {sd:.3f}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--task", default="multiclass", choices=("multiclass", "multilabel"))
    parser.add_argument("--seeds", type=int, default=5, help="number of seeded repetitions")
    parser.add_argument("--n-train", type=int, default=1200)
    parser.add_argument("--n-validation", type=int, default=800)
    parser.add_argument("--n-test", type=int, default=1200)
    parser.add_argument("--classes", type=int, default=4)
    parser.add_argument("--labels", type=int, default=10, help="multilabel label count")
    parser.add_argument("--dim", type=int, default=8)
    parser.add_argument("--overlap", type=float, default=0.15)
    parser.add_argument("--ood", type=float, default=0.10)
    parser.add_argument("--json", default=None, help="also dump the raw per-seed numbers")
    args = parser.parse_args(argv)

    kwargs = dict(n_train=args.n_train, n_validation=args.n_validation,
                  n_test=args.n_test, n_classes=args.classes, dim=args.dim,
                  overlap=args.overlap, ood_fraction=args.ood)
    seeds = list(range(args.seeds))
    t0 = time.perf_counter()
    if args.task == "multiclass":
        table = run_multiclass(kwargs, seeds)
        metric = "norm RC-AUC"
    else:
        kwargs["n_labels"] = args.labels
        table = run_multilabel(kwargs, seeds)
        metric = "norm FR-AUC"
    print(f"task={args.task} seeds={seeds} overlap={args.overlap} ood={args.ood} "
          f"({time.perf_counter() - t0:.1f}s)\n")
    print_table(table, metric)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"task": args.task, "seeds": seeds, "table": table}, fh, indent=2)
        print(f"\nwrote {args.json}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
