"""Command-line front end.

Subcommands: gen-data, train, eval, verify, sweep-rank, ablate.  Every
command accepts ``--config`` (a JSON file with sections ``synthetic``,
``train``, ``loss``, ``outputs`` mirroring the corresponding dataclasses);
explicit flags override config-file values, which override built-in
defaults.  Unknown sections or keys are rejected rather than ignored.

Exit codes: 0 on success, 1 when a command's contract fails (unreadable or
malformed data, non-finite loss, a bound trial violated, ...), 2 for usage
errors (bad flags, bad config keys).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys

from .data import SyntheticConfig, generate_synthetic, load_dataset, save_dataset
from .experiments import (
    ABLATION_CELLS,
    ablate_components,
    evaluate,
    sweep_rank,
    train,
)
from .losses import LossConfig
from .model import TrainConfig, load_checkpoint, save_checkpoint
from .theory import (
    make_mixture_kl_trial,
    make_risk_bound_trial,
    verify_mixture_kl_bound,
    verify_risk_bound,
)


class UsageError(Exception):
    """Bad flags or bad config content; maps to exit code 2."""


_OUTPUT_KEYS = {"sources", "target", "model", "metrics", "table", "report"}


def _allowed_keys(section: str):
    if section == "synthetic":
        return {f.name for f in dataclasses.fields(SyntheticConfig)}
    if section == "train":
        return {f.name for f in dataclasses.fields(TrainConfig)}
    if section == "loss":
        return {f.name for f in dataclasses.fields(LossConfig)}
    if section == "outputs":
        return _OUTPUT_KEYS
    return None


def load_config(path):
    """Parse and validate a JSON config file into its raw sections."""
    if path is None:
        return {}
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON: {exc}")
    if not isinstance(raw, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    for section, values in raw.items():
        allowed = _allowed_keys(section)
        if allowed is None:
            raise UsageError(f"{path}: unknown config section {section!r}")
        if not isinstance(values, dict):
            raise UsageError(f"{path}: section {section!r} must be an object")
        unknown = sorted(set(values) - allowed)
        if unknown:
            raise UsageError(
                f"{path}: unknown keys in section {section!r}: {', '.join(unknown)}"
            )
    return raw


def _synthetic_config(raw, args) -> SyntheticConfig:
    kwargs = dict(raw.get("synthetic", {}))
    for key in ("domain_scales", "target_mixture"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    cfg = SyntheticConfig(**kwargs)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _train_config(raw, args) -> TrainConfig:
    kwargs = dict(raw.get("train", {}))
    if "loss" not in kwargs and "loss" in raw:
        kwargs["loss"] = dict(raw["loss"])
    if "encoder_dims" in kwargs:
        kwargs["encoder_dims"] = tuple(kwargs["encoder_dims"])
    cfg = TrainConfig(**kwargs)
    overrides = {}
    for flag, field_name in (
        ("seed", "seed"),
        ("epochs", "epochs"),
        ("lambda1", "lambda1"),
        ("lambda2", "lambda2"),
        ("learning_rate", "learning_rate"),
        ("weight_decay", "weight_decay"),
        ("batch_per_domain", "batch_per_domain"),
        ("rank_target", "rank_target"),
        ("rank_mode", "rank_mode"),
        ("regularizer", "regularizer"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field_name] = value
    if getattr(args, "log_singular_values", False):
        overrides["log_singular_values"] = True
    if getattr(args, "loss_kind", None) is not None:
        overrides["loss"] = dataclasses.replace(cfg.loss, kind=args.loss_kind)
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def _resolve_out(flag_value, raw, key, required=True):
    if flag_value is not None:
        return flag_value
    value = raw.get("outputs", {}).get(key)
    if value is None and required:
        raise UsageError(f"no output path for {key!r}: pass a flag or set outputs.{key}")
    return value


def _parse_int_list(text, what):
    try:
        values = [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise UsageError(f"bad {what} list {text!r}: expected comma-separated integers")
    if not values:
        raise UsageError(f"empty {what} list")
    return values


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    raw = load_config(args.config)
    cfg = _synthetic_config(raw, args)
    out_sources = _resolve_out(args.out_sources, raw, "sources")
    out_target = _resolve_out(args.out_target, raw, "target")
    sources, target = generate_synthetic(cfg)
    save_dataset(out_sources, sources)
    save_dataset(out_target, target)
    print(f"wrote {out_sources}: {len(sources)} records over {sources.num_domains} domains")
    print(f"wrote {out_target}: {len(target)} records (held-out target)")
    return 0


def cmd_train(args) -> int:
    raw = load_config(args.config)
    cfg = _train_config(raw, args)
    sources = load_dataset(args.sources)
    params, result = train(cfg, sources)
    if args.target is not None:
        target = load_dataset(args.target)
        _check_compat(params, target)
        result.target_accuracy = evaluate(params, target).accuracy
    model_out = _resolve_out(args.model_out, raw, "model", required=False)
    metrics_out = _resolve_out(args.metrics_out, raw, "metrics", required=False)
    if model_out:
        save_checkpoint(model_out, params)
        print(f"wrote checkpoint {model_out}")
    if metrics_out:
        with open(metrics_out, "w") as fh:
            for rec in result.epochs:
                fh.write(json.dumps({"kind": "epoch", **dataclasses.asdict(rec)}) + "\n")
            fh.write(
                json.dumps(
                    {
                        "kind": "final",
                        "source_accuracy": result.source_accuracy,
                        "target_accuracy": result.target_accuracy,
                        "wall_time_s": result.wall_time_s,
                    }
                )
                + "\n"
            )
        print(f"wrote metrics {metrics_out}")
    last = result.epochs[-1]
    print(
        f"epoch {last.epoch}: total {last.total:.6f} "
        f"(cls {last.cls:.6f}, rank {last.rank:.6f}, kl {last.kl:.6f})"
    )
    accs = " ".join(f"{a:.4f}" for a in result.source_accuracy)
    print(f"source accuracy per domain: {accs}")
    if result.target_accuracy is not None:
        print(f"target accuracy: {result.target_accuracy:.4f}")
    return 0


def _check_compat(params, ds):
    in_dim = params.encoder[0].weight.shape[1] if params.encoder else None
    if in_dim is not None and in_dim != ds.feature_dim:
        raise ValueError(
            f"model expects {in_dim}-dim inputs but dataset has feature_dim={ds.feature_dim}"
        )
    n_cls = params.classifier.weight.shape[0]
    if ds.num_classes > n_cls:
        raise ValueError(
            f"dataset has {ds.num_classes} classes but model scores only {n_cls}"
        )


def cmd_eval(args) -> int:
    params = load_checkpoint(args.model)
    ds = load_dataset(args.data)
    if len(ds) == 0:
        raise ValueError(f"{args.data}: no records to evaluate")
    _check_compat(params, ds)
    report = evaluate(params, ds)
    for k, acc in enumerate(report.per_domain):
        print(f"domain {k} accuracy: {acc:.6f}")
    print(f"overall accuracy: {report.accuracy:.6f}")
    record = {"accuracy": report.accuracy, "per_domain": report.per_domain}
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(json.dumps(record) + "\n")
    else:
        print(json.dumps(record))
    return 0


def cmd_verify(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    raw = load_config(args.config)
    report_path = _resolve_out(args.report, raw, "report", required=False)
    records = []
    failures = 0
    classes = _parse_int_list(args.classes, "classes") if args.theorem == 2 else []
    for i in range(args.trials):
        try:
            if args.theorem == 1:
                trial = make_mixture_kl_trial(args.seed, i, all_prior=args.all_prior)
                rep = verify_mixture_kl_bound(trial)
            else:
                c = classes[i % len(classes)]
                trial = make_risk_bound_trial(args.seed, c, index=i)
                rep = verify_risk_bound(trial, samples=args.samples, seed=args.seed, index=i)
        except RuntimeError as exc:
            records.append({"trial": i, "satisfied": False, "error": str(exc)})
            failures += 1
            continue
        records.append(
            {
                "trial": i,
                "theorem": rep.theorem,
                "lhs": rep.lhs,
                "rhs": rep.rhs,
                "tolerance": rep.tolerance,
                "satisfied": rep.satisfied,
                "detail": rep.detail,
            }
        )
        if not rep.satisfied:
            failures += 1
    lines = [json.dumps(r) for r in records]
    if report_path:
        with open(report_path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    else:
        for line in lines:
            print(line)
    print(
        f"theorem {args.theorem}: {args.trials - failures}/{args.trials} trials satisfied"
    )
    return 1 if failures else 0


def _write_table(path, header, rows):
    def emit(fh):
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)

    if path:
        with open(path, "w", newline="") as fh:
            emit(fh)
        print(f"wrote table {path}")
    else:
        emit(sys.stdout)


def cmd_sweep_rank(args) -> int:
    raw = load_config(args.config)
    cfg = _train_config(raw, args)
    ranks = _parse_int_list(args.ranks, "rank")
    if len(set(ranks)) != len(ranks):
        raise UsageError(f"duplicate rank values: {args.ranks}")
    seeds = _parse_int_list(args.seeds, "seed")
    sources = load_dataset(args.sources)
    target = load_dataset(args.target)
    rows = sweep_rank(cfg, sources, target, ranks, seeds)
    header = ["rank", "mean", "std"] + [f"acc_seed{s}" for s in seeds]
    table = [[r.rank, f"{r.mean:.6f}", f"{r.std:.6f}"]
             + [f"{a:.6f}" for a in r.accuracies] for r in rows]
    _write_table(_resolve_out(args.out, raw, "table", required=False), header, table)
    best = max(rows, key=lambda r: r.mean)
    print(f"best mean accuracy {best.mean:.4f} at rank {best.rank}")
    return 0


def cmd_ablate(args) -> int:
    raw = load_config(args.config)
    cfg = _train_config(raw, args)
    cells = [tok.strip() for tok in args.cells.split(",")] if args.cells else None
    if cells is not None:
        known = {c[0] for c in ABLATION_CELLS}
        bad = [c for c in cells if c not in known]
        if bad:
            raise UsageError(f"unknown ablation cells: {', '.join(bad)}")
    seeds = _parse_int_list(args.seeds, "seed")
    sources = load_dataset(args.sources)
    target = load_dataset(args.target)
    rows = ablate_components(cfg, sources, target, seeds, cells)
    header = ["cell", "mean", "std"] + [f"acc_seed{s}" for s in seeds]
    table = [[r.cell, f"{r.mean:.6f}", f"{r.std:.6f}"]
             + [f"{a:.6f}" for a in r.accuracies] for r in rows]
    _write_table(_resolve_out(args.out, raw, "table", required=False), header, table)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lddg",
        description="rank-regularized variational domain generalization, desk scale",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic multi-domain benchmark")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="override the generation seed")
    p.add_argument("--out-sources", help="path for the source-domains dataset")
    p.add_argument("--out-target", help="path for the held-out target dataset")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train on a source dataset")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--sources", required=True, help="LDDG-DS source dataset")
    p.add_argument("--target", help="optional LDDG-DS target dataset to evaluate")
    p.add_argument("--model-out", help="checkpoint output path")
    p.add_argument("--metrics-out", help="JSONL metrics output path")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--batch-per-domain", type=int, dest="batch_per_domain")
    p.add_argument("--rank-target", type=int, dest="rank_target")
    p.add_argument("--rank-mode", choices=["per_batch", "per_class"], dest="rank_mode")
    p.add_argument("--regularizer", choices=["rank", "nuclear"])
    p.add_argument("--loss-kind", choices=["cross_entropy", "focal"], dest="loss_kind")
    p.add_argument(
        "--log-singular-values",
        action="store_true",
        help="log the top singular values of the latent batch each epoch",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--model", required=True, help="LDDG-MODEL checkpoint")
    p.add_argument("--data", required=True, help="LDDG-DS dataset")
    p.add_argument("--out", help="write the accuracy record to this path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="numerically check a generalization bound")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--theorem", type=int, choices=[1, 2], required=True,
                   help="1 = mixture KL bound, 2 = combined-risk bound")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=4000,
                   help="Monte-Carlo draws per trial (theorem 2)")
    p.add_argument("--classes", default="2,7",
                   help="class counts cycled across trials (theorem 2)")
    p.add_argument("--all-prior", action="store_true",
                   help="theorem 1 degenerate mode: every source equals the prior")
    p.add_argument("--report", help="write per-trial records to this JSONL path")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep-rank", help="sweep the rank target and tabulate accuracy")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--sources", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--ranks", default="1,2,3,4,5,6,7,8")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--out", help="CSV output path (stdout when omitted)")
    _add_train_overrides(p)
    p.set_defaults(func=cmd_sweep_rank)

    p = sub.add_parser("ablate", help="train every regularizer combination")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--sources", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--cells", help="comma-separated subset of: "
                   + ",".join(c[0] for c in ABLATION_CELLS))
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--out", help="CSV output path (stdout when omitted)")
    _add_train_overrides(p)
    p.set_defaults(func=cmd_ablate)

    return parser


def _add_train_overrides(p):
    p.add_argument("--epochs", type=int)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--batch-per-domain", type=int, dest="batch_per_domain")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
