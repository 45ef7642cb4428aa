"""Training harness and the two standard study harnesses (ablation, rank sweep).

All randomness in a run derives from ``cfg.seed`` through named child
streams (init / reparameterization noise / per-epoch shuffling), so a seed
pins the entire metrics trajectory bit-for-bit.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from .data import DomainDataset, sample_batches
from .model import (
    AdamState,
    ModelParams,
    TrainConfig,
    adam_step,
    backward,
    forward,
    init_params,
    total_loss,
)
from .theory import singular_spectrum

__all__ = [
    "EpochRecord",
    "RunResult",
    "EvalReport",
    "AblationRow",
    "SweepRow",
    "train",
    "evaluate",
    "ablate_components",
    "sweep_rank",
    "ABLATION_CELLS",
]

_STREAM_INIT = 1
_STREAM_NOISE = 2
_SPECTRUM_TOP_K = 8


@dataclass
class EpochRecord:
    """Mean loss parts over one epoch, plus the lr actually used."""

    epoch: int
    total: float
    cls: float
    rank: float
    kl: float
    lr: float
    singular_values: list | None = None


@dataclass
class RunResult:
    """Everything observable about one training run."""

    config: dict
    epochs: list
    source_accuracy: list
    target_accuracy: float | None = None
    wall_time_s: float = 0.0


@dataclass
class EvalReport:
    """Deterministic accuracy (posterior mean, no sampling)."""

    accuracy: float
    per_domain: list


def train(cfg: TrainConfig, sources: DomainDataset):
    """Train on the pooled source domains; returns ``(params, RunResult)``.

    Per epoch the learning rate is ``learning_rate / lr_decay_factor **
    (epoch // lr_decay_every)``.  A non-finite loss aborts immediately with
    the epoch and batch named, rather than letting Adam ride a NaN.
    """
    t0 = time.perf_counter()
    rng_init = np.random.default_rng([cfg.seed, _STREAM_INIT])
    params = init_params(sources.feature_dim, sources.num_classes, cfg, rng_init)
    state = AdamState.for_params(params)
    rng_noise = np.random.default_rng([cfg.seed, _STREAM_NOISE])

    records = []
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate / cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every)
        batches = sample_batches(sources, cfg.batch_per_domain, cfg.seed, epoch)
        sums = {"total": 0.0, "cls": 0.0, "rank": 0.0, "kl": 0.0}
        last_z = None
        for b_idx, rows in enumerate(batches):
            x = sources.features[rows]
            y = sources.labels[rows]
            eps = rng_noise.standard_normal((rows.size, cfg.latent_dim))
            trace = forward(params, x, eps)
            value, parts = total_loss(trace, y, cfg)
            if not np.isfinite(value):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch {b_idx}: "
                    f"parts={parts}"
                )
            grads = backward(params, trace, y, cfg)
            adam_step(params, grads, state, lr, cfg.weight_decay)
            for key in sums:
                sums[key] += parts[key]
            last_z = trace.z
        n_b = len(batches)
        record = EpochRecord(
            epoch=epoch,
            total=sums["total"] / n_b,
            cls=sums["cls"] / n_b,
            rank=sums["rank"] / n_b,
            kl=sums["kl"] / n_b,
            lr=lr,
        )
        if cfg.log_singular_values and last_z is not None:
            record.singular_values = [
                float(s) for s in singular_spectrum(last_z, _SPECTRUM_TOP_K)
            ]
        records.append(record)

    report = evaluate(params, sources)
    result = RunResult(
        config=asdict(cfg),
        epochs=records,
        source_accuracy=report.per_domain,
        wall_time_s=time.perf_counter() - t0,
    )
    return params, result


def evaluate(params: ModelParams, ds: DomainDataset) -> EvalReport:
    """Accuracy at the posterior mean (zero noise); argmax ties -> lowest index."""
    trace = forward(params, ds.features, None)
    pred = np.argmax(trace.logits, axis=1)
    correct = pred == ds.labels
    per_domain = []
    for k in range(ds.num_domains):
        mask = ds.domain_ids == k
        per_domain.append(float(np.mean(correct[mask])) if np.any(mask) else float("nan"))
    return EvalReport(accuracy=float(np.mean(correct)), per_domain=per_domain)


@dataclass
class AblationRow:
    cell: str
    accuracies: list
    mean: float
    std: float


@dataclass
class SweepRow:
    rank: int
    accuracies: list
    mean: float
    std: float


# cell -> (use lambda1, use lambda2, regularizer); None keeps the base value
ABLATION_CELLS = (
    ("none", 0.0, 0.0, "rank"),
    ("rank", None, 0.0, "rank"),
    ("kl", 0.0, None, "rank"),
    ("nuclear", None, 0.0, "nuclear"),
    ("nuclear+kl", None, None, "nuclear"),
    ("rank+kl", None, None, "rank"),
)


def _run_cell(cfg: TrainConfig, sources, target):
    params, result = train(cfg, sources)
    report = evaluate(params, target)
    result.target_accuracy = report.accuracy
    return report.accuracy


def ablate_components(
    base_cfg: TrainConfig,
    sources: DomainDataset,
    target: DomainDataset,
    seeds=(0, 1, 2, 3, 4),
    cells=None,
):
    """Train every regularizer combination over the seeds.

    Returns rows in fixed cell order; each row carries per-seed target
    accuracies plus their mean and (population) standard deviation.  The
    'nuclear' cells swap the sigma_{C+1} penalty for the nuclear norm at the
    same lambda1, which is the classical low-rank baseline.
    """
    wanted = list(cells) if cells is not None else [c[0] for c in ABLATION_CELLS]
    by_name = {c[0]: c for c in ABLATION_CELLS}
    unknown = [w for w in wanted if w not in by_name]
    if unknown:
        raise ValueError(f"unknown ablation cells: {unknown}")
    rows = []
    for name in wanted:
        _, l1, l2, reg = by_name[name]
        accs = []
        for seed in seeds:
            cfg = replace(
                base_cfg,
                lambda1=base_cfg.lambda1 if l1 is None else l1,
                lambda2=base_cfg.lambda2 if l2 is None else l2,
                regularizer=reg,
                seed=seed,
            )
            accs.append(_run_cell(cfg, sources, target))
        rows.append(
            AblationRow(
                cell=name,
                accuracies=accs,
                mean=float(np.mean(accs)),
                std=float(np.std(accs)),
            )
        )
    return rows


def sweep_rank(
    base_cfg: TrainConfig,
    sources: DomainDataset,
    target: DomainDataset,
    ranks=(1, 2, 3, 4, 5, 6, 7, 8),
    seeds=(0, 1, 2, 3, 4),
):
    """Vary the rank target and measure target accuracy per seed.

    Rank values must be distinct and lie in [1, min(batch rows, latent_dim) - 1],
    otherwise the penalty is structurally zero and the sweep point is
    meaningless; that misuse is rejected up front.
    """
    ranks = list(ranks)
    if len(set(ranks)) != len(ranks):
        raise ValueError(f"duplicate rank values in sweep: {ranks}")
    counts = [int(np.sum(sources.domain_ids == k)) for k in range(sources.num_domains)]
    batch_rows = sum(min(base_cfg.batch_per_domain, c) for c in counts)
    hi = min(batch_rows, base_cfg.latent_dim) - 1
    bad = [r for r in ranks if not 1 <= r <= hi]
    if bad:
        raise ValueError(f"rank values {bad} outside [1, {hi}]")
    rows = []
    for rank in ranks:
        accs = []
        for seed in seeds:
            cfg = replace(base_cfg, rank_target=rank, seed=seed)
            accs.append(_run_cell(cfg, sources, target))
        rows.append(
            SweepRow(
                rank=rank,
                accuracies=accs,
                mean=float(np.mean(accs)),
                std=float(np.std(accs)),
            )
        )
    return rows
