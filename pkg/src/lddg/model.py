"""Variational encoder + linear classifier with a hand-written backward pass.

Architecture: an MLP encoder (leaky ReLU), one shared ReLU hidden layer
feeding two linear heads (posterior mean and log-variance), a pathwise
latent sample, and a strictly affine classifier on the latent.  The whole
thing is small enough that reverse-mode differentiation is spelled out
explicitly, layer by layer; tests check it against central differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .losses import LossConfig, batch_mean
from .regularizers import (
    LOG_VAR_MAX,
    LOG_VAR_MIN,
    GaussianPosterior,
    RankLossResult,
    kl_standard_normal,
    nuclear_norm,
    rank_loss,
    reparameterize,
)

__all__ = [
    "Layer",
    "ModelParams",
    "TrainConfig",
    "ForwardTrace",
    "init_params",
    "forward",
    "total_loss",
    "backward",
    "AdamState",
    "adam_step",
    "save_checkpoint",
    "load_checkpoint",
]

_ACTIVATIONS = ("linear", "relu", "leaky_relu")
_LEAKY_SLOPE = 0.01


@dataclass
class Layer:
    """Affine layer ``y = W x + b`` with an activation tag."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "linear"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class ModelParams:
    """All trainable arrays, in declaration order (also checkpoint order)."""

    encoder: list
    head_hidden: Layer
    head_mu: Layer
    head_log_var: Layer
    classifier: Layer

    def layers(self):
        """Layers in declaration order."""
        return [*self.encoder, self.head_hidden, self.head_mu,
                self.head_log_var, self.classifier]

    def flat(self):
        """All arrays (weight, bias alternating) in declaration order."""
        out = []
        for layer in self.layers():
            out.append(layer.weight)
            out.append(layer.bias)
        return out


@dataclass
class TrainConfig:
    """Optimization and regularization settings.

    lambda1/lambda2 weight the rank penalty and the KL term.  rank_target
    overrides the class count C in the rank penalty (sigma_{rank_target+1}
    is penalized); None means use the number of classes.  rank_mode is
    'per_batch' (penalize the whole latent batch) or 'per_class' (penalize
    each class's rows toward rank 1 and average).  regularizer picks the
    low-rank penalty itself: 'rank' (the sigma_{C+1} penalty) or 'nuclear'
    (sum of singular values, an ablation baseline).
    """

    lambda1: float = 0.01
    lambda2: float = 0.4
    learning_rate: float = 1e-3
    weight_decay: float = 1e-3
    epochs: int = 200
    batch_per_domain: int = 16
    lr_decay_every: int = 80
    lr_decay_factor: float = 10.0
    latent_dim: int = 16
    seed: int = 0
    rank_target: int | None = None
    loss: LossConfig = field(default_factory=LossConfig)
    rank_mode: str = "per_batch"
    regularizer: str = "rank"
    encoder_dims: tuple = (32, 32)
    head_hidden_dim: int = 32
    log_singular_values: bool = False

    def __post_init__(self):
        if self.rank_mode not in ("per_batch", "per_class"):
            raise ValueError(f"unknown rank_mode {self.rank_mode!r}")
        if self.regularizer not in ("rank", "nuclear"):
            raise ValueError(f"unknown regularizer {self.regularizer!r}")
        if isinstance(self.loss, dict):
            self.loss = LossConfig(**self.loss)
        for name in ("learning_rate", "lr_decay_factor"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("lambda1", "lambda2", "weight_decay"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.rank_target is not None and self.rank_target < 1:
            raise ValueError("rank_target must be >= 1 when set")


@dataclass
class ForwardTrace:
    """Everything the backward pass needs from one forward evaluation."""

    x: np.ndarray
    encoder_pre: list
    encoder_act: list
    head_pre: np.ndarray
    head_act: np.ndarray
    log_var_raw: np.ndarray
    posterior: GaussianPosterior
    noise: np.ndarray
    z: np.ndarray
    logits: np.ndarray
    rank: RankLossResult | None = None  # cached by total_loss for backward


def init_params(
    input_dim: int,
    num_classes: int,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""

    def lin(out_dim, in_dim, activation):
        w = rng.uniform(-1.0, 1.0, size=(out_dim, in_dim)) / np.sqrt(in_dim)
        return Layer(weight=w, bias=np.zeros(out_dim), activation=activation)

    dims = [input_dim, *cfg.encoder_dims]
    encoder = [
        lin(dims[i + 1], dims[i], "leaky_relu") for i in range(len(cfg.encoder_dims))
    ]
    head_hidden = lin(cfg.head_hidden_dim, dims[-1], "relu")
    head_mu = lin(cfg.latent_dim, cfg.head_hidden_dim, "linear")
    head_log_var = lin(cfg.latent_dim, cfg.head_hidden_dim, "linear")
    classifier = lin(num_classes, cfg.latent_dim, "linear")
    return ModelParams(encoder, head_hidden, head_mu, head_log_var, classifier)


def _activate(pre, kind):
    if kind == "relu":
        return np.maximum(pre, 0.0)
    if kind == "leaky_relu":
        return np.where(pre > 0.0, pre, _LEAKY_SLOPE * pre)
    return pre


def _activate_grad(pre, kind):
    if kind == "relu":
        return (pre > 0.0).astype(np.float64)
    if kind == "leaky_relu":
        return np.where(pre > 0.0, 1.0, _LEAKY_SLOPE)
    return np.ones_like(pre)


def forward(params: ModelParams, x, noise=None) -> ForwardTrace:
    """Run the network on a batch.

    ``noise`` is the reparameterization draw, shaped like the posterior;
    None (or anything all-zero) evaluates at the posterior mean, which is
    the deterministic mode used for accuracy measurements.
    """
    h = np.asarray(x, dtype=np.float64)
    if h.ndim != 2:
        raise ValueError("forward expects a 2-D batch")
    if not np.all(np.isfinite(h)):
        raise ValueError("forward received non-finite inputs")
    pres, acts = [], []
    for layer in params.encoder:
        pre = h @ layer.weight.T + layer.bias
        h = _activate(pre, layer.activation)
        pres.append(pre)
        acts.append(h)
    head_pre = h @ params.head_hidden.weight.T + params.head_hidden.bias
    head_act = _activate(head_pre, params.head_hidden.activation)
    mu = head_act @ params.head_mu.weight.T + params.head_mu.bias
    log_var_raw = head_act @ params.head_log_var.weight.T + params.head_log_var.bias
    posterior = GaussianPosterior(mu=mu, log_var=log_var_raw.copy())
    if noise is None:
        eps = np.zeros_like(mu)
    else:
        eps = np.zeros_like(mu) + np.asarray(noise, dtype=np.float64)
    z = reparameterize(posterior, eps)
    logits = z @ params.classifier.weight.T + params.classifier.bias
    return ForwardTrace(
        x=np.asarray(x, dtype=np.float64),
        encoder_pre=pres,
        encoder_act=acts,
        head_pre=head_pre,
        head_act=head_act,
        log_var_raw=log_var_raw,
        posterior=posterior,
        noise=eps,
        z=z,
        logits=logits,
    )


def _rank_penalty(z, labels, num_classes: int, cfg: TrainConfig) -> RankLossResult:
    """Dispatch the low-rank penalty per config; subgradient matches z."""
    kind = cfg.regularizer
    if cfg.rank_mode == "per_batch":
        c_eff = cfg.rank_target if cfg.rank_target is not None else num_classes
        return rank_loss(z, c_eff) if kind == "rank" else nuclear_norm(z)
    # per_class: each class's rows pushed toward rank 1, averaged over the
    # classes present in the batch
    present = np.unique(labels)
    sub = np.zeros_like(z)
    total = 0.0
    for c in present:
        rows = np.flatnonzero(labels == c)
        block = rank_loss(z[rows], 1) if kind == "rank" else nuclear_norm(z[rows])
        total += block.value
        sub[rows] = block.subgradient
    n_present = present.size
    return RankLossResult(value=total / n_present, subgradient=sub / n_present)


def total_loss(trace: ForwardTrace, labels, cfg: TrainConfig):
    """Scalar objective and its additive parts.

    Returns ``(value, parts)`` with parts keyed 'cls', 'rank', 'kl',
    'total'; the total is exactly ``cls + lambda1 * rank + lambda2 * kl``
    as floats.  The rank result is cached on the trace so backward can
    reuse the same SVD.
    """
    labels = np.asarray(labels)
    num_classes = trace.logits.shape[1]
    cls_value, _ = batch_mean(trace.logits, labels, cfg.loss)
    rank_res = _rank_penalty(trace.z, labels, num_classes, cfg)
    trace.rank = rank_res
    kl_value, _, _ = kl_standard_normal(trace.posterior)
    parts = {
        "cls": cls_value,
        "rank": rank_res.value,
        "kl": kl_value,
    }
    parts["total"] = (
        parts["cls"] + cfg.lambda1 * parts["rank"] + cfg.lambda2 * parts["kl"]
    )
    return parts["total"], parts


def backward(params: ModelParams, trace: ForwardTrace, labels, cfg: TrainConfig):
    """Gradient of total_loss w.r.t. every parameter.

    Returns a ModelParams whose arrays are the gradients.  Uses the rank
    subgradient cached on the trace when present (computing it otherwise),
    so call total_loss first to share the SVD.
    """
    labels = np.asarray(labels)
    num_classes = trace.logits.shape[1]

    _, d_logits = batch_mean(trace.logits, labels, cfg.loss)

    rank_res = trace.rank
    if rank_res is None:
        rank_res = _rank_penalty(trace.z, labels, num_classes, cfg)

    # classifier
    g_cls_w = d_logits.T @ trace.z
    g_cls_b = np.sum(d_logits, axis=0)
    d_z = d_logits @ params.classifier.weight
    d_z = d_z + cfg.lambda1 * rank_res.subgradient

    _, kl_mu, kl_lv = kl_standard_normal(trace.posterior)
    d_mu = d_z + cfg.lambda2 * kl_mu
    std = np.exp(0.5 * trace.posterior.log_var)
    d_lv = d_z * trace.noise * 0.5 * std + cfg.lambda2 * kl_lv
    # the posterior clamps log_var; outside the clamp range the raw head
    # output has no effect, so its gradient is zero there
    clamp_ok = (trace.log_var_raw > LOG_VAR_MIN) & (trace.log_var_raw < LOG_VAR_MAX)
    d_lv = d_lv * clamp_ok

    g_mu_w = d_mu.T @ trace.head_act
    g_mu_b = np.sum(d_mu, axis=0)
    g_lv_w = d_lv.T @ trace.head_act
    g_lv_b = np.sum(d_lv, axis=0)

    d_head_act = d_mu @ params.head_mu.weight + d_lv @ params.head_log_var.weight
    d_head_pre = d_head_act * _activate_grad(
        trace.head_pre, params.head_hidden.activation
    )
    top_act = trace.encoder_act[-1] if params.encoder else trace.x
    g_hh_w = d_head_pre.T @ top_act
    g_hh_b = np.sum(d_head_pre, axis=0)

    d_act = d_head_pre @ params.head_hidden.weight
    g_encoder = []
    for i in reversed(range(len(params.encoder))):
        layer = params.encoder[i]
        d_pre = d_act * _activate_grad(trace.encoder_pre[i], layer.activation)
        below = trace.encoder_act[i - 1] if i > 0 else trace.x
        g_w = d_pre.T @ below
        g_b = np.sum(d_pre, axis=0)
        g_encoder.append(Layer(weight=g_w, bias=g_b, activation=layer.activation))
        d_act = d_pre @ layer.weight
    g_encoder.reverse()

    return ModelParams(
        encoder=g_encoder,
        head_hidden=Layer(g_hh_w, g_hh_b, params.head_hidden.activation),
        head_mu=Layer(g_mu_w, g_mu_b, "linear"),
        head_log_var=Layer(g_lv_w, g_lv_b, "linear"),
        classifier=Layer(g_cls_w, g_cls_b, "linear"),
    )


@dataclass
class AdamState:
    """First/second moment accumulators, one pair per parameter array."""

    m: list
    v: list
    t: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        flat = params.flat()
        return cls(
            m=[np.zeros_like(a) for a in flat],
            v=[np.zeros_like(a) for a in flat],
        )


def adam_step(
    params: ModelParams,
    grads: ModelParams,
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One Adam update in place, with decoupled weight decay.

    Weight decay multiplies weight matrices by ``(1 - lr * weight_decay)``
    outside the moment accumulators; biases are never decayed.
    """
    state.t += 1
    t = state.t
    flat_p = params.flat()
    flat_g = grads.flat()
    for i, (p, g) in enumerate(zip(flat_p, flat_g)):
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * (g * g)
        m_hat = state.m[i] / (1.0 - beta1**t)
        v_hat = state.v[i] / (1.0 - beta2**t)
        if weight_decay and p.ndim == 2:
            p *= 1.0 - lr * weight_decay
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# checkpoint format (binary)
#
#   LDDG-MODEL 1
#   <num_layers>
#   <activation> <out> <in>     (one line per layer, declaration order)
#   DATA
#   raw little-endian float64: weight then bias per layer, C order
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"LDDG-MODEL"
_CKPT_VERSION = 1


def save_checkpoint(path, params: ModelParams):
    """Serialize parameters with a self-describing header."""
    layers = params.layers()
    lines = [f"{_CKPT_MAGIC.decode()} {_CKPT_VERSION}", str(len(layers))]
    for layer in layers:
        out_dim, in_dim = layer.weight.shape
        lines.append(f"{layer.activation} {out_dim} {in_dim}")
    lines.append("DATA")
    blob = b"".join(
        np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.flat()
    )
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode())
        fh.write(blob)


def load_checkpoint(path) -> ModelParams:
    """Read a checkpoint written by save_checkpoint; validates the header."""
    with open(path, "rb") as fh:
        raw = fh.read()
    head, sep, rest = raw.partition(b"DATA\n")
    if not sep:
        raise ValueError(f"{path}: missing DATA marker, not a checkpoint file")
    lines = head.decode().splitlines()
    if not lines or not lines[0].startswith(_CKPT_MAGIC.decode()):
        raise ValueError(f"{path}: bad magic, not a checkpoint file")
    magic, version = lines[0].split()
    if int(version) != _CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    n_layers = int(lines[1])
    shapes = []
    for ln in lines[2 : 2 + n_layers]:
        act, out_dim, in_dim = ln.split()
        shapes.append((act, int(out_dim), int(in_dim)))
    if len(shapes) != n_layers:
        raise ValueError(f"{path}: header declares {n_layers} layers, found {len(shapes)}")
    need = sum(o * i + o for _, o, i in shapes) * 8
    if len(rest) != need:
        raise ValueError(
            f"{path}: expected {need} bytes of parameters, found {len(rest)}"
        )
    layers = []
    offset = 0
    for act, out_dim, in_dim in shapes:
        w = np.frombuffer(rest, dtype="<f8", count=out_dim * in_dim, offset=offset)
        offset += out_dim * in_dim * 8
        b = np.frombuffer(rest, dtype="<f8", count=out_dim, offset=offset)
        offset += out_dim * 8
        layers.append(
            Layer(
                weight=w.reshape(out_dim, in_dim).astype(np.float64),
                bias=b.astype(np.float64),
                activation=act,
            )
        )
    if n_layers < 5:
        raise ValueError(f"{path}: checkpoint needs >= 5 layers, found {n_layers}")
    return ModelParams(
        encoder=layers[:-4],
        head_hidden=layers[-4],
        head_mu=layers[-3],
        head_log_var=layers[-2],
        classifier=layers[-1],
    )
