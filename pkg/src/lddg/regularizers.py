"""Latent-space regularizers: rank penalty, nuclear norm, KL, reparameterization.

The rank penalty treats a latent batch ``z`` (one row per sample) as a matrix
and penalizes its (C+1)-th singular value, C being the number of classes.
Driving that value to zero pushes the batch toward rank <= C, i.e. toward one
latent direction per class.  The penalty's subgradient is the rank-one outer
product of the corresponding singular vector pair, which always has unit
Frobenius norm when the value is positive.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, outer, svd

__all__ = [
    "GaussianPosterior",
    "RankLossResult",
    "rank_loss",
    "nuclear_norm",
    "kl_standard_normal",
    "reparameterize",
]

logger = logging.getLogger(__name__)

LOG_VAR_MIN = -30.0
LOG_VAR_MAX = 30.0


@dataclass
class GaussianPosterior:
    """Diagonal Gaussian over latents, one row per sample.

    ``log_var`` is clamped to [-30, 30] on construction so that
    ``exp(log_var)`` can neither overflow nor collapse to an exact zero.
    """

    mu: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        self.mu = as_matrix(self.mu)
        self.log_var = np.clip(as_matrix(self.log_var), LOG_VAR_MIN, LOG_VAR_MAX)
        if self.mu.shape != self.log_var.shape:
            raise ValueError(
                f"mu shape {self.mu.shape} != log_var shape {self.log_var.shape}"
            )


@dataclass
class RankLossResult:
    value: float
    subgradient: np.ndarray


def rank_loss(z, num_classes: int) -> RankLossResult:
    """Singular value sigma_{C+1} of the latent batch and its subgradient.

    z           : (n, d) latent batch
    num_classes : C >= 1

    Returns value ``sigma_{C+1}`` (1-indexed, i.e. the first singular value
    beyond a rank-C fit) and subgradient ``u_{C+1} v_{C+1}^T`` from the SVD
    of z.  When ``min(n, d) <= C`` the batch can never exceed rank C, so the
    value is 0 with a zero subgradient; a warning is logged because a batch
    that small makes the penalty inert.
    """
    zm = as_matrix(z)
    if num_classes < 1:
        raise ValueError(f"num_classes must be >= 1, got {num_classes}")
    n, d = zm.shape
    if min(n, d) <= num_classes:
        logger.warning(
            "rank_loss inert: batch shape %s has min dim <= num_classes=%d",
            zm.shape,
            num_classes,
        )
        return RankLossResult(value=0.0, subgradient=np.zeros_like(zm))
    res = svd(zm)
    value = float(res.sigma[num_classes])
    sub = outer(res.u[:, num_classes], res.v[:, num_classes])
    return RankLossResult(value=value, subgradient=sub)


def nuclear_norm(z) -> RankLossResult:
    """Sum of singular values and its subgradient ``U V^T``.

    Used as the low-rank baseline in ablations.  Unlike the sigma_{C+1}
    penalty its subgradient has Frobenius norm sqrt(rank), not 1.
    """
    zm = as_matrix(z)
    res = svd(zm)
    return RankLossResult(
        value=float(np.sum(res.sigma)), subgradient=res.u @ res.v.T
    )


def kl_standard_normal(posterior: GaussianPosterior):
    """KL(q || N(0, I)) averaged over the batch, with gradients.

    Per sample the diagonal-Gaussian KL is
    ``0.5 * sum_d (mu^2 + exp(log_var) - log_var - 1)``; the returned value
    is the mean over the n rows.  Gradients:

        d/d mu      = mu / n
        d/d log_var = (exp(log_var) - 1) / (2 n)

    Returns ``(value, grad_mu, grad_log_var)``.
    """
    mu, log_var = posterior.mu, posterior.log_var
    n = mu.shape[0]
    var = np.exp(log_var)
    value = float(np.sum(mu * mu + var - log_var - 1.0) / (2.0 * n))
    grad_mu = mu / n
    grad_log_var = (var - 1.0) / (2.0 * n)
    return value, grad_mu, grad_log_var


def reparameterize(posterior: GaussianPosterior, noise) -> np.ndarray:
    """Sample ``z = mu + exp(0.5 log_var) * noise`` (pathwise estimator).

    ``noise`` must already have the posterior's shape; passing zeros gives
    the posterior mean, which is how deterministic evaluation works.
    """
    eps = np.asarray(noise, dtype=np.float64)
    if eps.shape != posterior.mu.shape:
        raise ValueError(
            f"noise shape {eps.shape} != posterior shape {posterior.mu.shape}"
        )
    if not np.all(np.isfinite(eps)):
        raise ValueError("noise contains non-finite entries")
    return posterior.mu + np.exp(0.5 * posterior.log_var) * eps
