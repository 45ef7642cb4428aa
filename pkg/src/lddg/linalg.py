"""Dense linear algebra kernels: one-sided Jacobi SVD and small helpers.

Matrices are plain ``numpy.ndarray`` objects with ``dtype=float64``.  Every
entry point validates that its inputs are finite; NaN or Inf anywhere is a
hard error rather than a silently propagated poison value.

The SVD here is written from scratch (one-sided Jacobi with a round-robin
sweep order) so that the singular-value machinery used by the rank penalty
is self-contained and inspectable end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SvdResult", "svd", "outer", "finite_diff_grad", "as_matrix"]


def as_matrix(z) -> np.ndarray:
    """Coerce ``z`` to a finite 2-D float64 array.

    Raises ``ValueError`` if the input is not two-dimensional or contains
    non-finite entries.
    """
    m = np.asarray(z, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries (NaN or Inf)")
    return m


@dataclass
class SvdResult:
    """Thin SVD ``z = u @ diag(sigma) @ v.T``.

    u     : (rows, r) with orthonormal columns
    sigma : (r,) non-negative, sorted in descending order
    v     : (cols, r) with orthonormal columns

    where ``r = min(rows, cols)``.
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray


def _round_robin_pairs(n: int) -> list[list[tuple[int, int]]]:
    """Tournament schedule: n-1 rounds (n even) of disjoint index pairs.

    Every unordered pair (p, q) appears exactly once per full schedule, and
    pairs within a round share no index, so their rotations commute and can
    be applied as one batched update.
    """
    players = list(range(n)) if n % 2 == 0 else list(range(n)) + [-1]
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairs = []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a != -1 and b != -1:
                pairs.append((min(a, b), max(a, b)))
        rounds.append(pairs)
        # rotate all but the first slot
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def svd(z, tol: float = 1e-12) -> SvdResult:
    """Thin singular value decomposition via one-sided Jacobi rotations.

    Works on the transposed matrix when ``cols > rows`` so the rotation
    sweeps always run over the smaller dimension.  A sweep applies plane
    rotations to all column pairs (round-robin order); the iteration stops
    once no pair in a full sweep exceeds the relative tolerance
    ``|a_p . a_q| > tol * ||a_p|| * ||a_q||``.

    Convergence failure after ``100 * min(rows, cols)`` sweeps raises
    ``RuntimeError`` naming the shape and the worst remaining off-diagonal
    residual.

    Sign convention: each column of ``u`` has its largest-magnitude entry
    non-negative (ties broken by the earliest such entry), with the matching
    column of ``v`` flipped to preserve the product.
    """
    a0 = as_matrix(z)
    rows, cols = a0.shape
    if rows == 0 or cols == 0:
        raise ValueError(f"svd requires a non-empty matrix, got shape {a0.shape}")

    transposed = cols > rows
    a = a0.T.copy() if transposed else a0.copy()
    m, n = a.shape  # n == min(rows, cols)

    # Stack `a` on top of the right-rotation accumulator so each plane
    # rotation updates both with a single pair of column writes.  Columns of
    # the top block converge to u * sigma; the bottom block accumulates v.
    w = np.concatenate([a, np.eye(n)], axis=0)
    schedule = [
        (np.array([pr[0] for pr in rnd], dtype=np.intp),
         np.array([pr[1] for pr in rnd], dtype=np.intp))
        for rnd in _round_robin_pairs(n)
        if rnd
    ]
    schedule = [(p, q, np.concatenate([p, q])) for p, q in schedule]
    max_sweeps = 100 * n

    converged = False
    with np.errstate(all="ignore"):
        for _ in range(max_sweeps):
            rotated_any = False
            for p, q, pq in schedule:
                k = p.size
                d = w[:, pq]
                ap, aq = d[:m, :k], d[:m, k:]
                apq = np.einsum("ij,ij->j", ap, aq)
                app = np.einsum("ij,ij->j", ap, ap)
                aqq = np.einsum("ij,ij->j", aq, aq)
                if not np.any(np.abs(apq) > tol * np.sqrt(app * aqq)):
                    continue
                rotated_any = True
                # Rotate every pair in the round: a pair already below the
                # tolerance gets tau = +/-inf, hence t = 0 and an exact
                # identity rotation, so batching costs no accuracy.
                tau = (aqq - app) / (2.0 * apq)
                t = np.sign(tau) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
                t = np.where(tau == 0.0, 1.0, t)
                t = np.where(apq == 0.0, 0.0, t)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                w[:, p] = c * d[:, :k] - s * d[:, k:]
                w[:, q] = s * d[:, :k] + c * d[:, k:]
            if not rotated_any:
                converged = True
                break
    a = w[:m]
    v = w[m:]

    if not converged:
        norms = np.sqrt(np.sum(a * a, axis=0))
        gram = a.T @ a
        off = np.abs(gram - np.diag(np.diag(gram)))
        scale = np.outer(norms, norms)
        scale[scale == 0.0] = 1.0
        resid = float(np.max(off / scale))
        raise RuntimeError(
            f"one-sided Jacobi SVD did not converge for shape "
            f"{rows}x{cols} after {max_sweeps} sweeps; "
            f"max relative off-diagonal residual {resid:.3e}"
        )

    sigma = np.sqrt(np.sum(a * a, axis=0))
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    a = a[:, order]
    v = v[:, order]

    # Normalize columns with nonzero singular value; fill the null columns
    # of u by Gram-Schmidt against the standard basis so u stays orthonormal.
    u = np.zeros_like(a)
    thresh = max(m, n) * np.finfo(np.float64).eps * (sigma[0] if n else 0.0)
    ok = sigma > thresh
    u[:, ok] = a[:, ok] / sigma[ok]
    fill = np.flatnonzero(~ok)
    for j in fill:
        # Seed from the coordinate least covered by the columns so far: its
        # projection residual has norm at least 1/sqrt(m), so normalization
        # is always safe.  Project twice to stay orthogonal under roundoff.
        k = int(np.argmin(np.sum(u * u, axis=1)))
        cand = np.zeros(m)
        cand[k] = 1.0
        cand -= u @ (u.T @ cand)
        cand -= u @ (u.T @ cand)
        nrm = np.linalg.norm(cand)
        if nrm < 1e-6:
            raise RuntimeError(
                f"failed to complete an orthonormal basis for shape {rows}x{cols}"
            )
        u[:, j] = cand / nrm

    if transposed:
        u, v = v, u

    # sign fix: largest-|entry| of each u column made non-negative
    pivot = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[pivot, np.arange(u.shape[1])])
    signs[signs == 0.0] = 1.0
    u = u * signs
    v = v * signs

    return SvdResult(u=u, sigma=sigma, v=v)


def outer(u, v) -> np.ndarray:
    """Outer product ``u v^T`` of two 1-D vectors as a 2-D matrix."""
    uu = np.asarray(u, dtype=np.float64)
    vv = np.asarray(v, dtype=np.float64)
    if uu.ndim != 1 or vv.ndim != 1:
        raise ValueError("outer expects two 1-D vectors")
    if not (np.all(np.isfinite(uu)) and np.all(np.isfinite(vv))):
        raise ValueError("outer received non-finite entries")
    return np.outer(uu, vv)


def finite_diff_grad(f, z, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` with respect to array ``z``.

    Perturbs one entry at a time: ``(f(z + h e_ij) - f(z - h e_ij)) / (2 h)``.
    Intended for verifying hand-written backward passes on small inputs.
    """
    z = np.asarray(z, dtype=np.float64)
    grad = np.zeros_like(z)
    flat = grad.reshape(-1)
    zf = z.copy().reshape(-1)
    for i in range(zf.size):
        orig = zf[i]
        zf[i] = orig + h
        fp = f(zf.reshape(z.shape))
        zf[i] = orig - h
        fm = f(zf.reshape(z.shape))
        zf[i] = orig
        flat[i] = (fp - fm) / (2.0 * h)
    return grad
