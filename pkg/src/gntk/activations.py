"""Gaussian second moments of activations and of their derivatives.

For z ~ N(0, K) these are E[phi(z) phi(z)^T] and E[phi'(z) phi'(z)^T],
available in closed form for ReLU (the order-1/order-0 arc-cosine kernels)
and for erf.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf as _erf

__all__ = [
    "ACTIVATIONS",
    "MomentPair",
    "relu_moments",
    "erf_moments",
    "moments",
    "numeric_moment_oracle",
]

ACTIVATIONS = ("relu", "erf")


@dataclass(frozen=True, eq=False)
class MomentPair:
    """Second raw moment ``c`` of phi(z) and ``c_dot`` of phi'(z)."""

    c: np.ndarray
    c_dot: np.ndarray

    def validate(self, tol: float = 1e-10) -> None:
        for m in (self.c, self.c_dot):
            if not np.allclose(m, m.T, atol=tol, rtol=0.0):
                raise AssertionError("moment matrix not symmetric")
            if np.linalg.eigvalsh(0.5 * (m + m.T)).min() < -tol:
                raise AssertionError("moment matrix not PSD")


def _checked_cov(k: np.ndarray) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError("covariance must be a square matrix")
    if not np.allclose(k, k.T, atol=1e-8, rtol=0.0):
        raise ValueError("covariance must be symmetric (tol 1e-8)")
    if np.diag(k).min() < -1e-12:
        raise ValueError("covariance has a negative diagonal entry")
    return k


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def relu_moments(k: np.ndarray) -> MomentPair:
    """Closed-form ReLU moments under z ~ N(0, k).

    With theta = arccos(k_xy / sqrt(k_xx k_yy)):
      c     = sqrt(k_xx k_yy) / (2 pi) * (sin theta + (pi - theta) cos theta)
      c_dot = (pi - theta) / (2 pi)
    Rows with zero variance contribute zeros (phi'(0) taken as 0).
    """
    k = _checked_cov(k)
    d = np.clip(np.diag(k), 0.0, None)
    sq = np.sqrt(np.outer(d, d))
    pos = sq > 0.0
    cos_t = np.ones_like(k)
    np.divide(k, sq, out=cos_t, where=pos)
    np.fill_diagonal(cos_t, 1.0)  # the x == y angle is exactly zero
    theta = np.arccos(np.clip(cos_t, -1.0, 1.0))
    c = sq / (2.0 * np.pi) * (np.sin(theta) + (np.pi - theta) * np.cos(theta))
    c_dot = (np.pi - theta) / (2.0 * np.pi)
    c = np.where(pos, c, 0.0)
    c_dot = np.where(pos, c_dot, 0.0)
    return MomentPair(c=_sym(c), c_dot=_sym(c_dot))


def erf_moments(k: np.ndarray) -> MomentPair:
    """Closed-form erf moments under z ~ N(0, k).

      c     = (2/pi) arcsin( 2 k_xy / sqrt((1 + 2 k_xx)(1 + 2 k_yy)) )
      c_dot = (4/pi) ((1 + 2 k_xx)(1 + 2 k_yy) - (2 k_xy)^2)^(-1/2)
    """
    k = _checked_cov(k)
    d = np.diag(k)
    outer = np.outer(1.0 + 2.0 * d, 1.0 + 2.0 * d)
    det = outer - 4.0 * k * k
    if det.min() < 1e-12:
        raise ValueError("invalid covariance input: (1+2k_xx)(1+2k_yy) - (2k_xy)^2 not positive")
    c = (2.0 / np.pi) * np.arcsin(np.clip(2.0 * k / np.sqrt(outer), -1.0, 1.0))
    c_dot = (4.0 / np.pi) / np.sqrt(det)
    return MomentPair(c=_sym(c), c_dot=_sym(c_dot))


def moments(k: np.ndarray, kind: str) -> MomentPair:
    if kind == "relu":
        return relu_moments(k)
    if kind == "erf":
        return erf_moments(k)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def _apply(kind: str, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Value and derivative of the activation, elementwise."""
    if kind == "relu":
        return np.maximum(z, 0.0), (z > 0.0).astype(float)
    if kind == "erf":
        return _erf(z), (2.0 / np.sqrt(np.pi)) * np.exp(-z * z)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def numeric_moment_oracle(
    k: np.ndarray,
    kind: str,
    n_samples: int,
    seed: int,
    chunk_size: int = 1_000_000,
) -> MomentPair:
    """Monte-Carlo estimate of the activation moments, for small matrices.

    Draws Gaussians through a Cholesky factor (with 1e-12 diagonal jitter if
    the factorization fails) and averages phi(z)phi(z)^T and phi'(z)phi'(z)^T.
    Sampling is chunked; chunk ``i`` uses the seed ``seed + i``, so the result
    is deterministic for a fixed chunk size.
    """
    k = _checked_cov(k)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    n = k.shape[0]
    try:
        chol = np.linalg.cholesky(k)
    except np.linalg.LinAlgError:
        chol = np.linalg.cholesky(k + 1e-12 * np.eye(n))
    c_acc = np.zeros((n, n))
    c_dot_acc = np.zeros((n, n))
    done = 0
    chunk_index = 0
    while done < n_samples:
        m = min(chunk_size, n_samples - done)
        rng = np.random.default_rng(seed + chunk_index)
        z = rng.standard_normal((m, n)) @ chol.T
        f, f_dot = _apply(kind, z)
        c_acc += f.T @ f
        c_dot_acc += f_dot.T @ f_dot
        done += m
        chunk_index += 1
    return MomentPair(c=c_acc / n_samples, c_dot=c_dot_acc / n_samples)
