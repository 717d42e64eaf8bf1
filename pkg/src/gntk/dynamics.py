"""Closed-form evolution of the wide-network Gaussian process under training.

The full-batch squared-loss gradient flow acts linearly through the constant
tangent kernel, so the GP at any time has explicit mean and covariance blocks
over the training set b and the remaining set c.  Posterior inference assumes
iid Gaussian observation noise with variance epsilon > 0; without noise the
posterior mean provably never moves, which ``noiseless_posterior_mean``
exposes for testing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .graphs import TrainSplit
from .recursion import KernelPair

__all__ = [
    "RankDeficiencyWarning",
    "GpState",
    "PosteriorResult",
    "EvolutionSolver",
    "evolve_prior",
    "posterior",
    "posterior_full",
    "noiseless_posterior_mean",
    "limit_moments",
    "sample_paths",
]

RANK_RTOL = 1e-10


class RankDeficiencyWarning(UserWarning):
    """A kernel block that must be inverted is numerically rank-deficient."""


@dataclass(frozen=True, eq=False)
class GpState:
    """Mean and covariance blocks of (f_b, f_c) at time ``t``."""

    t: float
    mu_b: np.ndarray
    mu_c: np.ndarray
    k_bb: np.ndarray
    k_bc: np.ndarray
    k_cb: np.ndarray
    k_cc: np.ndarray

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("time must be nonnegative")
        if not np.allclose(self.k_cb, self.k_bc.T, atol=1e-10, rtol=0.0):
            raise ValueError("k_cb must equal k_bc^T")

    def mean(self) -> np.ndarray:
        """Stacked mean, training block first."""
        return np.concatenate([self.mu_b, self.mu_c])

    def covariance(self) -> np.ndarray:
        """Stacked covariance, training block first."""
        top = np.hstack([self.k_bb, self.k_bc])
        bottom = np.hstack([self.k_cb, self.k_cc])
        return np.vstack([top, bottom])

    def validate(self, psd_tol: float = 1e-8) -> None:
        cov = self.covariance()
        scale = max(1.0, float(np.abs(np.diag(cov)).max()))
        if np.linalg.eigvalsh(0.5 * (cov + cov.T)).min() < -psd_tol * scale:
            raise AssertionError("joint covariance not PSD")


@dataclass(frozen=True, eq=False)
class PosteriorResult:
    """Posterior mean and covariance on the prediction set, given noisy targets."""

    mean_c: np.ndarray
    cov_cc: np.ndarray
    epsilon: float


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _blocks(m: np.ndarray, b: np.ndarray, c: np.ndarray):
    return m[np.ix_(b, b)], m[np.ix_(b, c)], m[np.ix_(c, b)], m[np.ix_(c, c)]


class EvolutionSolver:
    """Shared eigendecomposition of theta_bb plus the time-dependent formulas.

    Build once, then evaluate ``state_at`` over a whole time grid; every time
    point reuses the same spectral data.
    """

    def __init__(self, kernels: KernelPair, split: TrainSplit, eta: float):
        if eta <= 0:
            raise ValueError("learning rate must be positive")
        if split.n_nodes != kernels.k.shape[0]:
            raise ValueError("split does not match the kernel dimension")
        self.split = split
        self.eta = eta
        b, c = split.train_idx, split.rest_idx
        self.n_b = b.size
        self.k_bb0, self.k_bc0, self.k_cb0, self.k_cc0 = _blocks(kernels.k, b, c)
        self.th_bb, self.th_bc, self.th_cb, self.th_cc = _blocks(kernels.theta, b, c)
        lam, u = np.linalg.eigh(_sym(self.th_bb))
        self.lam = np.clip(lam, 0.0, None)
        self.u = u
        lam_max = float(self.lam.max(initial=0.0))
        cut = RANK_RTOL * max(lam_max, 1e-300)
        self.rank_deficient = bool(lam_max == 0.0 or self.lam.min() < cut)
        if self.rank_deficient:
            warnings.warn(
                "theta_bb is numerically rank-deficient; using its spectral pseudo-inverse",
                RankDeficiencyWarning,
                stacklevel=2,
            )
        inv = np.where(self.lam > cut, 1.0 / np.where(self.lam > cut, self.lam, 1.0), 0.0)
        self.th_bb_pinv = (u * inv) @ u.T
        # theta_cb theta_bb^{-1}: the propagator from training residuals to c.
        self.gain = self.th_cb @ self.th_bb_pinv

    def min_positive_eigenvalue(self) -> float:
        pos = self.lam[self.lam > RANK_RTOL * max(self.lam.max(initial=0.0), 1e-300)]
        if pos.size == 0:
            raise ValueError("theta_bb has no positive eigenvalues")
        return float(pos.min())

    def alpha_beta(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """alpha = exp(-t eta theta_bb / n_b) and beta = I - alpha."""
        eye = np.eye(self.n_b)
        if t == 0.0:
            return eye, np.zeros_like(eye)
        decay = np.exp(-t * self.eta * self.lam / self.n_b)
        alpha = _sym((self.u * decay) @ self.u.T)
        return alpha, eye - alpha

    def state_at(self, t: float) -> GpState:
        if t < 0:
            raise ValueError("time must be nonnegative")
        y = self.split.y_b
        if t == 0.0:
            return GpState(
                t=0.0,
                mu_b=np.zeros(self.n_b),
                mu_c=np.zeros(self.split.rest_idx.size),
                k_bb=self.k_bb0.copy(),
                k_bc=self.k_bc0.copy(),
                k_cb=self.k_cb0.copy(),
                k_cc=self.k_cc0.copy(),
            )
        alpha, beta = self.alpha_beta(t)
        mu_b = beta @ y
        mu_c = self.gain @ mu_b
        k_bb = _sym(alpha @ self.k_bb0 @ alpha)
        gain_beta = self.gain @ beta
        k_cb = self.k_cb0 @ alpha - gain_beta @ self.k_bb0 @ alpha
        k_cc = _sym(
            self.k_cc0
            - gain_beta @ self.k_bc0
            - self.k_cb0 @ gain_beta.T
            + gain_beta @ self.k_bb0 @ gain_beta.T
        )
        return GpState(t=t, mu_b=mu_b, mu_c=mu_c, k_bb=k_bb, k_bc=k_cb.T.copy(), k_cb=k_cb, k_cc=k_cc)

    def limit(self) -> tuple[np.ndarray, np.ndarray]:
        """Infinite-time mean and covariance on the prediction set."""
        mu_c = self.gain @ self.split.y_b
        k_cc = _sym(
            self.k_cc0
            - self.gain @ self.k_bc0
            - self.k_cb0 @ self.gain.T
            + self.gain @ self.k_bb0 @ self.gain.T
        )
        return mu_c, k_cc


def evolve_prior(kernels: KernelPair, split: TrainSplit, eta: float, t: float) -> GpState:
    """Prior GP state at time ``t`` under the training flow."""
    return EvolutionSolver(kernels, split, eta).state_at(t)


def limit_moments(kernels: KernelPair, split: TrainSplit) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form infinite-time prediction-set mean and covariance."""
    return EvolutionSolver(kernels, split, eta=1.0).limit()


def posterior(state: GpState, split: TrainSplit, epsilon: float = 1e-4) -> PosteriorResult:
    """Condition the evolved prior on noisy observations of the training targets."""
    if epsilon <= 0:
        raise ValueError("noise variance must be positive")
    y = split.y_b
    gram = state.k_bb + epsilon * np.eye(state.k_bb.shape[0])
    resid = np.linalg.solve(gram, y - state.mu_b)
    mean_c = state.mu_c + state.k_cb @ resid
    cov_cc = _sym(state.k_cc - state.k_cb @ np.linalg.solve(gram, state.k_bc))
    return PosteriorResult(mean_c=mean_c, cov_cc=cov_cc, epsilon=epsilon)


def posterior_full(state: GpState, split: TrainSplit, epsilon: float = 1e-4):
    """Posterior mean/covariance over all nodes (training block first)."""
    if epsilon <= 0:
        raise ValueError("noise variance must be positive")
    y = split.y_b
    gram = state.k_bb + epsilon * np.eye(state.k_bb.shape[0])
    k_all_b = np.vstack([state.k_bb, state.k_cb])
    mean = state.mean() + k_all_b @ np.linalg.solve(gram, y - state.mu_b)
    cov = _sym(state.covariance() - k_all_b @ np.linalg.solve(gram, k_all_b.T))
    return mean, cov


def _spectral_pinv(m: np.ndarray, what: str) -> tuple[np.ndarray, bool]:
    lam, u = np.linalg.eigh(_sym(m))
    lam = np.clip(lam, 0.0, None)
    lam_max = float(lam.max(initial=0.0))
    cut = RANK_RTOL * max(lam_max, 1e-300)
    deficient = bool(lam_max == 0.0 or lam.min() < cut)
    if deficient:
        warnings.warn(
            f"{what} is numerically rank-deficient; using its spectral pseudo-inverse",
            RankDeficiencyWarning,
            stacklevel=3,
        )
    inv = np.where(lam > cut, 1.0 / np.where(lam > cut, lam, 1.0), 0.0)
    return (u * inv) @ u.T, deficient


def noiseless_posterior_mean(
    kernels: KernelPair, split: TrainSplit, t: float, eta: float = 1.0
) -> np.ndarray:
    """Noise-free posterior mean at time ``t``.

    Evaluates mu_c(t) + k_cb(t) k_bb(t)^+ (y_b - mu_b(t)) with the exponential
    factors cancelled algebraically (the direct product underflows once the
    decay factors reach zero).  For full-rank k_bb(0) the result is the same
    constant at every t, which is the pitfall this function demonstrates.
    """
    solver = EvolutionSolver(kernels, split, eta)
    k_bb0_pinv, _ = _spectral_pinv(solver.k_bb0, "k_bb(0)")
    w = k_bb0_pinv @ split.y_b
    residual = split.y_b - solver.k_bb0 @ w  # zero when k_bb(0) has full rank
    _, beta = solver.alpha_beta(t)
    return solver.k_cb0 @ w + solver.gain @ (beta @ residual)


def sample_paths(state: GpState, n_paths: int, seed: int) -> list[np.ndarray]:
    """Joint draws of (f_b, f_c) from the state's Gaussian law.

    Uses an eigendecomposition of the stacked covariance with negative
    eigenvalues clipped at zero; deterministic given ``seed``.
    """
    if n_paths < 0:
        raise ValueError("n_paths must be nonnegative")
    mean = state.mean()
    cov = _sym(state.covariance())
    lam, u = np.linalg.eigh(cov)
    factor = u * np.sqrt(np.clip(lam, 0.0, None))
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_paths, mean.size))
    draws = mean[None, :] + z @ factor.T
    return [draws[i] for i in range(n_paths)]
