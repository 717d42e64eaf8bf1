"""Monte-Carlo ground truth for the analytic kernels and the training flow.

Three oracles: (a) random finite-width networks whose empirical output
covariance approaches the analytic covariance, (b) direct simulation of the
stochastic-aggregation estimators whose mean must reproduce the masked
moments, and (c) full-batch gradient-descent trajectories of finite networks
for comparison with the closed-form evolution.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .activations import _apply
from .graphs import GraphSpec, TrainSplit
from .recursion import (
    GcnHyper,
    LayerWithReplacement,
    LayerWithoutReplacement,
    NodeWise,
    NoSampling,
    SamplingScheme,
    nodewise_probabilities,
    per_layer_schemes,
)

__all__ = [
    "FiniteGcnConfig",
    "sample_finite_gcn_output",
    "empirical_output_covariance",
    "empirical_mask_check",
    "train_finite_gcn",
]

DIVERGENCE_NORM = 1e6


@dataclass(frozen=True)
class FiniteGcnConfig:
    """Widths d_0..d_L, scales, sampling scheme, and trial budget of a finite net."""

    widths: tuple
    hyper: GcnHyper
    scheme: SamplingScheme | list = field(default_factory=NoSampling)
    n_trials: int = 100
    seed: int = 0

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) != self.hyper.n_layers + 1:
            raise ValueError("need one width per layer boundary (d_0..d_L)")
        if any(w < 1 for w in widths):
            raise ValueError("widths must be positive")
        if widths[-1] != 1:
            raise ValueError("the output layer performs scalar regression (d_L = 1)")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        object.__setattr__(self, "widths", widths)


def _trial_rng(seed: int, salt: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, salt, trial)))


def _aggregate(rng, graph: GraphSpec, scheme, y: np.ndarray) -> np.ndarray:
    """One stochastic (or exact) evaluation of the aggregation A @ y."""
    a = graph.adjacency
    if isinstance(scheme, NoSampling):
        return a @ y
    if isinstance(scheme, LayerWithReplacement):
        counts = rng.multinomial(scheme.n_samples, scheme.p)
        scale = counts / (scheme.n_samples * scheme.p)
        return a @ (scale[:, None] * y)
    if isinstance(scheme, LayerWithoutReplacement):
        keep = rng.random(scheme.q.size) < scheme.q
        scale = keep / scheme.q
        return a @ (scale[:, None] * y)
    if isinstance(scheme, NodeWise):
        q = nodewise_probabilities(graph, scheme.fanout)
        keep = (rng.random(q.shape) < q).astype(float)
        scale = np.zeros_like(q)
        np.divide(keep, q, out=scale, where=q > 0.0)
        return (a * scale) @ y
    raise TypeError(f"unknown sampling scheme {scheme!r}")


def _forward(rng, graph, x0, widths, hyper, schemes, n_out: int) -> np.ndarray:
    """One random network evaluation; returns the linear output Z (n_nodes x n_out).

    Per layer the draw order is fixed: weights, biases, then the sampling
    randomness, so trial streams are reproducible.
    """
    x = x0
    n_layers = hyper.n_layers
    sw = np.sqrt(hyper.sigma_w2)
    sb = np.sqrt(hyper.sigma_b2)
    for layer in range(1, n_layers + 1):
        d_prev = widths[layer - 1]
        d_out = n_out if layer == n_layers else widths[layer]
        w = rng.standard_normal((d_prev, d_out))
        bias = rng.standard_normal(d_out)
        y = (sw / np.sqrt(d_prev)) * (x @ w)
        z = _aggregate(rng, graph, schemes[layer - 1], y) + sb * bias[None, :]
        if layer == n_layers:
            return z
        x = _apply(hyper.activation, z)[0]
    raise AssertionError("unreachable")


def sample_finite_gcn_output(graph: GraphSpec, x0: np.ndarray, cfg: FiniteGcnConfig) -> np.ndarray:
    """Scalar outputs of ``n_trials`` independent random networks, shape (n_trials, n_nodes)."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (graph.n_nodes, cfg.widths[0]):
        raise ValueError("x0 must be n_nodes x d_0")
    schemes = per_layer_schemes(cfg.scheme, cfg.hyper.n_layers)
    out = np.empty((cfg.n_trials, graph.n_nodes))
    for trial in range(cfg.n_trials):
        rng = _trial_rng(cfg.seed, 0, trial)
        out[trial] = _forward(rng, graph, x0, cfg.widths, cfg.hyper, schemes, n_out=1)[:, 0]
    return out


def empirical_output_covariance(
    graph: GraphSpec, x0: np.ndarray, cfg: FiniteGcnConfig, n_columns: int = 1024
) -> np.ndarray:
    """Variance-reduced estimate of the output covariance.

    Per trial the scalar output unit is evaluated ``n_columns`` times with
    fresh output-layer parameters on top of shared hidden layers and shared
    per-layer sampling draws; the second moments are pooled over columns and
    trials.  The estimator mean is identical to the one-column case, but a
    feasible trial budget reaches far below the one-column CLT floor
    sqrt(2 / n_trials).
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (graph.n_nodes, cfg.widths[0]):
        raise ValueError("x0 must be n_nodes x d_0")
    if n_columns < 1:
        raise ValueError("n_columns must be >= 1")
    schemes = per_layer_schemes(cfg.scheme, cfg.hyper.n_layers)
    acc = np.zeros((graph.n_nodes, graph.n_nodes))
    for trial in range(cfg.n_trials):
        rng = _trial_rng(cfg.seed, 0, trial)
        z = _forward(rng, graph, x0, cfg.widths, cfg.hyper, schemes, n_out=n_columns)
        acc += z @ z.T
    return acc / (cfg.n_trials * n_columns)


def empirical_mask_check(
    scheme: SamplingScheme,
    c: np.ndarray,
    n_draws: int,
    seed: int,
    graph: GraphSpec | None = None,
    pair: tuple[int, int] | None = None,
) -> np.ndarray:
    """Empirical mean of the rescaled-indicator outer product, times ``c``.

    Simulates the diagonal estimators of the chosen scheme and averages
    s s'^T entrywise against ``c``; the result converges to mask * c.  For
    node-wise sampling a (graph, pair) is required and the per-pair mask of
    that (x, x') is estimated; the x == x' case reuses one draw for both
    sides, matching the estimator's actual dependence structure.
    """
    c = np.asarray(c, dtype=float)
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    rng = np.random.default_rng(seed)
    if isinstance(scheme, LayerWithReplacement):
        counts = rng.multinomial(scheme.n_samples, scheme.p, size=n_draws)
        s = counts / (scheme.n_samples * scheme.p)
        return (s.T @ s / n_draws) * c
    if isinstance(scheme, LayerWithoutReplacement):
        s = (rng.random((n_draws, scheme.q.size)) < scheme.q) / scheme.q
        return (s.T @ s / n_draws) * c
    if isinstance(scheme, NodeWise):
        if graph is None or pair is None:
            raise ValueError("node-wise check needs a graph and an (x, x') pair")
        x, x_prime = pair
        q = nodewise_probabilities(graph, scheme.fanout)
        s_x = _indicator_draws(rng, q[x], n_draws)
        s_xp = s_x if x == x_prime else _indicator_draws(rng, q[x_prime], n_draws)
        return (s_x.T @ s_xp / n_draws) * c
    raise TypeError(f"no stochastic estimator for scheme {scheme!r}")


def _indicator_draws(rng, q_row: np.ndarray, n_draws: int) -> np.ndarray:
    keep = (rng.random((n_draws, q_row.size)) < q_row[None, :]).astype(float)
    out = np.zeros_like(keep)
    np.divide(keep, q_row[None, :], out=out, where=q_row[None, :] > 0.0)
    return out


def train_finite_gcn(
    graph: GraphSpec,
    x0: np.ndarray,
    cfg: FiniteGcnConfig,
    split: TrainSplit,
    eta: float,
    n_steps: int,
) -> np.ndarray:
    """Full-batch gradient descent on the mean squared training loss.

    Returns the output trajectory, shape (n_steps + 1, n_nodes); entry 0 is
    the random initialization.  Training uses exact aggregation (the sampling
    scheme in ``cfg`` plays no role here).  Stops early with a warning if the
    output norm exceeds 1e6.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (graph.n_nodes, cfg.widths[0]):
        raise ValueError("x0 must be n_nodes x d_0")
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    if eta <= 0:
        raise ValueError("learning rate must be positive")
    a = graph.adjacency
    hyper = cfg.hyper
    n_layers = hyper.n_layers
    sw = np.sqrt(hyper.sigma_w2)
    sb = np.sqrt(hyper.sigma_b2)
    rng = np.random.default_rng(cfg.seed)
    weights = []
    biases = []
    for layer in range(1, n_layers + 1):
        weights.append(rng.standard_normal((cfg.widths[layer - 1], cfg.widths[layer])))
        biases.append(rng.standard_normal(cfg.widths[layer]))

    b_idx = split.train_idx
    n_b = b_idx.size
    y_b = split.y_b

    def forward():
        xs = [x0]  # post-activation inputs per layer
        zs = []
        x = x0
        for layer in range(n_layers):
            scale = sw / np.sqrt(cfg.widths[layer])
            z = scale * (a @ x @ weights[layer]) + sb * biases[layer][None, :]
            zs.append(z)
            if layer < n_layers - 1:
                x = _apply(hyper.activation, z)[0]
                xs.append(x)
        return xs, zs

    trajectory = np.empty((n_steps + 1, graph.n_nodes))
    xs, zs = forward()
    f = zs[-1][:, 0]
    trajectory[0] = f
    for step in range(1, n_steps + 1):
        if np.linalg.norm(f) > DIVERGENCE_NORM:
            warnings.warn(
                f"training diverged at step {step - 1} (|f| > {DIVERGENCE_NORM:g})",
                RuntimeWarning,
                stacklevel=2,
            )
            return trajectory[:step]
        grad_f = np.zeros((graph.n_nodes, 1))
        grad_f[b_idx, 0] = (f[b_idx] - y_b) / n_b
        g = grad_f
        grads_w = [None] * n_layers
        grads_b = [None] * n_layers
        for layer in range(n_layers - 1, -1, -1):
            scale = sw / np.sqrt(cfg.widths[layer])
            ax = a @ xs[layer]
            grads_w[layer] = scale * (ax.T @ g)
            grads_b[layer] = sb * g.sum(axis=0)
            if layer > 0:
                g = (scale * (a.T @ g @ weights[layer].T)) * _apply(hyper.activation, zs[layer - 1])[1]
        for layer in range(n_layers):
            weights[layer] -= eta * grads_w[layer]
            biases[layer] -= eta * grads_b[layer]
        xs, zs = forward()
        f = zs[-1][:, 0]
        trajectory[step] = f
    return trajectory
