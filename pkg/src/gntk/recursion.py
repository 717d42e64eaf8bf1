"""Layer recursion for the covariance and tangent kernel of wide graph networks.

Supports exact (no-sampling) aggregation plus three stochastic-aggregation
schemes, each entering the recursion as an entrywise masking matrix applied
to the propagated moment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .activations import ACTIVATIONS, moments
from .graphs import GraphSpec

__all__ = [
    "GcnHyper",
    "NoSampling",
    "LayerWithReplacement",
    "LayerWithoutReplacement",
    "NodeWise",
    "SamplingScheme",
    "KernelPair",
    "mask_with_replacement",
    "mask_without_replacement",
    "nodewise_probabilities",
    "nodewise_mask",
    "gcn_kernels",
    "nodewise_kernel_entry",
    "MaskPropertyReport",
    "mask_properties_report",
    "scaled_q_from_p",
    "fastgcn_probabilities",
    "per_layer_schemes",
    "uniform_probabilities",
]


@dataclass(frozen=True)
class GcnHyper:
    """Scale factors, depth, and activation of the network."""

    sigma_w2: float
    sigma_b2: float
    n_layers: int
    activation: str = "relu"

    def __post_init__(self):
        if self.sigma_w2 <= 0:
            raise ValueError("sigma_w2 must be positive")
        if self.sigma_b2 < 0:
            raise ValueError("sigma_b2 must be nonnegative")
        if self.n_layers < 1:
            raise ValueError("need at least one layer")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class NoSampling:
    """Exact neighborhood aggregation."""


@dataclass(frozen=True, eq=False)
class LayerWithReplacement:
    """One shared categorical sample of ``n_samples`` nodes per layer.

    ``p`` is the proposal distribution; sampled contributions are rescaled
    by 1/p, so every entry must be strictly positive.
    """

    p: np.ndarray
    n_samples: int

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 1 or np.any(p <= 0.0):
            raise ValueError("sampling probabilities must be strictly positive")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("sampling probabilities must sum to 1")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        object.__setattr__(self, "p", p)


@dataclass(frozen=True, eq=False)
class LayerWithoutReplacement:
    """Independent per-node inclusion with probability q(v) in (0, 1]."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 1 or np.any(q <= 0.0) or np.any(q > 1.0):
            raise ValueError("inclusion probabilities must lie in (0, 1]")
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class NodeWise:
    """Per-destination uniform neighbor subsampling with a fanout budget."""

    fanout: int

    def __post_init__(self):
        if self.fanout < 1:
            raise ValueError("fanout must be >= 1")


SamplingScheme = NoSampling | LayerWithReplacement | LayerWithoutReplacement | NodeWise


@dataclass(frozen=True, eq=False)
class KernelPair:
    """Covariance matrix ``k`` and tangent kernel ``theta`` after ``layer`` layers."""

    k: np.ndarray
    theta: np.ndarray
    layer: int

    def validate(self, sym_tol: float = 1e-8, psd_tol: float = 1e-8) -> None:
        for m in (self.k, self.theta):
            if not np.allclose(m, m.T, atol=sym_tol, rtol=0.0):
                raise AssertionError("kernel matrix not symmetric")
            scale = max(1.0, float(np.abs(np.diag(m)).max()))
            if np.linalg.eigvalsh(0.5 * (m + m.T)).min() < -psd_tol * scale:
                raise AssertionError("kernel matrix not PSD")


def uniform_probabilities(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def fastgcn_probabilities(graph: GraphSpec) -> np.ndarray:
    """Proposal distribution proportional to the squared 2-norm of each adjacency column."""
    w = (graph.adjacency**2).sum(axis=0)
    total = w.sum()
    if total <= 0:
        raise ValueError("graph has no edges; importance distribution undefined")
    return w / total


def mask_with_replacement(p: np.ndarray, n_samples: int) -> np.ndarray:
    """Mask for a shared size-``n_samples`` categorical sample with proposal ``p``.

    Diagonal 1 + (1-p)/(p n); off-diagonal 1 - 1/n.  Tends to all-ones as
    the sample size grows.
    """
    scheme = LayerWithReplacement(p=p, n_samples=n_samples)
    p = scheme.p
    m = np.full((p.size, p.size), 1.0 - 1.0 / n_samples)
    np.fill_diagonal(m, 1.0 + (1.0 - p) / (p * n_samples))
    return m


def mask_without_replacement(q: np.ndarray) -> np.ndarray:
    """Mask for independent inclusion: diagonal 1/q, off-diagonal 1."""
    scheme = LayerWithoutReplacement(q=q)
    q = scheme.q
    m = np.ones((q.size, q.size))
    np.fill_diagonal(m, 1.0 / q)
    return m


def nodewise_probabilities(graph: GraphSpec, fanout: int) -> np.ndarray:
    """Inclusion probabilities q[x, v] for per-destination neighbor subsampling.

    q[x, v] = min(fanout / deg(x), 1) on the neighborhood of x, 0 elsewhere.
    """
    if fanout < 1:
        raise ValueError("fanout must be >= 1")
    n = graph.n_nodes
    q = np.zeros((n, n))
    for x, nb in enumerate(graph.neighborhoods):
        if nb.size == 0:
            continue
        q[x, nb] = 1.0 if nb.size < fanout else fanout / nb.size
    return q


def nodewise_mask(graph: GraphSpec, fanout: int, x: int, x_prime: int) -> np.ndarray:
    """Literal per-pair mask of node-wise sampling (used as a cross-check oracle).

    For x == x': 1/q on the neighborhood diagonal, 1 on the off-diagonal of
    the neighborhood block, 0 elsewhere.  For x != x': the indicator of
    the N(x) x N(x') block.
    """
    n = graph.n_nodes
    q = nodewise_probabilities(graph, fanout)
    nb_x = graph.neighborhoods[x]
    m = np.zeros((n, n))
    if x == x_prime:
        m[np.ix_(nb_x, nb_x)] = 1.0
        m[nb_x, nb_x] = 1.0 / q[x, nb_x]
    else:
        nb_xp = graph.neighborhoods[x_prime]
        m[np.ix_(nb_x, nb_xp)] = 1.0
    return m


def per_layer_schemes(scheme, n_layers: int) -> list:
    """Broadcast a single scheme to every layer, or validate a per-layer list."""
    if isinstance(scheme, (list, tuple)):
        if len(scheme) != n_layers:
            raise ValueError(f"need one scheme per layer ({n_layers}), got {len(scheme)}")
        return list(scheme)
    return [scheme] * n_layers


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _nodewise_correction(a: np.ndarray, q: np.ndarray, diag_moment: np.ndarray) -> np.ndarray:
    # Off-support A entries are zero, so only supported q entries are inverted.
    excess = np.zeros_like(q)
    np.divide(1.0, q, out=excess, where=q > 0.0)
    excess -= (q > 0.0).astype(float)
    return (a * a * excess) @ diag_moment


def _layer_step(
    graph: GraphSpec,
    c: np.ndarray,
    v: np.ndarray,
    hyper: GcnHyper,
    scheme: SamplingScheme,
) -> tuple[np.ndarray, np.ndarray]:
    """One recursion step: propagate the moment ``c`` (-> k) and ``v`` (-> theta)."""
    a = graph.adjacency
    sw, sb = hyper.sigma_w2, hyper.sigma_b2
    if isinstance(scheme, NoSampling):
        k = sb + sw * (a @ c @ a.T)
        theta = sb + sw * (a @ v @ a.T)
    elif isinstance(scheme, LayerWithReplacement):
        m = mask_with_replacement(scheme.p, scheme.n_samples)
        k = sb + sw * (a @ (m * c) @ a.T)
        theta = sb + sw * (a @ (m * v) @ a.T)
    elif isinstance(scheme, LayerWithoutReplacement):
        m = mask_without_replacement(scheme.q)
        k = sb + sw * (a @ (m * c) @ a.T)
        theta = sb + sw * (a @ (m * v) @ a.T)
    elif isinstance(scheme, NodeWise):
        # Off-diagonal entries coincide with exact aggregation; the per-pair
        # mask only perturbs the diagonal (see nodewise_kernel_entry).
        q = nodewise_probabilities(graph, scheme.fanout)
        k = sb + sw * (a @ c @ a.T)
        theta = sb + sw * (a @ v @ a.T)
        k[np.diag_indices_from(k)] += sw * _nodewise_correction(a, q, np.diag(c))
        theta[np.diag_indices_from(theta)] += sw * _nodewise_correction(a, q, np.diag(v))
    else:
        raise TypeError(f"unknown sampling scheme {scheme!r}")
    return _sym(k), _sym(theta)


def gcn_kernels(
    graph: GraphSpec,
    c0,
    hyper: GcnHyper,
    scheme: SamplingScheme | list = NoSampling(),
) -> KernelPair:
    """Covariance and tangent kernel of an ``n_layers``-deep graph-convolution net.

    ``scheme`` may be a single sampling scheme (broadcast to all layers) or a
    per-layer list.  The final layer is linear: no activation moment is taken
    after the last step.
    """
    c = np.asarray(getattr(c0, "c0", c0), dtype=float)
    if c.shape != (graph.n_nodes, graph.n_nodes):
        raise ValueError("feature moment shape does not match the graph")
    schemes = per_layer_schemes(scheme, hyper.n_layers)
    theta = np.zeros_like(c)
    c_dot = np.zeros_like(c)
    k = c
    for layer, layer_scheme in enumerate(schemes, start=1):
        v = theta * c_dot + c
        k, theta = _layer_step(graph, c, v, hyper, layer_scheme)
        if layer < hyper.n_layers:
            mp = moments(k, hyper.activation)
            c, c_dot = mp.c, mp.c_dot
    return KernelPair(k=k, theta=theta, layer=hyper.n_layers)


def nodewise_kernel_entry(
    graph: GraphSpec,
    c_prev: np.ndarray,
    v_prev: np.ndarray,
    hyper: GcnHyper,
    fanout: int,
    x: int,
    x_prime: int,
) -> tuple[float, float]:
    """Single (x, x') kernel entry under node-wise sampling, via the literal mask.

    Materializes the per-pair masking matrix; the fast path in
    :func:`gcn_kernels` must agree with this entrywise.
    """
    m = nodewise_mask(graph, fanout, x, x_prime)
    ax = graph.adjacency[x]
    axp = graph.adjacency[x_prime]
    k = hyper.sigma_b2 + hyper.sigma_w2 * float(ax @ (m * c_prev) @ axp)
    theta = hyper.sigma_b2 + hyper.sigma_w2 * float(ax @ (m * v_prev) @ axp)
    return k, theta


def scaled_q_from_p(p: np.ndarray, n_samples: int) -> np.ndarray:
    """Inclusion probabilities q = n_samples * p, rejecting values above 1."""
    p = np.asarray(p, dtype=float)
    q = n_samples * p
    if np.any(q > 1.0 + 1e-12):
        raise ValueError("n_samples * p exceeds 1; no matching without-replacement scheme")
    return np.minimum(q, 1.0)


@dataclass(frozen=True, eq=False)
class MaskPropertyReport:
    """Spectral facts about the two layer-sampling masks."""

    min_eig_p: float
    min_eig_q: float
    spectrum_p_minus_q: np.ndarray
    min_eig_p_hadamard: float | None = None
    min_eig_q_hadamard: float | None = None


def mask_properties_report(
    p: np.ndarray,
    q: np.ndarray,
    n_samples: int,
    b: np.ndarray | None = None,
) -> MaskPropertyReport:
    """Min-eigenvalue checks of (mask - all-ones) dominance and the M_p - M_q spectrum.

    When a PSD matrix ``b`` is supplied, also reports the minimum eigenvalues
    of M_p*b - b and M_q*b - b (entrywise products).
    """
    mp = mask_with_replacement(p, n_samples)
    mq = mask_without_replacement(q)
    ones = np.ones_like(mp)
    min_eig_p = float(np.linalg.eigvalsh(_sym(mp - ones)).min())
    min_eig_q = float(np.linalg.eigvalsh(_sym(mq - ones)).min())
    spectrum = np.linalg.eigvalsh(_sym(mp - mq))
    hp = hq = None
    if b is not None:
        b = np.asarray(b, dtype=float)
        hp = float(np.linalg.eigvalsh(_sym(mp * b - b)).min())
        hq = float(np.linalg.eigvalsh(_sym(mq * b - b)).min())
    return MaskPropertyReport(
        min_eig_p=min_eig_p,
        min_eig_q=min_eig_q,
        spectrum_p_minus_q=spectrum,
        min_eig_p_hadamard=hp,
        min_eig_q_hadamard=hq,
    )
