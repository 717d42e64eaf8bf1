"""Composable kernel transformations: build a network as a block program.

Each building block of a layer carries a deterministic transformation of the
pair (k, theta).  Interpreting a block list therefore yields the covariance
and tangent kernel of the full architecture, which is how the GraphSAGE-style
variants below are derived.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .activations import ACTIVATIONS, moments
from .graphs import GraphSpec
from .recursion import (
    GcnHyper,
    KernelPair,
    LayerWithReplacement,
    LayerWithoutReplacement,
    NodeWise,
    NoSampling,
    _nodewise_correction,
    mask_with_replacement,
    mask_without_replacement,
    nodewise_probabilities,
    per_layer_schemes,
)

__all__ = [
    "KernelState",
    "Input",
    "Bias",
    "Weight",
    "MixedWeight",
    "GraphConv",
    "Activation",
    "IndependentAdd",
    "LayerSample",
    "NodeSample",
    "BlockInstr",
    "apply_block",
    "run_program",
    "validate_program",
    "gcn_program",
    "graphsage_program",
    "graphsage_kernels",
    "graphsage_nodewise_kernels",
    "program_to_json",
    "program_from_json",
]


@dataclass(frozen=True, eq=False)
class KernelState:
    k: np.ndarray
    theta: np.ndarray


@dataclass(frozen=True)
class Input:
    """Start of a program: k <- input second moment, theta <- 0."""


@dataclass(frozen=True)
class Bias:
    sigma_b2: float

    def __post_init__(self):
        if self.sigma_b2 < 0:
            raise ValueError("sigma_b2 must be nonnegative")


@dataclass(frozen=True)
class Weight:
    sigma_w2: float

    def __post_init__(self):
        if self.sigma_w2 <= 0:
            raise ValueError("sigma_w2 must be positive")


@dataclass(frozen=True)
class MixedWeight:
    """x <- x (alpha I + beta sigma_w/sqrt(d) W): a residual-style mixed map."""

    alpha: float
    beta: float
    sigma_w2: float


@dataclass(frozen=True)
class GraphConv:
    """Exact aggregation x <- A x."""


@dataclass(frozen=True)
class Activation:
    kind: str

    def __post_init__(self):
        if self.kind not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.kind!r}")


@dataclass(frozen=True, eq=False)
class IndependentAdd:
    """Sum of two branches evaluated from the same upstream state.

    The two branches must use independent weights; evaluating both from one
    shared input state and adding the results encodes exactly that.
    """

    left: tuple
    right: tuple

    def __post_init__(self):
        object.__setattr__(self, "left", tuple(self.left))
        object.__setattr__(self, "right", tuple(self.right))


@dataclass(frozen=True, eq=False)
class LayerSample:
    """Stochastic aggregation with a shared per-layer sample: k <- A (M*k) A^T."""

    mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=float))


@dataclass(frozen=True)
class NodeSample:
    """Stochastic aggregation with per-destination neighbor subsampling."""

    fanout: int

    def __post_init__(self):
        if self.fanout < 1:
            raise ValueError("fanout must be >= 1")


BlockInstr = (
    Input
    | Bias
    | Weight
    | MixedWeight
    | GraphConv
    | Activation
    | IndependentAdd
    | LayerSample
    | NodeSample
)


def _require_graph(graph: GraphSpec | None, instr) -> GraphSpec:
    if graph is None:
        raise ValueError(f"{type(instr).__name__} needs a graph")
    return graph


def apply_block(
    state: KernelState | None,
    instr: BlockInstr,
    graph: GraphSpec | None = None,
    c0: np.ndarray | None = None,
) -> KernelState:
    """Apply one building block to the running (k, theta) state.

    ``state`` is None only for the leading Input block; ``c0`` supplies the
    input second moment at that point.  Aggregation blocks need ``graph``.
    """
    if isinstance(instr, Input):
        if c0 is None:
            raise ValueError("Input block needs the input second moment c0")
        c = np.asarray(getattr(c0, "c0", c0), dtype=float)
        return KernelState(k=c.copy(), theta=np.zeros_like(c))
    if state is None:
        raise ValueError("program must start with an Input block")
    k, theta = state.k, state.theta
    if isinstance(instr, Bias):
        return KernelState(k=k + instr.sigma_b2, theta=theta + instr.sigma_b2)
    if isinstance(instr, Weight):
        return KernelState(k=instr.sigma_w2 * k, theta=instr.sigma_w2 * theta + instr.sigma_w2 * k)
    if isinstance(instr, MixedWeight):
        s = instr.alpha**2 + instr.beta**2 * instr.sigma_w2
        return KernelState(k=s * k, theta=s * theta + instr.beta**2 * instr.sigma_w2 * k)
    if isinstance(instr, GraphConv):
        a = _require_graph(graph, instr).adjacency
        return KernelState(k=a @ k @ a.T, theta=a @ theta @ a.T)
    if isinstance(instr, Activation):
        if not np.allclose(k, k.T, atol=1e-8, rtol=0.0):
            raise ValueError("activation applied to an asymmetric state")
        mp = moments(k, instr.kind)  # both outputs read the pre-activation k
        return KernelState(k=mp.c, theta=theta * mp.c_dot)
    if isinstance(instr, IndependentAdd):
        left = state
        for sub in instr.left:
            left = apply_block(left, sub, graph=graph, c0=c0)
        right = state
        for sub in instr.right:
            right = apply_block(right, sub, graph=graph, c0=c0)
        return KernelState(k=left.k + right.k, theta=left.theta + right.theta)
    if isinstance(instr, LayerSample):
        a = _require_graph(graph, instr).adjacency
        m = instr.mask
        return KernelState(k=a @ (m * k) @ a.T, theta=a @ (m * theta) @ a.T)
    if isinstance(instr, NodeSample):
        g = _require_graph(graph, instr)
        a = g.adjacency
        q = nodewise_probabilities(g, instr.fanout)
        new_k = a @ k @ a.T
        new_theta = a @ theta @ a.T
        new_k[np.diag_indices_from(new_k)] += _nodewise_correction(a, q, np.diag(k))
        new_theta[np.diag_indices_from(new_theta)] += _nodewise_correction(a, q, np.diag(theta))
        return KernelState(k=new_k, theta=new_theta)
    raise TypeError(f"unknown block {instr!r}")


def validate_program(program) -> None:
    """Static checks: starts with Input, and NodeSample replaces the aggregation
    of a layer (it must directly follow a weight block)."""
    program = list(program)
    if not program or not isinstance(program[0], Input):
        raise ValueError("program must start with an Input block")
    if any(isinstance(instr, Input) for instr in program[1:]):
        raise ValueError("Input may appear only once, at the start")
    _validate_tail(program[1:])


def _validate_tail(instrs) -> None:
    prev = None
    for instr in instrs:
        if isinstance(instr, NodeSample) and not isinstance(prev, (Weight, MixedWeight)):
            raise ValueError("NodeSample must directly follow a weight block")
        if isinstance(instr, IndependentAdd):
            _validate_tail(instr.left)
            _validate_tail(instr.right)
        prev = instr


def run_program(program, graph: GraphSpec | None = None, c0=None) -> KernelState:
    """Interpret a block program into its final (k, theta) state."""
    validate_program(program)
    state = None
    for instr in program:
        state = apply_block(state, instr, graph=graph, c0=c0)
    return state


def _aggregation_block(scheme) -> BlockInstr:
    if isinstance(scheme, NoSampling):
        return GraphConv()
    if isinstance(scheme, LayerWithReplacement):
        return LayerSample(mask_with_replacement(scheme.p, scheme.n_samples))
    if isinstance(scheme, LayerWithoutReplacement):
        return LayerSample(mask_without_replacement(scheme.q))
    if isinstance(scheme, NodeWise):
        return NodeSample(scheme.fanout)
    raise TypeError(f"unknown sampling scheme {scheme!r}")


def gcn_program(hyper: GcnHyper, scheme=NoSampling()) -> list:
    """Block program of a graph-convolution net.

    Layer 1 consumes the raw input moment, so its leading activation is
    omitted; layers 2..L read the previous pre-activation state through the
    activation block.
    """
    schemes = per_layer_schemes(scheme, hyper.n_layers)
    program: list = [Input()]
    for layer, layer_scheme in enumerate(schemes, start=1):
        if layer > 1:
            program.append(Activation(hyper.activation))
        program.append(Weight(hyper.sigma_w2))
        program.append(_aggregation_block(layer_scheme))
        program.append(Bias(hyper.sigma_b2))
    return program


def graphsage_program(hyper: GcnHyper, scheme=NoSampling()) -> list:
    """Block program of a GraphSAGE-style net: per layer, an independent sum of
    a node-local weight branch and an aggregate-then-weight branch, plus bias."""
    schemes = per_layer_schemes(scheme, hyper.n_layers)
    program: list = [Input()]
    for layer, layer_scheme in enumerate(schemes, start=1):
        if layer > 1:
            program.append(Activation(hyper.activation))
        program.append(
            IndependentAdd(
                left=(Weight(hyper.sigma_w2),),
                right=(Weight(hyper.sigma_w2), _aggregation_block(layer_scheme)),
            )
        )
        program.append(Bias(hyper.sigma_b2))
    return program


def graphsage_kernels(graph: GraphSpec, c0, hyper: GcnHyper) -> KernelPair:
    """GraphSAGE kernels via block composition (exact aggregation)."""
    state = run_program(graphsage_program(hyper), graph=graph, c0=c0)
    return KernelPair(k=state.k, theta=state.theta, layer=hyper.n_layers)


def graphsage_nodewise_kernels(graph: GraphSpec, c0, hyper: GcnHyper, fanout: int) -> KernelPair:
    """GraphSAGE kernels with node-wise neighbor subsampling in every layer."""
    program = graphsage_program(hyper, scheme=NodeWise(fanout))
    state = run_program(program, graph=graph, c0=c0)
    return KernelPair(k=state.k, theta=state.theta, layer=hyper.n_layers)


def program_to_json(program) -> list[dict]:
    """Serialize a block program to plain JSON-compatible data."""
    out = []
    for instr in program:
        if isinstance(instr, Input):
            out.append({"op": "input"})
        elif isinstance(instr, Bias):
            out.append({"op": "bias", "sigma_b2": instr.sigma_b2})
        elif isinstance(instr, Weight):
            out.append({"op": "weight", "sigma_w2": instr.sigma_w2})
        elif isinstance(instr, MixedWeight):
            out.append(
                {
                    "op": "mixed_weight",
                    "alpha": instr.alpha,
                    "beta": instr.beta,
                    "sigma_w2": instr.sigma_w2,
                }
            )
        elif isinstance(instr, GraphConv):
            out.append({"op": "graph_conv"})
        elif isinstance(instr, Activation):
            out.append({"op": "activation", "kind": instr.kind})
        elif isinstance(instr, IndependentAdd):
            out.append(
                {
                    "op": "independent_add",
                    "left": program_to_json(instr.left),
                    "right": program_to_json(instr.right),
                }
            )
        elif isinstance(instr, LayerSample):
            out.append({"op": "layer_sample", "mask": instr.mask.tolist()})
        elif isinstance(instr, NodeSample):
            out.append({"op": "node_sample", "fanout": instr.fanout})
        else:
            raise TypeError(f"unknown block {instr!r}")
    return out


def program_from_json(data) -> list:
    """Parse a block program from JSON data.

    A ``layer_sample`` entry may carry an explicit ``mask`` matrix, or the
    sampling parameters ``p`` + ``n_samples`` (shared categorical sample) or
    ``q`` (independent inclusion), from which the mask is built.
    """
    program = []
    for entry in data:
        op = entry.get("op")
        if op == "input":
            program.append(Input())
        elif op == "bias":
            program.append(Bias(float(entry["sigma_b2"])))
        elif op == "weight":
            program.append(Weight(float(entry["sigma_w2"])))
        elif op == "mixed_weight":
            program.append(
                MixedWeight(float(entry["alpha"]), float(entry["beta"]), float(entry["sigma_w2"]))
            )
        elif op == "graph_conv":
            program.append(GraphConv())
        elif op == "activation":
            program.append(Activation(entry["kind"]))
        elif op == "independent_add":
            program.append(
                IndependentAdd(
                    left=program_from_json(entry["left"]),
                    right=program_from_json(entry["right"]),
                )
            )
        elif op == "layer_sample":
            if "mask" in entry:
                program.append(LayerSample(np.asarray(entry["mask"], dtype=float)))
            elif "p" in entry:
                program.append(
                    LayerSample(mask_with_replacement(np.asarray(entry["p"]), int(entry["n_samples"])))
                )
            elif "q" in entry:
                program.append(LayerSample(mask_without_replacement(np.asarray(entry["q"]))))
            else:
                raise ValueError("layer_sample needs 'mask', 'p'+'n_samples', or 'q'")
        elif op == "node_sample":
            program.append(NodeSample(int(entry["fanout"])))
        else:
            raise ValueError(f"unknown program op {op!r}")
    return program
