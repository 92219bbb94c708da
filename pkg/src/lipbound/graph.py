"""Computation graphs and forward propagation of per-node Lipschitz bounds.

Node 0 is the input; every other node applies a registered kind to its
predecessors. The bound sweep assigns L_0 = 1 and, in topological order,

    L_k = sum over predecessors i of  sup|partial_i| * L_i,

where predecessors with no path from the input are constants: they carry
L_i = 0 and contribute only through their values (e.g. the fixed factor of
a product node). The final L at the output node upper-bounds the Lipschitz
constant of the whole graph.
"""

from dataclasses import dataclass

import numpy as np

from .core import as_tensor
from .errors import CyclicGraph, ShapeMismatch, UnboundedPartial
from .operators import AffineOperator, SequentialNet
from .report import BoundReport
from .spectral import PowerConfig, operator_norm


@dataclass(frozen=True)
class GraphNode:
    kind: str
    inputs: tuple = ()
    params: dict | None = None

    def param(self, key, default=None):
        if self.params is None:
            return default
        return self.params.get(key, default)


def _eval_maxpool(x, node):
    c, h, w = node.param("shape")
    wh, ww = node.param("window")
    x = x.reshape(c, h, w)
    return x.reshape(c, h // wh, wh, w // ww, ww).max(axis=(2, 4))


def _require_const_factor(values, k):
    const = [v for v in values if v is not None]
    if len(const) != 1:
        raise UnboundedPartial(
            f"node {k}: product of two non-constant operands has no global "
            "derivative bound"
        )
    return float(np.max(np.abs(const[0]))) if np.size(const[0]) else 0.0


class _Kind:
    def __init__(self, arity, evaluate, partial_bound):
        self.arity = arity  # None for variadic (>= 2)
        self.evaluate = evaluate
        self.partial_bound = partial_bound


def _affine_norm(node, cfg):
    op = node.param("op")
    return operator_norm(op, cfg)


_KINDS = {
    "input": _Kind(0, None, None),
    "constant": _Kind(
        0,
        lambda args, node, cfg: as_tensor(node.param("value")),
        None,
    ),
    "affine": _Kind(
        1,
        lambda args, node, cfg: node.param("op").apply(args[0]),
        lambda i, values, node, cfg, k: _affine_norm(node, cfg),
    ),
    "activation": _Kind(
        1,
        lambda args, node, cfg: node.param("act").apply(args[0]),
        lambda i, values, node, cfg, k: node.param("act").lipschitz_constant,
    ),
    "add": _Kind(
        None,
        lambda args, node, cfg: sum(args[1:], start=args[0]),
        lambda i, values, node, cfg, k: 1.0,
    ),
    "subtract": _Kind(
        2,
        lambda args, node, cfg: args[0] - args[1],
        lambda i, values, node, cfg, k: 1.0,
    ),
    "scale": _Kind(
        1,
        lambda args, node, cfg: node.param("factor") * args[0],
        lambda i, values, node, cfg, k: abs(float(node.param("factor"))),
    ),
    "abs": _Kind(
        1,
        lambda args, node, cfg: np.abs(args[0]),
        lambda i, values, node, cfg, k: 1.0,
    ),
    "sin": _Kind(
        1,
        lambda args, node, cfg: np.sin(args[0]),
        lambda i, values, node, cfg, k: 1.0,
    ),
    "softplus_unary": _Kind(
        1,
        lambda args, node, cfg: np.logaddexp(0.0, args[0]),
        lambda i, values, node, cfg, k: 1.0,
    ),
    "product": _Kind(
        2,
        lambda args, node, cfg: args[0] * args[1],
        lambda i, values, node, cfg, k: _require_const_factor(values, k),
    ),
    "maxpool": _Kind(
        1,
        lambda args, node, cfg: _eval_maxpool(args[0], node),
        lambda i, values, node, cfg, k: 1.0,
    ),
}


@dataclass
class LipBoundTrace:
    per_node: list
    value: float
    constant_mask: list


class ComputationGraph:
    """DAG of typed nodes; node 0 is the input, one node is the output."""

    def __init__(self, nodes, output: int | None = None):
        nodes = list(nodes)
        if not nodes or nodes[0].kind != "input":
            raise ShapeMismatch("node 0 must be the input node")
        for k, node in enumerate(nodes):
            if node.kind not in _KINDS:
                raise ShapeMismatch(f"node {k}: unknown kind {node.kind!r}")
            if k > 0 and node.kind == "input":
                raise ShapeMismatch("only node 0 may be the input")
            spec = _KINDS[node.kind]
            if spec.arity is None:
                if len(node.inputs) < 2:
                    raise ShapeMismatch(f"node {k}: {node.kind} needs >= 2 inputs")
            elif len(node.inputs) != spec.arity:
                raise ShapeMismatch(
                    f"node {k}: {node.kind} takes {spec.arity} inputs, "
                    f"got {len(node.inputs)}"
                )
            for i in node.inputs:
                if not 0 <= i < len(nodes) or i == k:
                    raise ShapeMismatch(f"node {k}: bad predecessor {i}")
        self.nodes = nodes
        self.output = len(nodes) - 1 if output is None else int(output)
        if not 0 <= self.output < len(nodes):
            raise ShapeMismatch(f"output node {self.output} does not exist")
        self._order = self._toposort()

    @property
    def input_dim(self) -> int:
        return int(np.prod(self.input_shape))

    @property
    def input_shape(self):
        shape = self.nodes[0].param("shape")
        if shape is None:
            return (int(self.nodes[0].param("dim", 1)),)
        return tuple(int(d) for d in shape)

    def _toposort(self):
        n = len(self.nodes)
        indeg = [len(set(node.inputs)) for node in self.nodes]
        succs = [[] for _ in range(n)]
        for k, node in enumerate(self.nodes):
            for i in set(node.inputs):
                succs[i].append(k)
        ready = [k for k in range(n) if indeg[k] == 0]
        order = []
        while ready:
            k = ready.pop()
            order.append(k)
            for s in succs[k]:
                indeg[s] -= 1
                if indeg[s] == 0:
                    ready.append(s)
        if len(order) != n:
            raise CyclicGraph("graph contains a cycle")
        return order

    def evaluate(self, x, cfg: PowerConfig | None = None):
        """Forward-evaluate every node; returns the output node's value."""
        return self._evaluate_all(x, cfg)[self.output]

    def _evaluate_all(self, x, cfg=None):
        values = [None] * len(self.nodes)
        values[0] = as_tensor(x, shape=self.input_shape)
        for k in self._order:
            if k == 0:
                continue
            node = self.nodes[k]
            args = [values[i] for i in node.inputs]
            values[k] = _KINDS[node.kind].evaluate(args, node, cfg)
        return values

    def classify_constants(self) -> list:
        """True for nodes with no path from the input node."""
        n = len(self.nodes)
        succs = [[] for _ in range(n)]
        for k, node in enumerate(self.nodes):
            for i in set(node.inputs):
                succs[i].append(k)
        reachable = [False] * n
        stack = [0]
        while stack:
            k = stack.pop()
            if reachable[k]:
                continue
            reachable[k] = True
            stack.extend(succs[k])
        return [not r for r in reachable]


def classify_constants(g: ComputationGraph) -> list:
    return g.classify_constants()


def autolip(g: ComputationGraph, cfg: PowerConfig | None = None) -> LipBoundTrace:
    """Single topological sweep of per-node Lipschitz bounds."""
    const = g.classify_constants()
    # constant nodes take their value at the zero input
    values = g._evaluate_all(np.zeros(g.input_shape), cfg)
    L = [0.0] * len(g.nodes)
    for k in g._order:
        if const[k]:
            continue
        if k == 0:
            L[0] = 1.0
            continue
        node = g.nodes[k]
        pred_const_values = [
            values[i] if const[i] else None for i in node.inputs
        ]
        total = 0.0
        for pos, i in enumerate(node.inputs):
            if const[i]:
                continue
            bound = _KINDS[node.kind].partial_bound(
                pos, pred_const_values, node, cfg, k
            )
            total += float(bound) * L[i]
        L[k] = total
    return LipBoundTrace(per_node=L, value=L[g.output], constant_mask=const)


def net_to_graph(net: SequentialNet) -> ComputationGraph:
    """Encode a sequential network as a chain-shaped computation graph."""
    nodes = [GraphNode("input", (), {"shape": list(net.input_shape)})]
    prev = 0
    for layer in net.layers:
        if isinstance(layer, AffineOperator):
            nodes.append(GraphNode("affine", (prev,), {"op": layer}))
        else:
            nodes.append(GraphNode("activation", (prev,), {"act": layer}))
        prev = len(nodes) - 1
    return ComputationGraph(nodes, output=prev)


def autolip_sequential(net: SequentialNet, cfg: PowerConfig | None = None,
                       norm_method: str = "auto") -> BoundReport:
    """Product of layer operator norms and activation Lipschitz constants."""
    per_layer = [operator_norm(op, cfg, method=norm_method) for op in net.affine]
    act_consts = [a.lipschitz_constant for a in net.activations]
    value = float(np.prod(per_layer) * np.prod(act_consts))
    params = {"norm_method": norm_method}
    if any(c != 1.0 for c in act_consts):
        params["activation_constants"] = act_consts
    return BoundReport(
        method="autolip",
        direction="upper",
        value=value,
        per_layer=per_layer,
        params=params,
    )
