"""Model interchange: the LNM container, graph JSON, and random generators.

An LNM file is a canonical JSON manifest, a ``\\n\\0`` separator, then a
blob of raw little-endian float32 tensors at 4-byte-aligned offsets.
Weights are stored in float32 and widened to float64 for computation, so a
save/load round trip is bit-exact on the stored weights.
"""

import json

import numpy as np

from .errors import (
    DepthTooSmall,
    OffsetOutOfRange,
    ParseError,
    SchemaViolation,
    ShapeMismatch,
)
from .graph import ComputationGraph, GraphNode
from .operators import Activation, Conv2dOperator, DenseOperator, SequentialNet

SEPARATOR = b"\n\x00"

_DENSE_KEYS = {"kind", "in", "out", "weight", "bias"}
_CONV_KEYS = {"kind", "in_channels", "out_channels", "kernel", "stride",
              "padding", "input_hw", "weight", "bias"}
_ACT_KEYS = {"kind", "name", "alpha"}


def _f32_bytes(arr) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


class _BlobWriter:
    def __init__(self):
        self.chunks = []
        self.offset = 0

    def add(self, arr) -> dict:
        data = _f32_bytes(arr)
        ref = {"offset": self.offset, "shape": list(arr.shape)}
        self.chunks.append(data)
        self.offset += len(data)  # f32 sizes keep 4-byte alignment
        return ref

    def bytes(self) -> bytes:
        return b"".join(self.chunks)


def save_lnm(net: SequentialNet, path) -> None:
    """Canonical serialization: layer order, minimal aligned offsets."""
    blob = _BlobWriter()
    layers = []
    for layer in net.layers:
        if isinstance(layer, DenseOperator):
            entry = {
                "kind": "dense",
                "in": layer.in_dim,
                "out": layer.out_dim,
                "weight": blob.add(layer.weight),
                "bias": None if layer.bias is None else blob.add(layer.bias),
            }
        elif isinstance(layer, Conv2dOperator):
            c, h, w = layer.input_shape
            entry = {
                "kind": "conv2d",
                "in_channels": c,
                "out_channels": layer.output_shape[0],
                "kernel": list(layer.kernel),
                "stride": list(layer.stride),
                "padding": list(layer.padding),
                "input_hw": [h, w],
                "weight": blob.add(layer.weight),
                "bias": None if layer.bias is None else blob.add(layer.bias),
            }
        elif isinstance(layer, Activation):
            entry = {"kind": "activation", "name": layer.name}
            if layer.name == "leaky_relu":
                entry["alpha"] = layer.alpha
        else:
            raise ShapeMismatch(f"cannot serialize layer {layer!r}")
        layers.append(entry)
    manifest = {
        "version": 1,
        "dtype": "f32",
        "byte_order": "little",
        "layers": layers,
    }
    payload = (
        json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
        + SEPARATOR
        + blob.bytes()
    )
    with open(path, "wb") as fh:
        fh.write(payload)


def _tensor_ref(ref, blob, what):
    if not isinstance(ref, dict) or set(ref) != {"offset", "shape"}:
        raise SchemaViolation(f"{what}: tensor reference needs offset and shape")
    offset = ref["offset"]
    shape = ref["shape"]
    if not isinstance(offset, int) or offset < 0:
        raise SchemaViolation(f"{what}: bad offset")
    if offset % 4 != 0:
        raise SchemaViolation(f"{what}: offset not 4-byte aligned")
    if (not isinstance(shape, list) or not shape
            or not all(isinstance(d, int) and d >= 1 for d in shape)):
        raise SchemaViolation(f"{what}: bad shape")
    count = int(np.prod(shape))
    end = offset + 4 * count
    if end > len(blob):
        raise OffsetOutOfRange(f"{what}: tensor [{offset}, {end}) past blob end")
    arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
    return arr.astype(np.float64).reshape(shape)


def _load_activation(entry, i):
    extra = set(entry) - _ACT_KEYS
    if extra:
        raise SchemaViolation(f"layer {i}: unknown keys {sorted(extra)}")
    name = entry.get("name")
    if not isinstance(name, str):
        raise SchemaViolation(f"layer {i}: activation needs a name")
    alpha = entry.get("alpha")
    if alpha is not None and name != "leaky_relu":
        raise SchemaViolation(f"layer {i}: alpha is only valid for leaky_relu")
    try:
        return Activation(name, alpha)
    except ShapeMismatch as exc:
        raise SchemaViolation(f"layer {i}: {exc}") from exc


def load_lnm(path) -> SequentialNet:
    with open(path, "rb") as fh:
        payload = fh.read()
    sep = payload.find(SEPARATOR)
    if sep < 0:
        raise ParseError("missing manifest separator")
    try:
        manifest = json.loads(payload[:sep].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"bad manifest JSON: {exc}") from exc
    blob = payload[sep + len(SEPARATOR):]
    if not isinstance(manifest, dict):
        raise SchemaViolation("manifest must be a JSON object")
    if manifest.get("version") != 1:
        raise SchemaViolation("unsupported version")
    if manifest.get("dtype") != "f32":
        raise SchemaViolation("unsupported dtype")
    if manifest.get("byte_order") != "little":
        raise SchemaViolation("unsupported byte order")
    entries = manifest.get("layers")
    if not isinstance(entries, list) or not entries:
        raise SchemaViolation("manifest needs a non-empty layer list")
    layers = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise SchemaViolation(f"layer {i}: not an object")
        kind = entry.get("kind")
        if kind == "dense":
            if set(entry) != _DENSE_KEYS:
                raise SchemaViolation(f"layer {i}: dense keys must be {sorted(_DENSE_KEYS)}")
            weight = _tensor_ref(entry["weight"], blob, f"layer {i} weight")
            if weight.ndim != 2 or weight.shape != (entry["out"], entry["in"]):
                raise SchemaViolation(f"layer {i}: weight shape disagrees with in/out")
            bias = None
            if entry["bias"] is not None:
                bias = _tensor_ref(entry["bias"], blob, f"layer {i} bias")
            layers.append(DenseOperator(weight, bias))
        elif kind == "conv2d":
            if set(entry) != _CONV_KEYS:
                raise SchemaViolation(f"layer {i}: conv2d keys must be {sorted(_CONV_KEYS)}")
            weight = _tensor_ref(entry["weight"], blob, f"layer {i} weight")
            expect = (entry["out_channels"], entry["in_channels"],
                      entry["kernel"][0], entry["kernel"][1])
            if weight.ndim != 4 or weight.shape != expect:
                raise SchemaViolation(f"layer {i}: weight shape disagrees with manifest")
            bias = None
            if entry["bias"] is not None:
                bias = _tensor_ref(entry["bias"], blob, f"layer {i} bias")
            layers.append(
                Conv2dOperator(
                    weight,
                    bias,
                    stride=entry["stride"],
                    padding=entry["padding"],
                    input_hw=entry["input_hw"],
                )
            )
        elif kind == "activation":
            layers.append(_load_activation(entry, i))
        else:
            raise SchemaViolation(f"layer {i}: unknown kind {kind!r}")
    return SequentialNet(layers)


def random_net(widths, activation: str = "relu", seed: int = 0,
               bias: bool = True, alpha: float | None = None) -> SequentialNet:
    """Dense stack with Gaussian weights scaled by 1/sqrt(fan-in)."""
    widths = [int(w) for w in widths]
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise ShapeMismatch("need at least [in, out] widths, all >= 1")
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(len(widths) - 1):
        fan_in = widths[i]
        weight = rng.standard_normal((widths[i + 1], fan_in)) / np.sqrt(fan_in)
        b = rng.standard_normal(widths[i + 1]) / np.sqrt(fan_in) if bias else None
        layers.append(DenseOperator(weight, b))
        if i < len(widths) - 2:
            layers.append(Activation(activation, alpha))
    return SequentialNet(layers)


_CNN_STACK_HEAD = [
    # (out_channels, kernel, stride, padding)
    (32, (5, 5), (2, 2), (0, 0)),
    (64, (3, 3), (2, 2), (0, 0)),
]
_CNN_STACK_BODY = (64, (3, 3), (1, 1), (1, 1))
_CNN_STACK_TAIL = [
    (128, (3, 3), (2, 2), (0, 0)),
    (10, (2, 2), (1, 1), (0, 0)),
]


def random_cnn(depth: int, seed: int = 0, input_hw=(28, 28),
               in_channels: int = 1) -> SequentialNet:
    """Fixed convolutional family: strided 5x5/3x3 head, padded 3x3 body
    layers to reach the requested depth, 128- then 10-channel tail, ReLU
    after every convolution except the last."""
    if depth < 4:
        raise DepthTooSmall("this architecture needs depth >= 4")
    specs = list(_CNN_STACK_HEAD) + [_CNN_STACK_BODY] * (depth - 4) + list(_CNN_STACK_TAIL)
    rng = np.random.default_rng(seed)
    layers = []
    c, (h, w) = in_channels, input_hw
    relu = Activation("relu")
    for idx, (out_c, kernel, stride, padding) in enumerate(specs):
        fan_in = c * kernel[0] * kernel[1]
        weight = rng.standard_normal((out_c, c, *kernel)) / np.sqrt(fan_in)
        bias = rng.standard_normal(out_c) / np.sqrt(fan_in)
        op = Conv2dOperator(weight, bias, stride=stride, padding=padding,
                            input_hw=(h, w))
        layers.append(op)
        if idx < len(specs) - 1:
            layers.append(relu)
        c, h, w = op.output_shape
    return SequentialNet(layers)


def _graph_node_from_json(obj, idx):
    if not isinstance(obj, dict):
        raise SchemaViolation(f"graph node {idx}: not an object")
    kind = obj.get("kind")
    inputs = tuple(obj.get("inputs", []))
    params = obj.get("params", {}) or {}
    if not isinstance(params, dict):
        raise SchemaViolation(f"graph node {idx}: params must be an object")
    if kind == "affine":
        weight = params.get("weight")
        if weight is None:
            raise SchemaViolation(f"graph node {idx}: affine needs a weight")
        op = DenseOperator(np.asarray(weight, dtype=np.float64),
                           params.get("bias"))
        return GraphNode("affine", inputs, {"op": op})
    if kind == "activation":
        act = Activation(params.get("name", ""), params.get("alpha"))
        return GraphNode("activation", inputs, {"act": act})
    return GraphNode(kind, inputs, dict(params))


def graph_from_json(doc) -> ComputationGraph:
    """Build a computation graph from its JSON description."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad graph JSON: {exc}") from exc
    if not isinstance(doc, dict) or "nodes" not in doc:
        raise SchemaViolation("graph document needs a 'nodes' list")
    raw = doc["nodes"]
    if not isinstance(raw, list) or not raw:
        raise SchemaViolation("graph 'nodes' must be a non-empty list")
    by_id = {}
    for obj in raw:
        node_id = obj.get("id")
        if not isinstance(node_id, int) or node_id in by_id:
            raise SchemaViolation("graph nodes need unique integer ids")
        by_id[node_id] = obj
    if sorted(by_id) != list(range(len(raw))):
        raise SchemaViolation("graph node ids must be 0..N-1")
    nodes = [_graph_node_from_json(by_id[i], i) for i in range(len(raw))]
    output = doc.get("output", len(raw) - 1)
    return ComputationGraph(nodes, output=output)


def load_graph_json(path) -> ComputationGraph:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad graph JSON: {exc}") from exc
    return graph_from_json(doc)
