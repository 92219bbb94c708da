"""Affine operators, elementwise activations, and sequential networks.

Operators expose three maps: ``apply`` (the affine map M x + b),
``apply_linear`` (M x) and ``apply_adjoint`` (M^T y). The adjoint is what
lets the power method run matrix-free on convolutions whose matrix form
would be too large to build.
"""

import numpy as np

from .core import as_tensor
from .errors import ShapeMismatch, TooLarge

MATERIALIZE_LIMIT = 10_000_000  # max entries of an explicitly built matrix


class AffineOperator:
    """Base affine map between fixed tensor shapes."""

    kind = "abstract"

    def __init__(self, input_shape, output_shape):
        self.input_shape = tuple(int(d) for d in input_shape)
        self.output_shape = tuple(int(d) for d in output_shape)

    @property
    def in_dim(self) -> int:
        return int(np.prod(self.input_shape))

    @property
    def out_dim(self) -> int:
        return int(np.prod(self.output_shape))

    def apply(self, x):
        raise NotImplementedError

    def apply_linear(self, x):
        raise NotImplementedError

    def apply_adjoint(self, y):
        raise NotImplementedError

    def materialize(self, max_entries: int = MATERIALIZE_LIMIT) -> np.ndarray:
        """Explicit matrix of the linear part, column j = apply_linear(e_j)."""
        if self.in_dim * self.out_dim > max_entries:
            raise TooLarge(
                f"materializing {self.out_dim}x{self.in_dim} exceeds {max_entries} entries"
            )
        M = np.empty((self.out_dim, self.in_dim), dtype=np.float64)
        e = np.zeros(self.in_dim)
        for j in range(self.in_dim):
            e[j] = 1.0
            M[:, j] = self.apply_linear(e.reshape(self.input_shape)).ravel()
            e[j] = 0.0
        return M

    def frobenius_norm(self) -> float:
        raise NotImplementedError

    def _check_in(self, x):
        x = np.asarray(x, dtype=np.float64)
        if tuple(x.shape) != self.input_shape:
            raise ShapeMismatch(f"expected input shape {self.input_shape}, got {x.shape}")
        return x

    def _check_out(self, y):
        y = np.asarray(y, dtype=np.float64)
        if tuple(y.shape) != self.output_shape:
            raise ShapeMismatch(f"expected output shape {self.output_shape}, got {y.shape}")
        return y


class DenseOperator(AffineOperator):
    """x -> W x + b for a dense weight matrix W (m x n)."""

    kind = "dense"

    def __init__(self, weight, bias=None):
        weight = as_tensor(weight)
        if weight.ndim != 2:
            raise ShapeMismatch("dense weight must be 2-D")
        super().__init__((weight.shape[1],), (weight.shape[0],))
        self.weight = weight
        self.bias = None if bias is None else as_tensor(bias, shape=(weight.shape[0],))

    def apply(self, x):
        y = self.weight @ self._check_in(x)
        if self.bias is not None:
            y = y + self.bias
        return y

    def apply_linear(self, x):
        return self.weight @ self._check_in(x)

    def apply_adjoint(self, y):
        return self.weight.T @ self._check_out(y)

    def materialize(self, max_entries: int = MATERIALIZE_LIMIT) -> np.ndarray:
        if self.weight.size > max_entries:
            raise TooLarge("dense weight exceeds the materialization limit")
        return self.weight.copy()

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.weight))


class Conv2dOperator(AffineOperator):
    """Strided zero-padded 2-D cross-correlation on a single NCHW image.

    weight has shape (out_channels, in_channels, kh, kw); the adjoint is the
    matching transposed convolution (scatter-add of kernel taps), exact for
    any stride/padding combination including ones whose output size floors.
    """

    kind = "conv2d"

    def __init__(self, weight, bias=None, stride=(1, 1), padding=(0, 0), input_hw=None):
        weight = as_tensor(weight)
        if weight.ndim != 4:
            raise ShapeMismatch("conv2d weight must have shape (out, in, kh, kw)")
        if input_hw is None:
            raise ShapeMismatch("conv2d requires input_hw=(height, width)")
        d, c, kh, kw = weight.shape
        sh, sw = (int(stride[0]), int(stride[1]))
        ph, pw = (int(padding[0]), int(padding[1]))
        h, w = (int(input_hw[0]), int(input_hw[1]))
        if sh < 1 or sw < 1 or ph < 0 or pw < 0:
            raise ShapeMismatch("stride must be >= 1 and padding >= 0")
        oh = (h + 2 * ph - kh) // sh + 1
        ow = (w + 2 * pw - kw) // sw + 1
        if oh < 1 or ow < 1:
            raise ShapeMismatch(
                f"kernel {kh}x{kw} with stride {sh}x{sw}, padding {ph}x{pw} "
                f"does not fit a {h}x{w} input"
            )
        super().__init__((c, h, w), (d, oh, ow))
        self.weight = weight
        self.bias = None if bias is None else as_tensor(bias, shape=(d,))
        self.stride = (sh, sw)
        self.padding = (ph, pw)
        self.kernel = (kh, kw)
        # gather index: padded-input flat position feeding each (tap, output)
        hp, wp = h + 2 * ph, w + 2 * pw
        taps_h = np.arange(kh)[:, None] + sh * np.arange(oh)[None, :]  # (kh, oh)
        taps_w = np.arange(kw)[:, None] + sw * np.arange(ow)[None, :]  # (kw, ow)
        flat = (
            np.arange(c)[:, None, None, None, None] * (hp * wp)
            + taps_h[None, :, None, :, None] * wp
            + taps_w[None, None, :, None, :]
        )
        self._gather = flat.reshape(c * kh * kw, oh * ow)
        self._padded_size = c * hp * wp
        self._w2 = weight.reshape(d, c * kh * kw)

    def apply(self, x):
        y = self.apply_linear(x)
        if self.bias is not None:
            y = y + self.bias[:, None, None]
        return y

    def apply_linear(self, x):
        x = self._check_in(x)
        c, h, w = self.input_shape
        ph, pw = self.padding
        xp = np.zeros((c, h + 2 * ph, w + 2 * pw))
        xp[:, ph:ph + h, pw:pw + w] = x
        cols = xp.reshape(-1)[self._gather]
        return (self._w2 @ cols).reshape(self.output_shape)

    def apply_adjoint(self, y):
        y = self._check_out(y)
        c, h, w = self.input_shape
        d, oh, ow = self.output_shape
        ph, pw = self.padding
        cols = self._w2.T @ y.reshape(d, oh * ow)
        flat = np.bincount(self._gather.ravel(), weights=cols.ravel(),
                           minlength=self._padded_size)
        gp = flat.reshape(c, h + 2 * ph, w + 2 * pw)
        return gp[:, ph:ph + h, pw:pw + w]

    def frobenius_norm(self) -> float:
        # exact via the explicit matrix when affordable; otherwise the kernel
        # norm replicated over every placement (an overcount only where the
        # kernel overhangs zero padding, so still an upper bound)
        if self.in_dim * self.out_dim <= MATERIALIZE_LIMIT:
            return float(np.linalg.norm(self.materialize()))
        _, oh, ow = self.output_shape
        return float(np.linalg.norm(self.weight.ravel()) * np.sqrt(oh * ow))


def average_pooling_operator(channels, window, input_hw) -> Conv2dOperator:
    """Average pooling as a constant-weight, channel-diagonal convolution."""
    wh, ww = (int(window[0]), int(window[1]))
    weight = np.zeros((channels, channels, wh, ww))
    for c in range(channels):
        weight[c, c] = 1.0 / (wh * ww)
    return Conv2dOperator(weight, stride=(wh, ww), input_hw=input_hw)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


_ACTIVATIONS = {
    # name: (value, derivative, (lo, hi), binary_gates)
    "relu": (
        lambda x, a: np.maximum(x, 0.0),
        lambda x, a: (x > 0).astype(np.float64),
        lambda a: (0.0, 1.0),
        True,
    ),
    "leaky_relu": (
        lambda x, a: np.where(x > 0, x, a * x),
        lambda x, a: np.where(x > 0, 1.0, a),
        lambda a: (a, 1.0),
        True,
    ),
    "tanh": (
        lambda x, a: np.tanh(x),
        lambda x, a: 1.0 - np.tanh(x) ** 2,
        lambda a: (0.0, 1.0),
        False,
    ),
    "sigmoid": (
        lambda x, a: _sigmoid(x),
        lambda x, a: _sigmoid(x) * (1.0 - _sigmoid(x)),
        lambda a: (0.0, 0.25),
        False,
    ),
    "softplus": (
        lambda x, a: np.logaddexp(0.0, x),
        lambda x, a: _sigmoid(x),
        lambda a: (0.0, 1.0),
        False,
    ),
    "arctan": (
        lambda x, a: np.arctan(x),
        lambda x, a: 1.0 / (1.0 + x**2),
        lambda a: (0.0, 1.0),
        False,
    ),
    "softsign": (
        lambda x, a: x / (1.0 + np.abs(x)),
        lambda x, a: 1.0 / (1.0 + np.abs(x)) ** 2,
        lambda a: (0.0, 1.0),
        False,
    ),
    "identity": (
        lambda x, a: x,
        lambda x, a: np.ones_like(x),
        lambda a: (1.0, 1.0),
        True,
    ),
}


class Activation:
    """Elementwise activation with its derivative range as gate metadata.

    ``derivative_range`` is the closed interval the scalar derivative lives
    in; ``binary_gates`` marks activations whose derivative only takes the
    two endpoint values (ReLU family), which is what makes the exact gate
    enumeration finite.
    """

    def __init__(self, name: str, alpha: float | None = None):
        if name not in _ACTIVATIONS:
            raise ShapeMismatch(f"unknown activation {name!r}")
        if name == "leaky_relu":
            alpha = 0.01 if alpha is None else float(alpha)
            if not 0.0 <= alpha <= 1.0:
                raise ShapeMismatch("leaky_relu slope must lie in [0, 1]")
        elif alpha is not None:
            raise ShapeMismatch(f"activation {name!r} takes no parameter")
        self.name = name
        self.alpha = alpha
        fn, dfn, rng_fn, binary = _ACTIVATIONS[name]
        self._fn = fn
        self._dfn = dfn
        self.derivative_range = rng_fn(alpha)
        self.binary_gates = binary
        lo, hi = self.derivative_range
        self.lipschitz_constant = max(abs(lo), abs(hi))

    def apply(self, x):
        return self._fn(np.asarray(x, dtype=np.float64), self.alpha)

    def derivative(self, x):
        return self._dfn(np.asarray(x, dtype=np.float64), self.alpha)

    def __eq__(self, other):
        return (
            isinstance(other, Activation)
            and other.name == self.name
            and other.alpha == self.alpha
        )

    def __repr__(self):
        if self.alpha is None:
            return f"Activation({self.name!r})"
        return f"Activation({self.name!r}, alpha={self.alpha})"


class SequentialNet:
    """Alternating affine / activation stack, starting and ending affine."""

    def __init__(self, layers):
        layers = tuple(layers)
        if not layers:
            raise ShapeMismatch("empty network")
        for i, layer in enumerate(layers):
            want_affine = i % 2 == 0
            if want_affine and not isinstance(layer, AffineOperator):
                raise ShapeMismatch(f"layer {i} must be an affine operator")
            if not want_affine and not isinstance(layer, Activation):
                raise ShapeMismatch(f"layer {i} must be an activation")
        if not isinstance(layers[-1], AffineOperator):
            raise ShapeMismatch("network must end with an affine layer")
        affine = [l for l in layers if isinstance(l, AffineOperator)]
        for a, b in zip(affine, affine[1:]):
            if a.output_shape != b.input_shape:
                raise ShapeMismatch(
                    f"layer shapes do not compose: {a.output_shape} -> {b.input_shape}"
                )
        self.layers = layers
        self.affine = tuple(affine)
        self.activations = tuple(l for l in layers if isinstance(l, Activation))

    @property
    def input_shape(self):
        return self.affine[0].input_shape

    @property
    def output_shape(self):
        return self.affine[-1].output_shape

    @property
    def depth(self) -> int:
        """Number of affine layers."""
        return len(self.affine)

    def forward(self, x):
        x = as_tensor(x, shape=self.input_shape)
        for layer in self.layers:
            x = layer.apply(x)
        return x

    def forward_batch(self, X):
        """Forward over the leading axis of X, one sample per row slice."""
        return np.stack([self.forward(x) for x in X])

    def preactivations(self, x):
        """Inputs seen by each activation layer during a forward pass."""
        x = as_tensor(x, shape=self.input_shape)
        pre = []
        for k, op in enumerate(self.affine):
            x = op.apply(x)
            if k < len(self.activations):
                pre.append(x)
                x = self.activations[k].apply(x)
        return pre


def jacobian_apply_at(net: SequentialNet, x, v, direction: str = "forward"):
    """Apply the network Jacobian at x (or its adjoint) to a vector.

    Gates are frozen at the derivative of each activation evaluated on the
    recorded pre-activations, so this is exact wherever the network is
    differentiable and uses the derivative-at-kink convention elsewhere.
    """
    if direction not in ("forward", "adjoint"):
        raise ShapeMismatch("direction must be 'forward' or 'adjoint'")
    pre = net.preactivations(x)
    gates = [act.derivative(p) for act, p in zip(net.activations, pre)]
    if direction == "forward":
        w = as_tensor(v, shape=net.input_shape)
        for k, op in enumerate(net.affine):
            w = op.apply_linear(w)
            if k < len(gates):
                w = w * gates[k]
        return w
    w = as_tensor(v, shape=net.output_shape)
    for k in range(len(net.affine) - 1, -1, -1):
        w = net.affine[k].apply_adjoint(w)
        if k > 0:
            w = w * gates[k - 1]
    return w
