"""Matrix-free spectral norms: power iteration on A^T A through adjoints.

The iteration only needs ``apply_linear`` and ``apply_adjoint`` from the
map, so it runs unchanged on dense layers, convolutions, deflated
remainders, and frozen-gate Jacobians. The returned estimate is a Rayleigh
quotient, hence never above the true top singular value.
"""

from dataclasses import dataclass

import numpy as np

from .core import random_unit_vector, spectral_norm_dense
from .errors import ShapeMismatch
from .operators import AffineOperator, DenseOperator, SequentialNet
from .report import BoundReport


def flat_seed(seed, *extra) -> tuple:
    """Flatten a seed plus integer tags into one entropy tuple."""
    parts = list(seed) if isinstance(seed, (tuple, list)) else [seed]
    parts.extend(extra)
    return tuple(int(p) for p in parts)


@dataclass(frozen=True)
class PowerConfig:
    max_iters: int = 500
    tol: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")


@dataclass(frozen=True)
class SingularTriplet:
    s: float
    u: np.ndarray
    v: np.ndarray
    iterations: int = 0
    converged: bool = True
    zero_operator: bool = False


class _LinearMapView:
    """Adapter giving any operator-like object a uniform linear-map face."""

    def __init__(self, op):
        self.op = op
        self.input_shape = tuple(op.input_shape)
        self.output_shape = tuple(op.output_shape)
        if hasattr(op, "apply_linear"):
            self._fwd = op.apply_linear
        else:
            zero = np.zeros(self.input_shape)
            bias = op.apply(zero)
            self._fwd = lambda x: op.apply(x) - bias
        self._adj = op.apply_adjoint

    @property
    def in_dim(self):
        return int(np.prod(self.input_shape))

    def forward(self, x):
        return self._fwd(x)

    def adjoint(self, y):
        return self._adj(y)


class _DeflatedMap:
    """base minus the rank-one pieces of already-extracted triplets."""

    def __init__(self, base: _LinearMapView, triplets):
        self.base = base
        self.input_shape = base.input_shape
        self.output_shape = base.output_shape
        self._su = np.stack([t.s * t.u.ravel() for t in triplets], axis=1)
        self._v = np.stack([t.v.ravel() for t in triplets], axis=1)

    @property
    def in_dim(self):
        return self.base.in_dim

    def forward(self, x):
        y = self.base.forward(x)
        return y - (self._su @ (self._v.T @ x.ravel())).reshape(y.shape)

    def adjoint(self, y):
        x = self.base.adjoint(y)
        return x - (self._v @ (self._su.T @ y.ravel())).reshape(x.shape)


def _power(view, cfg: PowerConfig, seed) -> SingularTriplet:
    v = random_unit_vector(view.in_dim, seed).reshape(view.input_shape)
    s_prev = -np.inf
    stall = 0
    iterations = 0
    converged = False
    restarted = False
    for it in range(1, cfg.max_iters + 1):
        iterations = it
        z = view.forward(v)
        s = float(np.linalg.norm(z.ravel()))
        if s == 0.0:
            if restarted:
                return SingularTriplet(
                    s=0.0,
                    u=np.zeros(view.output_shape),
                    v=v,
                    iterations=iterations,
                    converged=True,
                    zero_operator=True,
                )
            restarted = True
            v = random_unit_vector(view.in_dim, flat_seed(seed, 0x5EED)).reshape(view.input_shape)
            continue
        w = view.adjoint(z)
        nw = float(np.linalg.norm(w.ravel()))
        if nw == 0.0:
            break
        v = w / nw
        if abs(s - s_prev) <= cfg.tol * max(s, np.finfo(float).tiny):
            stall += 1
            if stall >= 2:
                converged = True
                break
        else:
            stall = 0
        s_prev = s
    z = view.forward(v)
    s = float(np.linalg.norm(z.ravel()))
    if s == 0.0:
        return SingularTriplet(
            s=0.0,
            u=np.zeros(view.output_shape),
            v=v,
            iterations=iterations,
            converged=True,
            zero_operator=True,
        )
    return SingularTriplet(
        s=s, u=z / s, v=v, iterations=iterations, converged=converged
    )


def power_method(op, cfg: PowerConfig | None = None) -> SingularTriplet:
    """Leading singular triplet of the linear part of an affine map."""
    cfg = cfg or PowerConfig()
    return _power(_LinearMapView(op), cfg, cfg.seed)


def top_k_singular(op, k: int, cfg: PowerConfig | None = None) -> list[SingularTriplet]:
    """Top-k singular triplets by repeated power iteration with deflation."""
    cfg = cfg or PowerConfig()
    view = _LinearMapView(op)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > min(view.in_dim, int(np.prod(view.output_shape))):
        raise ShapeMismatch("k exceeds the operator rank bound min(in, out)")
    found: list[SingularTriplet] = []
    for j in range(k):
        deflated = _DeflatedMap(view, found) if found else view
        found.append(_power(deflated, cfg, flat_seed(cfg.seed, j)))
    found.sort(key=lambda t: -t.s)
    return found


def operator_norm(op: AffineOperator, cfg: PowerConfig | None = None,
                  method: str = "auto") -> float:
    """Spectral norm of an affine operator's linear part.

    "auto" takes the exact dense route when the matrix is already at hand
    (dense weights, small materializable convolutions) and falls back to
    the adjoint power method for anything larger; "power" forces the
    iterative route, "svd" forces materialization.
    """
    if method == "power":
        return power_method(op, cfg).s
    if method == "svd":
        return spectral_norm_dense(op.materialize())
    if method != "auto":
        raise ValueError("method must be one of auto|svd|power")
    if isinstance(op, DenseOperator):
        return spectral_norm_dense(op.weight)
    if op.in_dim * op.out_dim <= 1_000_000:
        return spectral_norm_dense(op.materialize())
    return power_method(op, cfg).s


def frobenius_upper_bound(net: SequentialNet) -> BoundReport:
    """Product of per-layer Frobenius norms, a cheap coarse upper bound."""
    for act in net.activations:
        if act.lipschitz_constant > 1.0:
            raise ValueError("Frobenius product assumes 1-Lipschitz activations")
    per_layer = [op.frobenius_norm() for op in net.affine]
    return BoundReport(
        method="frobenius",
        direction="upper",
        value=float(np.prod(per_layer)),
        per_layer=per_layer,
    )
