"""Lower bounds: the largest Jacobian norm found by search.

Any single Jacobian spectral norm is a certified lower bound, so these
estimators differ only in where they look: a regular grid (exhaustive in
low dimension), a simulated-annealing walk, or a fixed set of points.
"""

from dataclasses import dataclass

import numpy as np

from .core import as_tensor
from .errors import DimensionTooLarge, EmptyDataset, ShapeMismatch
from .operators import SequentialNet, jacobian_apply_at
from .report import BoundReport
from .spectral import PowerConfig, power_method

_MATERIALIZE_DIM = 16  # build the Jacobian explicitly below this size


@dataclass(frozen=True)
class SearchDomain:
    """Axis-aligned box, one closed interval per input coordinate."""

    lows: np.ndarray
    highs: np.ndarray

    def __post_init__(self):
        lows = np.asarray(self.lows, dtype=np.float64).ravel()
        highs = np.asarray(self.highs, dtype=np.float64).ravel()
        object.__setattr__(self, "lows", lows)
        object.__setattr__(self, "highs", highs)
        if lows.shape != highs.shape:
            raise ShapeMismatch("domain low/high lengths differ")
        if not (np.all(np.isfinite(lows)) and np.all(np.isfinite(highs))):
            raise ShapeMismatch("domain bounds must be finite")
        if not np.all(lows < highs):
            raise ShapeMismatch("each domain interval needs low < high")

    @classmethod
    def cube(cls, dim: int, low: float = -1.0, high: float = 1.0) -> "SearchDomain":
        return cls(np.full(dim, low), np.full(dim, high))

    @property
    def dim(self) -> int:
        return self.lows.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.highs - self.lows


@dataclass(frozen=True)
class AnnealingSchedule:
    initial_temperature: float = 1.0
    decay: float = 0.95          # applied every 100 proposals
    step_scale: float = 0.1      # fraction of each domain width
    proposals: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        if self.step_scale <= 0.0:
            raise ValueError("step scale must be > 0")
        if self.proposals < 1:
            raise ValueError("need at least one proposal")


class _JacobianMap:
    def __init__(self, net, x):
        self.net = net
        self.x = x
        self.input_shape = net.input_shape
        self.output_shape = net.output_shape

    def apply_linear(self, v):
        return jacobian_apply_at(self.net, self.x, v, "forward")

    def apply_adjoint(self, w):
        return jacobian_apply_at(self.net, self.x, w, "adjoint")


def jacobian_norm_at(net: SequentialNet, x, cfg: PowerConfig | None = None,
                     method: str = "auto") -> float:
    """Spectral norm of the network Jacobian at a point.

    Small Jacobians are built column-by-column (or row-by-row through the
    adjoint) and resolved exactly; larger ones go through the matrix-free
    power method on the frozen-gate forward/adjoint pair.
    """
    x = as_tensor(x, shape=net.input_shape)
    jmap = _JacobianMap(net, x)
    in_dim = int(np.prod(net.input_shape))
    out_dim = int(np.prod(net.output_shape))
    if method not in ("auto", "power", "exact"):
        raise ValueError("method must be one of auto|exact|power")
    use_exact = method == "exact" or (method == "auto" and min(in_dim, out_dim) <= _MATERIALIZE_DIM)
    if use_exact:
        if in_dim <= out_dim:
            cols = np.empty((out_dim, in_dim))
            e = np.zeros(in_dim)
            for j in range(in_dim):
                e[j] = 1.0
                cols[:, j] = jmap.apply_linear(e.reshape(net.input_shape)).ravel()
                e[j] = 0.0
            J = cols
        else:
            rows = np.empty((out_dim, in_dim))
            e = np.zeros(out_dim)
            for i in range(out_dim):
                e[i] = 1.0
                rows[i, :] = jmap.apply_adjoint(e.reshape(net.output_shape)).ravel()
                e[i] = 0.0
            J = rows
        if J.size == 0:
            return 0.0
        return float(np.linalg.svd(J, compute_uv=False)[0])
    return power_method(jmap, cfg).s


def _check_domain(net, domain):
    d = int(np.prod(net.input_shape))
    if domain is None:
        return SearchDomain.cube(d)
    if domain.dim != d:
        raise ShapeMismatch(f"domain has {domain.dim} axes, input needs {d}")
    return domain


def grid_lower_bound(net: SequentialNet, domain: SearchDomain | None = None,
                     resolution: int = 10, cfg: PowerConfig | None = None,
                     max_points: int = 10_000_000) -> BoundReport:
    """Max Jacobian norm over a regular grid (low input dimension only)."""
    domain = _check_domain(net, domain)
    d = domain.dim
    if d > 6:
        raise DimensionTooLarge(f"grid search supports dimension <= 6, got {d}")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if resolution**d > max_points:
        raise DimensionTooLarge("grid would exceed the point budget")
    axes = [np.linspace(domain.lows[i], domain.highs[i], resolution) for i in range(d)]
    best = -1.0
    argmax = None
    for idx in np.ndindex(*([resolution] * d)):
        x = np.array([axes[i][idx[i]] for i in range(d)])
        val = jacobian_norm_at(net, x.reshape(net.input_shape), cfg)
        if val > best:
            best = val
            argmax = x
    return BoundReport(
        method="lower/grid",
        direction="lower",
        value=best,
        params={
            "resolution": resolution,
            "domain_low": domain.lows,
            "domain_high": domain.highs,
            "argmax": argmax,
        },
    )


def annealing_lower_bound(net: SequentialNet, domain: SearchDomain | None = None,
                          schedule: AnnealingSchedule | None = None,
                          x0=None, cfg: PowerConfig | None = None) -> BoundReport:
    """Metropolis walk maximizing the Jacobian norm; returns the best ever seen.

    Acceptance of downhill moves is scaled by the running best so the
    temperature stays meaningful across networks of different magnitude.
    """
    domain = _check_domain(net, domain)
    schedule = schedule or AnnealingSchedule()
    rng = np.random.default_rng(schedule.seed)
    if x0 is None:
        x = rng.uniform(domain.lows, domain.highs)
    else:
        x = np.clip(as_tensor(x0).ravel(), domain.lows, domain.highs)
    step = schedule.step_scale * domain.widths
    cur = jacobian_norm_at(net, x.reshape(net.input_shape), cfg)
    best, best_x = cur, x.copy()
    for t in range(schedule.proposals):
        temp = schedule.initial_temperature * schedule.decay ** (t // 100)
        cand = np.clip(x + step * rng.standard_normal(domain.dim),
                       domain.lows, domain.highs)
        val = jacobian_norm_at(net, cand.reshape(net.input_shape), cfg)
        if val > best:
            best, best_x = val, cand.copy()
        delta = val - cur
        if delta >= 0 or rng.random() < np.exp(delta / (temp * max(best, 1e-300))):
            x, cur = cand, val
    return BoundReport(
        method="lower/annealing",
        direction="lower",
        value=best,
        params={
            "proposals": schedule.proposals,
            "initial_temperature": schedule.initial_temperature,
            "decay": schedule.decay,
            "step_scale": schedule.step_scale,
            "seed": schedule.seed,
            "domain_low": domain.lows,
            "domain_high": domain.highs,
            "argmax": best_x,
        },
    )


def dataset_lower_bound(net: SequentialNet, points,
                        cfg: PowerConfig | None = None) -> BoundReport:
    """Max Jacobian norm over the given points (method: jacobian-at-point)."""
    points = list(points)
    if not points:
        raise EmptyDataset("no points supplied")
    best = -1.0
    argmax_index = -1
    for i, p in enumerate(points):
        val = jacobian_norm_at(net, as_tensor(p).reshape(net.input_shape), cfg)
        if val > best:
            best = val
            argmax_index = i
    return BoundReport(
        method="lower/dataset",
        direction="lower",
        value=best,
        params={"points": len(points), "argmax_index": argmax_index},
    )


def load_points_csv(path) -> np.ndarray:
    """One point per row, comma-separated decimal floats, no header."""
    pts = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    return as_tensor(pts)
