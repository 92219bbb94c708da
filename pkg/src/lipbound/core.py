"""Dense linear algebra primitives and seeded random generators.

Everything downstream (operator norms, factor bounds, search estimators)
leans on this module as the reference oracle, so the contracts here are
strict: finite inputs only, deterministic outputs for a fixed seed, and a
fixed sign convention that makes SVD factors reproducible.
"""

from typing import NamedTuple

import numpy as np

from .errors import NonFinite, ShapeMismatch


class SvdResult(NamedTuple):
    """Economy SVD A = U @ diag(S) @ V.T with S descending and >= 0."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray


def as_tensor(x, shape=None) -> np.ndarray:
    """Coerce to a float64 array, rejecting NaN/Inf and optional shape drift."""
    a = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise NonFinite("tensor contains NaN or Inf")
    if shape is not None and tuple(a.shape) != tuple(shape):
        raise ShapeMismatch(f"expected shape {tuple(shape)}, got {a.shape}")
    return a


def svd_dense(A) -> SvdResult:
    """Full (economy) SVD of a dense matrix.

    The sign convention forces the largest-magnitude entry of each U column
    to be non-negative, with V flipped to match, so repeated runs and
    different BLAS builds agree on the factors, not just the values.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D matrix, got ndim={A.ndim}")
    if not np.all(np.isfinite(A)):
        raise NonFinite("matrix contains NaN or Inf")
    U, S, Vt = np.linalg.svd(A, full_matrices=False)
    V = Vt.T
    # column sign fix: largest |entry| of each U column made non-negative
    idx = np.argmax(np.abs(U), axis=0)
    flip = U[idx, np.arange(U.shape[1])] < 0
    U[:, flip] *= -1.0
    V[:, flip] *= -1.0
    return SvdResult(U=U, S=S, V=V)


def spectral_norm_dense(A) -> float:
    """Largest singular value of a dense matrix (values only, no vectors)."""
    A = np.asarray(A, dtype=np.float64)
    if A.size == 0:
        return 0.0
    return float(np.linalg.svd(A, compute_uv=False)[0])


def random_orthogonal(n: int, seed) -> np.ndarray:
    """Seeded Haar-like random n x n orthogonal matrix.

    QR of a Gaussian matrix with the R-diagonal sign absorbed into Q, the
    standard recipe for an (approximately Haar) orthogonal sample.
    """
    if n < 1:
        raise ShapeMismatch("dimension must be >= 1")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, n))
    q, r = np.linalg.qr(g)
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    return q * d


def random_unit_vector(n: int, seed) -> np.ndarray:
    """Seeded uniform sample from the unit sphere (normalized Gaussian)."""
    if n < 1:
        raise ShapeMismatch("dimension must be >= 1")
    rng = np.random.default_rng(seed)
    while True:
        v = rng.standard_normal(n)
        nv = np.linalg.norm(v)
        if nv > 0:
            return v / nv
