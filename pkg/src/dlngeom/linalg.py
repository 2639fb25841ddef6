"""Dense linear algebra primitives: SVD with a fixed frame convention, Haar
sampling on O(d), Vandermonde products, Frobenius pairings and matrix I/O.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NonFinite, ShapeMismatch

# Singular values closer than COINC_RTOL * sigma_1 are treated as equal.
COINC_RTOL = 1e-8
# End-to-end flows stop once sigma_d < RANK_RTOL * sigma_1.
RANK_RTOL = 1e-10


def as_square(X, name: str = "X") -> np.ndarray:
    X = np.array(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ShapeMismatch(f"{name} must be square, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NonFinite(f"{name} contains NaN or Inf")
    return X


@dataclass(frozen=True)
class Spectrum:
    """Singular values in descending order, with per-depth roots cached."""

    sigma: np.ndarray
    _roots: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        s = np.array(self.sigma, dtype=float).reshape(-1)
        if s.size == 0:
            raise ShapeMismatch("spectrum must have at least one value")
        if not np.all(np.isfinite(s)):
            raise NonFinite("spectrum contains NaN or Inf")
        if np.any(s < 0):
            raise ValueError("singular values must be non-negative")
        if np.any(np.diff(s) > 0):
            raise ValueError("singular values must be sorted in descending order")
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    @classmethod
    def from_values(cls, values) -> "Spectrum":
        return cls(np.sort(np.asarray(values, dtype=float).reshape(-1))[::-1])

    @classmethod
    def from_depth_root(cls, lam, depth: int) -> "Spectrum":
        lam = np.asarray(lam, dtype=float)
        spec = cls.from_values(lam**depth)
        return spec

    @property
    def dim(self) -> int:
        return self.sigma.size

    def depth_root(self, depth: int) -> np.ndarray:
        """lambda_k = sigma_k ** (1/depth)."""
        if depth not in self._roots:
            lam = self.sigma ** (1.0 / depth)
            lam.setflags(write=False)
            self._roots[depth] = lam
        return self._roots[depth]

    def is_full_rank(self) -> bool:
        return bool(self.sigma[-1] > 0)

    def coincident_pairs(self) -> np.ndarray:
        """Boolean d x d mask of pairs closer than the coincidence tolerance."""
        s = self.sigma
        return np.abs(s[:, None] - s[None, :]) < COINC_RTOL * s[0]

    def has_coincidence(self) -> bool:
        mask = self.coincident_pairs()
        return bool(np.any(mask[~np.eye(self.dim, dtype=bool)]))


@dataclass(frozen=True)
class SvdTriple:
    q_left: np.ndarray
    spectrum: Spectrum
    q_right: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return self.spectrum.sigma

    def reconstruct(self) -> np.ndarray:
        return (self.q_left * self.sigma) @ self.q_right.T


def svd_descending(X) -> SvdTriple:
    """SVD X = Q_N diag(sigma) Q_0^T with descending sigma.

    Each left singular vector is flipped so that its largest-magnitude entry
    is positive (first such row wins on ties); the matching right vector is
    flipped with it.
    """
    X = as_square(X)
    U, s, Vt = np.linalg.svd(X)
    V = Vt.T
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    U = U * signs
    V = V * signs
    return SvdTriple(U, Spectrum(s), V)


def _haar_batch(rng: np.random.Generator, d: int, n: int) -> np.ndarray:
    Z = rng.standard_normal((n, d, d))
    Q, R = np.linalg.qr(Z)
    signs = np.sign(np.diagonal(R, axis1=1, axis2=2))
    signs[signs == 0] = 1.0
    return Q * signs[:, None, :]


def haar_orthogonal(d: int, seed: int) -> np.ndarray:
    """Haar-distributed element of O(d), deterministic per seed."""
    if d < 1:
        raise ValueError("d must be positive")
    return _haar_batch(np.random.default_rng(seed), d, 1)[0]


def haar_orthogonal_batch(d: int, n: int, seed: int) -> np.ndarray:
    """n independent Haar samples stacked along axis 0."""
    return _haar_batch(np.random.default_rng(seed), d, n)


def vandermonde(vals) -> float:
    """prod_{i<j} (a_j - a_i); 1 for fewer than two values."""
    a = np.asarray(vals, dtype=float).reshape(-1)
    out = 1.0
    for i in range(a.size):
        for j in range(i + 1, a.size):
            out *= a[j] - a[i]
    return float(out)


def frobenius_ip(v, w) -> float:
    """sum_p Tr(v_p^T w_p) for tangent vectors stored as (N, d, d) arrays."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if v.shape != w.shape:
        raise ShapeMismatch(f"shapes differ: {v.shape} vs {w.shape}")
    return float(np.sum(v * w))


def skew_basis(k: int, l: int, d: int) -> np.ndarray:
    """alpha^{k,l} = (e_k e_l^T - e_l e_k^T)/sqrt(2), 1-based with k < l."""
    if not 1 <= k < l <= d:
        raise IndexError(f"need 1 <= k < l <= d, got k={k}, l={l}, d={d}")
    a = np.zeros((d, d))
    a[k - 1, l - 1] = 1.0 / math.sqrt(2.0)
    a[l - 1, k - 1] = -1.0 / math.sqrt(2.0)
    return a


def skew_pairs(d: int) -> list[tuple[int, int]]:
    return [(k, l) for k in range(1, d + 1) for l in range(k + 1, d + 1)]


def log_power_sum(lam_a, lam_b, depth: int, coincident=None):
    """log of sum_{p=1}^{N} a^{2(N-p)} b^{2(p-1)} = log((a^{2N}-b^{2N})/(a^2-b^2)).

    Evaluated through expm1 so that nearby arguments lose no precision.
    Where ``coincident`` is set (default: |a-b| < COINC_RTOL*max(a,b)) the
    limit N (ab)^{N-1} is returned instead.
    """
    a = np.asarray(lam_a, dtype=float)
    b = np.asarray(lam_b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    hi = np.maximum(a, b)
    lo = np.minimum(a, b)
    if coincident is None:
        coincident = (hi - lo) < COINC_RTOL * hi
    coincident = np.broadcast_to(coincident, a.shape)
    N = float(depth)
    with np.errstate(divide="ignore", invalid="ignore"):
        L = 2.0 * (np.log(lo) - np.log(hi))
        ratio = np.expm1(N * L) / np.expm1(L)
        general = 2.0 * (N - 1.0) * np.log(hi) + np.log(ratio)
        limit = math.log(N) + (N - 1.0) * (np.log(a) + np.log(b))
    out = np.where(coincident, limit, general)
    return out if out.ndim else float(out)


def power_sum(lam_a, lam_b, depth: int, coincident=None):
    out = np.exp(log_power_sum(lam_a, lam_b, depth, coincident))
    return out if np.ndim(out) else float(out)


def load_matrix(path) -> np.ndarray:
    """Read {"dim": d, "rows": [...]} JSON or a CSV of d rows."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        obj = json.loads(text)
        rows = np.array(obj["rows"], dtype=float)
        if "dim" in obj and rows.shape != (obj["dim"], obj["dim"]):
            raise ShapeMismatch(f"{path}: dim {obj['dim']} does not match rows {rows.shape}")
        return as_square(rows, str(path))
    rows = [[float(x) for x in r] for r in csv.reader(text.splitlines()) if r]
    return as_square(rows, str(path))


def matrix_to_json(X) -> dict:
    X = np.asarray(X, dtype=float)
    return {"dim": int(X.shape[0]), "rows": X.tolist()}
