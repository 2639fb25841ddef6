"""Boltzmann entropy of balanced group orbits.

S(X) is the log-volume of the orbit of balanced networks with end-to-end
matrix X. It reduces to (N-1) log c_d plus half the log-determinant of
d(d-1)/2 tridiagonal Gram blocks, one per pair (k, l); the blocks are
diagonalized by discrete sine vectors. Independent numeric orbit volumes for
d = 2 live here as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import gammaln

from .errors import CoincidentSingularValues, RankDeficient, UnsupportedDimension
from .linalg import (
    COINC_RTOL,
    Spectrum,
    SvdTriple,
    as_square,
    log_power_sum,
    power_sum,
    skew_basis,
    skew_pairs,
    svd_descending,
)
from .manifold import Network, center_of_fiber, recover_frames

Convention = Literal["embedded", "ponting"]
Boundary = Literal["interior", "extended"]


@dataclass(frozen=True)
class JacobiBlock:
    k: int
    l: int
    depth: int
    boundary: Boundary
    entries: np.ndarray


def jacobi_block(lk: float, ll: float, depth: int, boundary: Boundary = "interior", k: int = 1, l: int = 2) -> JacobiBlock:
    """Gram block of the gauge directions for one pair (k, l).

    interior: (N-1)x(N-1), diagonal lk^2+ll^2, off-diagonal -lk*ll.
    extended: (N+1)x(N+1), same but with both corner entries halved.
    """
    if boundary == "interior":
        n = max(depth - 1, 0)
    elif boundary == "extended":
        n = depth + 1
    else:
        raise ValueError(f"boundary must be 'interior' or 'extended', got {boundary!r}")
    diag = np.full(n, lk**2 + ll**2)
    if boundary == "extended":
        diag[0] *= 0.5
        diag[-1] *= 0.5
    off = np.full(max(n - 1, 0), -lk * ll)
    h = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    return JacobiBlock(k, l, depth, boundary, h)


def chebyshev_sine_matrix(depth: int) -> np.ndarray:
    """S_{pq} = sqrt(2/N) sin(pq pi/N), 1 <= p, q <= N-1; symmetric and orthogonal."""
    idx = np.arange(1, depth)
    return math.sqrt(2.0 / depth) * np.sin(np.outer(idx, idx) * math.pi / depth)


def chebyshev_eigenvalues(lk: float, ll: float, depth: int) -> np.ndarray:
    p = np.arange(1, depth)
    return lk**2 + ll**2 - 2 * lk * ll * np.cos(p * math.pi / depth)


def chebyshev_eigen(block: JacobiBlock) -> tuple[np.ndarray, np.ndarray]:
    """(S, sigma_p) with S h S^T = diag(sigma_p) for an interior block."""
    if block.boundary != "interior":
        raise ValueError("chebyshev_eigen applies to interior blocks")
    N = block.depth
    h = block.entries
    if h.shape[0] == 0:
        return np.zeros((0, 0)), np.zeros(0)
    lk_ll = -h[0, 1] if h.shape[0] > 1 else None
    diag = h[0, 0]
    if lk_ll is None:
        # N = 2: a 1x1 block carries no coupling; sigma_1 = lk^2 + ll^2 - 2 lk ll cos(pi/2).
        return np.ones((1, 1)), np.array([diag])
    p = np.arange(1, N)
    return chebyshev_sine_matrix(N), diag - 2 * lk_ll * np.cos(p * math.pi / N)


def block_det(lk: float, ll: float, depth: int) -> float:
    """(lk^{2N} - ll^{2N})/(lk^2 - ll^2), with the N lam^{2(N-1)} limit at coincidence."""
    return power_sum(lk, ll, depth)


def haar_volume_od(d: int, convention: Convention = "embedded") -> float:
    """Volume c_d of O(d).

    embedded: Riemannian volume under the Frobenius metric of R^{d x d}, i.e.
        2 * 2^{d(d-1)/4} * prod_{k=2}^{d} 2 pi^{k/2}/Gamma(k/2)
    (c_1 = 2, c_2 = 4 sqrt(2) pi).
    ponting: 2^{d(d+3)/2} prod_{r=1}^{d} pi^{r/2}/Gamma(r/2) (c_2 = 32 pi).
    """
    return math.exp(log_haar_volume_od(d, convention))


def log_haar_volume_od(d: int, convention: Convention = "embedded") -> float:
    if d < 1:
        raise ValueError("d must be positive")
    if convention == "embedded":
        out = math.log(2.0) + d * (d - 1) / 4 * math.log(2.0)
        for k in range(2, d + 1):
            out += math.log(2.0) + k / 2 * math.log(math.pi) - gammaln(k / 2)
        return out
    if convention == "ponting":
        out = d * (d + 3) / 2 * math.log(2.0)
        for r in range(1, d + 1):
            out += r / 2 * math.log(math.pi) - gammaln(r / 2)
        return out
    raise ValueError(f"convention must be 'embedded' or 'ponting', got {convention!r}")


@dataclass(frozen=True)
class EntropyValue:
    total: float
    constant_part: float
    ratio_part: float
    convention: Convention

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "constant_part": self.constant_part,
            "ratio_part": self.ratio_part,
            "convention": self.convention,
        }


def _pair_log_ratios(spectrum: Spectrum, depth: int) -> np.ndarray:
    """log((s_i^2 - s_j^2)/(s_i^{2/N} - s_j^{2/N})) for i < j."""
    lam = spectrum.depth_root(depth)
    iu = np.triu_indices(spectrum.dim, 1)
    coincident = spectrum.coincident_pairs()[iu]
    return np.asarray(log_power_sum(lam[iu[0]], lam[iu[1]], depth, coincident))


def entropy(spectrum: Spectrum, depth: int, convention: Convention = "embedded") -> EntropyValue:
    """S = (N-1) log c_d + 1/2 log(van(Sigma^2)/van(Sigma^{2/N})), in nats."""
    if not spectrum.is_full_rank():
        raise RankDeficient("entropy is defined on full-rank matrices only")
    if depth < 1:
        raise ValueError("depth must be positive")
    const = (depth - 1) * log_haar_volume_od(spectrum.dim, convention)
    ratio = 0.5 * float(np.sum(_pair_log_ratios(spectrum, depth)))
    return EntropyValue(const + ratio, const, ratio, convention)


def entropy_of_matrix(X, depth: int, convention: Convention = "embedded") -> EntropyValue:
    return entropy(svd_descending(X).spectrum, depth, convention)


def entropy_infinite(spectrum: Spectrum) -> float:
    """Renormalized N -> infinity entropy 1/2 log(van(Sigma^2)/van(log Sigma^2)).

    Each pair contributes the logarithmic mean of s_i^2 and s_j^2, whose limit
    at coincidence is s^2.
    """
    if not spectrum.is_full_rank():
        raise RankDeficient("renormalized entropy needs a full-rank spectrum")
    s2 = spectrum.sigma**2
    iu = np.triu_indices(spectrum.dim, 1)
    a, b = s2[iu[0]], s2[iu[1]]
    t = np.log(a) - np.log(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(np.abs(t) < 1e-300, 1.0, np.expm1(t) / t)
    coincident = spectrum.coincident_pairs()[iu]
    log_mean = np.where(coincident, np.log(np.sqrt(a * b)), np.log(b) + np.log(factor))
    return 0.5 * float(np.sum(log_mean))


def entropy_sigma_gradient(sigma, depth: int) -> np.ndarray:
    """dS/d sigma_k = 1/2 sum_{j != k} [2 s_k/(s_k^2 - s_j^2) - (2/N) s_k^{2/N-1}/(s_k^{2/N} - s_j^{2/N})]."""
    s = np.asarray(sigma, dtype=float)
    d = s.size
    if d == 1 or depth == 1:
        # S is constant (zero ratio part) at d = 1 or N = 1.
        return np.zeros(d)
    diff = np.abs(s[:, None] - s[None, :])
    off = ~np.eye(d, dtype=bool)
    if np.any(diff[off] < COINC_RTOL * s.max()):
        raise CoincidentSingularValues("entropy gradient needs pairwise-distinct singular values")
    N = float(depth)
    logs = np.log(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        first = 2 * s[:, None] / (s[:, None] ** 2 - s[None, :] ** 2)
        # s_k^{2/N} - s_j^{2/N} = s_j^{2/N} expm1((2/N) log(s_k/s_j))
        denom = np.exp(2 / N * logs[None, :]) * np.expm1(2 / N * (logs[:, None] - logs[None, :]))
        second = (2 / N) * np.exp((2 / N - 1) * logs)[:, None] / denom
        terms = np.where(off, first - second, 0.0)
    return 0.5 * terms.sum(axis=1)


def entropy_gradient(svd: SvdTriple, depth: int) -> np.ndarray:
    """Euclidean gradient of S at X = Q_N Sigma Q_0^T: Q_N diag(dS/d sigma) Q_0^T."""
    if not svd.spectrum.is_full_rank():
        raise RankDeficient("entropy gradient needs a full-rank base point")
    g = entropy_sigma_gradient(svd.sigma, depth)
    return (svd.q_left * g) @ svd.q_right.T


def orbit_volume_formula(spectrum: Spectrum, depth: int, convention: Convention = "embedded") -> float:
    """c_d^{N-1} sqrt(van(Sigma^2)/van(Sigma^{2/N}))."""
    return math.exp(entropy(spectrum, depth, convention).total)


def _rot(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """R(theta) and dR/dtheta, stacked over the leading axes of theta."""
    c, s = np.cos(theta), np.sin(theta)
    R = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    dR = np.stack([np.stack([-s, -c], -1), np.stack([c, -s], -1)], -2)
    return R, dR


_REFLECTIONS = (np.eye(2), np.diag([1.0, -1.0]))


def orbit_volume_numeric(X, depth: int, grid: int = 10_000) -> float:
    """Embedded volume of the balanced orbit over X by direct quadrature (d = 2).

    N = 2: arc length of theta -> gauge(R(theta) F) . C_X summed over both
    components F of O(2). N = 3: area of (t2, t1) -> gauge(R(t2)F2, R(t1)F1) . C_X
    from sqrt(det Gram) on a grid x grid trapezoid rule, over four components.
    """
    X = as_square(X)
    if X.shape != (2, 2) or depth not in (2, 3):
        raise UnsupportedDimension("numeric orbit volume is implemented for d = 2, N in {2, 3}")
    if grid < 2:
        raise ValueError("grid must be at least 2")
    C = center_of_fiber(X, depth)
    theta = np.linspace(0.0, 2 * math.pi, grid)
    total = 0.0
    if depth == 2:
        W1, W2 = C.layers
        R, dR = _rot(theta)
        for F in _REFLECTIONS:
            dQ = dR @ F
            speed2 = np.sum((dQ @ W1) ** 2, axis=(1, 2)) + np.sum((W2 @ np.swapaxes(dQ, 1, 2)) ** 2, axis=(1, 2))
            total += np.trapezoid(np.sqrt(speed2), theta)
        return float(total)
    W1, W2, W3 = C.layers
    R, dR = _rot(theta)
    for F2 in _REFLECTIONS:
        for F1 in _REFLECTIONS:
            Q2, dQ2 = R @ F2, dR @ F2  # indexed by t2
            Q1, dQ1 = R @ F1, dR @ F1  # indexed by t1
            # tangent along t2: (W3 dQ2^T, dQ2 W2 Q1^T, 0)
            a3 = W3 @ np.swapaxes(dQ2, 1, 2)
            a2 = np.einsum("aij,jk,blk->abil", dQ2, W2, Q1)
            # tangent along t1: (0, Q2 W2 dQ1^T, dQ1 W1)
            b2 = np.einsum("aij,jk,blk->abil", Q2, W2, dQ1)
            b1 = dQ1 @ W1
            g22 = np.sum(a3**2, axis=(1, 2))[:, None] + np.sum(a2**2, axis=(2, 3))
            g11 = np.sum(b2**2, axis=(2, 3)) + np.sum(b1**2, axis=(1, 2))[None, :]
            g12 = np.sum(a2 * b2, axis=(2, 3))
            dens = np.sqrt(np.clip(g11 * g22 - g12**2, 0.0, None))
            total += np.trapezoid(np.trapezoid(dens, theta, axis=1), theta)
    return float(total)


def gram_orbit(W: Network) -> tuple[np.ndarray, list[tuple[int, int, int]]]:
    """Gram matrix of the gauge directions c^{k,l,p} translated to W.

    The generator at depth p is Q_p alpha^{k,l} Q_p^T, with the frames Q_p
    recovered from W, pushed through the infinitesimal gauge action
    (..., -W_{p+1} a_p, a_p W_p, ...). Inner products are computed entrywise;
    rows are ordered by pair (k, l), then depth p.
    """
    _, frames = recover_frames(W)
    N, d = W.depth, W.width
    labels, vecs = [], []
    for k, l in skew_pairs(d):
        alpha = skew_basis(k, l, d)
        for p in range(1, N):
            a = frames[p] @ alpha @ frames[p].T
            v = np.zeros((N, d, d))
            v[p] = -W.layer(p + 1) @ a
            v[p - 1] = a @ W.layer(p)
            vecs.append(v.ravel())
            labels.append((k, l, p))
    if not vecs:
        return np.zeros((0, 0)), labels
    V = np.array(vecs)
    return V @ V.T, labels
