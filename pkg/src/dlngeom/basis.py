"""Orthonormal frame of the tangent space to the balanced manifold and the
check that the end-to-end map is a Riemannian submersion onto (M_d, g^N).

Tangent vectors are (N, d, d) arrays with slot ``s - 1`` holding the
component along W_s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CoincidentSingularValues, ShapeMismatch
from .linalg import COINC_RTOL, skew_basis, skew_pairs
from .manifold import Network, end_to_end, recover_frames
from .metric import MetricOperator, metric_gN
from .entropy import chebyshev_sine_matrix, chebyshev_eigenvalues

TangentVector = np.ndarray


def center_tangent_c(k: int, l: int, p: int, lam, depth: int) -> TangentVector:
    """c^{k,l,p} at the diagonal center: -Lambda alpha in slot p+1, alpha Lambda in slot p.

    p = 0 and p = N keep only the slot that exists (rotations of Q_0 and Q_N).
    """
    lam = np.asarray(lam, dtype=float)
    d = lam.size
    if not 0 <= p <= depth:
        raise IndexError(f"p must lie in 0..{depth}, got {p}")
    alpha = skew_basis(k, l, d)
    v = np.zeros((depth, d, d))
    if p + 1 <= depth:
        v[p] = -lam[:, None] * alpha
    if p >= 1:
        v[p - 1] = alpha * lam[None, :]
    return v


def center_tangent_m(k: int, d: int, depth: int) -> TangentVector:
    """m^k = (e_k e_k^T, ..., e_k e_k^T)."""
    v = np.zeros((depth, d, d))
    v[:, k - 1, k - 1] = 1.0
    return v


@dataclass(frozen=True)
class PMatrix:
    k: int
    l: int
    depth: int
    entries: np.ndarray
    boundary_norm: float  # sigma_0 = sigma_N


def p_matrix(lk: float, ll: float, depth: int, k: int = 1, l: int = 2) -> PMatrix:
    """Rows normalize the extended Jacobi block: P h~ P^T = I_{N+1}.

    Row 0 and row N are the geometric sequences lk^q ll^{N-q} and lk^{N-q} ll^q
    scaled by 1/sqrt(sigma_0) with sigma_0 = (ll^2 - lk^2)(ll^{2N} - lk^{2N})/2;
    interior rows are sine vectors (zero at q = 0, N) scaled by 1/sqrt(sigma_p).
    """
    if abs(lk - ll) < COINC_RTOL * max(lk, ll):
        raise CoincidentSingularValues("extended Jacobi block is singular when lambda_k = lambda_l")
    N = depth
    q = np.arange(N + 1)
    sigma0 = 0.5 * (ll**2 - lk**2) * (ll ** (2 * N) - lk ** (2 * N))
    P = np.zeros((N + 1, N + 1))
    P[0] = lk**q * ll ** (N - q) / math.sqrt(sigma0)
    P[N] = lk ** (N - q) * ll**q / math.sqrt(sigma0)
    if N >= 2:
        P[1:N, 1:N] = chebyshev_sine_matrix(N) / np.sqrt(chebyshev_eigenvalues(lk, ll, N))[:, None]
    return PMatrix(k, l, N, P, sigma0)


def translate(frames: np.ndarray, w: TangentVector) -> TangentVector:
    """Slot s of the result is Q_s w_s Q_{s-1}^T."""
    return frames[1:] @ w @ np.swapaxes(frames[:-1], 1, 2)


@dataclass(frozen=True)
class TangentFrame:
    vectors: list[TangentVector]
    labels: list[tuple]
    lam: np.ndarray
    frames: np.ndarray = field(repr=False)

    def matrix(self) -> np.ndarray:
        """Vectors flattened into the rows of a (dim B, N d^2) array."""
        return np.array([v.ravel() for v in self.vectors])

    def gram(self) -> np.ndarray:
        V = self.matrix()
        return V @ V.T


def onb_vectors(W: Network) -> TangentFrame:
    """Orthonormal basis {v^k} u {u^{k,l,p}, 0 <= p <= N} of T_W B.

    Built at the diagonal center from v^k = m^k/sqrt(N) and
    u^{k,l,p} = sum_r P_{pr} c^{k,l,r}, then moved to W by the frame action.
    """
    svd, frames = recover_frames(W)
    if svd.spectrum.has_coincidence():
        raise CoincidentSingularValues("orthonormal basis needs distinct singular values")
    N, d = W.depth, W.width
    lam = np.array(svd.spectrum.depth_root(N))
    vectors, labels = [], []
    for k in range(1, d + 1):
        vectors.append(translate(frames, center_tangent_m(k, d, N) / math.sqrt(N)))
        labels.append(("v", k))
    for k, l in skew_pairs(d):
        P = p_matrix(lam[k - 1], lam[l - 1], N, k, l).entries
        cs = np.array([center_tangent_c(k, l, r, lam, N) for r in range(N + 1)])
        for p in range(N + 1):
            vectors.append(translate(frames, np.tensordot(P[p], cs, axes=1)))
            labels.append(("u", k, l, p))
    return TangentFrame(vectors, labels, lam, frames)


def pushforward_dphi(W: Network, t: TangentVector) -> np.ndarray:
    """sum_p W_N ... W_{p+1} t_p W_{p-1} ... W_1."""
    t = np.asarray(t, dtype=float)
    if t.shape != W.layers.shape:
        raise ShapeMismatch(f"tangent shape {t.shape} does not match network {W.layers.shape}")
    N, d = W.depth, W.width
    below = [np.eye(d)]
    for p in range(1, N):
        below.append(W.layer(p) @ below[-1])
    out = np.zeros((d, d))
    above = np.eye(d)
    for p in range(N, 0, -1):
        out += above @ t[p - 1] @ below[p - 1]
        above = above @ W.layer(p)
    return out


def balance_constraint_residual(W: Network, t: TangentVector) -> float:
    """Max norm of the linearized balance equations at W applied to t."""
    L = W.layers
    t = np.asarray(t, dtype=float)
    T = np.swapaxes
    lin = (T(t[1:], 1, 2) @ L[1:] + T(L[1:], 1, 2) @ t[1:]) - (t[:-1] @ T(L[:-1], 1, 2) + L[:-1] @ T(t[:-1], 1, 2))
    return float(np.abs(lin).max(initial=0.0))


def submersion_report(W: Network) -> dict:
    """Numerical evidence that phi: (B, Frobenius) -> (M_d, g^N) is a Riemannian submersion.

    kernel: max ||phi_* u^{k,l,p}||, 1 <= p <= N-1.
    isometry: max |g^N(phi_* e_i, phi_* e_j) - delta_ij| over the horizontal
        vectors {v^k, u^{k,l,0}, u^{k,l,N}}.
    closed_form: max relative error of phi_* v^k = sqrt(N) lam_k^{N-1} q_{N,k} q_{0,k}^T,
        phi_* u^{k,l,0} = +-c q_{N,l} q_{0,k}^T and phi_* u^{k,l,N} = +-c q_{N,k} q_{0,l}^T,
        c = sqrt((lam_k^{2N} - lam_l^{2N})/(lam_k^2 - lam_l^2)).
    """
    basis = onb_vectors(W)
    N, d = W.depth, W.width
    lam = basis.lam
    QN, Q0 = basis.frames[-1], basis.frames[0]
    op = MetricOperator.at(end_to_end(W), N)
    pushed = [pushforward_dphi(W, v) for v in basis.vectors]

    kernel = 0.0
    horizontal = []
    closed = 0.0
    tangency = 0.0
    for label, v, Z in zip(basis.labels, basis.vectors, pushed):
        tangency = max(tangency, balance_constraint_residual(W, v))
        if label[0] == "v":
            k = label[1]
            expected = math.sqrt(N) * lam[k - 1] ** (N - 1) * np.outer(QN[:, k - 1], Q0[:, k - 1])
            closed = max(closed, np.abs(Z - expected).max() / (math.sqrt(N) * lam[k - 1] ** (N - 1)))
            horizontal.append(Z)
            continue
        _, k, l, p = label
        if 1 <= p <= N - 1:
            kernel = max(kernel, float(np.linalg.norm(Z)))
            continue
        c = math.sqrt((lam[k - 1] ** (2 * N) - lam[l - 1] ** (2 * N)) / (lam[k - 1] ** 2 - lam[l - 1] ** 2))
        if p == 0:
            shape = np.outer(QN[:, l - 1], Q0[:, k - 1])
        else:
            shape = np.outer(QN[:, k - 1], Q0[:, l - 1])
        sign = 1.0 if np.sum(Z * shape) >= 0 else -1.0
        closed = max(closed, np.abs(Z - sign * c * shape).max() / c)
        horizontal.append(Z)

    G = np.array([[metric_gN(op, a, b) for b in horizontal] for a in horizontal])
    isometry = float(np.abs(G - np.eye(len(horizontal))).max())
    V = np.array([Z.ravel() for Z in pushed])
    rank = int(np.linalg.matrix_rank(V, tol=1e-8 * max(1.0, np.abs(V).max())))
    return {
        "depth": N,
        "width": d,
        "basis_size": len(basis.vectors),
        "horizontal_size": len(horizontal),
        "kernel_dimension": len(basis.vectors) - rank,
        "kernel": kernel,
        "isometry": isometry,
        "closed_form": float(closed),
        "tangency": tangency,
    }

