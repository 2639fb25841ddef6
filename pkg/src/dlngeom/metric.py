"""The metric operator A_{N,X}, the metric g^N it induces on full-rank
matrices, and the SVD-coordinate volume density.

A_{N,X} is diagonal in the rank-one frame q_{N,k} q_{0,l}^T, so it is always
applied spectrally; ``apply_A_power_sum`` evaluates the literal sum of
fractional powers and is kept as a reference for testing.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import RankDeficient
from .linalg import Spectrum, SvdTriple, as_square, log_power_sum, svd_descending, vandermonde

log = logging.getLogger(__name__)


def eigen_table(spectrum: Spectrum, depth: int) -> np.ndarray:
    """nu_{k,l} = (s_k^2 - s_l^2)/(s_k^{2/N} - s_l^{2/N}); N s_k^{2-2/N} on the diagonal."""
    if not spectrum.is_full_rank():
        raise RankDeficient("metric operator needs a full-rank base point")
    lam = spectrum.depth_root(depth)
    coincident = spectrum.coincident_pairs()
    return np.exp(log_power_sum(lam[:, None], lam[None, :], depth, coincident))


@dataclass(frozen=True)
class MetricOperator:
    svd: SvdTriple
    depth: int
    eigen_table: np.ndarray

    @classmethod
    def at(cls, X, depth: int) -> "MetricOperator":
        if depth < 1:
            raise ValueError("depth must be positive")
        svd = svd_descending(X)
        return cls(svd, depth, eigen_table(svd.spectrum, depth))

    @property
    def dim(self) -> int:
        return self.eigen_table.shape[0]

    def to_frame(self, P) -> np.ndarray:
        """Coordinates M = Q_N^T P Q_0 in the rank-one singular frame."""
        return self.svd.q_left.T @ P @ self.svd.q_right

    def from_frame(self, M) -> np.ndarray:
        return self.svd.q_left @ M @ self.svd.q_right.T


def apply_A(op: MetricOperator, P, direction: Literal["forward", "inverse"] = "forward") -> np.ndarray:
    P = as_square(P, "P")
    M = op.to_frame(P)
    if direction == "forward":
        return op.from_frame(op.eigen_table * M)
    if direction == "inverse":
        return op.from_frame(M / op.eigen_table)
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def metric_gN(op: MetricOperator, Z1, Z2) -> float:
    """g^N(Z1, Z2) = Tr(Z1^T A^{-1} Z2)."""
    M1 = op.to_frame(as_square(Z1, "Z1"))
    M2 = op.to_frame(as_square(Z2, "Z2"))
    return float(np.sum(M1 * M2 / op.eigen_table))


def _sym_power(S: np.ndarray, a: float) -> np.ndarray:
    w, V = np.linalg.eigh(S)
    w = np.clip(w, 0.0, None)
    return (V * w**a) @ V.T


def apply_A_power_sum(X, P, depth: int) -> np.ndarray:
    """sum_{p=1}^N (XX^T)^{(N-p)/N} P (X^T X)^{(p-1)/N}, term by term."""
    X = as_square(X)
    P = as_square(P, "P")
    left = X @ X.T
    right = X.T @ X
    out = np.zeros_like(P)
    for p in range(1, depth + 1):
        out += _sym_power(left, (depth - p) / depth) @ P @ _sym_power(right, (p - 1) / depth)
    return out


def volume_density(spectrum: Spectrum, depth: int) -> float:
    """det(Sigma^2)^{(N-1)/(2N)} * van(Sigma^{2/N}), as stated for (Sigma, Q_0, Q_N) coordinates."""
    if not spectrum.is_full_rank():
        raise RankDeficient("volume density needs a full-rank spectrum")
    s = spectrum.sigma
    det_sq = float(np.prod(s**2))
    return det_sq ** ((depth - 1) / (2 * depth)) * abs(vandermonde(s ** (2.0 / depth)))


def _rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def _svd_chart(params: np.ndarray) -> np.ndarray:
    s1, s2, a, b = params
    return _rotation(a) @ np.diag([s1, s2]) @ _rotation(b).T


def density_ratio_numeric(sigma, depth: int, angles=(0.3, -0.7), h: float = 1e-6) -> float:
    """[sqrt(det g^N) * |SVD Jacobian|] / |van(Sigma^{2/N})| for d = 2, all numeric.

    g^N is assembled from the power-sum operator in the standard basis of
    2x2 matrices; the Jacobian of (s1, s2, a, b) -> R(a) diag(s) R(b)^T is
    taken by central differences.
    """
    s = np.sort(np.asarray(sigma, dtype=float))[::-1]
    x0 = np.array([s[0], s[1], angles[0], angles[1]])
    X = _svd_chart(x0)
    basis = np.eye(4).reshape(4, 2, 2)
    A = np.array([apply_A_power_sum(X, E, depth).ravel() for E in basis]).T
    g = np.linalg.inv(A)
    sqrt_det_g = math.sqrt(np.linalg.det(0.5 * (g + g.T)))
    J = np.empty((4, 4))
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        J[:, i] = (_svd_chart(x0 + e) - _svd_chart(x0 - e)).ravel() / (2 * h)
    return sqrt_det_g * abs(np.linalg.det(J)) / abs(vandermonde(s ** (2.0 / depth)))


def density_exponent_diagnostic(depths=(2, 3), samples: int = 50, seed: int = 0) -> dict:
    """Fit e in ratio ~ det(Sigma)^e for d = 2 and compare with (N-1)/N.

    Non-blocking: the fitted exponent and the stated one are reported side by
    side, together with the fitted prefactor against N^{-d/2}.
    """
    rng = np.random.default_rng(seed)
    report = {"width": 2, "samples": samples, "depths": []}
    for N in depths:
        logs_det, logs_ratio = [], []
        for _ in range(samples):
            s = np.sort(rng.uniform(0.3, 3.0, 2))[::-1]
            if s[0] - s[1] < 0.05:
                s[0] += 0.05
            logs_det.append(math.log(s[0] * s[1]))
            logs_ratio.append(math.log(density_ratio_numeric(s, N)))
        A = np.column_stack([np.ones(samples), logs_det])
        (intercept, slope), *_ = np.linalg.lstsq(A, np.array(logs_ratio), rcond=None)
        resid = float(np.max(np.abs(A @ [intercept, slope] - logs_ratio)))
        stated = (N - 1) / N
        entry = {
            "depth": N,
            "fitted_exponent": float(slope),
            "stated_exponent": stated,
            "exponent_gap": float(slope - stated),
            "fitted_log_prefactor": float(intercept),
            "log_N_to_minus_half_d": -math.log(N),
            "fit_max_residual": resid,
        }
        log.info("density exponent N=%d: fitted %.6f, stated %.6f", N, slope, stated)
        report["depths"].append(entry)
    return report
