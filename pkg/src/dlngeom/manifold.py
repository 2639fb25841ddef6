"""Networks on the balanced manifold: the (Lambda, Q_N..Q_0) parametrization,
fiber centers, the gauge and frame group actions, and balancedness checks.

Layers are stored bottom-up: ``layers[p - 1]`` is W_p, so ``layers[-1]`` is
the output layer W_N.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import reduce
from pathlib import Path

import numpy as np

from .errors import NonFinite, NotBalanced, RankDeficient, ShapeMismatch
from .linalg import Spectrum, SvdTriple, as_square, haar_orthogonal_batch, svd_descending

ORTHO_TOL = 1e-10
# Relative tolerance (against max ||W_p||^2) for accepting a point as balanced.
BALANCE_RTOL = 1e-8


@dataclass(frozen=True)
class Network:
    layers: np.ndarray  # shape (N, d, d), layers[p-1] = W_p

    def __post_init__(self):
        L = np.array(self.layers, dtype=float)
        if L.ndim != 3 or L.shape[1] != L.shape[2] or L.shape[0] < 1:
            raise ShapeMismatch(f"layers must have shape (N, d, d), got {L.shape}")
        if not np.all(np.isfinite(L)):
            raise NonFinite("network contains NaN or Inf")
        L.setflags(write=False)
        object.__setattr__(self, "layers", L)

    @classmethod
    def from_top_down(cls, layers) -> "Network":
        """Build from the tuple (W_N, ..., W_1)."""
        return cls(np.array([as_square(W) for W in layers][::-1]))

    @property
    def depth(self) -> int:
        return self.layers.shape[0]

    @property
    def width(self) -> int:
        return self.layers.shape[1]

    def layer(self, p: int) -> np.ndarray:
        if not 1 <= p <= self.depth:
            raise IndexError(f"layer index {p} outside 1..{self.depth}")
        return self.layers[p - 1]

    def to_json(self) -> dict:
        return {
            "depth": self.depth,
            "width": self.width,
            "layers": {str(p): self.layer(p).tolist() for p in range(1, self.depth + 1)},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Network":
        N, d = int(obj["depth"]), int(obj["width"])
        layers = [np.array(obj["layers"][str(p)], dtype=float) for p in range(1, N + 1)]
        net = cls(np.array(layers))
        if net.width != d:
            raise ShapeMismatch(f"width {d} does not match layer shape {net.layers.shape}")
        return net


def load_network(path) -> Network:
    return Network.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class BalanceReport:
    residuals: np.ndarray  # r_p for p = 1..N-1

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max()) if self.residuals.size else 0.0


def _check_orthogonal(Q: np.ndarray, what: str) -> None:
    d = Q.shape[-1]
    err = np.abs(np.swapaxes(Q, -1, -2) @ Q - np.eye(d)).max(initial=0.0)
    if err > ORTHO_TOL:
        raise ValueError(f"{what} is not orthogonal (error {err:.2e})")


@dataclass(frozen=True)
class GaugeElement:
    """(Q_{N-1}, ..., Q_1) stored bottom-up: rotations[p-1] = Q_p."""

    rotations: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotations, dtype=float)
        if R.ndim != 3:
            raise ShapeMismatch(f"rotations must have shape (N-1, d, d), got {R.shape}")
        _check_orthogonal(R, "gauge rotation")
        object.__setattr__(self, "rotations", R)

    @classmethod
    def random(cls, depth: int, width: int, seed: int) -> "GaugeElement":
        return cls(haar_orthogonal_batch(width, depth - 1, seed))


@dataclass(frozen=True)
class FrameTuple:
    """(Q_N, ..., Q_0) stored bottom-up: frames[p] = Q_p for p = 0..N."""

    frames: np.ndarray

    def __post_init__(self):
        F = np.array(self.frames, dtype=float)
        if F.ndim != 3 or F.shape[0] < 2:
            raise ShapeMismatch(f"frames must have shape (N+1, d, d), got {F.shape}")
        _check_orthogonal(F, "frame")
        object.__setattr__(self, "frames", F)

    @classmethod
    def random(cls, depth: int, width: int, seed: int) -> "FrameTuple":
        return cls(haar_orthogonal_batch(width, depth + 1, seed))

    @classmethod
    def identity(cls, depth: int, width: int) -> "FrameTuple":
        return cls(np.broadcast_to(np.eye(width), (depth + 1, width, width)))

    @property
    def depth(self) -> int:
        return self.frames.shape[0] - 1


def assemble_network(lam, frames: FrameTuple) -> Network:
    """W_p = Q_p diag(lam) Q_{p-1}^T."""
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if np.any(lam <= 0):
        raise RankDeficient("all depth roots lambda_k must be positive")
    F = frames.frames
    if F.shape[1] != lam.size:
        raise ShapeMismatch(f"lambda has {lam.size} entries, frames are {F.shape[1]}x{F.shape[1]}")
    return Network((F[1:] * lam) @ np.swapaxes(F[:-1], 1, 2))


def end_to_end(W: Network) -> np.ndarray:
    """X = W_N ... W_1."""
    return reduce(lambda acc, Wp: Wp @ acc, W.layers[1:], W.layers[0].copy())


def g_charges(W: Network) -> np.ndarray:
    """G_p = W_{p+1}^T W_{p+1} - W_p W_p^T for p = 1..N-1, stacked."""
    L = W.layers
    return np.swapaxes(L[1:], 1, 2) @ L[1:] - L[:-1] @ np.swapaxes(L[:-1], 1, 2)


def balance_residual(W: Network) -> BalanceReport:
    G = g_charges(W)
    return BalanceReport(np.sqrt(np.sum(G**2, axis=(1, 2))))


def center_of_fiber(X, depth: int) -> Network:
    """(Q_N Lambda, Lambda, ..., Lambda, Lambda Q_0^T) with Lambda = Sigma^{1/N}."""
    if depth < 1:
        raise ValueError("depth must be positive")
    svd = svd_descending(X)
    if svd.sigma[-1] <= 0:
        raise RankDeficient("center of fiber needs a full-rank end-to-end matrix")
    lam = svd.spectrum.depth_root(depth)
    d = lam.size
    frames = np.broadcast_to(np.eye(d), (depth + 1, d, d)).copy()
    frames[0] = svd.q_right
    frames[-1] = svd.q_left
    return assemble_network(lam, FrameTuple(frames))


def gauge_act(Q: GaugeElement, W: Network) -> Network:
    """(W_N Q_{N-1}^T, Q_{N-1} W_{N-1} Q_{N-2}^T, ..., Q_1 W_1)."""
    R = Q.rotations
    if R.shape != (W.depth - 1, W.width, W.width):
        raise ShapeMismatch(f"gauge of shape {R.shape} does not fit network {W.layers.shape}")
    eye = np.eye(W.width)[None]
    full = np.concatenate([eye, R, eye])
    return Network(full[1:] @ W.layers @ np.swapaxes(full[:-1], 1, 2))


def full_orthogonal_act(frames: FrameTuple, W: Network) -> Network:
    """(Q_N W_N Q_{N-1}^T, ..., Q_1 W_1 Q_0^T)."""
    F = frames.frames
    if F.shape != (W.depth + 1, W.width, W.width):
        raise ShapeMismatch(f"frames of shape {F.shape} do not fit network {W.layers.shape}")
    return Network(F[1:] @ W.layers @ np.swapaxes(F[:-1], 1, 2))


def require_balanced(W: Network) -> None:
    scale = max(1.0, float(np.max(np.sum(W.layers**2, axis=(1, 2)))))
    r = balance_residual(W).max_residual
    if r > BALANCE_RTOL * scale:
        raise NotBalanced(f"balance residual {r:.3e} exceeds tolerance {BALANCE_RTOL * scale:.1e}")


def recover_frames(W: Network) -> tuple[SvdTriple, np.ndarray]:
    """Factor a full-rank balanced network as W_p = Q_p Lambda Q_{p-1}^T.

    Q_N and Q_0 come from ``svd_descending`` of the end-to-end matrix; the
    interior frames follow from Q_p = W_p Q_{p-1} Lambda^{-1}. Returns the SVD
    of X and the frames stacked bottom-up (index p holds Q_p).
    """
    require_balanced(W)
    svd = svd_descending(end_to_end(W))
    if svd.sigma[-1] <= 0 or svd.sigma[-1] < 1e-12 * svd.sigma[0]:
        raise RankDeficient("balanced network is not full rank")
    lam = svd.spectrum.depth_root(W.depth)
    frames = np.empty((W.depth + 1, W.width, W.width))
    frames[0] = svd.q_right
    for p in range(1, W.depth + 1):
        frames[p] = (W.layer(p) @ frames[p - 1]) / lam
    err = np.abs(np.swapaxes(frames, 1, 2) @ frames - np.eye(W.width)).max()
    if err > 1e-6:
        raise NotBalanced(f"recovered frames are not orthogonal (error {err:.2e})")
    return svd, frames
