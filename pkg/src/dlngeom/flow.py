"""Fixed-step RK4 integrators for deep linear network training dynamics.

param_flow integrates the layer-wise gradient flow; closed_flow_general
co-integrates the end-to-end equation alongside the full network;
balanced_flow and free_energy_flow evolve X alone under the metric operator.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .entropy import Convention, entropy, entropy_gradient
from .errors import CoincidentSingularValues, DLNGeometryError, NonFinite, RankDeficient
from .linalg import RANK_RTOL, as_square, svd_descending
from .manifold import Network, balance_residual, end_to_end, g_charges
from .metric import MetricOperator, apply_A


@dataclass(frozen=True)
class LossSpec:
    """E(X) = 1/2 ||mask * (X - target)||_F^2 (mask of ones for the plain quadratic)."""

    kind: Literal["quadratic", "masked_quadratic"]
    target: np.ndarray
    mask: np.ndarray

    @classmethod
    def quadratic(cls, target) -> "LossSpec":
        Y = as_square(target, "target")
        return cls("quadratic", Y, np.ones_like(Y))

    @classmethod
    def masked_quadratic(cls, target, mask) -> "LossSpec":
        Y = as_square(target, "target")
        M = np.asarray(mask, dtype=float)
        if M.shape != Y.shape or not np.all((M == 0) | (M == 1)):
            raise ValueError("mask must be a 0/1 matrix shaped like the target")
        return cls("masked_quadratic", Y, M)

    def value(self, X) -> float:
        R = self.mask * (X - self.target)
        return 0.5 * float(np.sum(R * R))

    def differential(self, X) -> np.ndarray:
        """dE(X)_{jk} = dE/dX_{jk}."""
        return self.mask * (X - self.target)


@dataclass(frozen=True)
class FlowConfig:
    dt: float = 1e-3
    steps: int = 1000
    beta: float = math.inf
    record_every: int = 1
    integrator: Literal["rk4"] = "rk4"

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be a positive finite number")
        if self.steps < 1 or self.record_every < 1:
            raise ValueError("steps and record_every must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive (use inf for no entropy term)")
        if self.integrator != "rk4":
            raise ValueError("only the rk4 integrator is available")


@dataclass
class Trajectory:
    depth: int
    times: list[float] = field(default_factory=list)
    states: list = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    free_energy: list[float] = field(default_factory=list)
    entropy: list[float] = field(default_factory=list)
    balance_residual: list[float] = field(default_factory=list)
    charge_drift: list[float] = field(default_factory=list)
    sigma: list[np.ndarray] = field(default_factory=list)
    stopped: str | None = None  # error name if integration was cut short

    def end_to_end(self) -> list[np.ndarray]:
        return [end_to_end(s) if isinstance(s, Network) else s for s in self.states]

    def rows(self) -> list[list[float]]:
        return [
            [t, e, f, s, b, *sig]
            for t, e, f, s, b, sig in zip(
                self.times, self.loss, self.free_energy, self.entropy, self.balance_residual, self.sigma
            )
        ]


def rk4_step(f: Callable[[np.ndarray], np.ndarray], y: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _partial_products(L: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """above[p] = W_N ... W_{p+1}, below[p] = W_{p-1} ... W_1 for p = 1..N (index p-1)."""
    N, d = L.shape[0], L.shape[1]
    below = [np.eye(d)]
    for p in range(N - 1):
        below.append(L[p] @ below[-1])
    above = [np.eye(d)]
    for p in range(N - 1, 0, -1):
        above.append(above[-1] @ L[p])
    return above[::-1], below


def param_vector_field(L: np.ndarray, loss: LossSpec) -> np.ndarray:
    """dW_p/dt = -(W_N ... W_{p+1})^T dE(X) (W_{p-1} ... W_1)^T."""
    above, below = _partial_products(L)
    X = L[-1] @ below[-1]
    dE = loss.differential(X)
    return -np.array([a.T @ dE @ b.T for a, b in zip(above, below)])


def _entropy_or_nan(X, depth: int, convention: Convention = "embedded") -> float:
    try:
        return entropy(svd_descending(X).spectrum, depth, convention).total
    except DLNGeometryError:
        return math.nan


def _record(traj: Trajectory, t: float, state, X: np.ndarray, loss: LossSpec, beta: float,
            balance: float, drift: float, convention: Convention = "embedded") -> None:
    E = loss.value(X)
    S = _entropy_or_nan(X, traj.depth, convention)
    traj.times.append(t)
    traj.states.append(state)
    traj.loss.append(E)
    traj.entropy.append(S)
    traj.free_energy.append(E if math.isinf(beta) else E - S / beta)
    traj.balance_residual.append(balance)
    traj.charge_drift.append(drift)
    traj.sigma.append(np.linalg.svd(X, compute_uv=False))


def param_flow(W0: Network, loss: LossSpec, cfg: FlowConfig) -> Trajectory:
    """RK4 for the layer-wise gradient flow of E(W_N ... W_1)."""
    L = np.array(W0.layers)
    G0 = g_charges(W0)
    traj = Trajectory(W0.depth)

    def record(step: int, L: np.ndarray) -> None:
        W = Network(L)
        drift = float(np.sqrt(np.sum((g_charges(W) - G0) ** 2, axis=(1, 2))).max(initial=0.0))
        _record(traj, step * cfg.dt, W, end_to_end(W), loss, cfg.beta, balance_residual(W).max_residual, drift)

    record(0, L)
    for step in range(1, cfg.steps + 1):
        L = rk4_step(lambda y: param_vector_field(y, loss), L, cfg.dt)
        if not np.all(np.isfinite(L)):
            traj.stopped = NonFinite.__name__
            break
        if step % cfg.record_every == 0 or step == cfg.steps:
            record(step, L)
    return traj


def closed_flow_general(W0: Network, loss: LossSpec, cfg: FlowConfig) -> Trajectory:
    """dX/dt = -sum_p (A_{p+1} A_{p+1}^T) dE(X) (B_{p-1}^T B_{p-1}).

    The partial products A, B come from the network, which is integrated
    alongside X; dE is evaluated at the co-integrated X, not at phi(W).
    """
    N, d = W0.depth, W0.width
    y = np.concatenate([np.array(W0.layers), end_to_end(W0)[None]])

    def field_(y: np.ndarray) -> np.ndarray:
        L, X = y[:N], y[N]
        above, below = _partial_products(L)
        dE = loss.differential(X)
        dX = -sum(a @ a.T @ dE @ b.T @ b for a, b in zip(above, below))
        return np.concatenate([param_vector_field(L, loss), dX[None]])

    traj = Trajectory(N)
    G0 = g_charges(W0)

    def record(step: int, y: np.ndarray) -> None:
        W = Network(y[:N])
        drift = float(np.sqrt(np.sum((g_charges(W) - G0) ** 2, axis=(1, 2))).max(initial=0.0))
        X = y[N].copy()
        _record(traj, step * cfg.dt, X, X, loss, cfg.beta, balance_residual(W).max_residual, drift)

    record(0, y)
    for step in range(1, cfg.steps + 1):
        y = rk4_step(field_, y, cfg.dt)
        if not np.all(np.isfinite(y)):
            traj.stopped = NonFinite.__name__
            break
        if step % cfg.record_every == 0 or step == cfg.steps:
            record(step, y)
    return traj


def riemannian_grad(op: MetricOperator, dE) -> np.ndarray:
    """grad_{g^N} E = A_{N,X}(dE)."""
    return apply_A(op, dE, "forward")


def _check_rank(X: np.ndarray) -> None:
    s = np.linalg.svd(X, compute_uv=False)
    if not s[-1] > RANK_RTOL * s[0]:
        raise RankDeficient(f"sigma_d = {s[-1]:.3e} fell below {RANK_RTOL:g} * sigma_1")


def _end_to_end_flow(X0, loss: LossSpec, cfg: FlowConfig, depth: int,
                     direction: Callable[[MetricOperator, np.ndarray], np.ndarray],
                     convention: Convention = "embedded") -> Trajectory:
    X = as_square(X0, "X0")
    _check_rank(X)
    traj = Trajectory(depth)

    def field_(X: np.ndarray) -> np.ndarray:
        _check_rank(X)
        op = MetricOperator.at(X, depth)
        return -riemannian_grad(op, direction(op, X))

    _record(traj, 0.0, X.copy(), X, loss, cfg.beta, math.nan, math.nan, convention)
    for step in range(1, cfg.steps + 1):
        try:
            X = rk4_step(field_, X, cfg.dt)
            if not np.all(np.isfinite(X)):
                raise NonFinite("state became non-finite")
            _check_rank(X)
        except DLNGeometryError as exc:
            traj.stopped = type(exc).__name__
            break
        if step % cfg.record_every == 0 or step == cfg.steps:
            _record(traj, step * cfg.dt, X.copy(), X, loss, cfg.beta, math.nan, math.nan, convention)
    return traj


def balanced_flow(X0, loss: LossSpec, cfg: FlowConfig, depth: int) -> Trajectory:
    """dX/dt = -sum_p (XX^T)^{(N-p)/N} dE(X) (X^T X)^{(p-1)/N}, applied spectrally."""
    return _end_to_end_flow(X0, loss, cfg, depth, lambda op, X: loss.differential(X))


def free_energy(X, loss: LossSpec, depth: int, beta: float, convention: Convention = "embedded") -> float:
    """F_beta(X) = E(X) - S(X)/beta; beta = inf gives E(X)."""
    X = as_square(X)
    E = loss.value(X)
    if math.isinf(beta):
        return E
    svd = svd_descending(X)
    return E - entropy(svd.spectrum, depth, convention).total / beta


def free_energy_flow(X0, loss: LossSpec, cfg: FlowConfig, depth: int, convention: Convention = "embedded") -> Trajectory:
    """dX/dt = -A_{N,X}(dE(X) - dS(X)/beta)."""
    beta = cfg.beta

    def direction(op: MetricOperator, X: np.ndarray) -> np.ndarray:
        dE = loss.differential(X)
        if math.isinf(beta):
            return dE
        if op.svd.spectrum.has_coincidence():
            raise CoincidentSingularValues("entropy gradient undefined at coincident singular values")
        return dE - entropy_gradient(op.svd, depth) / beta

    return _end_to_end_flow(X0, loss, cfg, depth, direction, convention)


def max_workers() -> int:
    env = os.environ.get("DLN_GEOM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def sweep(tasks: list[Callable[[], Trajectory]]) -> list[Trajectory]:
    """Run independent trajectories concurrently; results keep task order."""
    with ThreadPoolExecutor(max_workers=min(max_workers(), max(1, len(tasks)))) as pool:
        return list(pool.map(lambda task: task(), tasks))
