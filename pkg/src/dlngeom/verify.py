"""Single-point verification suites behind ``dlngeom verify``.

Each suite returns {"suite", "checks": [{"name", "value", "tolerance", "pass", ...}]}
where ``value`` is an error measure compared against ``tolerance``.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
import scipy.linalg

from .basis import onb_vectors, p_matrix, submersion_report
from .entropy import (
    block_det,
    chebyshev_eigen,
    entropy,
    entropy_infinite,
    jacobi_block,
    orbit_volume_formula,
    orbit_volume_numeric,
)
from .linalg import Spectrum, skew_pairs
from .manifold import FrameTuple, assemble_network
from .metric import density_exponent_diagnostic, volume_density

DEFAULT_TOLERANCES = {
    "jacobi": 1e-9,
    "chebyshev": 1e-10,
    "pmatrix": 1e-10,
    "volume_n2": 1e-6,
    "volume_n3": 1e-3,
    "basis": 1e-9,
    "submersion": 1e-9,
    "renorm": 1e-3,
}


def default_lambda(width: int) -> np.ndarray:
    """(d, d-1, ..., 1): distinct, well separated depth roots."""
    return np.arange(width, 0, -1, dtype=float)


def _check(name: str, value: float, tol: float | None, **extra) -> dict:
    """tol=None marks a reported-only check that always passes."""
    ok = True if tol is None else bool(value < tol)
    return {"name": name, "value": float(value), "tolerance": tol, "pass": ok, **extra}


def lu_determinant(h: np.ndarray) -> float:
    if h.shape[0] == 0:
        return 1.0
    P, L, U = scipy.linalg.lu(h)
    return float(np.linalg.det(P) * np.prod(np.diag(U)))


def suite_jacobi(lam, depth, tol, **_):
    checks = []
    for k, l in skew_pairs(len(lam)):
        lk, ll = lam[k - 1], lam[l - 1]
        formula = block_det(lk, ll, depth)
        lu = lu_determinant(jacobi_block(lk, ll, depth).entries)
        checks.append(_check(f"det[{k},{l}]", abs(formula - lu) / abs(formula), tol, formula=formula, lu=lu))
    return checks


def suite_chebyshev(lam, depth, tol, **_):
    checks = []
    for k, l in skew_pairs(len(lam)):
        block = jacobi_block(lam[k - 1], lam[l - 1], depth)
        S, sig = chebyshev_eigen(block)
        err = np.abs(S @ block.entries @ S.T - np.diag(sig)).max(initial=0.0)
        checks.append(_check(f"diag[{k},{l}]", err, tol))
    return checks


def suite_pmatrix(lam, depth, tol, **_):
    checks = []
    for k, l in skew_pairs(len(lam)):
        P = p_matrix(lam[k - 1], lam[l - 1], depth).entries
        h = jacobi_block(lam[k - 1], lam[l - 1], depth, "extended").entries
        err = np.abs(P @ h @ P.T - np.eye(depth + 1)).max()
        checks.append(_check(f"identity[{k},{l}]", err, tol))
    return checks


def suite_volume(lam, depth, tol, grid=None, **_):
    if len(lam) != 2 or depth not in (2, 3):
        raise ValueError("volume suite runs at width 2 and depth 2 or 3")
    spec = Spectrum.from_depth_root(lam, depth)
    X = np.diag(spec.sigma)
    grid = grid or (10_000 if depth == 2 else 400)
    formula = orbit_volume_formula(spec, depth)
    numeric = orbit_volume_numeric(X, depth, grid)
    return [
        _check("orbit_volume", abs(numeric - formula) / formula, tol, formula=formula, numeric=numeric),
        _check(
            "entropy_vs_log_volume",
            abs(entropy(spec, depth).total - math.log(numeric)),
            tol,
        ),
    ]


def _random_balanced(lam, depth, seed):
    return assemble_network(lam, FrameTuple.random(depth, len(lam), seed))


def suite_basis(lam, depth, tol, seed=0, **_):
    W = _random_balanced(lam, depth, seed)
    frame = onb_vectors(W)
    d = len(lam)
    n = len(frame.vectors)
    gram_err = np.abs(frame.gram() - np.eye(n)).max()
    expected = d * d + (depth - 1) * d * (d - 1) // 2
    return [
        _check("gram_identity", gram_err, tol),
        _check("basis_count", abs(n - expected), 0.5, count=n, expected=expected),
    ]


def suite_submersion(lam, depth, tol, seed=0, **_):
    rep = submersion_report(_random_balanced(lam, depth, seed))
    d = len(lam)
    return [
        _check("kernel", rep["kernel"], tol),
        _check("isometry", rep["isometry"], tol),
        _check("closed_form", rep["closed_form"], tol),
        _check("tangency", rep["tangency"], tol),
        _check(
            "kernel_dimension",
            abs(rep["kernel_dimension"] - (depth - 1) * d * (d - 1) // 2),
            0.5,
            observed=rep["kernel_dimension"],
        ),
    ]


def renormalized_gap(sigma, depth: int) -> float:
    """|1/2 log van(S^2) - 1/2 log(N^{d(d-1)/2} van(S^{2/N})) - S_inf|."""
    spec = Spectrum.from_values(sigma)
    d = spec.dim
    ratio = entropy(spec, depth).ratio_part
    approx = ratio - d * (d - 1) / 4 * math.log(depth)
    return abs(approx - entropy_infinite(spec))


def suite_renorm(lam, depth, tol, sigma=None, **_):
    sigma = np.asarray(lam if sigma is None else sigma, dtype=float)
    n_big = 10_000
    return [_check(f"gap_at_N={n_big}", renormalized_gap(sigma, n_big), tol, s_inf=entropy_infinite(Spectrum.from_values(sigma)))]


def suite_density(lam, depth, tol, seed=0, **_):
    rep = density_exponent_diagnostic(seed=seed)
    checks = []
    for entry in rep["depths"]:
        checks.append(_check(f"density_exponent_N={entry['depth']}", abs(entry["exponent_gap"]), None, **entry))
    spec = Spectrum.from_depth_root(lam, depth)
    checks.append(_check("stated_density_at_point", 0.0, None, density=volume_density(spec, depth)))
    return checks


SUITES: dict[str, Callable] = {
    "jacobi": suite_jacobi,
    "chebyshev": suite_chebyshev,
    "pmatrix": suite_pmatrix,
    "volume": suite_volume,
    "basis": suite_basis,
    "submersion": suite_submersion,
    "renorm": suite_renorm,
    "density": suite_density,
}


def run_suite(name: str, width: int, depth: int, sigma=None, seed: int = 0, tolerances=None) -> dict:
    """Run one suite at singular values ``sigma`` (default lambda = (d, ..., 1)).

    The renorm suite reads ``sigma`` directly and defaults to (d, ..., 1).
    """
    if name not in SUITES:
        raise KeyError(name)
    tolerances = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    if sigma is None:
        lam = default_lambda(width)
        sigma = default_lambda(width) if name == "renorm" else lam**depth
    else:
        sigma = np.sort(np.asarray(sigma, dtype=float))[::-1]
        lam = sigma ** (1.0 / depth)
    if name == "volume":
        tol = tolerances["volume_n2" if depth == 2 else "volume_n3"]
    else:
        tol = tolerances.get(name)
    checks = SUITES[name](lam, depth, tol, seed=seed, sigma=sigma)
    return {
        "suite": name,
        "width": int(width),
        "depth": int(depth),
        "checks": checks,
        "status": "PASS" if all(c["pass"] for c in checks) else "FAIL",
    }
