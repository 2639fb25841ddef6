"""Command-line front end.

Subcommands: entropy, volume, basis, flow, verify. Settings may also come
from ``--config file.json`` (keys are the long flag names with dashes turned
into underscores); explicit flags win over the file. Usage errors exit 2,
numerical failures exit 1 with the error class name on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .basis import onb_vectors
from .entropy import entropy, orbit_volume_formula, orbit_volume_numeric
from .errors import DLNGeometryError, ReportIOError
from .flow import (
    FlowConfig,
    LossSpec,
    balanced_flow,
    closed_flow_general,
    free_energy_flow,
    param_flow,
    sweep,
)
from .linalg import Spectrum, haar_orthogonal_batch, load_matrix, svd_descending
from .manifold import FrameTuple, Network, assemble_network, center_of_fiber, load_network
from .verify import SUITES, default_lambda, run_suite

log = logging.getLogger("dlngeom")

DEFAULTS = {
    "depth": 2,
    "width": None,
    "seed": 0,
    "convention": "embedded",
    "grid": None,
    "mode": "balanced",
    "init": "balanced",
    "dt": 1e-3,
    "steps": 1000,
    "beta": "inf",
    "record_every": 10,
    "suite": "jacobi",
}


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dlngeom", description="Riemannian geometry of the deep linear network.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sigma=True):
        p.add_argument("--config", type=Path, help="JSON file of default settings")
        p.add_argument("--depth", type=int, help="network depth N")
        p.add_argument("--width", type=int, help="network width d")
        p.add_argument("--seed", type=int, help="RNG seed")
        p.add_argument("--output", type=Path, help="output file (default: stdout)")
        p.add_argument("--convention", choices=["embedded", "ponting"], help="normalization of c_d")
        p.add_argument("-v", "--verbose", action="store_true")
        if sigma:
            p.add_argument("--sigma", type=_floats, help="singular values, comma separated")
            p.add_argument("--matrix", type=Path, help="end-to-end matrix (JSON or CSV)")

    p = sub.add_parser("entropy", help="Boltzmann entropy S(X)")
    common(p)

    p = sub.add_parser("volume", help="orbit volume: closed form and, for d = 2, quadrature")
    common(p)
    p.add_argument("--grid", type=int, help="quadrature points per angle")

    p = sub.add_parser("basis", help="orthonormal tangent basis at a balanced point")
    common(p)
    p.add_argument("--network", type=Path, help="balanced network JSON")

    p = sub.add_parser("flow", help="integrate a training flow and emit a CSV trajectory")
    common(p)
    p.add_argument("--network", type=Path, help="initial network JSON (param/closed modes)")
    p.add_argument("--mode", choices=["param", "closed", "balanced", "free-energy"])
    p.add_argument("--init", choices=["balanced", "random"], help="initial network when none is given")
    p.add_argument("--target", type=Path, help="target matrix Y (JSON or CSV)")
    p.add_argument("--mask", type=Path, help="0/1 observation mask (JSON or CSV)")
    p.add_argument("--dt", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--beta", type=str, help="inverse temperature; 'inf' disables the entropy term")
    p.add_argument("--beta-sweep", type=str, help="comma-separated betas run concurrently (needs --output-dir)")
    p.add_argument("--output-dir", type=Path)
    p.add_argument("--record-every", type=int)

    p = sub.add_parser("verify", help="run a verification suite and print a JSON report")
    common(p)
    p.add_argument("--suite", choices=sorted(SUITES))
    p.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE", help="tolerance override")
    return parser


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    config = {}
    if getattr(args, "config", None) is not None:
        if not args.config.exists():
            raise UsageError(f"argument --config: file not found: {args.config}")
        try:
            config = json.loads(args.config.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"argument --config: invalid JSON ({exc})") from exc
    for key, value in vars(args).items():
        if value is None and key in config:
            value = config[key]
            if key in {"sigma"} and isinstance(value, str):
                value = _floats(value)
            if key in {"matrix", "network", "target", "mask", "output", "output_dir"}:
                value = Path(value)
            setattr(args, key, value)
    for key, value in DEFAULTS.items():
        if getattr(args, key, "missing") is None:
            setattr(args, key, value)
    return args


def _validate(args: argparse.Namespace) -> None:
    if args.depth is None or int(args.depth) < 1:
        raise UsageError(f"argument --depth: must be a positive integer, got {args.depth}")
    if args.width is not None and int(args.width) < 1:
        raise UsageError(f"argument --width: must be a positive integer, got {args.width}")
    for name in ("matrix", "network", "target", "mask"):
        path = getattr(args, name, None)
        if path is not None and not Path(path).exists():
            raise UsageError(f"argument --{name}: file not found: {path}")
    sigma = getattr(args, "sigma", None)
    if sigma is not None:
        if len(sigma) == 0 or any(s <= 0 for s in sigma):
            raise UsageError("argument --sigma: singular values must be positive")
        if args.width is not None and len(sigma) != args.width:
            raise UsageError(f"argument --sigma: expected {args.width} values for --width {args.width}")
    if args.command == "flow":
        if args.dt <= 0:
            raise UsageError("argument --dt: must be positive")
        if args.steps < 1:
            raise UsageError("argument --steps: must be a positive integer")
        if args.record_every < 1:
            raise UsageError("argument --record-every: must be a positive integer")
        try:
            beta = float(args.beta)
        except ValueError:
            raise UsageError(f"argument --beta: not a number: {args.beta}") from None
        if not beta > 0:
            raise UsageError("argument --beta: must be positive")
        if args.beta_sweep is not None:
            try:
                betas = [float(b) for b in args.beta_sweep.split(",")]
            except ValueError:
                raise UsageError(f"argument --beta-sweep: not a list of numbers: {args.beta_sweep}") from None
            if not betas or any(not b > 0 for b in betas):
                raise UsageError("argument --beta-sweep: betas must be positive")
            if args.output_dir is None:
                raise UsageError("argument --beta-sweep: requires --output-dir")
    if args.command == "volume" and args.grid is not None and args.grid < 2:
        raise UsageError("argument --grid: must be at least 2")
    if args.command == "verify":
        for item in args.tol:
            name, _, value = item.partition("=")
            try:
                float(value)
            except ValueError:
                raise UsageError(f"argument --tol: expected NAME=VALUE, got {item!r}") from None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _render(results, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(_jsonable(results), indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(results["header"])
        for row in results["rows"]:
            writer.writerow([repr(float(x)) for x in row])
        return buf.getvalue()
    raise ValueError(f"unknown format {fmt!r}")


def emit_report(results, fmt: str, path: Path | None) -> None:
    """Write ``results`` as JSON or CSV to ``path`` (stdout when None).

    Files are written to a temporary sibling and renamed, so a failed write
    never leaves partial output behind.
    """
    text = _render(results, fmt)
    if path is None:
        sys.stdout.write(text)
        return
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise ReportIOError(f"cannot write report to {path}: {exc}") from exc


def _spectrum(args) -> tuple[Spectrum, np.ndarray | None]:
    if args.matrix is not None:
        X = load_matrix(args.matrix)
        return svd_descending(X).spectrum, X
    if args.sigma is not None:
        return Spectrum.from_values(args.sigma), None
    d = args.width or 2
    return Spectrum.from_values(default_lambda(d) ** args.depth), None


def cmd_entropy(args):
    spec, _ = _spectrum(args)
    return entropy(spec, args.depth, args.convention).to_json(), "json"


def cmd_volume(args):
    spec, X = _spectrum(args)
    out = {
        "depth": args.depth,
        "sigma": spec.sigma,
        "convention": args.convention,
        "formula": orbit_volume_formula(spec, args.depth, args.convention),
        "entropy": entropy(spec, args.depth, args.convention).total,
    }
    if spec.dim == 2 and args.depth in (2, 3):
        grid = args.grid or (10_000 if args.depth == 2 else 400)
        X = np.diag(spec.sigma) if X is None else X
        numeric = orbit_volume_numeric(X, args.depth, grid)
        formula_embedded = orbit_volume_formula(spec, args.depth, "embedded")
        out.update(grid=grid, numeric=numeric, relative_error=abs(numeric - formula_embedded) / formula_embedded)
    return out, "json"


def _balanced_point(args) -> Network:
    if args.network is not None:
        return load_network(args.network)
    spec, X = _spectrum(args)
    if X is not None:
        return center_of_fiber(X, args.depth)
    lam = spec.depth_root(args.depth)
    return assemble_network(lam, FrameTuple.random(args.depth, spec.dim, args.seed))


def cmd_basis(args):
    W = _balanced_point(args)
    frame = onb_vectors(W)
    n = len(frame.vectors)
    return {
        "depth": W.depth,
        "width": W.width,
        "basis_size": n,
        "gram_error": float(np.abs(frame.gram() - np.eye(n)).max()),
        "labels": [list(lbl) for lbl in frame.labels],
    }, "json"


def _flow_inputs(args):
    rng = np.random.default_rng(args.seed)
    d = args.width
    if d is None:
        if args.matrix is not None:
            d = load_matrix(args.matrix).shape[0]
        elif args.sigma is not None:
            d = len(args.sigma)
        elif args.network is not None:
            d = load_network(args.network).width
        else:
            d = 2
    target = load_matrix(args.target) if args.target is not None else rng.standard_normal((d, d))
    if args.mask is not None:
        loss = LossSpec.masked_quadratic(target, load_matrix(args.mask))
    else:
        loss = LossSpec.quadratic(target)
    if args.matrix is not None:
        X0 = load_matrix(args.matrix)
    elif args.sigma is not None:
        Q = haar_orthogonal_batch(d, 2, args.seed)
        X0 = (Q[0] * np.sort(args.sigma)[::-1]) @ Q[1].T
    else:
        X0 = rng.standard_normal((d, d))
    if args.network is not None:
        W0 = load_network(args.network)
    elif args.init == "random":
        W0 = Network(rng.standard_normal((args.depth, d, d)) / math.sqrt(d))
    else:
        W0 = center_of_fiber(X0, args.depth)
    return loss, X0, W0


def _run_flow(args, loss, X0, W0, beta):
    cfg = FlowConfig(dt=args.dt, steps=args.steps, beta=beta, record_every=args.record_every)
    if args.mode == "param":
        return param_flow(W0, loss, cfg)
    if args.mode == "closed":
        return closed_flow_general(W0, loss, cfg)
    if args.mode == "balanced":
        return balanced_flow(X0, loss, cfg, args.depth)
    return free_energy_flow(X0, loss, cfg, args.depth, args.convention)


def _trajectory_table(traj, d: int) -> dict:
    header = ["t", "loss", "free_energy", "entropy", "balance_residual"] + [f"sigma_{k}" for k in range(1, d + 1)]
    return {"header": header, "rows": traj.rows()}


def cmd_flow(args):
    loss, X0, W0 = _flow_inputs(args)
    d = X0.shape[0] if args.mode in ("balanced", "free-energy") else W0.width
    if args.beta_sweep is not None:
        betas = [float(b) for b in args.beta_sweep.split(",")]
        trajs = sweep([lambda b=b: _run_flow(args, loss, X0, W0, b) for b in betas])
        args.output_dir.mkdir(parents=True, exist_ok=True)
        for b, traj in zip(betas, trajs):
            emit_report(_trajectory_table(traj, d), "csv", args.output_dir / f"flow_beta={b:g}.csv")
            if traj.stopped:
                log.warning("beta=%g: integration stopped early (%s)", b, traj.stopped)
        return None, None
    traj = _run_flow(args, loss, X0, W0, float(args.beta))
    if traj.stopped:
        print(f"{traj.stopped}: integration stopped at t={traj.times[-1]:g}", file=sys.stderr)
    return _trajectory_table(traj, d), "csv"


def cmd_verify(args):
    tolerances = {}
    for item in args.tol:
        name, _, value = item.partition("=")
        tolerances[name] = float(value)
    width = args.width or (len(args.sigma) if args.sigma is not None else 2)
    report = run_suite(args.suite, width, args.depth, args.sigma, args.seed, tolerances)
    return report, "json"


COMMANDS = {
    "entropy": cmd_entropy,
    "volume": cmd_volume,
    "basis": cmd_basis,
    "flow": cmd_flow,
    "verify": cmd_verify,
}


def parse_and_dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _merge_config(args)
        _validate(args)
    except (UsageError, argparse.ArgumentTypeError) as exc:
        parser.print_usage(sys.stderr)
        print(f"dlngeom: error: {exc}", file=sys.stderr)
        return 2
    try:
        results, fmt = COMMANDS[args.command](args)
        if results is not None:
            emit_report(results, fmt, args.output)
    except (DLNGeometryError, ReportIOError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if args.command == "verify" and results["status"] != "PASS":
        return 1
    return 0


def main() -> None:
    sys.exit(parse_and_dispatch())
