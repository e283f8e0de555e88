"""Command-line interface for geodesum."""

import argparse
import io
import json
import logging
import math
import sys
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np
import pandas as pd

from .config import Tolerances, default_tolerances
from .exceptions import DimensionMismatch, GeodesumError
from .kernels import (
    beta_fn,
    beta_fn_quadrature,
    f_T_trace_table,
    jacobian_check_d2,
    jacobian_check_d3,
    kernel_slice_table,
    r_phi_closed_d2,
    r_phi_direct,
    r_phi_kernel,
)
from .spectra import (
    atomic_write_text,
    decay_fit,
    load_coeffs,
    load_spectral,
    partial_sum_exponent,
    triple_growth_check,
    weyl_check,
)
from .summation import sumcheck
from .testfn import PhiT, build_psi, psi_hat_table, psi_table, standard_fixtures
from .transforms import ModelParams

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_TOLERANCE = 2

BETA_TOLERANCE = 1e-10
KERNEL_TOLERANCE = 1e-6
JACOBIAN_TOLERANCE = 1e-6
FT_TOLERANCE = 1e-5
FD_STEP = 1e-4
FT_TOLERANCES = Tolerances(1e-13, 1e-12)
BETA_GRID = "-5:5:21"
FT_GRID = "-3:3:41"
GROWTH_MODES = ("decay", "partial-sum", "weyl", "triple")
EXPORTS = ("psi", "psi-hat", "kernel-slice")


class UsageError(Exception):
    """Bad command-line input; reported with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> Any:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


@dataclass(frozen=True)
class RunConfig:
    """Everything a run depends on; embedded in every report."""

    command: str
    seed: int
    abs_tol: float
    rel_tol: float
    parameters: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "seed": self.seed,
            "tolerances": {"abs_tol": self.abs_tol, "rel_tol": self.rel_tol},
            "parameters": dict(self.parameters),
        }


# ---------------------------------------------------------------------------
# Argument helpers
# ---------------------------------------------------------------------------


def parse_grid(text: str) -> np.ndarray:
    """``"0,1.5,4"`` or ``"start:stop:count"`` into a float array."""
    text = text.strip()
    if not text:
        raise UsageError("grid is empty")
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            n = int(count)
            if n < 1:
                raise UsageError(f"grid {text!r} has no points")
            return np.linspace(float(start), float(stop), n)
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse grid {text!r}: {exc}") from exc
    if not values:
        raise UsageError("grid is empty")
    return np.asarray(values)


def parse_window(text: Optional[str]) -> Optional[tuple[float, float]]:
    if text is None:
        return None
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise UsageError(f"window must be LO:HI, got {text!r}") from exc
    return lo, hi


def _tolerances(args: argparse.Namespace, fallback: Optional[Tolerances] = None) -> Tolerances:
    base = fallback or default_tolerances()
    abs_tol = getattr(args, "abs_tol", None)
    rel_tol = getattr(args, "rel_tol", None)
    return Tolerances(
        base.abs_tol if abs_tol is None else abs_tol,
        base.rel_tol if rel_tol is None else rel_tol,
    )


def _run_config(
    args: argparse.Namespace, tol: Tolerances, **parameters: Any
) -> RunConfig:
    return RunConfig(
        command=args.command,
        seed=getattr(args, "seed", 0),
        abs_tol=tol.abs_tol,
        rel_tol=tol.rel_tol,
        parameters=parameters,
    )


def _emit(text: str, out: Optional[str]) -> None:
    """Write a report to ``out`` atomically, or to stdout."""
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(out, text)


def _emit_json(payload: dict[str, Any], out: Optional[str]) -> None:
    _emit(json.dumps(payload, indent=2) + "\n", out)


def _emit_csv(frame: pd.DataFrame, out: Optional[str]) -> None:
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format="%.17g")
    _emit(buffer.getvalue(), out)


def _summary(message: str) -> None:
    print(message, file=sys.stderr)


def _pair(value: complex) -> list[float]:
    return [float(np.real(value)), float(np.imag(value))]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_beta_check(args: argparse.Namespace) -> int:
    """beta(t) closed form against quadrature."""
    t = parse_grid(args.t_grid)
    closed = np.atleast_1d(beta_fn(t, args.d))
    quad = np.atleast_1d(beta_fn_quadrature(t, args.d))
    rel_err = np.abs(closed - quad) / np.abs(quad)
    frame = pd.DataFrame(
        {
            "t": t,
            "closed_re": closed.real,
            "closed_im": closed.imag,
            "quad_re": quad.real,
            "quad_im": quad.imag,
            "rel_err": rel_err,
        }
    )
    _emit_csv(frame, args.out)
    worst = float(np.max(rel_err))
    _summary(f"beta-check d={args.d}: {len(t)} points, max rel_err {worst:.3e}")
    return EXIT_OK if worst <= BETA_TOLERANCE else EXIT_TOLERANCE


def _two_routes(
    phi: Any, lam: np.ndarray, d: int, method: str, tol: Tolerances
) -> tuple[np.ndarray, np.ndarray]:
    direct = np.atleast_1d(r_phi_direct(phi, lam, d, tol))
    if d == 2:
        other = np.atleast_1d(r_phi_closed_d2(phi, lam, tol).total)
    else:
        other = np.atleast_1d(r_phi_kernel(phi, lam, d, method=method, tolerances=tol))
    return direct, other


def cmd_kernel_check(args: argparse.Namespace) -> int:
    """R_phi by the direct integral against the c1+c2+c3 or kernel route."""
    if args.d < 2:
        raise UsageError(f"--d must be at least 2, got {args.d}")
    lam = parse_grid(args.lambda_grid)
    tol = _tolerances(args)
    fixtures = standard_fixtures(build_psi())
    names = list(fixtures) if args.fixture == "all" else [args.fixture]

    cases = []
    for name in names:
        direct, other = _two_routes(fixtures[name], lam, args.d, args.method, tol)
        scale = max(float(np.max(np.abs(direct))), float(np.max(np.abs(other))), 1e-300)
        for value, a, b in zip(lam, direct, other):
            cases.append(
                {
                    "fixture": name,
                    "lambda_tilde": float(value),
                    "direct": _pair(a),
                    "other": _pair(b),
                    "abs_err": float(abs(a - b)),
                    "rel_err": float(abs(a - b) / scale),
                }
            )
    worst = max(case["rel_err"] for case in cases)
    config = _run_config(
        args, tol, d=args.d, lambda_grid=lam.tolist(), fixtures=names, method=args.method
    )
    _emit_json(
        {
            "cases": cases,
            "max_rel_err": worst,
            "passed": worst <= KERNEL_TOLERANCE,
            "run_config": config.to_dict(),
        },
        args.out,
    )
    _summary(f"kernel-check d={args.d}: {len(cases)} cases, max rel_err {worst:.3e}")
    return EXIT_OK if worst <= KERNEL_TOLERANCE else EXIT_TOLERANCE


def _jacobian_points(d: int, n: int, rng: np.random.Generator) -> list[tuple[float, ...]]:
    """Random admissible points, away from the coordinate singularities."""
    points: list[tuple[float, ...]] = []
    while len(points) < n:
        x = float(rng.uniform(-3.0, 3.0))
        t = float(rng.uniform(-2.0, 2.0))
        if d == 2:
            if min(abs(x), abs(x + math.exp(-t))) < 0.05:
                continue
            points.append((x, t))
        else:
            points.append((x, float(rng.uniform(0.1, 3.0)), t))
    return points


def cmd_jacobian_check(args: argparse.Namespace) -> int:
    """Finite-difference battery for the coordinate-change determinants."""
    if args.n_points < 1:
        raise UsageError(f"--n-points must be positive, got {args.n_points}")
    if args.d < 2:
        raise UsageError(f"--d must be at least 2, got {args.d}")
    seed = getattr(args, "seed", 0)
    rng = np.random.default_rng(seed)
    check: Callable[..., Any] = jacobian_check_d2 if args.d == 2 else jacobian_check_d3
    cases = []
    for point in _jacobian_points(args.d, args.n_points, rng):
        result = check(*point)
        cases.append(
            {
                "point": list(point),
                "analytic": result.analytic,
                "numeric": result.numeric,
                "rel_err": result.rel_err,
            }
        )
    worst = max(case["rel_err"] for case in cases)
    config = _run_config(args, default_tolerances(), d=args.d, n_points=args.n_points)
    _emit_json(
        {
            "cases": cases,
            "max_rel_err": worst,
            "passed": worst <= JACOBIAN_TOLERANCE,
            "run_config": config.to_dict(),
        },
        args.out,
    )
    _summary(f"jacobian-check d={args.d}: {len(cases)} points, max rel_err {worst:.3e}")
    return EXIT_OK if worst <= JACOBIAN_TOLERANCE else EXIT_TOLERANCE


def cmd_sumcheck(args: argparse.Namespace) -> int:
    """Both sides of the summation formula for files of coefficients and spectra."""
    coeffs = load_coeffs(args.coeffs)
    data = load_spectral(args.spectra)
    d = data.d if args.d is None else args.d
    if d != data.d:
        raise DimensionMismatch(f"--d {d} but {args.spectra} has d={data.d}")
    params = ModelParams(d, coeffs.lambda_tilde, coeffs.lambda_gamma_tilde)
    tol = _tolerances(args)
    config = _run_config(
        args, tol, d=d, T=args.T, coeffs=str(args.coeffs), spectra=str(args.spectra),
        k_range=[coeffs.k_min, coeffs.k_max],
        lambda_tilde=_pair(params.lambda_tilde),
        lambda_gamma_tilde=params.lambda_gamma_tilde,
    )
    report = sumcheck(coeffs, data, PhiT(args.T, build_psi()), params, tol, config.to_dict())
    _emit(report.to_json(), args.out)
    _summary(
        f"sumcheck d={d}: lhs={report.lhs:.6g} rhs={report.rhs:.6g} "
        f"residual={report.residual_abs:.3e}"
    )
    return EXIT_OK


def cmd_growth(args: argparse.Namespace) -> int:
    """Log-log growth fits of coefficient and spectral files."""
    window = parse_window(args.window)
    if args.mode in ("decay", "partial-sum"):
        coeffs = load_coeffs(args.input)
        if args.mode == "decay":
            positive = coeffs.ks > 0
            fit = decay_fit(coeffs.ks[positive], np.abs(coeffs.values[positive]), window)
        else:
            grid = None
            if window is not None:
                grid = np.unique(np.floor(np.geomspace(window[0], window[1], 8)))
            fit = partial_sum_exponent(coeffs, grid)
    else:
        data = load_spectral(args.input)
        check = weyl_check if args.mode == "weyl" else triple_growth_check
        fit = check(data, window=window)
    config = _run_config(
        args, default_tolerances(), mode=args.mode, input=str(args.input), window=window
    )
    _emit_json({"fit": fit.to_dict(), "run_config": config.to_dict()}, args.out)
    _summary(
        f"growth {args.mode}: exponent {fit.exponent:.4f} "
        f"(r^2 {fit.r_squared:.4f}, {fit.n_points} points)"
        + (" FLAGGED" if fit.flagged else "")
    )
    return EXIT_TOLERANCE if fit.flagged else EXIT_OK


def cmd_ft_check(args: argparse.Namespace) -> int:
    """f_T' from its formula against central differences of f_T."""
    if args.d < 3:
        raise UsageError(f"--d must be at least 3, got {args.d}")
    t = parse_grid(args.t_grid)
    tol = _tolerances(args, FT_TOLERANCES)
    psi = build_psi()
    trace = f_T_trace_table(psi, args.T, t, args.d, tol)
    upper = f_T_trace_table(psi, args.T, t + FD_STEP, args.d, tol)["f"].to_numpy()
    lower = f_T_trace_table(psi, args.T, t - FD_STEP, args.d, tol)["f"].to_numpy()
    fd = (upper - lower) / (2.0 * FD_STEP)
    frame = pd.DataFrame(
        {
            "t": trace["t"],
            "f": trace["f"],
            "f_prime_formula": trace["f_prime"],
            "f_prime_fd": fd,
            "abs_err": np.abs(trace["f_prime"].to_numpy() - fd),
        }
    )
    _emit_csv(frame, args.out)
    worst = float(frame["abs_err"].max())
    _summary(f"ft-check d={args.d} T={args.T}: max abs_err {worst:.3e}")
    return EXIT_OK if worst <= FT_TOLERANCE else EXIT_TOLERANCE


def cmd_export(args: argparse.Namespace) -> int:
    """Plot-ready CSV of psi, psi_hat or a K_z slice."""
    if args.what == "psi":
        frame = psi_table(build_psi())
    elif args.what == "psi-hat":
        frame = psi_hat_table(build_psi(), parse_grid(args.grid or "-4:4:161"))
    else:
        if args.d < 3:
            raise UsageError(f"kernel slices need --d >= 3, got {args.d}")
        a = parse_grid(args.grid or "-1:1:41")
        frame = kernel_slice_table(
            2j * math.pi * args.lambda_tilde, a, args.b, args.d, _tolerances(args)
        )
    _emit_csv(frame, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _common_flags() -> argparse.ArgumentParser:
    """Global flags, accepted before or after the subcommand."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--verbose", "-v", action="store_true", default=argparse.SUPPRESS,
        help="Log progress to stderr",
    )
    common.add_argument(
        "--abs-tol", type=float, default=argparse.SUPPRESS,
        help="Absolute quadrature tolerance (default: $GEODESUM_ABS_TOL or 1e-12)",
    )
    common.add_argument(
        "--rel-tol", type=float, default=argparse.SUPPRESS,
        help="Relative quadrature tolerance (default: $GEODESUM_REL_TOL or 1e-10)",
    )
    common.add_argument(
        "--seed", type=int, default=argparse.SUPPRESS,
        help="Random seed, recorded in every report (default: 0)",
    )
    return common


def create_parser() -> argparse.ArgumentParser:
    """Create argument parser for CLI."""
    common = _common_flags()
    parser = _Parser(
        prog="geodesum",
        description="Numerical checks of the geodesic summation formulae",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    beta = sub.add_parser("beta-check", parents=[common], help="beta(t): closed form vs quadrature")
    beta.add_argument("--d", type=int, default=3, help="Manifold dimension (default: 3)")
    beta.add_argument("--t-grid", default=BETA_GRID, help="Comma list or start:stop:count")
    beta.add_argument("--out", help="CSV output path (default: stdout)")
    beta.set_defaults(handler=cmd_beta_check)

    kernel = sub.add_parser("kernel-check", parents=[common], help="R_phi by two routes")
    kernel.add_argument("--d", type=int, default=2)
    kernel.add_argument("--lambda-grid", default="0,1,4,16")
    kernel.add_argument(
        "--fixture", default="all",
        choices=["all", "phi_T1", "phi_T2", "product_bump", "separated", "tilted"],
    )
    kernel.add_argument("--method", choices=["slices", "kernel"], default="slices")
    kernel.add_argument("--out", help="JSON output path (default: stdout)")
    kernel.set_defaults(handler=cmd_kernel_check)

    jac = sub.add_parser("jacobian-check", parents=[common], help="Jacobian identities")
    jac.add_argument("--d", type=int, default=2)
    jac.add_argument("--n-points", type=int, default=100)
    jac.add_argument("--out", help="JSON output path (default: stdout)")
    jac.set_defaults(handler=cmd_jacobian_check)

    summ = sub.add_parser("sumcheck", parents=[common], help="Both sides of the summation formula")
    summ.add_argument("--coeffs", required=True, help="Coefficient JSON file")
    summ.add_argument("--spectra", required=True, help="Spectral dataset JSON file")
    summ.add_argument("--T", type=float, default=4.0, help="Scale of phi_T (default: 4)")
    summ.add_argument("--d", type=int, help="Expected dimension (default: from the dataset)")
    summ.add_argument("--out", help="Report JSON path (default: stdout)")
    summ.set_defaults(handler=cmd_sumcheck)

    growth = sub.add_parser("growth", parents=[common], help="Growth and decay fits")
    growth.add_argument("--mode", choices=GROWTH_MODES, required=True)
    growth.add_argument("--in", dest="input", required=True, help="Coefficient or spectral file")
    growth.add_argument("--window", help="LO:HI range of k, T or |lambda|")
    growth.add_argument("--out", help="JSON output path (default: stdout)")
    growth.set_defaults(handler=cmd_growth)

    ft = sub.add_parser("ft-check", parents=[common], help="f_T' formula vs finite differences")
    ft.add_argument("--d", type=int, default=3)
    ft.add_argument("--T", type=float, default=1.0)
    ft.add_argument("--t-grid", default=FT_GRID)
    ft.add_argument("--out", help="CSV output path (default: stdout)")
    ft.set_defaults(handler=cmd_ft_check)

    export = sub.add_parser("export", parents=[common], help="CSV samples for plotting")
    export.add_argument("--what", choices=EXPORTS, required=True)
    export.add_argument("--grid", help="xi grid (psi-hat) or a grid (kernel-slice)")
    export.add_argument("--d", type=int, default=3)
    export.add_argument("--b", type=float, default=0.0, help="Fixed b of the kernel slice")
    export.add_argument("--lambda-tilde", type=float, default=0.0)
    export.add_argument("--out", help="CSV output path (default: stdout)")
    export.set_defaults(handler=cmd_export)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main CLI entry point."""
    parser = create_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        _summary(str(exc))
        return EXIT_USAGE

    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        return int(args.handler(args))
    except UsageError as exc:
        _summary(f"geodesum {args.command}: {exc}")
        return EXIT_USAGE
    except OSError as exc:
        _summary(f"geodesum {args.command}: {exc}")
        return EXIT_USAGE
    except GeodesumError as exc:
        _summary(f"geodesum {args.command}: {type(exc).__name__}: {exc}")
        return EXIT_USAGE if isinstance(exc, ValueError) else EXIT_TOLERANCE


if __name__ == "__main__":
    sys.exit(main())
