"""Command-line front end.

Subcommands: solve, density, shape, stability, scale, rmt, report.
Models come from ``--model FILE`` (JSON) or the builtin constructors
``--semicircle N`` and ``--two-block LAM DELTA N``.  Exit codes: 0 on
success, 2 on validation errors, 3 on numeric failures (with partial
outputs and a failure mask where applicable).  Every output file gets a
sibling ``.manifest.json``; identical invocations produce byte-identical
files.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional

import numpy as np

from . import __version__
from ._io import RunManifest, atomic_write, dump_json
from .errors import NumericError, QVEError, ValidationError
from .model import (
    ModelSpec,
    model_from_json,
    semicircle_model,
    sigma_bound,
    structural_report,
    two_block,
)
from .rmt import EnsembleSpec, empirical_vs_qve, locallaw_residuals, sample
from .scaling import scale_symmetric
from .shape import classify_minimum, detect_support, fit_shape, gap_estimate
from .solver import (
    GridSolution,
    SolverConfig,
    grid_to_csv,
    solution_to_json_dict,
    solve_grid,
    solve_point,
)
from .spectral import spectral_data, spectral_to_json_dict
from .stability import solve_perturbed, stability_params
from .spectral import spectral_operators


def _add_model_args(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--model", metavar="FILE", help="model JSON file")
    g.add_argument("--semicircle", type=int, metavar="N", help="flat model of size N")
    g.add_argument(
        "--two-block",
        nargs=3,
        metavar=("LAM", "DELTA", "N"),
        help="two-block model lam delta n",
    )


def _add_common_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eta", type=float, default=1e-6, help="spectral height floor")
    p.add_argument("--tol", type=float, default=1e-12, help="residual tolerance")
    p.add_argument("--seed", type=int, default=None, help="RNG seed")
    p.add_argument(
        "--threads",
        type=int,
        default=None,
        help="parallel grid columns (default 1; env QVELAB_THREADS)",
    )
    p.add_argument("-o", "--out", help="output file")
    p.add_argument("--format", choices=("csv", "json"), default=None)


def _load_model(args) -> ModelSpec:
    if args.model:
        try:
            with open(args.model) as fh:
                return model_from_json(fh.read())
        except FileNotFoundError as exc:
            raise ValidationError(f"model file not found: {args.model}") from exc
    if args.semicircle is not None:
        return semicircle_model(args.semicircle)
    lam, delta, n = args.two_block
    return two_block(float(lam), float(delta), int(n))


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("QVELAB_THREADS")
    return max(1, int(env)) if env else 1


def _parse_grid(spec: str) -> np.ndarray:
    try:
        a, b, step = (float(x) for x in spec.split(":"))
    except Exception as exc:
        raise ValidationError(f"bad grid spec {spec!r}, want a:b:step") from exc
    if step <= 0 or b < a:
        raise ValidationError("grid needs a <= b and step > 0")
    return np.arange(a, b + step / 2.0, step)


def _config(args) -> SolverConfig:
    return SolverConfig(tol=args.tol, eta_floor=min(args.eta, 1e-6))


def _emit(args, text: str, model: ModelSpec, extra_outputs=()) -> None:
    cfg_echo = {
        k: v for k, v in vars(args).items() if k not in ("func",) and v is not None
    }
    if args.out:
        atomic_write(args.out, text)
        manifest = RunManifest(
            command=args.command,
            model_hash=model.content_hash(),
            config=cfg_echo,
            seed=args.seed,
            versions=f"qvelab {__version__}",
            outputs=[args.out, *extra_outputs],
        )
        manifest.write(args.out)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _default_grid(model: ModelSpec, args) -> np.ndarray:
    if getattr(args, "grid", None):
        return _parse_grid(args.grid)
    sigma = sigma_bound(model)
    return np.arange(-sigma - 0.5, sigma + 0.5 + 5e-3, 1e-2)


# -- subcommands -------------------------------------------------------------


def _cmd_solve(args) -> int:
    model = _load_model(args)
    z = complex(args.tau, args.eta)
    sol = solve_point(model, z, _config(args))
    payload = solution_to_json_dict(sol)
    payload["model_hash"] = model.content_hash()
    code = 0
    if args.spectral:
        try:
            payload["spectral"] = spectral_to_json_dict(spectral_data(model, sol))
        except QVEError as exc:
            payload["spectral_error"] = f"{type(exc).__name__}: {exc}"
            code = 3
    _emit(args, dump_json(payload, indent=2) + "\n", model)
    return code


def _cmd_density(args) -> int:
    model = _load_model(args)
    taus = _default_grid(model, args)
    grid = solve_grid(model, taus, args.eta, _config(args), threads=_threads(args))
    fmt = args.format or ("csv" if args.out and args.out.endswith(".csv") else "csv")
    if fmt == "csv":
        text = grid_to_csv(grid, model)
    else:
        text = (
            dump_json(
                {
                    "tau": list(map(float, grid.tau_grid)),
                    "eta": grid.eta,
                    "avg_density": [float(x) for x in grid.avg_density],
                    "failed": [bool(b) for b in grid.failed],
                    "model_hash": model.content_hash(),
                },
                indent=2,
            )
            + "\n"
        )
    _emit(args, text, model)
    return 3 if bool(grid.failed.any()) else 0


def _shape_payload(model: ModelSpec, grid: GridSolution, args) -> dict:
    profile = detect_support(grid)
    cfg = _config(args)
    points = []
    sigma = sigma_bound(model)
    for a, b in profile.intervals:
        for tau0, inner in ((a, 1), (b, -1)):
            gap_len = None
            for left, right, width in profile.gaps:
                if tau0 in (left, right):
                    gap_len = width
            entry = {"tau0": tau0, "kind": "edge", "measured_gap": gap_len}
            try:
                sd = spectral_data(model, solve_point(model, complex(tau0, args.eta), cfg))
                sol0 = solve_point(model, complex(tau0, args.eta), cfg)
                entry["sigma"] = sd.sigma
                entry["psi"] = sd.psi
                try:
                    dh = gap_estimate(sd, sol0, model)
                    entry["gap_predicted"] = dh
                    if gap_len:
                        entry["gap_ratio"] = gap_len / dh
                except QVEError as exc:
                    entry["gap_predicted_error"] = type(exc).__name__
            except QVEError as exc:
                entry["spectral_error"] = type(exc).__name__
            try:
                hint = gap_len if gap_len else 2.0 * sigma
                fit = fit_shape(grid, tau0, "edge", scale_hint=hint)
                entry["fit"] = {
                    "h": [float(x) for x in fit.h],
                    "scale": fit.scale,
                    "residual": fit.residual,
                    "window": list(fit.window),
                }
            except QVEError as exc:
                entry["fit_error"] = type(exc).__name__
            points.append(entry)
    for gamma, avg_v in profile.minima:
        kind = classify_minimum(avg_v, args.eta)
        entry = {"tau0": gamma, "kind": kind, "avg_v": avg_v}
        try:
            fit = fit_shape(grid, gamma, kind)
            entry["fit"] = {
                "h": [float(x) for x in fit.h],
                "scale": fit.scale,
                "residual": fit.residual,
                "window": list(fit.window),
            }
        except QVEError as exc:
            entry["fit_error"] = type(exc).__name__
        points.append(entry)
    return {
        "model_hash": model.content_hash(),
        "eta": args.eta,
        "intervals": [[a, b] for a, b in profile.intervals],
        "minima": [[g, v] for g, v in profile.minima],
        "gaps": [[l, r, w] for l, r, w in profile.gaps],
        "points": points,
    }


def _cmd_shape(args) -> int:
    model = _load_model(args)
    taus = _default_grid(model, args)
    grid = solve_grid(model, taus, args.eta, _config(args), threads=_threads(args))
    payload = _shape_payload(model, grid, args)
    _emit(args, dump_json(payload, indent=2) + "\n", model)
    return 3 if bool(grid.failed.any()) else 0


def _cmd_stability(args) -> int:
    model = _load_model(args)
    cfg = _config(args)
    z = complex(args.tau, args.eta)
    base = solve_point(model, z, cfg)
    ops = spectral_operators(model, base)
    taus = _default_grid(model, args)
    grid = solve_grid(
        model, taus, max(args.eta, 1e-4), _config(args), threads=_threads(args)
    )
    profile = detect_support(grid)
    rng = np.random.default_rng(args.seed or 0)
    runs = []
    for _ in range(args.count):
        d = args.d_scale * (
            rng.standard_normal(model.n) + 1j * rng.standard_normal(model.n)
        )
        res = solve_perturbed(model, z, d, ops=ops, config=cfg, enforce_gate=False)
        params = stability_params(model, profile, z, d, ops, cfg)
        runs.append(
            {
                "d_norm": float(np.max(np.abs(d))),
                "gm_norm": float(np.max(np.abs(res.g - res.m))),
                "theta": res.theta,
                "r_norm": res.r_norm,
                "cubic_residual": res.cubic_residual,
                "varpi": params.varpi,
                "rho": params.rho,
                "delta": params.delta,
                "upsilon": params.upsilon,
                "bound_ratios": res.bound_ratios,
            }
        )
    payload = {
        "model_hash": model.content_hash(),
        "z": z,
        "d_scale": args.d_scale,
        "count": args.count,
        "runs": runs,
    }
    _emit(args, dump_json(payload, indent=2) + "\n", model)
    return 0


def _cmd_scale(args) -> int:
    model = _load_model(args)
    result = scale_symmetric(model, eta=args.eta_scale, tol=args.tol)
    payload = {
        "model_hash": model.content_hash(),
        "eta": args.eta_scale,
        "status": result.status,
        "residual": result.residual,
        "iterations": result.iterations,
        "j_value": result.j_value,
        "v": None if result.v is None else [float(x) for x in result.v],
    }
    _emit(args, dump_json(payload, indent=2) + "\n", model)
    return 0 if result.status in ("unique", "non_unique") else 3


def _cmd_rmt(args) -> int:
    model = _load_model(args)
    spec = EnsembleSpec(
        N=args.size, model=model, symmetry=args.symmetry, seed=args.seed or 0
    )
    H = sample(spec)
    taus = _default_grid(model, args)
    grid = solve_grid(model, taus, args.eta, _config(args), threads=_threads(args))
    eigs = np.linalg.eigvalsh(H)
    ks = empirical_vs_qve(H, grid, eigenvalues=eigs)
    z = complex(args.z_re, args.z_im if args.z_im else spec.N**-0.4)
    sol = solve_point(model, z, _config(args))
    rep = locallaw_residuals(H, spec, sol)
    payload = {
        "model_hash": model.content_hash(),
        "N": spec.N,
        "seed": spec.seed,
        "symmetry": spec.symmetry,
        "kolmogorov_distance": ks,
        "local_law": {
            "z": rep.z,
            "max_diag_dev": rep.max_diag_dev,
            "max_offdiag": rep.max_offdiag,
            "avg_dev": rep.avg_dev,
            "predicted_scale": rep.predicted_scale,
            "d_norm": rep.d_norm,
            "d_avg": rep.d_avg,
            "resolvent_residual": rep.resolvent_residual,
        },
    }
    extra = []
    if args.eigenvalues_out:
        lines = ["eigenvalue"] + ["%.17g" % x for x in eigs]
        atomic_write(args.eigenvalues_out, "\n".join(lines) + "\n")
        extra.append(args.eigenvalues_out)
    _emit(args, dump_json(payload, indent=2) + "\n", model, extra_outputs=extra)
    return 0


def _cmd_report(args) -> int:
    model = _load_model(args)
    rep = structural_report(model)
    taus = _default_grid(model, args)
    grid = solve_grid(model, taus, args.eta, _config(args), threads=_threads(args))
    shape_payload = _shape_payload(model, grid, args)
    mass = float(np.trapezoid(np.nan_to_num(grid.avg_density), grid.tau_grid))
    payload = {
        "model_hash": model.content_hash(),
        "structural": {
            "sigma_bound": rep.sigma_bound,
            "norm_S_BB": rep.norm_S_BB,
            "norm_S_L2_to_B": rep.norm_S_L2_to_B,
            "primitivity": list(rep.primitivity) if rep.primitivity else None,
            "fid": rep.fid,
            "fid_witness": list(rep.fid_witness) if rep.fid_witness else None,
        },
        "density_mass": mass,
        "shape": shape_payload,
    }
    _emit(args, dump_json(payload, indent=2) + "\n", model)
    return 3 if bool(grid.failed.any()) else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qvelab",
        description="Self-consistent density-of-states toolbox for the "
        "quadratic vector equation",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve at a single spectral point")
    _add_model_args(p)
    _add_common_args(p)
    p.add_argument("--tau", type=float, default=0.0, help="Re z")
    p.add_argument("--spectral", action="store_true", help="attach spectral data")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("density", help="solve the density on a grid")
    _add_model_args(p)
    _add_common_args(p)
    p.add_argument("--grid", help="a:b:step (inclusive endpoints)")
    p.set_defaults(func=_cmd_density)

    p = sub.add_parser("shape", help="support detection and shape fits")
    _add_model_args(p)
    _add_common_args(p)
    p.add_argument("--grid", help="a:b:step (inclusive endpoints)")
    p.set_defaults(func=_cmd_shape)

    p = sub.add_parser("stability", help="random perturbation battery at z")
    _add_model_args(p)
    _add_common_args(p)
    p.add_argument("--grid", help="a:b:step for the support profile")
    p.add_argument("--tau", type=float, default=0.0, help="Re z")
    p.add_argument("--d-scale", type=float, default=1e-6, dest="d_scale")
    p.add_argument("--count", type=int, default=10)
    p.set_defaults(func=_cmd_stability)

    p = sub.add_parser("scale", help="symmetric scaling at eta >= 0")
    _add_model_args(p)
    _add_common_args(p)
    p.add_argument(
        "--eta-scale",
        type=float,
        default=0.0,
        dest="eta_scale",
        help="regularization height (0 = plain scaling)",
    )
    p.set_defaults(func=_cmd_scale)

    p = sub.add_parser("rmt", help="sample a matrix and check the local law")
    _add_model_args(p)
    _add_common_args(p)
    p.add_argument("--grid", help="a:b:step for the reference density")
    p.add_argument("--size", type=int, default=1000, help="matrix dimension N")
    p.add_argument("--symmetry", choices=("real", "complex"), default="real")
    p.add_argument("--z-re", type=float, default=0.0, dest="z_re")
    p.add_argument(
        "--z-im",
        type=float,
        default=None,
        dest="z_im",
        help="Im z for the local law (default N^-0.4)",
    )
    p.add_argument("--eigenvalues-out", help="CSV dump of the sample spectrum")
    p.set_defaults(func=_cmd_rmt)

    p = sub.add_parser("report", help="structural constants plus shape report")
    _add_model_args(p)
    _add_common_args(p)
    p.add_argument("--grid", help="a:b:step (inclusive endpoints)")
    p.set_defaults(func=_cmd_report)
    return parser


def _merge_grid_flag(argv: list[str]) -> list[str]:
    """Join ``--grid -3:3:0.01`` into one token so argparse does not read
    the leading minus of the range as an option prefix."""
    out: list[str] = []
    skip = False
    for k, tok in enumerate(argv):
        if skip:
            skip = False
            continue
        if tok == "--grid" and k + 1 < len(argv):
            out.append(f"--grid={argv[k + 1]}")
            skip = True
        else:
            out.append(tok)
    return out


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(_merge_grid_flag(list(sys.argv[1:] if argv is None else argv)))
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
