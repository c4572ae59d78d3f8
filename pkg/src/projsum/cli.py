"""Command-line surface: sample runs, checks, pipelines, reproducible artifacts.

Every command writes a JSON manifest next to its outputs; `projsum replay`
re-runs a manifest and reproduces the output files byte for byte.  Exit
codes: 0 success, 1 numeric failure, 2 usage error, 3 check violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .convergence import convergence_run, corner_atom_masses
from .geometry import DegenerateGeometryError, make_geometry
from .hermitization import (
    InvalidGridError,
    PotentialGrid,
    laplacian_recover,
    sample_potential_grid,
)
from .model import (
    InvalidDimensionError,
    ModelRealization,
    ModelSpec,
    TwoAtomLaw,
    assemble_model,
    build_two_atom_hermitian,
    substream_rng,
)
from .spectra import ComputationError, esd, structure_report, verify_sv_bound

E_OK, E_NUMERIC, E_USAGE, E_CHECK = 0, 1, 2, 3


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_csv(path: Path, header: list[str], rows, footer: str | None = None) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)  # RFC 4180 line endings
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) for v in row])
    text = buf.getvalue()
    if footer is not None:
        text += footer + "\r\n"
    _atomic_write(path, text)


def _write_json(path: Path, obj) -> None:
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _law_dict(law: TwoAtomLaw) -> dict:
    return {"weight": law.weight, "loc": law.loc, "loc_alt": law.loc_alt}


def _realized_laws(p_law: TwoAtomLaw, q_law: TwoAtomLaw, n: int) -> dict:
    realized_p = build_two_atom_hermitian(p_law, n)[1]
    realized_q = build_two_atom_hermitian(q_law, n)[1]
    return {"p": _law_dict(realized_p), "q": _law_dict(realized_q)}


def _write_manifest(args, realized_laws: dict | None, timings: dict, extra: dict | None = None) -> None:
    params = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
    manifest = {
        "command": args.command,
        "params": params,
        "realized_laws": realized_laws,
        "tool_version": __version__,
        "timings": timings,
    }
    if extra:
        manifest.update(extra)
    _write_json(Path(args.out_prefix + ".manifest.json"), manifest)


def _laws_from(args) -> tuple[TwoAtomLaw, TwoAtomLaw]:
    p_law = TwoAtomLaw(weight=args.a, loc=args.alpha, loc_alt=args.alpha_prime)
    q_law = TwoAtomLaw(weight=args.b, loc=args.beta, loc_alt=args.beta_prime)
    return p_law, q_law


def _spec_from(args) -> ModelSpec:
    p_law, q_law = _laws_from(args)
    return ModelSpec(p_law=p_law, q_law=q_law, n=args.n, seed=args.seed)


def cmd_sample(args) -> int:
    t0 = time.perf_counter()
    spec = _spec_from(args)
    realization = assemble_model(spec, commuting=args.commuting)
    measure = esd(realization)
    t1 = time.perf_counter()
    _write_csv(
        Path(args.out_prefix + ".esd.csv"),
        ["re", "im"],
        ((p.real, p.imag) for p in measure.points),
    )
    _write_manifest(
        args,
        _realized_laws(spec.p_law, spec.q_law, spec.n),
        {"sample_s": t1 - t0, "total_s": time.perf_counter() - t0},
    )
    return E_OK


def _perturbed(realization: ModelRealization, eps: float) -> ModelRealization:
    x = realization.x_matrix + eps * np.eye(realization.n)
    x.setflags(write=False)
    return ModelRealization(
        p_matrix=realization.p_matrix,
        q_matrix=realization.q_matrix,
        x_matrix=x,
        realized_p_law=realization.realized_p_law,
        realized_q_law=realization.realized_q_law,
        seed=realization.seed,
    )


def cmd_check(args) -> int:
    t0 = time.perf_counter()
    realization = assemble_model(_spec_from(args), commuting=args.commuting)
    if args.perturb:
        realization = _perturbed(realization, args.perturb)
    geom = make_geometry(realization.realized_p_law, realization.realized_q_law)
    scale = geom.scale
    report = structure_report(realization, geom)

    checks = []
    checks.append(("support", report.support_deviation <= args.tol_support * scale,
                   f"support_deviation={report.support_deviation:.3e}"))
    checks.append(("normality", report.normality_residual <= args.tol_normality,
                   f"normality_residual={report.normality_residual:.3e}"))
    checks.append(("re_constant", report.re_deviation <= args.tol_re * scale**2,
                   f"re_deviation={report.re_deviation:.3e}"))
    checks.append(("im_bound", report.im_norm <= geom.im_halfwidth + args.tol_im_pad,
                   f"im_norm={report.im_norm:.12e} bound={geom.im_halfwidth:.12e}"))

    if args.z_grid > 0:
        rng = substream_rng(args.seed, 3)
        xs = [c.real for c in geom.corners]
        ys = [c.imag for c in geom.corners]
        zw = (
            args.z_xmin if args.z_xmin is not None else min(xs) - scale,
            args.z_xmax if args.z_xmax is not None else max(xs) + scale,
            args.z_ymin if args.z_ymin is not None else min(ys) - scale,
            args.z_ymax if args.z_ymax is not None else max(ys) + scale,
        )
        zs = zw[0] + (zw[1] - zw[0]) * rng.random(args.z_grid) + 1j * (
            zw[2] + (zw[3] - zw[2]) * rng.random(args.z_grid)
        )
        margins = [
            {"re": float(z.real), "im": float(z.imag),
             "margin": verify_sv_bound(realization, geom, complex(z))}
            for z in zs
        ]
        worst = min(m["margin"] for m in margins)
        checks.append(("sv_bound", worst >= -args.tol_margin * scale, f"worst_margin={worst:.3e}"))
    else:
        margins = []

    masses = corner_atom_masses(realization)
    a_w = {geom.alpha: realization.realized_p_law.weight,
           geom.alpha_prime: 1.0 - realization.realized_p_law.weight}
    b_w = {geom.beta: realization.realized_q_law.weight,
           geom.beta_prime: 1.0 - realization.realized_q_law.weight}
    corner_ok = True
    for corner, e_mass, i_mass in zip(masses.corners, masses.esd_mass, masses.intersection_mass):
        lower = max(0.0, a_w[corner.real] + b_w[corner.imag] - 1.0)
        if abs(e_mass - i_mass) > 1e-12 or e_mass < lower - 1e-12:
            corner_ok = False
    checks.append(("corner_mass", corner_ok,
                   f"esd={masses.esd_mass} subspace={masses.intersection_mass}"))

    first_failure = next((name for name, ok, _ in checks if not ok), None)
    payload = {
        "structure": {
            "re_deviation": report.re_deviation,
            "im_norm": report.im_norm,
            "normality_residual": report.normality_residual,
            "support_deviation": report.support_deviation,
        },
        "sv_margins": margins,
        "corner_masses": {
            "corners": [[c.real, c.imag] for c in masses.corners],
            "esd_mass": list(masses.esd_mass),
            "intersection_mass": list(masses.intersection_mass),
        },
        "checks": [{"name": name, "ok": ok, "detail": detail} for name, ok, detail in checks],
        "first_failure": first_failure,
    }
    _write_json(Path(args.out_prefix + ".check.json"), payload)
    _write_manifest(
        args,
        {"p": _law_dict(realization.realized_p_law), "q": _law_dict(realization.realized_q_law)},
        {"total_s": time.perf_counter() - t0},
    )
    if first_failure is not None:
        print(f"check failed: {first_failure}", file=sys.stderr)
        return E_CHECK
    print("all checks passed")
    return E_OK


def cmd_potential(args) -> int:
    t0 = time.perf_counter()
    spec = _spec_from(args)
    window = (args.xmin, args.xmax, args.ymin, args.ymax)
    grid, _, _ = sample_potential_grid(spec, window, args.nx, args.ny, args.samples)
    t1 = time.perf_counter()
    nodes = grid.nodes()
    rows = (
        (nodes[ix, iy].real, nodes[ix, iy].imag, grid.values[ix, iy])
        for ix in range(grid.nx)
        for iy in range(grid.ny)
    )
    _write_csv(Path(args.out_prefix + ".potential.csv"), ["re", "im", "L"], rows)
    extra = {
        "perturbed_nodes": [
            {"ix": p.ix, "iy": p.iy, "original": [p.original.real, p.original.imag],
             "used": [p.used.real, p.used.imag]}
            for p in grid.perturbations
        ]
    }
    _write_manifest(
        args,
        _realized_laws(spec.p_law, spec.q_law, spec.n),
        {"grid_s": t1 - t0, "total_s": time.perf_counter() - t0},
        extra,
    )
    return E_OK


def cmd_recover(args) -> int:
    t0 = time.perf_counter()
    src_manifest = json.loads(Path(args.in_prefix + ".manifest.json").read_text(encoding="utf-8"))
    if src_manifest.get("command") != "potential":
        raise ValueError(
            f"--in-prefix must point at a `potential` run, found {src_manifest.get('command')!r}"
        )
    params = src_manifest["params"]
    nx, ny = params["nx"], params["ny"]
    values = np.empty((nx, ny))
    with open(args.in_prefix + ".potential.csv", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        flat = [float(row["L"]) for row in reader]
    if len(flat) != nx * ny:
        raise InvalidGridError(f"potential file has {len(flat)} rows, expected {nx * ny}")
    values[:] = np.asarray(flat).reshape(nx, ny)
    grid = PotentialGrid(
        x0=params["xmin"],
        y0=params["ymin"],
        hx=(params["xmax"] - params["xmin"]) / (nx - 1),
        hy=(params["ymax"] - params["ymin"]) / (ny - 1),
        nx=nx,
        ny=ny,
        values=values,
    )
    rec = laplacian_recover(grid)
    nodes = grid.interior_nodes()
    mass = rec.grid.mass
    rows = (
        (nodes[i, j].real, nodes[i, j].imag, mass[i, j])
        for i in range(nx - 2)
        for j in range(ny - 2)
    )
    footer = f"# raw_total={rec.raw_total!r} negative_mass={rec.negative_mass!r}"
    _write_csv(Path(args.out_prefix + ".measure.csv"), ["re", "im", "mass"], rows, footer=footer)
    _write_manifest(args, None, {"total_s": time.perf_counter() - t0})
    return E_OK


def cmd_converge(args) -> int:
    t0 = time.perf_counter()
    p_law, q_law = _laws_from(args)
    schedule = [int(tok) for tok in args.schedule.split(",") if tok.strip()]
    report = convergence_run(
        p_law,
        q_law,
        schedule,
        samples=args.samples,
        seed=args.seed,
        reference_n=args.reference_n,
        grid_resolution=args.resolution,
    )
    _write_json(Path(args.out_prefix + ".converge.json"), report.to_dict())
    _write_manifest(
        args,
        _realized_laws(p_law, q_law, report.reference_n),
        {"total_s": time.perf_counter() - t0},
    )
    return E_OK


def cmd_replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    command = manifest["command"]
    if command not in _HANDLERS:
        raise ValueError(f"manifest names unknown command {command!r}")
    params = dict(manifest["params"])
    # never clobber the original artifacts by default
    params["out_prefix"] = args.out_prefix if args.out_prefix is not None else params["out_prefix"] + ".replay"
    replay_args = argparse.Namespace(command=command, **params)
    return _HANDLERS[command](replay_args)


def _add_law_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--a", type=float, required=True, help="weight of the p atom at --alpha")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--alpha-prime", type=float, required=True)
    p.add_argument("--b", type=float, required=True, help="weight of the q atom at --beta")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--beta-prime", type=float, required=True)


def _add_sample_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, required=True, help="matrix dimension")
    _add_law_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--commuting", action="store_true",
                   help="skip the Haar rotations (U = V = I); test variant")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="projsum",
        description="Sample and verify the Haar-rotated two-atom matrix model.",
    )
    parser.add_argument("--version", action="version", version=f"projsum {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw one realization and write its ESD")
    _add_sample_flags(p)
    p.add_argument("--out-prefix", default="sample")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("check", help="run structural checks on one realization")
    _add_sample_flags(p)
    p.add_argument("--z-grid", type=int, default=20, help="random z count for the bound check")
    p.add_argument("--z-xmin", type=float, default=None)
    p.add_argument("--z-xmax", type=float, default=None)
    p.add_argument("--z-ymin", type=float, default=None)
    p.add_argument("--z-ymax", type=float, default=None)
    p.add_argument("--perturb", type=float, default=0.0,
                   help="test hook: add eps*I to X before checking")
    p.add_argument("--tol-support", type=float, default=1e-8)
    p.add_argument("--tol-normality", type=float, default=1e-10)
    p.add_argument("--tol-re", type=float, default=1e-9)
    p.add_argument("--tol-im-pad", type=float, default=1e-10)
    p.add_argument("--tol-margin", type=float, default=1e-8)
    p.add_argument("--out-prefix", default="check")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("potential", help="averaged log-potential grid over samples")
    _add_sample_flags(p)
    p.add_argument("--xmin", type=float, required=True)
    p.add_argument("--xmax", type=float, required=True)
    p.add_argument("--ymin", type=float, required=True)
    p.add_argument("--ymax", type=float, required=True)
    p.add_argument("--nx", type=int, required=True)
    p.add_argument("--ny", type=int, required=True)
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--out-prefix", default="potential")
    p.set_defaults(func=cmd_potential)

    p = sub.add_parser("recover", help="apply the Laplacian stencil to a potential grid")
    p.add_argument("--in-prefix", required=True,
                   help="prefix written by `projsum potential`")
    p.add_argument("--out-prefix", default="recover")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("converge", help="pooled-ESD convergence study across dimensions")
    _add_law_flags(p)
    p.add_argument("--schedule", required=True, help="comma-separated dimensions, e.g. 50,100,200")
    p.add_argument("--reference-n", type=int, default=None)
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resolution", type=float, default=None, help="BL binning resolution")
    p.add_argument("--out-prefix", default="converge")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-prefix", default=None,
                   help="override the output prefix (default: original + '.replay')")
    p.set_defaults(func=cmd_replay)

    return parser


_HANDLERS = {
    "sample": cmd_sample,
    "check": cmd_check,
    "potential": cmd_potential,
    "recover": cmd_recover,
    "converge": cmd_converge,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (
        InvalidDimensionError,
        DegenerateGeometryError,
        InvalidGridError,
        FileNotFoundError,
        KeyError,
        ValueError,
    ) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return E_USAGE
    except (ComputationError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return E_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
