"""Command line entry point: check-potential, find-zeros, verify-integrals, solve, sweep, report."""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .ansatz import BubbleParams, delta_of, exp_W, kernel_Z, project_W_exact, project_Z
from .potential import COEFF_NAMES, EXAMPLE, PotentialCoeffs, check_hypotheses
from .quadrature import (
    bubble_integral,
    fold_integral_check,
    kernel_moment_closed_form,
    kernel_moment_quadrature,
    quantization_integral,
)
from .grid import DiskField
from .reduced import find_zeros
from .solver import SolveConfig, newton_solve

SCHEMA_VERSION = "1"

# documented keys per config section; anything else is rejected
CONFIG_KEYS = {
    "run": {"schema", "seed", "out"},
    "potential": set(COEFF_NAMES),
    "grid": {"n_r", "n_theta", "order"},
    "solve": {"lambda", "b", "newton_tol", "max_iter", "deflate"},
    "search": {"box", "starts", "tol"},
    "sweep": {"lambda_max", "lambda_min", "ratio", "xi0", "min_sv"},
    "integrals": {"tol"},
}


class UsageError(Exception):
    pass


class CheckFailed(Exception):
    pass


def g17(v) -> str:
    return format(float(v), ".17g")


def parse_config(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise UsageError(f"malformed config: {exc}") from exc
    for section in cp.sections():
        if section not in CONFIG_KEYS:
            raise UsageError(f"unknown config section [{section}]")
        extra = set(cp[section]) - CONFIG_KEYS[section]
        if extra:
            raise UsageError(f"unknown keys in [{section}]: {', '.join(sorted(extra))}")
    if cp.has_section("run") and cp["run"].get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise UsageError(f"unsupported schema version {cp['run']['schema']}")
    return cp


def serialize_config(cp: configparser.ConfigParser) -> str:
    """Normalized text: sections and keys sorted, schema tag present."""
    norm = configparser.ConfigParser(interpolation=None)
    norm.optionxform = str
    norm["run"] = {"schema": SCHEMA_VERSION}
    for section in sorted(cp.sections()):
        if section not in norm:
            norm[section] = {}
        for key in sorted(cp[section]):
            norm[section][key] = cp[section][key].strip()
    buf = io.StringIO()
    for section in sorted(norm.sections()):
        buf.write(f"[{section}]\n")
        for key in sorted(norm[section]):
            buf.write(f"{key} = {norm[section][key]}\n")
        buf.write("\n")
    return buf.getvalue()


def _floats(text: str, n: int, what: str):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"{what}: expected {n} comma-separated numbers") from exc
    if len(vals) != n:
        raise UsageError(f"{what}: expected {n} comma-separated numbers")
    return vals


def _potential(cp, overrides) -> PotentialCoeffs:
    d = EXAMPLE.as_dict()
    if cp.has_section("potential"):
        d.update({k: float(v) for k, v in cp["potential"].items()})
    for item in overrides or []:
        if "=" not in item:
            raise UsageError(f"--potential expects NAME=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        if k not in COEFF_NAMES:
            raise UsageError(f"unknown potential coefficient {k!r}")
        d[k] = float(v)
    return PotentialCoeffs.from_dict(d)


def _get(cp, section, key, default, cast=float):
    if cp.has_section(section) and key in cp[section]:
        try:
            return cast(cp[section][key])
        except ValueError as exc:
            raise UsageError(f"[{section}] {key}: cannot parse {cp[section][key]!r}") from exc
    return default


def _positive(v, name):
    if not v > 0:
        raise UsageError(f"{name} must be positive")
    return v


def _outdir(args, cp) -> Path:
    out = Path(args.out or _get(cp, "run", "out", "run", str))
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"output directory {out} is not writable: {exc}") from exc
    return out


# subcommands


def cmd_check_potential(args, cp, out):
    c = _potential(cp, args.potential)
    grid = args.grid or _get(cp, "grid", "n_r", 401, int)
    rep = check_hypotheses(c, n_grid=grid)
    for k, v in rep.as_dict().items():
        out.write(f"{k}: {g17(v) if isinstance(v, float) else v}\n")
    for msg in rep.failures():
        out.write(f"FAIL: {msg}\n")
    if not rep.all_ok:
        raise CheckFailed("potential hypotheses violated")


def cmd_find_zeros(args, cp, out):
    c = _potential(cp, args.potential)
    box = _floats(args.box, 4, "--box") if args.box else _floats(_get(cp, "search", "box", "-3,3,-3,3", str), 4, "box")
    starts = args.starts or _get(cp, "search", "starts", 20, int)
    tol = _positive(args.tol or _get(cp, "search", "tol", 1e-12), "tol")
    zs = find_zeros(c, box=((box[0], box[1]), (box[2], box[3])), n_starts=starts, tol=tol)
    out.write("xi1,xi2,residual,degree,eig1,eig2,label\n")
    for z in zs:
        out.write(",".join([g17(z.xi[0]), g17(z.xi[1]), g17(z.residual), str(z.degree),
                            g17(z.hessian_eigs[0]), g17(z.hessian_eigs[1]), z.label]) + "\n")
    for note in zs.notes:
        out.write(f"# {note}\n")
    if zs.degenerate_field:
        out.write("# degenerate field: F vanishes identically\n")
        raise CheckFailed("degenerate reduced field")


def integral_suite(tol: float):
    """Rows (name, value, reference, relative error, pass) for the moment identities."""
    rows = []

    def add(name, val, ref, rtol=tol, absolute=False):
        err = abs(val - ref) if (absolute or ref == 0) else abs(val - ref) / abs(ref)
        rows.append((name, val, ref, err, err <= rtol))

    for kind in ("z_i^4", "z_i^2 z_j^2"):
        for r in (0.5, 1.0, 2.0, 10.0):
            add(f"{kind} r={r:g}", kernel_moment_quadrature(kind, r), kernel_moment_closed_form(kind, r))
    add("z_i^2 global power 3", kernel_moment_quadrature("z_i^2 (global, power 3)"), np.pi / 4)
    add("z_i^2 global power 4 (x8)", 8 * kernel_moment_quadrature("z_i^2 (global, power 4)"), 2 * np.pi / 3)
    for kind in ("z_i^3 z_j", "z_i z_j^3", "z_i"):
        add(f"{kind} r=2", kernel_moment_quadrature(kind, 2.0), 0.0, absolute=True)
    add("plane mass of e^W", quantization_integral(), 8 * np.pi)
    p = BubbleParams(lam=1.0, b=0.2 + 0.1j, delta=0.1)
    tests = {
        "fold y1^2 alpha=2": (lambda y: y.real**2, 2, None, None),
        "fold cos alpha=3": (lambda y: np.cos(3 * y.real) * np.exp(y.imag), 3, None, None),
        "fold e^W alpha=2": (lambda y: exp_W(p, y), 2, p.b, p.delta),
    }
    for name, (f, a, cen, sc) in tests.items():
        lhs, rhs = fold_integral_check(f, a, center=cen, scale=sc)
        add(name, lhs, rhs, rtol=min(tol, 1e-9))
    q = BubbleParams(lam=1.0, b=0.05 - 0.02j, delta=1e-4)
    g11 = bubble_integral(q, lambda z: kernel_Z(1, q, z) * exp_W(q, z) * project_Z(1, q, z))
    add("Gram diagonal (delta=1e-4)", g11, 2 * np.pi / 3, rtol=0.05)
    return rows


def cmd_verify_integrals(args, cp, out, outdir):
    tol = _positive(args.tol or _get(cp, "integrals", "tol", 1e-8), "tol")
    rows = integral_suite(tol)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["identity", "value", "reference", "error", "pass"])
    for name, v, ref, err, ok in rows:
        wr.writerow([name, g17(v), g17(ref), g17(err), str(bool(ok))])
    (outdir / "integrals.csv").write_text(buf.getvalue())
    out.write(buf.getvalue())
    if not all(r[4] for r in rows):
        raise CheckFailed("some integral identities failed")


def _first_stable_zero(c):
    zs = [z for z in find_zeros(c) if z.stable and not z.at_origin]
    if not zs:
        return None
    return sorted(zs, key=lambda z: (-z.xi[0], z.xi[1]))[0].xi


def cmd_solve(args, cp, out, outdir):
    c = _potential(cp, args.potential)
    lam = args.lam if args.lam is not None else _get(cp, "solve", "lambda", None)
    if lam is None:
        raise UsageError("solve needs --lambda")
    _positive(lam, "lambda")
    n_r = _get(cp, "grid", "n_r", 256, int)
    n_theta = _get(cp, "grid", "n_theta", 128, int)
    tol = _get(cp, "solve", "newton_tol", 1e-11)
    if args.b:
        b0 = complex(*_floats(args.b, 2, "--b"))
    else:
        xi = _first_stable_zero(c)
        if xi is None:
            raise CheckFailed("no stable nonzero zero of the reduced field to seed from")
        d = delta_of(lam, 0j, c)
        b0 = complex(*xi) * harness.scale_of(d)
    ps = harness.solve_reduced_point(lam, c, b0, n_r=n_r, n_theta=n_theta)
    final = ps.verified
    notes = []
    if args.deflate or _get(cp, "solve", "deflate", False, lambda s: s.lower() in ("1", "true", "yes")):
        final, note = _deflated_attempt(lam, c, ps, n_r, n_theta, tol)
        notes.append(note)
    row = harness.summarize(ps, c, newton_tol=tol)
    final.w.save(outdir / "w.dskf")
    final.w.to_csv(outdir / "w.csv")
    summary = {
        "lambda": lam,
        "b": [row.b.real, row.b.imag],
        "b_tilde": [row.b_tilde.real, row.b_tilde.imag],
        "delta": row.delta,
        "mass": row.mass,
        "mass_over_16pi": row.mass / harness.MASS_TARGET,
        "maxima": row.census_count,
        "phi_h1": row.phi_h1,
        "newton_residuals": final.residuals,
        "converged": row.converged,
        "notes": notes,
    }
    text = json.dumps(summary, indent=2, sort_keys=True, default=_json_default)
    (outdir / "solve.json").write_text(text + "\n")
    out.write(text + "\n")
    if not row.converged:
        raise CheckFailed("solve did not converge")


def _deflated_attempt(lam, c, ps, n_r, n_theta, tol):
    """Newton from the symmetric seed (bubble at the origin), then again with that
    branch deflated. Falls back to the reduced-solve result if nothing new appears."""
    disc = ps.verified.disc
    seed = DiskField(disc.grid, project_W_exact(BubbleParams.from_lambda(lam, 0j, c), disc.grid.x))
    cfg = SolveConfig(lam=lam, bubble=ps.verified.ref, coeffs=c, n_r=n_r, n_theta=n_theta,
                      newton_tol=tol, max_iter=30)
    try:
        radial = newton_solve(cfg, w0=seed, disc=disc)
    except Exception as exc:
        return ps.verified, f"symmetric seed failed ({exc}); deflation skipped"
    if not radial.converged:
        return ps.verified, "symmetric seed did not converge; deflation skipped"
    cfg.deflate_radial = True
    try:
        other = newton_solve(cfg, w0=seed, known=[radial.w], disc=disc)
    except Exception as exc:
        return ps.verified, f"deflated solve failed ({exc})"
    gap = float(np.max(np.abs(other.w.values - radial.w.values)))
    if other.converged and gap > 1e-6:
        return other, f"deflated solve converged to a distinct branch (max gap {gap:.3g})"
    return ps.verified, "deflated solve found no distinct branch; kept the reduced-solve result"


def _json_default(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    raise TypeError(type(v))


def cmd_sweep(args, cp, out, outdir):
    c = _potential(cp, args.potential)
    lam_max = args.lambda_max if args.lambda_max is not None else _get(cp, "sweep", "lambda_max", 1e-2)
    lam_min = args.lambda_min if args.lambda_min is not None else _get(cp, "sweep", "lambda_min", 1e-6)
    ratio = args.ratio if args.ratio is not None else _get(cp, "sweep", "ratio", 0.5)
    if not (0 < ratio < 1 and 0 < lam_min <= lam_max):
        raise UsageError("need 0 < ratio < 1 and 0 < lambda-min <= lambda-max")
    xi_text = _get(cp, "sweep", "xi0", None, str)
    xi0 = tuple(_floats(xi_text, 2, "xi0")) if xi_text else _first_stable_zero(c)
    if xi0 is None:
        raise CheckFailed("no stable nonzero zero of the reduced field: no non-simple target")
    n_r = _get(cp, "grid", "n_r", 256, int)
    n_theta = _get(cp, "grid", "n_theta", 128, int)
    s = harness.sweep(c, xi0=xi0, lam_max=lam_max, lam_min=lam_min, ratio=ratio, n_r=n_r, n_theta=n_theta,
                      with_min_sv=args.min_sv)
    (outdir / "sweep.csv").write_text(s.to_csv())
    cfg_text = _run_config(cp, c, xi0)
    (outdir / "config.ini").write_text(cfg_text)
    rep = harness.report_json(s)
    (outdir / "report.json").write_text(rep + "\n")
    out.write(s.to_csv())
    out.write(rep + "\n")


def _run_config(cp, c, xi0) -> str:
    norm = parse_config(serialize_config(cp))
    if not norm.has_section("potential"):
        norm["potential"] = {}
    for k, v in c.as_dict().items():
        norm["potential"][k] = g17(v)
    if not norm.has_section("sweep"):
        norm["sweep"] = {}
    norm["sweep"]["xi0"] = f"{g17(xi0[0])},{g17(xi0[1])}"
    return serialize_config(norm)


def cmd_report(args, cp, out):
    run = Path(args.run)
    try:
        text = (run / "sweep.csv").read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {run / 'sweep.csv'}: {exc}") from exc
    rcp = parse_config((run / "config.ini").read_text()) if (run / "config.ini").exists() else cp
    c = _potential(rcp, None)
    xi_text = _get(rcp, "sweep", "xi0", "1,-1", str)
    s = harness.SweepResult.from_csv(text, c, tuple(_floats(xi_text, 2, "xi0")))
    rep = harness.report_json(s)
    (run / "report.json").write_text(rep + "\n")
    out.write(rep + "\n")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="singular-liouville", description=__doc__)
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--out", help="output directory (default: run)")
    p.add_argument("--potential", action="append", metavar="NAME=VALUE",
                   help="override a potential coefficient (A0..A2, D0..D3); repeatable")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    q = sub.add_parser("check-potential")
    q.add_argument("--grid", type=int)
    q = sub.add_parser("find-zeros")
    q.add_argument("--box")
    q.add_argument("--starts", type=int)
    q.add_argument("--tol", type=float)
    q = sub.add_parser("verify-integrals")
    q.add_argument("--tol", type=float)
    q = sub.add_parser("solve")
    q.add_argument("--lambda", dest="lam", type=float)
    q.add_argument("--b")
    q.add_argument("--deflate", action="store_true")
    q = sub.add_parser("sweep")
    q.add_argument("--lambda-max", type=float)
    q.add_argument("--lambda-min", type=float)
    q.add_argument("--ratio", type=float)
    q.add_argument("--min-sv", action="store_true", help="also compute the restricted min singular value")
    q = sub.add_parser("report")
    q.add_argument("--run", required=True)
    return p


def run(argv=None, stdout=None) -> int:
    out = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        text = Path(args.config).read_text() if args.config else ""
        cp = parse_config(text)
        cmd = args.command
        if cmd == "check-potential":
            cmd_check_potential(args, cp, out)
        elif cmd == "find-zeros":
            cmd_find_zeros(args, cp, out)
        elif cmd == "verify-integrals":
            cmd_verify_integrals(args, cp, out, _outdir(args, cp))
        elif cmd == "solve":
            cmd_solve(args, cp, out, _outdir(args, cp))
        elif cmd == "sweep":
            cmd_sweep(args, cp, out, _outdir(args, cp))
        elif cmd == "report":
            cmd_report(args, cp, out)
    except (UsageError, OSError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except CheckFailed as exc:
        sys.stderr.write(f"check failed: {exc}\n")
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
