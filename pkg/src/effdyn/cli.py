"""Command-line entry point: ``effdyn <subcommand> [flags]``.

Exit codes: 0 success, 1 validation or I/O error, 2 numerical-invariant
violation. Result files are named by flags; a human summary goes to stdout
and a run manifest (JSON) to ``--manifest`` or, failing that, stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import channel as ch
from . import diracqw as dq
from . import meanfield as mf
from . import wavepacket as wp
from .linalg import BipartiteOperator, make_rng, random_density
from .matio import read_matrix
from .optimizer import OptimizerConfig, maximize_fidelity, phase_align


class InvariantViolation(RuntimeError):
    """A computed quantity broke a numerical invariant."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


class _Outputs:
    """Tracks written files so a failing run can remove them."""

    def __init__(self):
        self.paths: list[Path] = []

    def write(self, path: str | Path, text: str) -> Path:
        path = Path(path)
        self.paths.append(path)
        path.write_text(text)
        return path

    def cleanup(self) -> None:
        for p in self.paths:
            p.unlink(missing_ok=True)


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_plain) + "\n"


def _emit(args, out: _Outputs, payload: dict, summary: str) -> None:
    if args.out:
        out.write(args.out, _dump(payload))
        print(summary)
    else:
        print(_dump(payload), end="")


def _bloch(args) -> dq.BlochVector:
    return dq.BlochVector(args.rx, args.ry, args.rz)


def _check(cond: bool, message: str) -> None:
    if not cond:
        raise InvariantViolation(message)


def cmd_fidelity(args, out: _Outputs) -> dict:
    u_mat = read_matrix(args.u)
    rho = read_matrix(args.rho)
    u_ir = read_matrix(args.uir)
    d_ir = u_ir.shape[0]
    if u_mat.shape[0] % d_ir:
        raise ValueError(f"U dimension {u_mat.shape[0]} is not a multiple of d_ir={d_ir}")
    u = BipartiteOperator(u_mat, d_ir, u_mat.shape[0] // d_ir)
    rep = ch.channel_fidelity_unitary_target(u, rho, u_ir, seed=args.seed)
    _check(-1e-10 <= rep.fidelity <= 1 + 1e-10, f"fidelity {rep.fidelity} outside [0, 1]")
    _emit(args, out, rep.to_json(), f"fidelity = {rep.fidelity:.15g} (unit: {rep.is_unit_fidelity})")
    return {"d_ir": d_ir, "d_uv": u.d_uv}


def _instance(args):
    rng = make_rng(args.seed)
    fam = mf.random_family(args.d_ir, args.d_uv, rng)
    return fam, random_density(args.d_uv, rng)


def cmd_meanfield(args, out: _Outputs) -> dict:
    fam, rho = _instance(args)
    rows = mf.sweep(fam, rho, args.thetas)
    for r in rows:
        _check(abs(r.mu_direct - r.mu_correlator) <= 1e-9 and abs(r.mu_direct - r.mu_variance) <= 1e-9,
               "mu evaluation methods disagree")
    payload = {"seed": args.seed, "d_ir": args.d_ir, "d_uv": args.d_uv, "rows": [r.to_json() for r in rows]}
    lines = [f"theta={r.theta:g} predicted={r.predicted_fidelity:.12f} exact={r.exact_fidelity:.12f}" for r in rows]
    _emit(args, out, payload, "\n".join(lines))
    return {}


def cmd_optimize(args, out: _Outputs) -> dict:
    fam, rho = _instance(args)
    u = fam.unitary(args.theta)
    u_mf = mf.effective_unitary(fam, rho, args.theta)
    f_mf = ch.fidelity_value(u, rho, u_mf)
    cfg = OptimizerConfig(args.restarts, args.iters, args.step, args.grad_tol, args.opt_seed)
    res = maximize_fidelity(u, rho, cfg, warm_start=None if args.cold else u_mf, jobs=args.jobs)
    _check(res.best_fidelity <= 1 + 1e-9, "optimizer exceeded unit fidelity")
    payload = res.to_json() | {
        "theta": args.theta,
        "seed": args.seed,
        "opt_seed": args.opt_seed,
        "mean_field_fidelity": f_mf,
        "gap": res.best_fidelity - f_mf,
        "phase_aligned_distance": phase_align(res.best_unitary, u_mf),
    }
    _emit(args, out, payload,
          f"optimizer F = {res.best_fidelity:.15f}, mean-field F = {f_mf:.15f}, "
          f"gap = {payload['gap']:.3e}, distance = {payload['phase_aligned_distance']:.3e}")
    return {}


def cmd_mu_dirac(args, out: _Outputs) -> dict:
    r = _bloch(args)
    closed = dq.mu_dirac(r, "closed_form")
    generic = dq.mu_dirac(r, "generic", args.L)
    _check(abs(closed - generic) <= 1e-9, f"closed-form mu {closed} != generic {generic}")
    payload = {"r_x": r.r_x, "r_y": r.r_y, "r_z": r.r_z, "mu_closed": closed, "mu_generic": generic, "L": args.L}
    _emit(args, out, payload, f"mu = {closed:.12g} (generic, L={args.L}: {generic:.12g})")
    return {}


def cmd_dispersion(args, out: _Outputs) -> dict:
    k = -np.pi + 2 * np.pi * np.arange(args.samples) / args.samples
    r = _bloch(args)
    disp = dq.dispersion(args.theta, k, r)
    _check(bool(np.all(np.isfinite(disp.omega))), "non-finite dispersion")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "omega", "omega_ir"])
    for row in zip(disp.k, disp.omega, disp.omega_ir):
        w.writerow([repr(float(v)) for v in row])
    if args.out:
        out.write(args.out, buf.getvalue())
        print(f"wrote {args.samples} dispersion samples to {args.out}")
    else:
        print(buf.getvalue(), end="")
    return {}


def cmd_effective_walk(args, out: _Outputs) -> dict:
    cfg = dq.RingWalkConfig(args.theta, args.L)
    r = _bloch(args)
    q = cfg.coarse_momenta()
    kappa = cfg.coarse_k(q)
    blocks = dq.effective_walk_blocks(cfg.theta, r, kappa)
    resid = max(float(np.max(np.abs(b.conj().T @ b - np.eye(2)))) for b in blocks)
    _check(resid <= 1e-10, "effective block not unitary")
    payload = {
        "theta": args.theta, "L": args.L, "r": list(r.as_tuple()),
        "blocks": [
            {"p": int(p), "k": float(k), "gamma": dq.gamma(r, k),
             "block": [[[z.real, z.imag] for z in row] for row in b]}
            for p, k, b in zip(q, kappa, blocks)
        ],
    }
    _emit(args, out, payload, f"{len(q)} effective blocks for theta={args.theta}, L={args.L}")
    return {}


def cmd_wavepacket(args, out: _Outputs) -> dict:
    cfg = wp.ExperimentConfig.load(args.config)
    out.paths += [Path(cfg.out_csv), Path(cfg.out_json)]
    summary = wp.run_experiment(cfg)
    _check(summary["series"][0][1] == 0.0, "E_0 is not zero")
    print(f"E_n for n <= {cfg.n_max}: slope {summary['slope']:.4e}, R^2 {summary['r2']:.4f}, "
          f"max {summary['max_E']:.4e} -> {cfg.out_csv}, {cfg.out_json}")
    return {"out_csv": cfg.out_csv, "out_json": cfg.out_json}


def cmd_selftest(args, out: _Outputs) -> dict:
    from .acceptance import run_all

    results = run_all(args.only or None)
    for r in results:
        print(r.line())
    failed = [r.number for r in results if not r.passed]
    _check(not failed, f"acceptance criteria failed: {failed}")
    return {"criteria": [r.number for r in results]}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="effdyn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = _Parser(add_help=False)
    common.add_argument("--manifest", help="write the run manifest here instead of stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    add = sub.add_parser

    def add_parser(name, **kw):
        return add(name, parents=[common], **kw)

    sub.add_parser = add_parser

    def bloch_flags(sp):
        sp.add_argument("--rx", type=float, default=0.0)
        sp.add_argument("--ry", type=float, default=0.0)
        sp.add_argument("--rz", type=float, default=0.0)

    def instance_flags(sp):
        sp.add_argument("--d-ir", type=int, default=2)
        sp.add_argument("--d-uv", type=int, default=2)
        sp.add_argument("--seed", type=int, default=0, help="seed of the random weak-coupling family")

    sp = sub.add_parser("fidelity", help="channel fidelity of a serialized (U, rho_UV, U_IR)")
    sp.add_argument("--u", required=True)
    sp.add_argument("--rho", required=True)
    sp.add_argument("--uir", required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_fidelity)

    sp = sub.add_parser("meanfield", help="predicted vs exact fidelity sweep over theta")
    instance_flags(sp)
    sp.add_argument("--thetas", type=float, nargs="+", default=[0.04, 0.02, 0.01, 0.005])
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_meanfield)

    sp = sub.add_parser("optimize", help="brute-force optimum vs the mean-field unitary")
    instance_flags(sp)
    sp.add_argument("--theta", type=float, default=1e-2)
    sp.add_argument("--restarts", type=int, default=4)
    sp.add_argument("--iters", type=int, default=2000)
    sp.add_argument("--step", type=float, default=1.0)
    sp.add_argument("--grad-tol", type=float, default=1e-9)
    sp.add_argument("--opt-seed", type=int, default=0)
    sp.add_argument("--cold", action="store_true", help="no warm start from the mean-field unitary")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("mu-dirac", help="dissipation error of the binned Dirac walk")
    bloch_flags(sp)
    sp.add_argument("--L", type=int, default=4)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_mu_dirac)

    sp = sub.add_parser("dispersion", help="CSV of omega(k) and omega_IR(k)")
    sp.add_argument("--theta", type=float, required=True)
    sp.add_argument("--samples", type=int, default=256)
    bloch_flags(sp)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_dispersion)

    sp = sub.add_parser("effective-walk", help="U_IR blocks per coarse momentum")
    sp.add_argument("--theta", type=float, required=True)
    sp.add_argument("--L", type=int, default=8)
    bloch_flags(sp)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_effective_walk)

    sp = sub.add_parser("wavepacket", help="E_n trace-distance series from a config file")
    sp.add_argument("--config", required=True)
    sp.set_defaults(func=cmd_wavepacket)

    sp = sub.add_parser("selftest", help="run the acceptance criteria")
    sp.add_argument("--only", nargs="*", help="criterion numbers, e.g. 1 3 11a")
    sp.set_defaults(func=cmd_selftest)
    return p


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors, --help and --version
        return exc.code if isinstance(exc.code, int) else 1
    out = _Outputs()
    t0 = time.perf_counter()
    status, extra, error = 0, {}, None
    try:
        extra = args.func(args, out) or {}
    except InvariantViolation as exc:
        status, error = 2, str(exc)
    except (ValueError, OSError, yaml.YAMLError) as exc:
        status, error = 1, str(exc)
    if status:
        out.cleanup()
        print(f"effdyn {args.command}: {error}", file=sys.stderr)
    params = {k: v for k, v in vars(args).items() if k not in ("func", "manifest", "command")}
    manifest = {
        "command": args.command,
        "parameters": params,
        "seed": params.get("seed"),
        "artifacts": [str(p) for p in out.paths if p.exists()],
        "wall_clock_ms": (time.perf_counter() - t0) * 1e3,
        "version": __version__,
        "exit_code": status,
    } | extra
    text = json.dumps(manifest, sort_keys=True, default=str)
    if args.manifest:
        Path(args.manifest).write_text(text + "\n")
    else:
        print(text, file=sys.stderr)
    return status


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
