"""Command-line front end.

Subcommands::

    qbgk solve-coeffs CONFIG.json [--out DIR]
    qbgk simulate CONFIG.json [--out DIR]
    qbgk verify [--level quick|full]

Exit codes: 0 success, 1 configuration or I/O error, 2 infeasible moment
data (the report is still written), 3 failure during time integration,
4 failed verification. Every error also prints one JSON line
``{"error": ..., "code": ..., "reason": ...}`` on standard error.
"""

import argparse
import datetime
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .distributions import (
    DistributionField,
    MomentumGrid,
    _atomic_write,
    read_snapshot,
    write_snapshot,
)
from .dynamics import SimConfig, Species, diagnostics_csv, run
from .equilibrium import (
    MixtureProblem,
    SpeciesMoments,
    solve_inter,
    solve_intra,
    verify_coeffs,
)
from .errors import CFLError, InfeasibleError, QBGKError
from .quantum_integrals import Statistics
from .verify import format_table, run_checks

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_RUNTIME = 3
EXIT_VERIFY = 4

RESIDUAL_TOL = 1e-8


class CLIError(Exception):
    def __init__(self, code, kind, reason):
        super().__init__(reason)
        self.code = code
        self.kind = kind
        self.reason = reason


def _fail_config(reason):
    return CLIError(EXIT_CONFIG, "config", reason)


# -- config helpers ---------------------------------------------------------


def load_config(path):
    """Return ``(dict, sha256 hex digest of the raw file)``."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as err:
        raise _fail_config(f"cannot read {path}: {err.strerror}") from err
    try:
        cfg = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise _fail_config(f"{path}: invalid JSON ({err})") from err
    if not isinstance(cfg, dict):
        raise _fail_config(f"{path}: top level must be an object")
    return cfg, hashlib.sha256(raw).hexdigest()


def _species_list(cfg):
    specs = cfg.get("species")
    if not isinstance(specs, list) or len(specs) != 2:
        raise _fail_config("'species' must be a list of two entries")
    out = []
    for i, sp in enumerate(specs, 1):
        try:
            out.append(Species(float(sp["mass"]), Statistics.parse(sp["statistics"])))
        except (KeyError, TypeError, ValueError) as err:
            raise _fail_config(f"species {i}: {err}") from err
    return out, specs


def _timestamp():
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        when = datetime.datetime.fromtimestamp(int(epoch), tz=datetime.timezone.utc)
    else:
        when = datetime.datetime.now(tz=datetime.timezone.utc)
    return when.isoformat(timespec="seconds")


def write_manifest(out_dir, subcommand, config_hash, outputs, exit_code):
    manifest = {
        "artifact_version": __version__,
        "subcommand": subcommand,
        "config_sha256": config_hash,
        "timestamp": _timestamp(),
        "exit_code": exit_code,
        "outputs": sorted(outputs),
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)


def _write_json(path, obj):
    _atomic_write(path, (json.dumps(obj, indent=2, allow_nan=True) + "\n").encode("utf-8"))


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as err:
        raise _fail_config(f"cannot create output directory {path}: {err.strerror}") from err


# -- solve-coeffs -----------------------------------------------------------


def solve_report(cfg):
    """Build the coefficient report; returns ``(report, reason_or_None)``."""
    species, raw = _species_list(cfg)
    moms = []
    for i, sp in enumerate(raw, 1):
        try:
            moms.append(SpeciesMoments.from_dict(sp["moments"]))
        except (KeyError, TypeError, ValueError) as err:
            raise _fail_config(f"species {i}: bad or missing 'moments' ({err})") from err
    prob = MixtureProblem(
        species[0].mass, species[1].mass, species[0].stat, species[1].stat, moms[0], moms[1]
    )
    reasons = []
    intra = []
    intra_res = []
    for i, (sp, mom) in enumerate(zip(species, moms), 1):
        try:
            coeffs = solve_intra(sp.mass, sp.stat, mom)
        except InfeasibleError as err:
            reasons.append(f"species {i}: {err}")
            intra.append(None)
            intra_res.append(None)
            continue
        intra.append(coeffs.to_dict())
        intra_res.append(verify_coeffs(coeffs, prob, RESIDUAL_TOL, species=i).to_dict())
    try:
        inter = solve_inter(prob)
    except InfeasibleError as err:
        reasons.append(f"mixture: {err}")
        inter_d = inter_res = None
    else:
        inter_d = inter.to_dict()
        inter_res = verify_coeffs(inter, prob, RESIDUAL_TOL).to_dict()

    report = {
        "artifact_version": __version__,
        "species": [
            {"mass": sp.mass, "statistics": sp.stat.label, "moments": mom.to_dict()}
            for sp, mom in zip(species, moms)
        ],
        "feasible": {
            "intra": [c is not None for c in intra],
            "inter": inter_d is not None,
        },
        "reasons": reasons,
        "intra": intra,
        "inter": inter_d,
        "residuals": {"intra": intra_res, "inter": inter_res, "tolerance": RESIDUAL_TOL},
    }
    # the mixture relation is what the command is about, so report it first
    ordered = sorted(reasons, key=lambda r: not r.startswith("mixture"))
    return report, ("; ".join(ordered) if ordered else None)


def cmd_solve_coeffs(args):
    cfg, digest = load_config(args.config)
    _ensure_dir(args.out)
    report, reason = solve_report(cfg)
    _write_json(os.path.join(args.out, "coefficients.json"), report)
    code = EXIT_OK if reason is None else EXIT_INFEASIBLE
    write_manifest(args.out, "solve-coeffs", digest, ["coefficients.json"], code)
    if reason is not None:
        raise CLIError(code, "infeasible", reason)
    inter = report["inter"]
    print(f"c12 = {inter['c12']!r}  c21 = {inter['c21']!r}  a = {inter['a']!r}")
    return code


# -- simulate ---------------------------------------------------------------


def _init_params(init, species):
    """``(a, b, c, m)`` tuples bounding the initial data, for grid sizing."""
    specs = init.get("species")
    if not isinstance(specs, list) or len(specs) != 2:
        raise _fail_config("init.species must list two equilibria")
    amp = float(init.get("amplitude", 0.0)) if init.get("kind") == "cosine" else 0.0
    if not 0 <= amp < 1:
        raise _fail_config("init.amplitude must lie in [0, 1)")
    out = []
    for sp, prm in zip(species, specs):
        c = float(prm["c"]) - math.log1p(amp)
        out.append((float(prm["a"]), prm.get("b", (0.0, 0.0, 0.0)), c, sp.mass))
    return out


def build_sim_config(cfg, base_dir="."):
    species, _ = _species_list(cfg)
    init = dict(cfg.get("init") or {})
    kind = init.setdefault("kind", "equilibria")
    grid_cfg = cfg.get("grid") or {}
    try:
        if kind == "snapshot":
            paths = [os.path.join(base_dir, p) for p in init["paths"]]
            init["paths"] = paths
            _, snap_grid = read_snapshot(paths[0])
            grid = MomentumGrid(
                p_max=float(grid_cfg.get("p_max", snap_grid.p_max)),
                n=int(grid_cfg.get("n", snap_grid.n)),
            )
        else:
            n = int(grid_cfg["n"])
            if grid_cfg.get("p_max") is not None:
                grid = MomentumGrid(float(grid_cfg["p_max"]), n)
            else:
                grid = MomentumGrid.auto(_init_params(init, species), n)
        return SimConfig(
            dt=float(cfg["dt"]),
            t_end=float(cfg["t_end"]),
            grid=grid,
            species=species,
            init=init,
            mode=cfg.get("mode", "homogeneous"),
            nx=int(cfg.get("nx", 1)),
            x_length=float(cfg.get("x_length", 1.0)),
            diag_every=int(cfg.get("diag_every", 1)),
            nu_intra=float(cfg.get("nu_intra", 1.0)),
            nu_inter=float(cfg.get("nu_inter", 1.0)),
            splitting=cfg.get("splitting", "lie"),
            discrete_consistent=bool(cfg.get("discrete_consistent", True)),
        )
    except CLIError:
        raise
    except (KeyError, TypeError, ValueError, OSError) as err:
        detail = f"missing key {err}" if isinstance(err, KeyError) else str(err)
        raise _fail_config(f"invalid simulation config: {detail}") from err


def _drifts(records):
    rec = np.array(records)
    first = rec[0]
    scale_p = math.sqrt(2.0 * max(first[1] + first[2], 1e-300) * max(first[6], 1e-300))
    return {
        "mass1": float(np.max(np.abs(rec[:, 1] / first[1] - 1.0))) if first[1] else 0.0,
        "mass2": float(np.max(np.abs(rec[:, 2] / first[2] - 1.0))) if first[2] else 0.0,
        "momentum": float(np.max(np.abs(rec[:, 3:6] - first[3:6]))) / scale_p,
        "energy": float(np.max(np.abs(rec[:, 6] / first[6] - 1.0))),
    }


def snapshot_names(config):
    if config.mode == "homogeneous":
        return [[f"species{s + 1}.snap"] for s in range(2)]
    return [[f"species{s + 1}_cell{c:04d}.snap" for c in range(config.nx)] for s in range(2)]


def cmd_simulate(args):
    cfg, digest = load_config(args.config)
    config = build_sim_config(cfg, os.path.dirname(os.path.abspath(args.config)))
    _ensure_dir(args.out)
    try:
        state = run(config)
    except (QBGKError, FloatingPointError) as err:
        write_manifest(args.out, "simulate", digest, [], EXIT_RUNTIME)
        raise CLIError(EXIT_RUNTIME, "runtime", str(err)) from err
    except (KeyError, ValueError) as err:
        raise _fail_config(f"invalid initial data: {err}") from err

    outputs = []
    names = snapshot_names(config)
    for s, sp in enumerate(config.species):
        for cell, name in enumerate(names[s]):
            fld = DistributionField(state.f[s][cell], sp.stat, sp.mass)
            write_snapshot(os.path.join(args.out, name), fld, config.grid)
            outputs.append(name)
    _atomic_write(
        os.path.join(args.out, "diagnostics.csv"), diagnostics_csv(state.diagnostics).encode("utf-8")
    )
    outputs.append("diagnostics.csv")
    write_manifest(args.out, "simulate", digest, outputs, EXIT_OK)

    last = state.diagnostics[-1]
    drift = _drifts(state.diagnostics)
    print(f"t = {last.t:.6g}  steps = {state.step}  final H = {last.H!r}")
    print(
        "max relative drift: "
        + "  ".join(f"{k} {v:.3e}" for k, v in drift.items())
    )
    print(f"max occupancy: species1 {last.maxf1:.6g}  species2 {last.maxf2:.6g}")
    return EXIT_OK


# -- verify -----------------------------------------------------------------


def cmd_verify(args):
    results = run_checks(args.level, tol_scale=args.tol_scale)
    print(format_table(results))
    failed = [r.name for r in results if not r.passed]
    if args.out:
        _ensure_dir(args.out)
        payload = {
            "artifact_version": __version__,
            "level": args.level,
            "checks": [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results],
        }
        _write_json(os.path.join(args.out, "verify.json"), payload)
        digest = hashlib.sha256(f"{args.level}:{args.tol_scale!r}".encode()).hexdigest()
        write_manifest(
            args.out, "verify", digest, ["verify.json"], EXIT_VERIFY if failed else EXIT_OK
        )
    if failed:
        raise CLIError(EXIT_VERIFY, "verify", "failed checks: " + ", ".join(failed))
    return EXIT_OK


# -- entry point ------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="qbgk", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-coeffs", help="solve intra- and inter-species equilibrium coefficients")
    p.add_argument("config")
    p.add_argument("--out", default=".", help="output directory (default: .)")
    p.set_defaults(func=cmd_solve_coeffs)

    p = sub.add_parser("simulate", help="time-integrate the relaxation system")
    p.add_argument("config")
    p.add_argument("--out", default=".", help="output directory (default: .)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the built-in invariant checks")
    p.add_argument("--level", choices=("quick", "full"), default="quick")
    p.add_argument("--out", default=None, help="also write verify.json and a manifest here")
    p.add_argument(
        "--tol-scale", type=float, default=1.0,
        help="multiply every check tolerance (testing hook for the failure path)",
    )
    p.set_defaults(func=cmd_verify)
    return parser


def _report_error(err):
    line = json.dumps({"error": err.kind, "code": err.code, "reason": err.reason.replace("\n", " ")})
    print(line, file=sys.stderr)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CLIError as err:
        _report_error(err)
        return err.code
    except CFLError as err:
        _report_error(CLIError(EXIT_CONFIG, "config", str(err)))
        return EXIT_CONFIG
    except OSError as err:
        _report_error(CLIError(EXIT_CONFIG, "io", f"{err.filename}: {err.strerror}"))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
