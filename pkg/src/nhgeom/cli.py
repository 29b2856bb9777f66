"""Command-line front end.

Usage::

    nhgeom run CONFIG.json [--output-dir DIR]
    nhgeom reproduce-qubit [--dt DT] [--output-dir DIR]
    nhgeom reproduce-qutrit [--output-dir DIR]

Exit status is 0 on success, 2 for unreadable or invalid configs and 3 for
numerical diagnostics (the failing operation is named on stderr).  The output
directory is taken from ``--output-dir``, else ``$NHGEOM_OUTPUT_DIR``, else
the config's ``output_dir``, else the working directory.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import ExperimentConfig, parse_config
from .dynamics import (
    GeneratorSchedule,
    IntegratorConfig,
    emit_csv,
    evolve,
    optimize_generator_details,
    record_columns,
    speed_limit_bounds,
    sta_schedule,
    write_columns,
)
from .errors import ConfigError, GeometryError
from .experiments import reproduce_qubit, reproduce_qutrit, write_json
from .geodesics import plan_geodesic
from .operators import commutator, matrix_to_json, trace_distance
from .states import (
    BURES,
    DensityOperator,
    NonHermitianGenerator,
    TangentVector,
    bures_inner,
    decompose_tangent,
    fidelity_and_angle,
    monotone_norm,
    tangent_from_H_Gamma,
)

ENV_OUTPUT_DIR = "NHGEOM_OUTPUT_DIR"


def _generator(cfg: ExperimentConfig, n: int) -> NonHermitianGenerator:
    if cfg.matrix("K") is not None:
        return NonHermitianGenerator.from_matrix(cfg.matrix("K"))
    zero = np.zeros((n, n), dtype=complex)
    h = cfg.matrix("H")
    g = cfg.matrix("Gamma")
    return NonHermitianGenerator(zero if h is None else h, zero if g is None else g)


def _integrator(cfg: ExperimentConfig, dt: float) -> IntegratorConfig:
    return IntegratorConfig(
        dt,
        True if cfg.renormalize is None else cfg.renormalize,
        **cfg.tolerances(),
    )


def _run_evolve(cfg: ExperimentConfig, out: Path, bounds: bool) -> list[str]:
    rho0 = cfg.state("rho0")
    gen = _generator(cfg, rho0.dim)
    t0, t1 = cfg.horizon
    sched = GeneratorSchedule.constant(gen, float(t0), float(t1))
    rec = evolve(rho0, sched, _integrator(cfg, cfg.dt), optimize=bool(cfg.optimize))
    name = "speedlimit" if bounds else "evolve"
    csv_path = out / f"{name}.csv"
    cols = record_columns(rec, include_states=bool(cfg.include_states))
    if cfg.optimize:
        # prescribed generator's decay on the shared trajectory next to the optimised one
        cols = {
            "t": cols.pop("t"),
            "norm": cols.pop("norm"),
            "gamma": np.array([2.0 * s.expectation(gen.Gamma) for s in rec.states]),
            "gamma_opt": cols.pop("gamma"),
            **cols,
        }
    write_columns(csv_path, cols)
    summary = {
        "steps": len(rec) - 1,
        "rank": rec.rank,
        "final_norm": float(rec.norms[-1]),
        "min_retained_eigenvalue": float(rec.min_retained_eigenvalues.min()),
    }
    if bounds:
        qsl, weak = speed_limit_bounds(rec)
        _, angle = fidelity_and_angle(rec.states[0], rec.states[-1])
        summary.update({"elapsed": rec.elapsed, "angle": angle, "qsl": qsl, "qsl_weak": weak})
    write_json(out / f"{name}.json", summary)
    return [csv_path.name, f"{name}.json"]


def _tangent_json(v: TangentVector) -> dict:
    return matrix_to_json(v.matrix)


def _run_decompose(cfg: ExperimentConfig, out: Path) -> list[str]:
    rho = cfg.state("rho")
    if cfg.matrix("tangent") is not None:
        v = TangentVector(rho, cfg.matrix("tangent"))
    else:
        v = tangent_from_H_Gamma(_generator(cfg, rho.dim), rho)
    parts = dict(zip(("coherent", "classical", "lifting"), decompose_tangent(v)))
    result = {name: _tangent_json(p) for name, p in parts.items()}
    result["bures_norm_sq"] = {name: bures_inner(p, p) for name, p in parts.items()}
    result["bures_norm_sq"]["total"] = bures_inner(v, v)
    if rho.full_rank:
        result["monotone_norm_bures"] = monotone_norm(v, BURES)
    write_json(out / "decompose.json", result)
    return ["decompose.json"]


def _run_optimize(cfg: ExperimentConfig, out: Path) -> list[str]:
    rho = cfg.state("rho")
    gen = _generator(cfg, rho.dim)
    res = optimize_generator_details(gen, rho)
    result = {
        "H_opt": matrix_to_json(res.generator.H),
        "Gamma_opt": matrix_to_json(res.generator.Gamma),
        "H_correction": matrix_to_json(res.h_correction),
        "mu_c_min": res.mu_c_min,
        "gamma": 2.0 * rho.expectation(gen.Gamma),
        "gamma_opt": 2.0 * rho.expectation(res.generator.Gamma),
    }
    write_json(out / "optimize.json", result)
    return ["optimize.json"]


def _run_geodesic(cfg: ExperimentConfig, out: Path) -> list[str]:
    rho1, rho2 = cfg.state("rho1"), cfg.state("rho2")
    plan = plan_geodesic(rho1, rho2, R_scale=1.0 if cfg.R_scale is None else cfg.R_scale)
    dt = plan.theta / 2000 if cfg.dt is None else cfg.dt
    rec = evolve(rho1, plan.schedule(), _integrator(cfg, dt))
    emit_csv(rec, out / "geodesic.csv", include_states=bool(cfg.include_states))
    qsl, weak = speed_limit_bounds(rec)
    summary = plan.to_json()
    summary.update(
        {
            "diagnostics": list(plan.diagnostics),
            "endpoint_trace_distance": trace_distance(rec.states[-1].matrix, rho2.matrix),
            "qsl": qsl,
            "qsl_weak": weak,
            "steps": len(rec) - 1,
        }
    )
    write_json(out / "geodesic.json", summary)
    return ["geodesic.csv", "geodesic.json"]


def _run_sta(cfg: ExperimentConfig, out: Path) -> list[str]:
    coeffs = cfg.h0_coefficients

    def h0(t):
        return sum(c * t**k for k, c in enumerate(coeffs))

    def dh0(t):
        n = coeffs[0].shape[0]
        return sum((k * c * t ** (k - 1) for k, c in enumerate(coeffs) if k), np.zeros((n, n), complex))

    t0, t1 = (float(x) for x in cfg.horizon)
    beta = float(cfg.beta)
    tol = cfg.tolerances()
    sched = sta_schedule(h0, beta, t0, t1, dh0, tol.get("cluster_tol", 1e-8))
    rho0 = DensityOperator.gibbs(h0(t0), beta, **tol)
    rec = evolve(rho0, sched, _integrator(cfg, cfg.dt))
    gibbs_dist = [
        trace_distance(s.matrix, DensityOperator.gibbs(h0(float(t)), beta).matrix)
        for t, s in zip(rec.times, rec.states)
    ]
    comm = [float(np.max(np.abs(commutator(g.Gamma, s.matrix)))) for g, s in zip(rec.generators, rec.states)]
    emit_csv(rec, out / "sta.csv", {"gibbs_distance": gibbs_dist, "commutator_residual": comm})
    write_json(
        out / "sta.json",
        {"steps": len(rec) - 1, "max_gibbs_distance": max(gibbs_dist), "max_commutator_residual": max(comm)},
    )
    return ["sta.csv", "sta.json"]


def run(cfg: ExperimentConfig, output_dir: Optional[os.PathLike] = None) -> list[str]:
    """Execute ``cfg`` and return the names of the files written to ``output_dir``."""
    out = Path(output_dir if output_dir is not None else (cfg.output_dir or "."))
    out.mkdir(parents=True, exist_ok=True)
    cmd = cfg.command
    if cmd in ("evolve", "speedlimit"):
        return _run_evolve(cfg, out, bounds=cmd == "speedlimit")
    if cmd == "decompose":
        return _run_decompose(cfg, out)
    if cmd == "optimize":
        return _run_optimize(cfg, out)
    if cmd == "geodesic":
        return _run_geodesic(cfg, out)
    if cmd == "sta":
        return _run_sta(cfg, out)
    if cmd == "reproduce-qubit":
        reproduce_qubit(out, cfg.dt)
        return ["qubit_norms.csv", "qubit_rates.csv", "qubit_summary.json"]
    if cmd == "reproduce-qutrit":
        rep = reproduce_qutrit(out)
        print(rep.report())
        return ["qutrit.json"]
    raise ConfigError(f"unsupported command {cmd!r}", "command")


def _resolve_output(flag: Optional[str], cfg: Optional[ExperimentConfig]) -> Path:
    if flag:
        return Path(flag)
    env = os.environ.get(ENV_OUTPUT_DIR)
    if env:
        return Path(env)
    if cfg is not None and cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(".")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", help=f"output directory (overrides ${ENV_OUTPUT_DIR})")
    common.add_argument(
        "--seed", type=int, default=None, help="reserved for randomized drivers; unused by fixed configs"
    )
    parser = argparse.ArgumentParser(prog="nhgeom", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", parents=[common], help="run a JSON experiment config")
    p_run.add_argument("config", help="path to the config file ('-' for stdin)")
    p_q = sub.add_parser("reproduce-qubit", parents=[common], help="qubit geodesic norms and decay rates")
    p_q.add_argument("--dt", type=float, default=None, help="step (default theta/2000)")
    sub.add_parser("reproduce-qutrit", parents=[common], help="qutrit time-independence counterexample")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.cmd == "run":
            try:
                raw = sys.stdin.buffer.read() if args.config == "-" else Path(args.config).read_bytes()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc.strerror}", "config") from None
            cfg = parse_config(raw)
        elif args.cmd == "reproduce-qubit":
            if args.dt is not None and not args.dt > 0:
                raise ConfigError("must be positive", "dt")
            cfg = parse_config(
                '{"command": "reproduce-qubit"' + (f', "dt": {args.dt!r}' if args.dt else "") + "}"
            )
        else:
            cfg = parse_config('{"command": "reproduce-qutrit"}')
        out = _resolve_output(args.output_dir, cfg)
        written = run(cfg, out)
    except ConfigError as exc:
        print(f"nhgeom: config error: {exc}", file=sys.stderr)
        return 2
    except GeometryError as exc:
        print(f"nhgeom: numerical error in {exc.operation or 'unknown'}: {exc}", file=sys.stderr)
        return 3
    for name in written:
        print(out / name)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
