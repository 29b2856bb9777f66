"""Reproduction drivers for the qubit geodesic and the qutrit counterexample."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .dynamics import IntegratorConfig, TrajectoryRecord, evolve, write_columns
from .geodesics import GeodesicPlan, TimeIndependentVerdict, geodesic_generator, plan_geodesic, time_independent_check
from .operators import PAULI, matrix_to_json
from .states import DensityOperator

QUBIT_RHO1 = 0.5 * (PAULI["I"] + 0.2 * PAULI["Z"])
QUBIT_RHO2 = 0.5 * (PAULI["I"] - 0.5 * PAULI["X"] - 0.5 * PAULI["Z"])
QUTRIT_RHO1 = np.diag([0.2, 0.4, 0.4]).astype(complex)
QUTRIT_RHO2 = np.diag([0.2, 0.3, 0.5]).astype(complex)

# reproduction runs use theta / DEFAULT_STEPS as the step
DEFAULT_STEPS = 2000


def write_json(path, obj) -> None:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True, eq=False)
class QubitReproduction:
    plan: GeodesicPlan
    baseline: TrajectoryRecord
    optimized: TrajectoryRecord

    @property
    def rel_diff(self) -> np.ndarray:
        """``(norm_opt - norm_baseline) / norm_baseline`` on the grid."""
        return (self.optimized.norms - self.baseline.norms) / self.baseline.norms

    def summary(self) -> dict:
        g = self.optimized.decay_rates
        i_min = int(np.argmin(g))
        return {
            "theta": self.plan.theta,
            "steps": len(self.baseline) - 1,
            "final_norm_baseline": float(self.baseline.norms[-1]),
            "final_norm_opt": float(self.optimized.norms[-1]),
            "final_rel_diff": float(self.rel_diff[-1]),
            "gamma_opt_min": float(g[i_min]),
            "gamma_opt_argmin_t": float(self.optimized.times[i_min]),
        }


def run_qubit(dt: Optional[float] = None) -> QubitReproduction:
    """Baseline and success-rate-optimised runs along the qubit geodesic.

    The baseline uses the floor-shifted geodesic generator; the optimised run
    re-optimises it against the current state at every evaluation.
    """
    plan = plan_geodesic(DensityOperator(QUBIT_RHO1), DensityOperator(QUBIT_RHO2))
    cfg = IntegratorConfig(plan.theta / DEFAULT_STEPS if dt is None else dt)
    sched = plan.schedule().floor_shifted()
    base = evolve(plan.rho1, sched, cfg)
    opt = evolve(plan.rho1, sched, cfg, optimize=True)
    return QubitReproduction(plan, base, opt)


def reproduce_qubit(out_dir, dt: Optional[float] = None) -> QubitReproduction:
    """Write ``qubit_norms.csv``, ``qubit_rates.csv`` and ``qubit_summary.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = run_qubit(dt)
    b, o = rep.baseline, rep.optimized
    write_columns(
        out / "qubit_norms.csv",
        {"t": b.times, "norm_baseline": b.norms, "norm_opt": o.norms, "rel_diff": rep.rel_diff},
    )
    write_columns(
        out / "qubit_rates.csv",
        {
            "t": b.times,
            "gamma": b.decay_rates,
            "gamma_opt": o.decay_rates,
            "gamma_unnorm": b.global_decay_rates,
            "gamma_opt_unnorm": o.global_decay_rates,
        },
    )
    write_json(out / "qubit_summary.json", rep.summary())
    return rep


@dataclass(frozen=True, eq=False)
class QutritReproduction:
    plan: GeodesicPlan
    K0: np.ndarray
    verdict: TimeIndependentVerdict

    def summary(self) -> dict:
        return {
            "theta": self.plan.theta,
            "K0": matrix_to_json(self.K0),
            "verdict": self.verdict.verdict.value,
            "distinct_eigenvalues": self.verdict.distinct_eigenvalues,
        }

    def report(self) -> str:
        lines = [f"theta = {self.plan.theta!r}", "K_g(0) ="]
        for row in self.K0:
            lines.append("  " + "  ".join(f"{z.real:+.12f}{z.imag:+.12f}j" for z in row))
        lines.append(f"time-independent shortest generator: {self.verdict.verdict.value}")
        return "\n".join(lines)


def run_qutrit() -> QutritReproduction:
    plan = plan_geodesic(DensityOperator(QUTRIT_RHO1), DensityOperator(QUTRIT_RHO2))
    k0 = geodesic_generator(plan, 0.0)
    # suppress round-off below the printed precision so output is stable
    k0 = np.where(np.abs(k0) < 1e-15, 0.0, k0)
    return QutritReproduction(plan, k0, time_independent_check(k0))


def reproduce_qutrit(out_dir) -> QutritReproduction:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = run_qutrit()
    write_json(out / "qutrit.json", rep.summary())
    return rep


def qutrit_expected_diagonal(theta: float) -> np.ndarray:
    """Closed-form ``K_g(0)`` diagonal for the diagonal qutrit pair."""
    c, s = math.cos(theta), math.sin(theta)
    ratios = np.sqrt(np.diag(QUTRIT_RHO2).real / np.diag(QUTRIT_RHO1).real)
    return 1j * (ratios - c) / s
