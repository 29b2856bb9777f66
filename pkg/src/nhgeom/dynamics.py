"""Integration of normalised non-Hermitian evolutions and success-rate tools."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .errors import (
    ConditioningError,
    DegenerateSpectrumError,
    DimensionMismatchError,
    RankLossError,
)
from .operators import (
    DEFAULT_CLUSTER_TOL,
    DEFAULT_RANK_TOL,
    _cluster_descending,
    as_matrix,
    check_hermitian,
    commutator,
    hermitian_part,
    spectral_decompose,
    trace_distance,
)
from .states import (
    DensityOperator,
    NonHermitianGenerator,
    _sld_of_hamiltonian,
    fidelity_and_angle,
    tangent_matrix,
)


# -- generator schedules ------------------------------------------------------


@dataclass(frozen=True)
class GeneratorSchedule:
    """Time-dependent generator ``t -> K(t)`` on the horizon ``[t0, t1]``."""

    sampler: Callable[[float], NonHermitianGenerator]
    t0: float
    t1: float

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValueError(f"empty horizon [{self.t0}, {self.t1}]")

    def __call__(self, t: float) -> NonHermitianGenerator:
        return self.sampler(t)

    @property
    def duration(self) -> float:
        return self.t1 - self.t0

    @classmethod
    def constant(cls, gen: NonHermitianGenerator, t0: float, t1: float) -> "GeneratorSchedule":
        return cls(lambda t: gen, t0, t1)

    def floor_shifted(self) -> "GeneratorSchedule":
        """Same schedule with ``Gamma(t)`` shifted so its smallest eigenvalue is 0."""
        inner = self.sampler

        def sampler(t):
            g = inner(t)
            # g is already validated; the shift keeps Gamma Hermitian
            mu = np.linalg.eigvalsh(g.Gamma)[0]
            return NonHermitianGenerator._trusted(g.H, g.Gamma - mu * np.eye(g.dim))

        return GeneratorSchedule(sampler, self.t0, self.t1)


@dataclass(frozen=True)
class IntegratorConfig:
    step: float
    renormalize_each_step: bool = True
    rank_tol: float = DEFAULT_RANK_TOL
    cluster_tol: float = DEFAULT_CLUSTER_TOL

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Sampled normalised trajectory with success-rate bookkeeping.

    ``norms`` is the trace of the un-normalised state, ``decay_rates`` is
    ``2 Tr(Gamma rho)`` on the normalised state and ``speeds`` the Bures speed.
    ``generators`` holds the generator actually applied at each grid time.
    """

    times: np.ndarray
    states: tuple
    norms: np.ndarray
    decay_rates: np.ndarray
    speeds: np.ndarray
    generators: tuple
    rank: int
    min_retained_eigenvalues: np.ndarray

    def __len__(self) -> int:
        return len(self.times)

    @property
    def elapsed(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def global_decay_rates(self) -> np.ndarray:
        """``-d Tr(rho_unnormalised)/dt = norm * gamma``."""
        return self.norms * self.decay_rates


# -- pointwise quantities -----------------------------------------------------


def decay_rate(gen: NonHermitianGenerator, rho: DensityOperator) -> float:
    """Norm decay rate ``2 Tr(Gamma rho)``."""
    if gen.dim != rho.dim:
        raise DimensionMismatchError(f"{gen.dim} vs {rho.dim}", "decay_rate")
    return 2.0 * rho.expectation(gen.Gamma)


def shift_gamma_floor(gamma) -> np.ndarray:
    """``Gamma - mu_min`` so the smallest eigenvalue is zero."""
    g = check_hermitian(gamma, name="Gamma", operation="shift_gamma_floor")
    mu = np.linalg.eigvalsh(g)[0]
    return g - mu * np.eye(g.shape[0])


def split_gamma(gamma, rho: DensityOperator) -> tuple[np.ndarray, np.ndarray]:
    """``(Gamma_u, Gamma_c)``: off-block and block-diagonal parts w.r.t. the clusters of ``rho``."""
    g = check_hermitian(gamma, name="Gamma", operation="split_gamma")
    sp = rho.spectrum
    gb = sp.to_eigenbasis(g)
    same = sp.same_cluster()
    gu = hermitian_part(sp.from_eigenbasis(np.where(same, 0.0, gb)))
    gc = hermitian_part(sp.from_eigenbasis(np.where(same, gb, 0.0)))
    return gu, gc


def hamiltonian_correction(gamma, rho: DensityOperator) -> np.ndarray:
    """``H' = -i sum_{j != k} (lam_j + lam_k)/(lam_j - lam_k) P_k Gamma P_j``.

    ``-i[H', rho]`` reproduces the motion ``-{Gamma_u, rho}`` of the off-block
    part of ``Gamma``, so ``H + H' - i Gamma_c`` and ``H - i Gamma`` drive the
    same normalised trajectory.
    """
    g = check_hermitian(gamma, name="Gamma", operation="hamiltonian_correction")
    sp = rho.spectrum
    lam = sp.clustered_eigenvalues
    same = sp.same_cluster()
    if len(sp.eigenvalues) > 1 and np.min(-np.diff(sp.eigenvalues)) <= rho.cluster_tol:
        raise ConditioningError("distinct clusters closer than cluster_tol", "hamiltonian_correction")
    gb = sp.to_eigenbasis(g)
    row, col = lam[:, None], lam[None, :]
    diff = np.where(same, 1.0, col - row)
    coef = np.where(same, 0.0, (col + row) / diff)
    return hermitian_part(sp.from_eigenbasis(-1j * coef * gb))


@dataclass(frozen=True, eq=False)
class OptimizedGenerator:
    generator: NonHermitianGenerator
    gamma_coherent: np.ndarray
    gamma_incoherent: np.ndarray
    h_correction: np.ndarray
    mu_c_min: float


def optimize_generator_details(
    gen: NonHermitianGenerator, rho: DensityOperator
) -> OptimizedGenerator:
    """Success-rate optimal generator along the same normalised trajectory.

    ``Gamma`` is floor-shifted on entry.  The coherent part ``Gamma_u`` is traded
    for the Hamiltonian correction and the remaining block-diagonal part is
    shifted by its own smallest eigenvalue ``mu_c_min >= 0``.
    """
    if gen.dim != rho.dim:
        raise DimensionMismatchError(f"{gen.dim} vs {rho.dim}", "optimize_generator")
    rho_eff = rho
    for attempt in range(2):
        try:
            g = shift_gamma_floor(gen.Gamma)
            gu, gc = split_gamma(g, rho_eff)
            hp = hamiltonian_correction(g, rho_eff)
            break
        except ConditioningError:
            if attempt:
                raise
            rho_eff = DensityOperator(rho.matrix, rho.rank_tol, rho.cluster_tol * 10)
    mu_c = float(np.linalg.eigvalsh(gc)[0])
    g_opt = gc - mu_c * np.eye(rho.dim)
    out = NonHermitianGenerator(gen.H + hp, g_opt)
    return OptimizedGenerator(out, gu, gc, hp, mu_c)


def optimize_generator(gen: NonHermitianGenerator, rho: DensityOperator) -> NonHermitianGenerator:
    return optimize_generator_details(gen, rho).generator


def bures_speed(gen: NonHermitianGenerator, rho: DensityOperator) -> float:
    """Bures speed ``sqrt(Tr((L - Gamma~)^2 rho))`` of the flow generated by ``gen`` at ``rho``."""
    if gen.dim != rho.dim:
        raise DimensionMismatchError(f"{gen.dim} vs {rho.dim}", "bures_speed")
    L = _sld_of_hamiltonian(gen.H, rho)
    g = gen.Gamma - rho.expectation(gen.Gamma) * np.eye(rho.dim)
    x = L - g
    return math.sqrt(max(float(np.trace(x @ x @ rho.matrix).real), 0.0))


def speed_squared_fisher_form(gen: NonHermitianGenerator, rho: DensityOperator) -> float:
    """``QFI/4 + Var(Gamma) - Tr({L, Gamma} rho)``, equal to ``bures_speed**2``."""
    r = rho.matrix
    L = _sld_of_hamiltonian(gen.H, rho)
    qfi4 = float(np.trace(L @ L @ r).real)
    g = gen.Gamma
    var_g = float(np.trace(g @ g @ r).real) - rho.expectation(g) ** 2
    cross = float(np.trace((L @ g + g @ L) @ r).real)
    return qfi4 + var_g - cross


def weak_speed(gen: NonHermitianGenerator, rho: DensityOperator) -> float:
    """``sqrt(Var H + Var Gamma - i Tr([H, Gamma] rho))``: length of the unshifted lift."""
    r = rho.matrix
    h, g = gen.H, gen.Gamma
    var_h = float(np.trace(h @ h @ r).real) - rho.expectation(h) ** 2
    var_g = float(np.trace(g @ g @ r).real) - rho.expectation(g) ** 2
    cross = float((-1j * np.trace(commutator(h, g) @ r)).real)
    return math.sqrt(max(var_h + var_g + cross, 0.0))


def weak_bound_saturated(h, rho: DensityOperator, tol: float = 1e-9) -> bool:
    """True when the projection of ``H`` on the support of ``rho`` is a multiple of it."""
    h = check_hermitian(h, name="H")
    sp = rho.spectrum
    keep = rho.support_eigenvalues() > 0
    v = sp.eigenvectors[:, keep]
    block = v.conj().T @ h @ v
    alpha = np.trace(block).real / block.shape[0]
    return float(np.max(np.abs(block - alpha * np.eye(block.shape[0])))) <= tol


# -- integration --------------------------------------------------------------


def evolve(
    rho0: DensityOperator,
    schedule: GeneratorSchedule,
    config: IntegratorConfig,
    *,
    optimize: bool = False,
) -> TrajectoryRecord:
    """Integrate the normalised non-Hermitian master equation with classical RK4.

    The log of the un-normalised trace is integrated alongside with rate
    ``-2 Tr(Gamma rho)``.  With ``optimize=True`` the generator is replaced by
    its success-rate optimal form at every stage, using the stage state.

    Raises:
        RankLossError: when the smallest retained eigenvalue drops below
            ``rank_tol / 10``.
    """
    n = rho0.dim
    rank = rho0.rank
    steps = max(1, int(round(schedule.duration / config.step)))
    h = schedule.duration / steps
    times = schedule.t0 + h * np.arange(steps + 1)
    times[-1] = schedule.t1
    threshold = config.rank_tol / 10
    eye = np.eye(n)

    # the schedule is sampled once per distinct time: the two midpoint stages
    # share t + h/2 and the last stage is the next grid point
    cache: dict = {}

    def generator_at(t: float, rho_m: np.ndarray):
        gen = cache.get(t)
        if gen is None:
            gen = cache[t] = schedule(t)
            if gen.dim != n:
                raise DimensionMismatchError(f"generator dim {gen.dim} vs state {n}", "evolve")
        if optimize:
            gen = _optimize_fast(gen, rho_m, eye, config.cluster_tol)
        return gen

    def field(gen: NonHermitianGenerator, rho_m: np.ndarray):
        # Tr(Gamma rho) as a flat product; Gamma is Hermitian
        gr = np.vdot(gen.Gamma, rho_m).real
        return tangent_matrix(gen.H, gen.Gamma, rho_m), -2.0 * gr

    rho = hermitian_part(rho0.matrix.copy())
    log_norm = 0.0
    states, gens, retained_list = [], [], []
    log_norms = np.empty(steps + 1)
    for i in range(steps + 1):
        t = float(times[i])
        st = DensityOperator._trusted(rho, config.rank_tol, config.cluster_tol)
        retained = float(st.spectrum.raw_eigenvalues[rank - 1])
        if retained < threshold:
            raise RankLossError(t, retained, threshold)
        gen = generator_at(t, rho)
        states.append(st)
        retained_list.append(retained)
        gens.append(gen)
        log_norms[i] = log_norm
        if i == steps:
            break
        t_mid, t_next = t + h / 2, float(times[i + 1])
        for stale in [k for k in cache if k < t]:
            del cache[stale]
        k1, l1 = field(gen, rho)
        k2, l2 = field(generator_at(t_mid, rho + (h / 2) * k1), rho + (h / 2) * k1)
        k3, l3 = field(generator_at(t_mid, rho + (h / 2) * k2), rho + (h / 2) * k2)
        k4, l4 = field(generator_at(t_next, rho + h * k3), rho + h * k3)
        rho = hermitian_part(rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4))
        if config.renormalize_each_step:
            rho = rho / np.trace(rho).real
        log_norm += (h / 6) * (l1 + 2 * l2 + 2 * l3 + l4)

    decay = np.array([2.0 * np.trace(g.Gamma @ s.matrix).real for g, s in zip(gens, states)])
    speeds = np.array([bures_speed(g, s) for g, s in zip(gens, states)])
    return TrajectoryRecord(
        times=times,
        states=tuple(states),
        norms=np.exp(log_norms),
        decay_rates=decay,
        speeds=speeds,
        generators=tuple(gens),
        rank=rank,
        min_retained_eigenvalues=np.array(retained_list),
    )


def _optimize_fast(gen: NonHermitianGenerator, rho_m: np.ndarray, eye: np.ndarray, cluster_tol: float):
    # same algebra as optimize_generator_details on a raw matrix, without
    # input validation or the phase-fixed decomposition object
    w, v = np.linalg.eigh(rho_m)
    w, v = w[::-1], v[:, ::-1]
    labels = _cluster_descending(w, cluster_tol)
    counts = np.bincount(labels)
    lam = (np.bincount(labels, weights=w) / counts)[labels]
    same = labels[:, None] == labels[None, :]
    vh = v.conj().T
    g = gen.Gamma
    gb = vh @ (g - np.linalg.eigvalsh(g)[0] * eye) @ v
    row, col = lam[:, None], lam[None, :]
    coef = np.where(same, 0.0, (col + row) / np.where(same, 1.0, col - row))
    gcb = np.where(same, gb, 0.0)
    gcb = gcb - np.linalg.eigvalsh(gcb)[0] * eye
    hp = v @ (-1j * coef * gb) @ vh
    return NonHermitianGenerator._trusted(
        hermitian_part(gen.H + hp), hermitian_part(v @ gcb @ vh)
    )


# -- speed limits -------------------------------------------------------------


def _trapezoid(y: np.ndarray, x: np.ndarray) -> float:
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def speed_limit_bounds(
    record: TrajectoryRecord, gen_log: Optional[Sequence[NonHermitianGenerator]] = None
) -> tuple[float, float]:
    """Bures-angle speed limit and its weaker form for a realised trajectory.

    Returns ``(qsl, qsl_weak)``: the Bures angle between the endpoints divided
    by the time-averaged Bures speed, respectively the time-averaged length of
    the unshifted lift.  Averages use the trapezoidal rule on the record grid.
    """
    if len(record) < 2:
        raise ValueError("speed_limit_bounds needs at least two samples")
    gens = record.generators if gen_log is None else tuple(gen_log)
    if len(gens) != len(record):
        raise ValueError("gen_log must have one generator per record sample")
    elapsed = record.elapsed
    _, angle = fidelity_and_angle(record.states[0], record.states[-1])
    mean_speed = _trapezoid(record.speeds, record.times) / elapsed
    weak = np.array([weak_speed(g, s) for g, s in zip(gens, record.states)])
    mean_weak = _trapezoid(weak, record.times) / elapsed
    if mean_speed <= 1e-14:
        if trace_distance(record.states[0].matrix, record.states[-1].matrix) <= 1e-12:
            return 0.0, 0.0
        raise ConditioningError("zero mean speed between distinct endpoints", "speed_limit_bounds")
    return angle / mean_speed, angle / mean_weak


# -- shortcuts to adiabaticity ------------------------------------------------


def _fd_derivative(f: Callable[[float], np.ndarray], t: float, h: float = 1e-6) -> np.ndarray:
    return (as_matrix(f(t + h)) - as_matrix(f(t - h))) / (2 * h)


def sta_generator(
    H0: Callable[[float], np.ndarray],
    beta: float,
    t: float,
    dH0: Optional[Callable[[float], np.ndarray]] = None,
    cluster_tol: float = DEFAULT_CLUSTER_TOL,
) -> NonHermitianGenerator:
    """Generator driving the Gibbs curve ``exp(-beta H0(t)) / Z(t)`` exactly.

    ``H`` is the counterdiabatic Hamiltonian ``H0 + H1`` with
    ``H1 = i sum_k |dE_k><E_k|`` (parallel gauge, eigenvector derivatives from
    first-order perturbation theory), and ``Gamma = (beta/2) sum_k dE_k/dt |E_k><E_k|``
    floor-shifted, which commutes with the state.  ``dH0`` is the analytic time
    derivative of ``H0``; without it a centred difference with step 1e-6 is used.

    Raises:
        DegenerateSpectrumError: if two eigenvalues of ``H0(t)`` are within ``cluster_tol``.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    h0 = check_hermitian(H0(t), name="H0", operation="sta_generator")
    dh = check_hermitian(
        dH0(t) if dH0 is not None else _fd_derivative(H0, t), 1e-6, name="dH0/dt"
    )
    e, v = np.linalg.eigh(h0)
    gaps = np.diff(e)
    if gaps.size and gaps.min() <= cluster_tol:
        raise DegenerateSpectrumError(
            f"H0({t}) has a level spacing {gaps.min():.3e}", "sta_generator"
        )
    db = v.conj().T @ dh @ v
    de = np.diag(db).real
    # column k of H1 (eigenbasis): sum_{m != k} |E_m><E_m|dH|E_k> / (E_k - E_m)
    denom = e[None, :] - e[:, None]
    off = ~np.eye(len(e), dtype=bool)
    h1b = 1j * np.where(off, db / np.where(off, denom, 1.0), 0.0)
    h1 = v @ h1b @ v.conj().T
    gamma = (v * (0.5 * beta * (de - de.min()))) @ v.conj().T
    # both parts are symmetrised here, so skip re-validation
    return NonHermitianGenerator._trusted(hermitian_part(h0 + h1), hermitian_part(gamma))


def sta_schedule(
    H0: Callable[[float], np.ndarray],
    beta: float,
    t0: float,
    t1: float,
    dH0: Optional[Callable[[float], np.ndarray]] = None,
    cluster_tol: float = DEFAULT_CLUSTER_TOL,
) -> GeneratorSchedule:
    return GeneratorSchedule(lambda t: sta_generator(H0, beta, t, dH0, cluster_tol), t0, t1)


# -- CSV interchange ----------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_columns(path, columns: Mapping[str, Sequence[float]]) -> None:
    """Write equally long columns with a ``# columns: a,b,...`` header line."""
    names = list(columns)
    data = [np.asarray(columns[k], dtype=float) for k in names]
    lengths = {len(d) for d in data}
    if len(lengths) != 1:
        raise ValueError(f"columns differ in length: {lengths}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# columns: " + ",".join(names) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        for row in zip(*data):
            w.writerow([_fmt(x) for x in row])


def read_columns(path) -> dict:
    """Parse a file written by :func:`write_columns` back into float arrays."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("# columns:"):
            raise ValueError(f"{path}: missing '# columns:' header")
        names = [s.strip() for s in header[len("# columns:"):].split(",")]
        rows = [list(map(float, r)) for r in csv.reader(fh) if r]
    arr = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return {name: arr[:, i] for i, name in enumerate(names)}


def record_columns(
    record: TrajectoryRecord,
    extra: Optional[Mapping[str, Sequence[float]]] = None,
    include_states: bool = False,
) -> dict:
    cols = {"t": record.times, "norm": record.norms, "gamma": record.decay_rates}
    if extra:
        cols.update({k: np.asarray(v, dtype=float) for k, v in extra.items()})
    cols["speed"] = record.speeds
    if include_states:
        n = record.states[0].dim
        stack = np.array([s.matrix for s in record.states])
        for j in range(n):
            for k in range(n):
                cols[f"rho_{j}{k}_re"] = stack[:, j, k].real
                cols[f"rho_{j}{k}_im"] = stack[:, j, k].imag
    return cols


def emit_csv(
    record: TrajectoryRecord,
    path,
    extra: Optional[Mapping[str, Sequence[float]]] = None,
    include_states: bool = False,
) -> None:
    """Write a trajectory as ``t,norm,gamma[,extra...],speed[,rho_jk_re,rho_jk_im...]``."""
    if len(record) == 0:
        raise ValueError("empty record")
    write_columns(path, record_columns(record, extra, include_states))
