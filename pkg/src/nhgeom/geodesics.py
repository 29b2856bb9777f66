"""Purifications, horizontal lifts and shortest Bures geodesics on fixed-rank states.

A purification of a rank-``r`` state on ``C^n`` is stored as an ``n x r``
matrix ``W`` with ``W W^H = rho``; the Euclidean product on purifications is
``(X, Y) = Re Tr(X^H Y)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .dynamics import GeneratorSchedule
from .errors import (
    BoundaryError,
    DimensionMismatchError,
    NotATangentError,
    PlanError,
    SingularFrameError,
)
from .operators import (
    DEFAULT_RANK_TOL,
    PAULI,
    as_matrix,
    hermitian_part,
    matrix_from_json,
    matrix_to_json,
    polar_decompose,
    pseudo_inverse,
)
from .states import DensityOperator, NonHermitianGenerator, _sld_of_hamiltonian

NORM_TOL = 1e-10


def real_inner(x: np.ndarray, y: np.ndarray) -> float:
    """Euclidean product ``Re Tr(X^H Y)`` on purification space."""
    return float(np.vdot(x, y).real)


def d_pi(wdot: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Push-forward of a purification velocity to a state velocity."""
    x = wdot @ w.conj().T
    return x + x.conj().T


@dataclass(frozen=True, eq=False)
class Purification:
    """Point ``W`` (``n x r``) of the unit sphere with ``W^H W`` invertible."""

    W: np.ndarray
    rank_tol: float = DEFAULT_RANK_TOL
    diagnostics: tuple = ()

    def __post_init__(self):
        w = as_matrix(self.W, "W")
        nrm = float(np.vdot(w, w).real)
        if abs(nrm - 1.0) > NORM_TOL:
            raise PlanError(f"Tr(W W^H) = {nrm!r}, expected 1", "Purification")
        s = np.linalg.svd(w, compute_uv=False)
        if s[-1] <= self.rank_tol:
            raise PlanError(
                f"W^H W is singular (smallest singular value {s[-1]:.3e})", "Purification"
            )
        w.flags.writeable = False
        object.__setattr__(self, "W", w)

    @property
    def shape(self) -> tuple:
        return self.W.shape

    @property
    def rho(self) -> DensityOperator:
        return DensityOperator(hermitian_part(self.W @ self.W.conj().T), self.rank_tol)


def purify(rho: DensityOperator) -> Purification:
    """Minimal purification ``[sqrt(l_1)|l_1>, ..., sqrt(l_r)|l_r>]``, descending eigenvalues."""
    sp = rho.spectrum
    r = rho.rank
    lam = np.clip(sp.raw_eigenvalues[:r], 0.0, None)
    w = sp.eigenvectors[:, :r] * np.sqrt(lam)
    w = w / math.sqrt(float(np.vdot(w, w).real))
    return Purification(w, rho.rank_tol)


def align(W1: Purification, W2_raw: Purification) -> Purification:
    """Move ``W2_raw`` along its fiber so that ``W1^H W2 >= 0``.

    With ``W1^H W2_raw = P U`` (polar), returns ``W2_raw U^H``.  A singular
    overlap leaves the unitary ambiguous; the deterministic completion of
    :func:`polar_decompose` is used and recorded in ``diagnostics``.
    """
    if W1.shape != W2_raw.shape:
        raise DimensionMismatchError(f"{W1.shape} vs {W2_raw.shape}", "align")
    factors = polar_decompose(W1.W.conj().T @ W2_raw.W, rank_tol=W1.rank_tol)
    w2 = W2_raw.W @ factors.unitary_part.conj().T
    diag = ()
    if factors.singular:
        diag = (f"rank-deficient overlap (rank {factors.rank}); polar completion used",)
    w2 = w2 / math.sqrt(float(np.vdot(w2, w2).real))
    return Purification(w2, W2_raw.rank_tol, diag)


@dataclass(frozen=True, eq=False)
class SplitTangent:
    vertical: np.ndarray
    horizontal: np.ndarray
    A: np.ndarray
    L: np.ndarray


def split_tangent(wdot, W: Purification, tol: float = 1e-8) -> SplitTangent:
    """Vertical/horizontal split ``Wdot = W A + L W`` (``A`` anti-Hermitian, ``L`` Hermitian).

    The horizontal part is orthogonal to every vertical direction ``W A``,
    which fixes ``A`` through ``Q A + A Q = W^H Wdot - Wdot^H W`` with
    ``Q = W^H W``.

    Raises:
        NotATangentError: if ``Re Tr(W^H Wdot)`` is not zero to ``tol``.
    """
    wd = as_matrix(wdot, "Wdot")
    w = W.W
    if wd.shape != w.shape:
        raise DimensionMismatchError(f"{wd.shape} vs {w.shape}", "split_tangent")
    radial = real_inner(w, wd)
    if abs(radial) > tol * max(1.0, float(np.linalg.norm(wd))):
        raise NotATangentError(f"Re Tr(W^H Wdot) = {radial:.3e}", "split_tangent")
    q = hermitian_part(w.conj().T @ w)
    x = w.conj().T @ wd
    rhs = x - x.conj().T
    qe, qv = np.linalg.eigh(q)
    ab = (qv.conj().T @ rhs @ qv) / (qe[:, None] + qe[None, :])
    a = qv @ ab @ qv.conj().T
    a = 0.5 * (a - a.conj().T)
    vertical = w @ a
    horizontal = wd - vertical
    wp = pseudo_inverse(w, W.rank_tol)
    y = horizontal @ wp
    L = y + y.conj().T - wp.conj().T @ (w.conj().T @ horizontal) @ wp
    return SplitTangent(vertical, horizontal, a, hermitian_part(L))


def lift_generator(gen: NonHermitianGenerator, W: Purification) -> tuple[np.ndarray, np.ndarray]:
    """Purification velocity of the flow of ``gen`` and its horizontal part.

    Returns ``(Wdot, Wdot_h)`` with ``Wdot = -i H W - Gamma~ W`` and
    ``Wdot_h = (L - Gamma~) W`` where ``L`` is the SLD of ``-i[H, rho]``.
    """
    rho = W.rho
    if gen.dim != rho.dim:
        raise DimensionMismatchError(f"{gen.dim} vs {rho.dim}", "lift_generator")
    g = gen.Gamma - rho.expectation(gen.Gamma) * np.eye(rho.dim)
    wdot = -1j * gen.H @ W.W - g @ W.W
    L = _sld_of_hamiltonian(gen.H, rho)
    wdot_h = (L - g) @ W.W
    return wdot, wdot_h


# -- geodesic plans -----------------------------------------------------------


def transport_operator(W1, W2, R_scale: float = 1.0, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Operator ``M`` with ``M W1 = W2``.

    Full rank: ``M = W2 W1^{-1}``.  Otherwise, with ``X = W2 W1^+`` and
    ``P1 = W1 W1^+``::

        M = P1 X + i R_scale (1 - P1) + (1 - P1) X + X^H (1 - P1)

    The ``i R`` block on the complement of the support keeps ``M`` free of
    real non-positive eigenvalues whenever ``W1^H W2`` is positive definite.
    """
    w1 = W1.W if isinstance(W1, Purification) else as_matrix(W1, "W1")
    w2 = W2.W if isinstance(W2, Purification) else as_matrix(W2, "W2")
    if w1.shape != w2.shape:
        raise DimensionMismatchError(f"{w1.shape} vs {w2.shape}", "transport_operator")
    overlap = w1.conj().T @ w2
    if float(np.max(np.abs(overlap - overlap.conj().T))) > 1e-9 or np.linalg.eigvalsh(
        hermitian_part(overlap)
    )[0] < -1e-10:
        raise PlanError("W1^H W2 is not positive semidefinite; align first", "transport_operator")
    n, r = w1.shape
    if r == n:
        return np.linalg.solve(w1.T, w2.T).T
    if not R_scale > 0:
        raise PlanError("R_scale must be positive", "transport_operator")
    w1p = pseudo_inverse(w1, rank_tol)
    p1 = w1 @ w1p
    q1 = np.eye(n) - p1
    x = w2 @ w1p
    return p1 @ x + 1j * R_scale * q1 + q1 @ x + x.conj().T @ q1


@dataclass(frozen=True, eq=False)
class GeodesicPlan:
    """Aligned endpoint purifications, Bures angle and transport operator."""

    W1: Purification
    W2: Purification
    theta: float
    M: np.ndarray
    R_scale: float = 1.0
    diagnostics: tuple = ()

    def __post_init__(self):
        overlap = self.W1.W.conj().T @ self.W2.W
        if np.linalg.eigvalsh(hermitian_part(overlap))[0] < -1e-10:
            raise PlanError("endpoint purifications are not aligned", "GeodesicPlan")
        if not (0.0 < self.theta <= math.pi / 2 + 1e-12):
            raise PlanError(f"theta = {self.theta!r} outside (0, pi/2]", "GeodesicPlan")

    @property
    def rho1(self) -> DensityOperator:
        return self.W1.rho

    @property
    def rho2(self) -> DensityOperator:
        return self.W2.rho

    @cached_property
    def _eye(self) -> np.ndarray:
        return np.eye(self.M.shape[0])

    def evolution_operator(self, tau: float) -> np.ndarray:
        """``G_g(tau) = (sin(theta - tau) + sin(tau) M) / sin(theta)``."""
        s = math.sin(self.theta)
        return (math.sin(self.theta - tau) / s) * self._eye + (math.sin(tau) / s) * self.M

    def evolution_operator_derivative(self, tau: float) -> np.ndarray:
        s = math.sin(self.theta)
        return (-math.cos(self.theta - tau) / s) * self._eye + (math.cos(tau) / s) * self.M

    def min_singular_value(self, taus) -> float:
        return min(
            float(np.linalg.svd(self.evolution_operator(t), compute_uv=False)[-1]) for t in taus
        )

    def schedule(self) -> GeneratorSchedule:
        """Generator schedule ``tau -> K_g(tau)`` on ``[0, theta]``."""
        def gen(t: float) -> NonHermitianGenerator:
            k = geodesic_generator(self, t)
            kh = k.conj().T
            return NonHermitianGenerator._trusted(0.5 * (k + kh), 0.5j * (k - kh))

        return GeneratorSchedule(gen, 0.0, self.theta)

    def to_json(self) -> dict:
        return {
            "W1": matrix_to_json(self.W1.W),
            "W2": matrix_to_json(self.W2.W),
            "rho1": matrix_to_json(self.rho1.matrix),
            "rho2": matrix_to_json(self.rho2.matrix),
            "theta": self.theta,
            "M": matrix_to_json(self.M),
            "R_scale": self.R_scale,
        }

    @classmethod
    def from_json(cls, obj) -> "GeodesicPlan":
        w1 = Purification(matrix_from_json(obj["W1"], "W1"))
        w2 = Purification(matrix_from_json(obj["W2"], "W2"))
        return cls(w1, w2, float(obj["theta"]), matrix_from_json(obj["M"], "M"), float(obj["R_scale"]))


def plan_geodesic(
    rho1: DensityOperator,
    rho2: DensityOperator,
    R_scale: float = 1.0,
    W1: Purification | None = None,
    W2_raw: Purification | None = None,
) -> GeodesicPlan:
    """Build the shortest-geodesic plan between two states of equal rank.

    Raises:
        PlanError: for rank mismatch or identical endpoints (theta = 0).
    """
    if rho1.dim != rho2.dim or rho1.rank != rho2.rank:
        raise PlanError(
            f"endpoints must share dimension and rank: ({rho1.dim}, {rho1.rank}) vs "
            f"({rho2.dim}, {rho2.rank})",
            "plan_geodesic",
        )
    w1 = purify(rho1) if W1 is None else W1
    w2 = align(w1, purify(rho2) if W2_raw is None else W2_raw)
    c = real_inner(w1.W, w2.W)
    if c >= 1.0 - 1e-14:
        raise PlanError("endpoints coincide (theta = 0)", "plan_geodesic")
    theta = math.acos(min(max(c, 0.0), 1.0))
    m = transport_operator(w1, w2, R_scale, rho1.rank_tol)
    return GeodesicPlan(w1, w2, theta, m, R_scale, w2.diagnostics)


def geodesic_path(plan: GeodesicPlan, tau: float) -> tuple[Purification, DensityOperator]:
    """Point at arc length ``tau`` on the great arc from ``W1`` to ``W2`` and its state."""
    if not (-1e-12 <= tau <= plan.theta + 1e-12):
        raise PlanError(f"tau = {tau!r} outside [0, {plan.theta!r}]", "geodesic_path")
    th = plan.theta
    w = (math.sin(th - tau) * plan.W1.W + math.sin(tau) * plan.W2.W) / math.sin(th)
    p = Purification(w, plan.W1.rank_tol)
    return p, p.rho


def geodesic_path_derivative(plan: GeodesicPlan, tau: float) -> np.ndarray:
    th = plan.theta
    return (-math.cos(th - tau) * plan.W1.W + math.cos(tau) * plan.W2.W) / math.sin(th)


def generator_condition(plan: GeodesicPlan, tau: float) -> float:
    """Condition number of ``G_g(tau)``."""
    return float(np.linalg.cond(plan.evolution_operator(tau)))


def _one_norm(a: np.ndarray) -> float:
    return float(np.abs(a).sum(axis=0).max())


def geodesic_generator(plan: GeodesicPlan, tau: float, max_condition: float = 1e12) -> np.ndarray:
    """``K_g(tau) = i G_g'(tau) G_g(tau)^{-1}``.

    Raises:
        BoundaryError: if ``G_g(tau)`` is singular beyond ``max_condition``.
    """
    if not (-1e-12 <= tau <= plan.theta + 1e-12):
        raise PlanError(f"tau = {tau!r} outside [0, {plan.theta!r}]", "geodesic_generator")
    g = plan.evolution_operator(tau)
    try:
        g_inv = np.linalg.inv(g)
    except np.linalg.LinAlgError:
        g_inv = None
    # 1-norm condition estimate; cheaper than an SVD inside integration loops
    cond = np.inf if g_inv is None else _one_norm(g) * _one_norm(g_inv)
    if not np.isfinite(cond) or cond > max_condition:
        raise BoundaryError(f"G_g({tau:.6g}) has condition number {cond:.3e}", "geodesic_generator")
    return 1j * plan.evolution_operator_derivative(tau) @ g_inv


# -- structural checks --------------------------------------------------------


class Verdict(str, enum.Enum):
    EXISTS_SHORTEST_FORM = "exists_shortest_form"
    FAILS = "fails"


@dataclass(frozen=True)
class TimeIndependentVerdict:
    verdict: Verdict
    distinct_eigenvalues: int
    shift: complex | None = None
    anti_hermitian_after_shift: bool = False

    def __bool__(self) -> bool:
        return self.verdict is Verdict.EXISTS_SHORTEST_FORM


def _distinct(values: np.ndarray, tol: float) -> list:
    reps: list = []
    for z in values:
        if all(abs(z - r) > tol for r in reps):
            reps.append(z)
    return reps


def time_independent_check(k, tol: float = 1e-8) -> TimeIndependentVerdict:
    """Whether ``K`` can generate a great arc: after a shift ``K - c``, ``(K - c)^2 ∝ 1``.

    Affine maps preserve the number of distinct eigenvalues, so the verdict
    is positive iff ``K`` is diagonalizable with exactly two distinct
    eigenvalues.
    """
    k = as_matrix(k, "K")
    if k.shape[0] != k.shape[1]:
        raise ValueError("K must be square")
    scale = max(1.0, float(np.max(np.abs(k))))
    reps = _distinct(np.linalg.eigvals(k), tol * scale)
    if len(reps) != 2:
        return TimeIndependentVerdict(Verdict.FAILS, len(reps))
    c = 0.5 * (reps[0] + reps[1])
    ks = k - c * np.eye(k.shape[0])
    sq = ks @ ks
    kappa = np.trace(sq) / k.shape[0]
    if np.max(np.abs(sq - kappa * np.eye(k.shape[0]))) > tol * scale**2:
        return TimeIndependentVerdict(Verdict.FAILS, 2, complex(c))
    anti = float(np.max(np.abs(ks + ks.conj().T))) <= tol * scale
    return TimeIndependentVerdict(Verdict.EXISTS_SHORTEST_FORM, 2, complex(c), anti)


def qubit_ellipse_invariant(rho: DensityOperator, axis_frame=None, tol: float = 1e-14) -> float:
    """``x^2 / (1 - z^2)`` from the Bloch coordinates of a qubit state.

    ``axis_frame`` is a 3x3 orthonormal matrix whose rows are the x, y and z
    axes in lab Bloch coordinates (default: identity).  ``1 - z^2`` is
    evaluated as ``4 <P+><P->`` with ``P± = (1 ± z·sigma)/2`` to keep
    precision near the poles.

    Raises:
        SingularFrameError: if the state sits on the frame's z pole.
    """
    if rho.dim != 2:
        raise DimensionMismatchError("qubit_ellipse_invariant needs a qubit", "qubit_ellipse_invariant")
    frame = np.eye(3) if axis_frame is None else np.asarray(axis_frame, dtype=float)
    sig = np.array([PAULI["X"], PAULI["Y"], PAULI["Z"]])
    sx = np.tensordot(frame[0], sig, axes=1)
    sz = np.tensordot(frame[2], sig, axes=1)
    x = rho.expectation(sx)
    p_plus = rho.expectation(0.5 * (np.eye(2) + sz))
    p_minus = rho.expectation(0.5 * (np.eye(2) - sz))
    denom = 4.0 * p_plus * p_minus
    if denom <= tol:
        raise SingularFrameError("state lies on the frame's z pole", "qubit_ellipse_invariant")
    return x * x / denom
