"""Density operators, tangent vectors and the metric structure on fixed-rank states.

Conventions
-----------
* A non-Hermitian generator is written ``K = H - i Gamma`` with ``H`` and
  ``Gamma`` Hermitian (hbar = 1).
* The Bures inner product is ``(v, w)_B = Tr(L_v w) / 2`` with ``L_v`` the
  symmetric logarithmic derivative solving ``L rho + rho L = v`` (no factor of
  two in the SLD).  With this normalisation the monotone norm built from the
  kernel ``c = 2/(lam + mu)`` equals ``2 * sqrt((v, v)_B)``.
* Entropies use the natural logarithm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import (
    DimensionMismatchError,
    InvalidStateError,
    NotATangentError,
    RankDeficiencyError,
)
from .operators import (
    DEFAULT_CLUSTER_TOL,
    DEFAULT_RANK_TOL,
    HERMITIAN_TOL,
    PAULI,
    SpectralDecomposition,
    anticommutator,
    as_matrix,
    check_hermitian,
    commutator,
    hermitian_part,
    matrix_from_json,
    matrix_to_json,
    psd_sqrt,
    spectral_decompose,
)

TRACE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian, positive semidefinite, unit-trace matrix of tracked rank.

    The rank is the number of eigenvalues above ``rank_tol``.  The spectral
    decomposition is computed lazily with ``cluster_tol`` and cached.
    """

    matrix: np.ndarray
    rank_tol: float = DEFAULT_RANK_TOL
    cluster_tol: float = DEFAULT_CLUSTER_TOL

    def __post_init__(self):
        m = check_hermitian(self.matrix, HERMITIAN_TOL, name="density matrix")
        tr = float(np.trace(m).real)
        if abs(tr - 1.0) > TRACE_TOL:
            raise InvalidStateError(f"trace is {tr!r}, expected 1")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        lam_min = float(self.spectrum.raw_eigenvalues[-1])
        if lam_min < -self.rank_tol:
            raise InvalidStateError(f"negative eigenvalue {lam_min:.3e}")

    @classmethod
    def _trusted(
        cls, m: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL, cluster_tol: float = DEFAULT_CLUSTER_TOL
    ) -> "DensityOperator":
        # internal fast path: caller guarantees a Hermitian unit-trace array
        obj = object.__new__(cls)
        object.__setattr__(obj, "matrix", m)
        object.__setattr__(obj, "rank_tol", rank_tol)
        object.__setattr__(obj, "cluster_tol", cluster_tol)
        return obj

    @classmethod
    def from_unnormalized(cls, a, **kwargs) -> "DensityOperator":
        m = hermitian_part(as_matrix(a))
        return cls(m / np.trace(m).real, **kwargs)

    @classmethod
    def pure(cls, psi, **kwargs) -> "DensityOperator":
        v = np.asarray(psi, dtype=complex).ravel()
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()), **kwargs)

    @classmethod
    def maximally_mixed(cls, n: int, **kwargs) -> "DensityOperator":
        return cls(np.eye(n, dtype=complex) / n, **kwargs)

    @classmethod
    def from_bloch(cls, x: float, y: float, z: float, **kwargs) -> "DensityOperator":
        m = 0.5 * (PAULI["I"] + x * PAULI["X"] + y * PAULI["Y"] + z * PAULI["Z"])
        return cls(m, **kwargs)

    @classmethod
    def gibbs(cls, hamiltonian, beta: float, **kwargs) -> "DensityOperator":
        """Thermal state ``exp(-beta H) / Z``."""
        h = check_hermitian(hamiltonian, name="H0")
        e, v = np.linalg.eigh(h)
        p = np.exp(-beta * (e - e.min()))
        p /= p.sum()
        return cls(hermitian_part((v * p) @ v.conj().T), **kwargs)

    @cached_property
    def spectrum(self) -> SpectralDecomposition:
        return spectral_decompose(self.matrix, self.cluster_tol)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def rank(self) -> int:
        return int(np.sum(self.spectrum.raw_eigenvalues > self.rank_tol))

    @property
    def full_rank(self) -> bool:
        return self.rank == self.dim

    def support_eigenvalues(self) -> np.ndarray:
        """Clustered eigenvalues per eigenbasis column, zeroed at or below ``rank_tol``."""
        lam = self.spectrum.clustered_eigenvalues.copy()
        lam[lam <= self.rank_tol] = 0.0
        return lam

    def expectation(self, a: np.ndarray) -> float:
        return float(np.trace(a @ self.matrix).real)

    def to_json(self) -> dict:
        d = matrix_to_json(self.matrix)
        d["rank_tol"] = self.rank_tol
        return d

    @classmethod
    def from_json(cls, obj, name: str = "state") -> "DensityOperator":
        m = matrix_from_json(obj, name)
        return cls(m, rank_tol=float(obj.get("rank_tol", DEFAULT_RANK_TOL)))

    def __repr__(self) -> str:
        return f"DensityOperator(dim={self.dim}, rank={self.rank})"


def _tangent_tol(m: np.ndarray) -> float:
    return TRACE_TOL * max(1.0, float(np.max(np.abs(m))))


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Traceless Hermitian matrix attached to a base state (units 1/time)."""

    base: DensityOperator
    matrix: np.ndarray

    def __post_init__(self):
        m = as_matrix(self.matrix, "tangent")
        if m.shape != self.base.matrix.shape:
            raise DimensionMismatchError(
                f"tangent shape {m.shape} vs base {self.base.matrix.shape}", "TangentVector"
            )
        m = check_hermitian(m, _tangent_tol(m), name="tangent")
        tr = abs(np.trace(m))
        if tr > _tangent_tol(m):
            raise NotATangentError(f"tangent has trace {tr:.3e}", "TangentVector")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    def _check_base(self, other: "TangentVector") -> None:
        if other.base is not self.base and not np.allclose(
            other.base.matrix, self.base.matrix, atol=1e-12
        ):
            raise DimensionMismatchError("tangent vectors live at different states", "tangent")

    def __add__(self, other: "TangentVector") -> "TangentVector":
        self._check_base(other)
        return TangentVector(self.base, self.matrix + other.matrix)

    def __sub__(self, other: "TangentVector") -> "TangentVector":
        self._check_base(other)
        return TangentVector(self.base, self.matrix - other.matrix)

    def __mul__(self, s: float) -> "TangentVector":
        return TangentVector(self.base, float(s) * self.matrix)

    __rmul__ = __mul__

    def __neg__(self) -> "TangentVector":
        return TangentVector(self.base, -self.matrix)

    def norm(self) -> float:
        """Bures length ``sqrt((v, v)_B)``."""
        return math.sqrt(max(bures_inner(self, self), 0.0))

    def to_json(self) -> dict:
        d = matrix_to_json(self.matrix)
        d["rank_tol"] = self.base.rank_tol
        return d


@dataclass(frozen=True)
class MonotoneKernel:
    """Symmetric kernel ``c(lam, mu)``, homogeneous of order -1."""

    name: str
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(compare=False)

    def __call__(self, lam, mu):
        return self.evaluator(np.asarray(lam, dtype=float), np.asarray(mu, dtype=float))

    def check(self, grid=None, tol: float = 1e-10) -> None:
        """Assert symmetry and order -1 homogeneity on a sample grid."""
        g = np.linspace(0.05, 1.0, 9) if grid is None else np.asarray(grid)
        lam, mu = np.meshgrid(g, g)
        c = self(lam, mu)
        if not np.all(c > 0):
            raise ValueError(f"kernel {self.name} is not positive")
        if np.max(np.abs(c - self(mu, lam))) > tol * np.max(np.abs(c)):
            raise ValueError(f"kernel {self.name} is not symmetric")
        for alpha in (0.3, 2.0, 7.5):
            if np.max(np.abs(self(alpha * lam, alpha * mu) * alpha - c)) > tol * np.max(c):
                raise ValueError(f"kernel {self.name} is not homogeneous of order -1")


BURES = MonotoneKernel("bures", lambda lam, mu: 2.0 / (lam + mu))
RIGHT_LOG_DERIVATIVE = MonotoneKernel(
    "right_log_derivative", lambda lam, mu: (lam + mu) / (2.0 * lam * mu)
)

KERNELS: dict = {BURES.name: BURES, RIGHT_LOG_DERIVATIVE.name: RIGHT_LOG_DERIVATIVE}


def register_kernel(kernel: MonotoneKernel) -> MonotoneKernel:
    kernel.check()
    KERNELS[kernel.name] = kernel
    return kernel


@dataclass(frozen=True, eq=False)
class NonHermitianGenerator:
    """Generator ``K = H - i Gamma`` stored through its Hermitian parts."""

    H: np.ndarray
    Gamma: np.ndarray

    def __post_init__(self):
        h = check_hermitian(self.H, name="H", operation="NonHermitianGenerator")
        g = check_hermitian(self.Gamma, name="Gamma", operation="NonHermitianGenerator")
        if h.shape != g.shape:
            raise DimensionMismatchError(f"H {h.shape} vs Gamma {g.shape}", "NonHermitianGenerator")
        h.flags.writeable = False
        g.flags.writeable = False
        object.__setattr__(self, "H", h)
        object.__setattr__(self, "Gamma", g)

    @classmethod
    def _trusted(cls, h: np.ndarray, g: np.ndarray) -> "NonHermitianGenerator":
        obj = object.__new__(cls)
        object.__setattr__(obj, "H", h)
        object.__setattr__(obj, "Gamma", g)
        return obj

    @classmethod
    def from_matrix(cls, k) -> "NonHermitianGenerator":
        k = as_matrix(k, "K")
        if k.shape[0] != k.shape[1]:
            raise DimensionMismatchError(f"K must be square, got {k.shape}", "NonHermitianGenerator")
        return cls._trusted(0.5 * (k + k.conj().T), 0.5j * (k - k.conj().T))

    @property
    def K(self) -> np.ndarray:
        return self.H - 1j * self.Gamma

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    def to_json(self) -> dict:
        return {"H": matrix_to_json(self.H), "Gamma": matrix_to_json(self.Gamma)}


def _check_dims(a: np.ndarray, rho: DensityOperator, op: str) -> None:
    if a.shape != rho.matrix.shape:
        raise DimensionMismatchError(f"operator {a.shape} vs state {rho.matrix.shape}", op)


# -- tangents from generators -------------------------------------------------


def tangent_matrix(h: np.ndarray, g: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Raw ``-i[H, rho] - {Gamma, rho} + 2 Tr(Gamma rho) rho`` on arrays."""
    hr = h @ rho
    gr = g @ rho
    out = -1j * (hr - hr.conj().T) - (gr + gr.conj().T)
    out += 2.0 * np.trace(gr).real * rho
    return out


def tangent_from_generator(k, rho: DensityOperator) -> TangentVector:
    """Velocity ``-i(K rho - rho K^H) + i Tr((K - K^H) rho) rho`` of the normalised flow."""
    k = as_matrix(k, "K")
    _check_dims(k, rho, "tangent_from_generator")
    r = rho.matrix
    v = -1j * (k @ r - r @ k.conj().T) + 1j * np.trace((k - k.conj().T) @ r) * r
    return TangentVector(rho, hermitian_part(v))


def tangent_from_H_Gamma(gen: NonHermitianGenerator, rho: DensityOperator) -> TangentVector:
    _check_dims(gen.H, rho, "tangent_from_H_Gamma")
    return TangentVector(rho, hermitian_part(tangent_matrix(gen.H, gen.Gamma, rho.matrix)))


# -- static decomposition -----------------------------------------------------


def decompose_tangent(v: TangentVector):
    """Split ``v`` into coherent, classical and lifting parts.

    The coherent part collects the blocks between different eigenvalue
    clusters of the base state; the classical part is the cluster-uniform
    trace of each diagonal block; lifting is the traceless remainder of the
    diagonal blocks.

    Returns:
        ``(coherent, classical, lifting)`` as :class:`TangentVector` objects.
    """
    sp = v.base.spectrum
    vb = hermitian_part(sp.to_eigenbasis(v.matrix))
    same = sp.same_cluster()
    coh_b = np.where(same, 0.0, vb)
    diag_b = np.where(same, vb, 0.0)
    cl_b = np.zeros_like(vb)
    for k, m in enumerate(sp.multiplicities):
        idx = np.flatnonzero(sp.labels == k)
        mean = np.trace(vb[np.ix_(idx, idx)]).real / m
        cl_b[idx, idx] = mean
    lift_b = diag_b - cl_b
    base = v.base
    return (
        TangentVector(base, sp.from_eigenbasis(coh_b)),
        TangentVector(base, sp.from_eigenbasis(cl_b)),
        TangentVector(base, sp.from_eigenbasis(lift_b)),
    )


# -- metrics ------------------------------------------------------------------


def _kernel_weights(base: DensityOperator, kernel: MonotoneKernel, op: str) -> np.ndarray:
    if not base.full_rank:
        raise RankDeficiencyError(
            f"monotone kernels need a full-rank base (rank {base.rank} < {base.dim}); "
            "use bures_inner",
            op,
        )
    lam = base.spectrum.clustered_eigenvalues
    return kernel(lam[:, None], lam[None, :])


def monotone_norm(v: TangentVector, kernel: MonotoneKernel = BURES) -> float:
    """``sqrt(sum_jk |v_jk|^2 c(lam_j, lam_k))`` in the eigenbasis of the base.

    Only defined on full-rank states.
    """
    c = _kernel_weights(v.base, kernel, "monotone_norm")
    vb = v.base.spectrum.to_eigenbasis(v.matrix)
    return math.sqrt(float(np.sum(np.abs(vb) ** 2 * c)))


def monotone_inner(v: TangentVector, w: TangentVector, kernel: MonotoneKernel = BURES) -> float:
    """``Re sum_jk conj(v_jk) w_jk c(lam_j, lam_k)``, the bilinear form of :func:`monotone_norm`."""
    v._check_base(w)
    c = _kernel_weights(v.base, kernel, "monotone_inner")
    sp = v.base.spectrum
    vb, wb = sp.to_eigenbasis(v.matrix), sp.to_eigenbasis(w.matrix)
    return float(np.sum(np.conj(vb) * wb * c).real)


def _sld_eigenbasis(vb: np.ndarray, lam: np.ndarray, rank_tol: float) -> np.ndarray:
    s = lam[:, None] + lam[None, :]
    ok = s > rank_tol
    return np.where(ok, vb / np.where(ok, s, 1.0), 0.0)


def sld(v: TangentVector, tol: float = 1e-9) -> np.ndarray:
    """Symmetric logarithmic derivative: Hermitian ``L`` with ``L rho + rho L = v``.

    Components with ``lam_j + lam_k <= rank_tol`` are set to zero.

    Raises:
        NotATangentError: if the residual exceeds ``tol`` (relative to ``|v|``),
            i.e. ``v`` has weight on the kernel-kernel block of the base state.
    """
    base = v.base
    sp = base.spectrum
    lam = base.support_eigenvalues()
    vb = sp.to_eigenbasis(v.matrix)
    lb = _sld_eigenbasis(vb, lam, base.rank_tol)
    res = float(np.max(np.abs(lb * (lam[:, None] + lam[None, :]) - vb)))
    if res > tol * max(1.0, float(np.max(np.abs(vb)))):
        raise NotATangentError(f"SLD equation residual {res:.3e}", "sld")
    return hermitian_part(sp.from_eigenbasis(lb))


def bures_inner(v: TangentVector, w: TangentVector) -> float:
    """Bures inner product ``Tr(L_v w) / 2``."""
    v._check_base(w)
    return 0.5 * float(np.trace(sld(v) @ w.matrix).real)


def sld_of_hamiltonian(h, rho: DensityOperator) -> np.ndarray:
    """SLD of ``-i[H, rho]``: ``i sum_jk (lam_j - lam_k)/(lam_j + lam_k) P_j H P_k``."""
    h = check_hermitian(h, name="H", operation="sld_of_hamiltonian")
    _check_dims(h, rho, "sld_of_hamiltonian")
    return _sld_of_hamiltonian(h, rho)


def _sld_of_hamiltonian(h: np.ndarray, rho: DensityOperator) -> np.ndarray:
    sp = rho.spectrum
    lam = rho.support_eigenvalues()
    hb = sp.to_eigenbasis(h)
    num = lam[:, None] - lam[None, :]
    lb = 1j * _sld_eigenbasis(num * hb, lam, rho.rank_tol)
    return hermitian_part(sp.from_eigenbasis(lb))


def qfi(h, rho: DensityOperator) -> float:
    """Quantum Fisher information ``4 Tr(L^2 rho)`` for the unitary family generated by ``H``."""
    L = sld_of_hamiltonian(h, rho)
    return max(4.0 * float(np.trace(L @ L @ rho.matrix).real), 0.0)


def fidelity_and_angle(rho1: DensityOperator, rho2: DensityOperator) -> tuple[float, float]:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(r1) r2 sqrt(r1)))^2`` and Bures angle ``arccos sqrt(F)``."""
    if rho1.dim != rho2.dim:
        raise DimensionMismatchError(f"{rho1.dim} vs {rho2.dim}", "fidelity_and_angle")
    s = psd_sqrt(rho1.matrix)
    inner = hermitian_part(s @ rho2.matrix @ s)
    root_f = float(np.sum(np.sqrt(np.clip(np.linalg.eigvalsh(inner), 0.0, None))))
    root_f = min(max(root_f, 0.0), 1.0)
    return root_f**2, math.acos(root_f)


def von_neumann_entropy(rho: DensityOperator) -> float:
    """``-sum_k m_k lam_k log(lam_k)`` over eigenvalues above ``rank_tol`` (natural log)."""
    sp = rho.spectrum
    s = 0.0
    for lam, m in zip(sp.eigenvalues, sp.multiplicities):
        if lam > rho.rank_tol:
            s -= m * lam * math.log(lam)
    return s


def flow_fields(a, rho: DensityOperator) -> tuple[TangentVector, TangentVector]:
    """Rotation ``-i[A, rho]`` and gradient ``{A - <A>, rho}`` fields of an observable.

    The gradient satisfies ``(grad, v)_B = Tr(A v) / 2`` for every tangent ``v``.
    """
    a = check_hermitian(a, name="A", operation="flow_fields")
    _check_dims(a, rho, "flow_fields")
    r = rho.matrix
    rot = -1j * commutator(a, r)
    a_shift = a - rho.expectation(a) * np.eye(rho.dim)
    grad = anticommutator(a_shift, r)
    return TangentVector(rho, hermitian_part(rot)), TangentVector(rho, hermitian_part(grad))
