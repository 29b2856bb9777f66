"""Complex-matrix primitives shared by the rest of the package.

All functions take and return plain ``numpy`` arrays of dtype ``complex128``
(the "ComplexMatrix" storage type) and never mutate their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import HermiticityError, NegativityError

DEFAULT_CLUSTER_TOL = 1e-8
HERMITIAN_TOL = 1e-10
DEFAULT_RANK_TOL = 1e-10


def as_matrix(a: Any, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a finite 2-D ``complex128`` array."""
    m = np.array(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] == 0 or m.shape[1] == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def hermitian_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def hermitian_residual(a: np.ndarray) -> float:
    return float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0


def check_hermitian(
    a: Any, tol: float = HERMITIAN_TOL, name: str = "matrix", operation: str = ""
) -> np.ndarray:
    """Validate Hermiticity to ``tol`` and return the exactly symmetrized matrix."""
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    res = hermitian_residual(m)
    if res > tol:
        raise HermiticityError(res, tol, operation=operation, name=name)
    return hermitian_part(m)


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def anticommutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b + b @ a


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.flags.writeable = False
    return a


def fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real and positive.

    Ties in magnitude (to 12 digits) resolve to the lowest row index.
    """
    v = np.array(vectors, dtype=complex)
    idx = np.argmax(np.round(np.abs(v), 12), axis=0)
    pivots = v[idx, np.arange(v.shape[1])]
    phases = np.where(np.abs(pivots) > 0, pivots / np.abs(pivots), 1.0)
    return v / phases


@dataclass(frozen=True)
class SpectralDecomposition:
    """Spectrum of a Hermitian operator grouped into distinct eigenvalues.

    ``eigenvalues``, ``projectors`` and ``multiplicities`` describe the
    distinct (clustered) spectrum in descending order.  ``eigenvectors`` holds
    an orthonormal eigenbasis (columns, descending raw eigenvalues, phases
    fixed) and ``labels[i]`` is the cluster index of column ``i``.
    """

    eigenvalues: np.ndarray
    multiplicities: tuple
    eigenvectors: np.ndarray
    labels: np.ndarray
    raw_eigenvalues: np.ndarray

    @cached_property
    def projectors(self) -> tuple:
        out = []
        for k in range(len(self.eigenvalues)):
            cols = self.eigenvectors[:, self.labels == k]
            out.append(_frozen(cols @ cols.conj().T))
        return tuple(out)

    @property
    def clustered_eigenvalues(self) -> np.ndarray:
        """Per-column eigenvalue with each cluster replaced by its mean."""
        return self.eigenvalues[self.labels]

    def same_cluster(self) -> np.ndarray:
        """Boolean matrix ``[i, j]``: columns ``i`` and ``j`` share a cluster."""
        return self.labels[:, None] == self.labels[None, :]

    def to_eigenbasis(self, a: np.ndarray) -> np.ndarray:
        v = self.eigenvectors
        return v.conj().T @ a @ v

    def from_eigenbasis(self, a: np.ndarray) -> np.ndarray:
        v = self.eigenvectors
        return v @ a @ v.conj().T

    def reconstruct(self) -> np.ndarray:
        return sum(lam * p for lam, p in zip(self.eigenvalues, self.projectors))


def _cluster_descending(w: np.ndarray, cluster_tol: float) -> np.ndarray:
    # single linkage on a sorted list: a new cluster starts at every gap > tol
    labels = np.zeros(len(w), dtype=int)
    for i in range(1, len(w)):
        labels[i] = labels[i - 1] + (w[i - 1] - w[i] > cluster_tol)
    return labels


def spectral_decompose(
    a: Any, cluster_tol: float = DEFAULT_CLUSTER_TOL, herm_tol: float = HERMITIAN_TOL
) -> SpectralDecomposition:
    """Spectral decomposition of a Hermitian matrix with eigenvalue clustering.

    Eigenvalues closer than ``cluster_tol`` (single linkage) are merged into one
    distinct eigenvalue equal to the cluster mean, with the combined projector.

    Raises:
        HermiticityError: if ``a`` deviates from Hermitian by more than ``herm_tol``.
    """
    if cluster_tol <= 0:
        raise ValueError("cluster_tol must be positive")
    m = check_hermitian(a, herm_tol, operation="spectral_decompose")
    w, v = np.linalg.eigh(m)
    w, v = w[::-1], v[:, ::-1]
    v = fix_phases(v)
    return _build_decomposition(w, v, cluster_tol)


def _build_decomposition(w: np.ndarray, v: np.ndarray, cluster_tol: float) -> SpectralDecomposition:
    labels = _cluster_descending(w, cluster_tol)
    n_clusters = labels[-1] + 1
    counts = np.bincount(labels, minlength=n_clusters)
    values = np.bincount(labels, weights=w, minlength=n_clusters) / counts
    return SpectralDecomposition(
        eigenvalues=_frozen(values),
        multiplicities=tuple(int(c) for c in counts),
        eigenvectors=_frozen(v),
        labels=_frozen(labels),
        raw_eigenvalues=_frozen(w),
    )


def psd_sqrt(a: Any, tol: float = 1e-10) -> np.ndarray:
    """Principal square root of a Hermitian positive-semidefinite matrix.

    Eigenvalues in ``[-tol, 0)`` are clipped to zero.

    Raises:
        NegativityError: if an eigenvalue is below ``-tol``.
    """
    m = check_hermitian(a, operation="psd_sqrt")
    w, v = np.linalg.eigh(m)
    if w[0] < -tol:
        raise NegativityError(float(w[0]), tol, operation="psd_sqrt")
    r = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
    return hermitian_part(r)


def pseudo_inverse(w: Any, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Moore-Penrose inverse; singular values below ``rank_tol`` count as zero."""
    if rank_tol <= 0:
        raise ValueError("rank_tol must be positive")
    m = as_matrix(w)
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    inv = np.zeros_like(s)
    keep = s > rank_tol
    inv[keep] = 1.0 / s[keep]
    return (vh.conj().T * inv) @ u.conj().T


@dataclass(frozen=True)
class PolarFactors:
    positive_part: np.ndarray
    unitary_part: np.ndarray
    rank: int

    @property
    def singular(self) -> bool:
        return self.rank < self.positive_part.shape[0]


def polar_decompose(a: Any, rank_tol: float = DEFAULT_RANK_TOL) -> PolarFactors:
    """Left polar decomposition ``A = P U`` with ``P = sqrt(A A^H)``.

    For singular ``A`` the unitary is fixed on the support of ``A^H A`` and
    completed on the null space by the unitary closest to the identity between
    the right and left null spaces; when these coincide (e.g. normal ``A``) the
    completion is the identity there.
    """
    m = as_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"polar_decompose needs a square matrix, got {m.shape}")
    x, s, yh = np.linalg.svd(m)
    y = yh.conj().T
    r = int(np.sum(s > rank_tol))
    p = hermitian_part((x * s) @ x.conj().T)
    u = x[:, :r] @ y[:, :r].conj().T
    if r < m.shape[0]:
        x0, y0 = x[:, r:], y[:, r:]
        a0, _, b0h = np.linalg.svd(x0.conj().T @ y0)
        u = u + x0 @ (a0 @ b0h) @ y0.conj().T
    return PolarFactors(positive_part=_frozen(p), unitary_part=_frozen(u), rank=r)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Half the trace norm of ``a - b`` (Hermitian inputs)."""
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(hermitian_part(a - b)))))


# -- matrix exchange format -------------------------------------------------


def matrix_to_json(a: Any) -> dict:
    """Serialize to ``{"rows", "cols", "re", "im"}`` with row-major flat lists."""
    m = as_matrix(a)
    return {
        "rows": int(m.shape[0]),
        "cols": int(m.shape[1]),
        "re": [float(x) + 0.0 for x in m.real.ravel()],
        "im": [float(x) + 0.0 for x in m.imag.ravel()],
    }


def matrix_from_json(obj: Mapping[str, Any], name: str = "matrix") -> np.ndarray:
    """Inverse of :func:`matrix_to_json`.  ``re``/``im`` may also be nested rows."""
    from .errors import ConfigError

    if not isinstance(obj, Mapping):
        raise ConfigError("expected a matrix object", name)
    extra = set(obj) - {"rows", "cols", "re", "im", "rank_tol"}
    if extra:
        raise ConfigError(f"unknown keys {sorted(extra)}", name)
    for key in ("rows", "cols"):
        if key in obj and (isinstance(obj[key], bool) or not isinstance(obj[key], int)):
            raise ConfigError(f"{key!r} must be an integer", name)
    try:
        rows, cols = obj["rows"], obj["cols"]
        re = np.asarray(obj["re"], dtype=float).ravel()
        im = np.asarray(obj.get("im", np.zeros(rows * cols)), dtype=float).ravel()
    except KeyError as exc:
        raise ConfigError(f"missing key {exc.args[0]!r}", name) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), name) from None
    if rows <= 0 or cols <= 0:
        raise ConfigError("rows and cols must be positive", name)
    if re.size != rows * cols or im.size != rows * cols:
        raise ConfigError(f"expected {rows * cols} entries in re/im", name)
    m = (re + 1j * im).reshape(rows, cols)
    if not np.all(np.isfinite(m)):
        raise ConfigError("non-finite entries", name)
    return m


PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def random_hermitian(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * hermitian_part(a)


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_density_matrix(
    n: int,
    rng: np.random.Generator,
    rank: int | None = None,
    spectrum: Sequence[float] | None = None,
) -> np.ndarray:
    """Random density matrix; optionally of given rank or with given spectrum."""
    u = random_unitary(n, rng)
    if spectrum is None:
        r = n if rank is None else rank
        lam = np.zeros(n)
        lam[:r] = rng.uniform(0.05, 1.0, size=r)
    else:
        lam = np.zeros(n)
        lam[: len(spectrum)] = spectrum
    lam = lam / lam.sum()
    return hermitian_part((u * lam) @ u.conj().T)


__all__ = [
    "SpectralDecomposition",
    "PolarFactors",
    "spectral_decompose",
    "psd_sqrt",
    "pseudo_inverse",
    "polar_decompose",
    "matrix_to_json",
    "matrix_from_json",
]
