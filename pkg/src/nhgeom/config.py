"""JSON experiment configuration with eager validation.

A config is a single JSON object.  ``command`` selects the experiment; the
remaining keys depend on it (see ``COMMAND_FIELDS``).  Matrices use the
exchange format ``{"rows", "cols", "re", "im"}``.  Optional keys that are
absent stay ``None`` so :meth:`ExperimentConfig.to_dict` reproduces the input.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from typing import Any, Optional

import numpy as np

from .errors import ConfigError, GeometryError
from .operators import HERMITIAN_TOL, hermitian_residual, matrix_from_json
from .states import DensityOperator, TangentVector

COMMANDS = (
    "evolve",
    "decompose",
    "geodesic",
    "optimize",
    "speedlimit",
    "sta",
    "reproduce-qubit",
    "reproduce-qutrit",
)

_COMMON = {"command", "output_dir", "rank_tol", "cluster_tol", "seed"}
_GEN = {"H", "Gamma", "K"}
_INTEGRATOR = {"dt", "horizon", "renormalize"}

# allowed keys per command (beyond the common ones) and the required subset
COMMAND_FIELDS: dict[str, tuple[set, set]] = {
    "evolve": (_GEN | _INTEGRATOR | {"rho0", "optimize", "include_states"}, {"rho0", "dt", "horizon"}),
    "speedlimit": (_GEN | _INTEGRATOR | {"rho0", "optimize"}, {"rho0", "dt", "horizon"}),
    "decompose": (_GEN | {"rho", "tangent"}, {"rho"}),
    "optimize": (_GEN | {"rho"}, {"rho"}),
    "geodesic": ({"rho1", "rho2", "R_scale", "dt", "renormalize", "include_states"}, {"rho1", "rho2"}),
    "sta": (_INTEGRATOR | {"H0", "beta"}, {"H0", "beta", "dt", "horizon"}),
    "reproduce-qubit": ({"dt"}, set()),
    "reproduce-qutrit": (set(), set()),
}

_STATE_FIELDS = ("rho0", "rho", "rho1", "rho2")
_HERMITIAN_FIELDS = ("H", "Gamma", "tangent")


@dataclass(eq=False)
class ExperimentConfig:
    """Validated experiment description.

    Matrix-valued fields hold the JSON objects as given; parsed arrays are
    available through :meth:`matrix` and :meth:`state`.
    """

    command: str
    output_dir: Optional[str] = None
    rank_tol: Optional[float] = None
    cluster_tol: Optional[float] = None
    seed: Optional[int] = None
    dt: Optional[float] = None
    horizon: Optional[list] = None
    renormalize: Optional[bool] = None
    optimize: Optional[bool] = None
    include_states: Optional[bool] = None
    rho0: Optional[dict] = None
    rho: Optional[dict] = None
    rho1: Optional[dict] = None
    rho2: Optional[dict] = None
    H: Optional[dict] = None
    Gamma: Optional[dict] = None
    K: Optional[dict] = None
    tangent: Optional[dict] = None
    H0: Optional[list] = None
    beta: Optional[float] = None
    R_scale: Optional[float] = None
    _arrays: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if not f.name.startswith("_") and getattr(self, f.name) is not None
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def matrix(self, name: str) -> Optional[np.ndarray]:
        return self._arrays.get(name)

    def state(self, name: str) -> DensityOperator:
        return DensityOperator(self._arrays[name], **self.tolerances())

    def tolerances(self) -> dict:
        out = {}
        if self.rank_tol is not None:
            out["rank_tol"] = self.rank_tol
        if self.cluster_tol is not None:
            out["cluster_tol"] = self.cluster_tol
        return out

    @property
    def h0_coefficients(self) -> list:
        return self._arrays.get("H0", [])


def _number(value: Any, name: str, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError("expected a finite number", name)
    if positive and not value > 0:
        raise ConfigError(f"must be positive, got {value!r}", name)
    return value


def _flag(value: Any, name: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError("expected true or false", name)
    return value


def _hermitian(obj: Any, name: str) -> np.ndarray:
    m = matrix_from_json(obj, name)
    if m.shape[0] != m.shape[1]:
        raise ConfigError(f"must be square, got {m.shape[0]}x{m.shape[1]}", name)
    res = hermitian_residual(m)
    if res > HERMITIAN_TOL:
        raise ConfigError(f"operator {name} is not Hermitian (residual {res:.3e})", name)
    return m


def parse_config(text: bytes | str) -> ExperimentConfig:
    """Parse and validate a JSON config.

    Raises:
        ConfigError: with a dotted ``field`` path (or ``line N col M`` for
            malformed JSON) on any schema or invariant violation.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError(f"not UTF-8: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", f"line {exc.lineno} col {exc.colno}") from None
    if not isinstance(obj, dict):
        raise ConfigError("top level must be an object")
    cmd = obj.get("command")
    if cmd not in COMMANDS:
        raise ConfigError(f"expected one of {', '.join(COMMANDS)}, got {cmd!r}", "command")
    allowed, required = COMMAND_FIELDS[cmd]
    for key in sorted(obj):
        if key not in allowed and key not in _COMMON:
            raise ConfigError(f"unknown field for command {cmd!r}", key)

    arrays: dict = {}
    for key in ("rank_tol", "cluster_tol", "dt", "beta", "R_scale"):
        if key in obj:
            _number(obj[key], key, positive=True)
    for key in ("renormalize", "optimize", "include_states"):
        if key in obj:
            _flag(obj[key], key)
    if "seed" in obj and (isinstance(obj["seed"], bool) or not isinstance(obj["seed"], int)):
        raise ConfigError("expected an integer", "seed")
    if "output_dir" in obj and not isinstance(obj["output_dir"], str):
        raise ConfigError("expected a string", "output_dir")
    if "horizon" in obj:
        hz = obj["horizon"]
        if not isinstance(hz, list) or len(hz) != 2:
            raise ConfigError("expected [t0, t1]", "horizon")
        t0 = _number(hz[0], "horizon[0]")
        t1 = _number(hz[1], "horizon[1]")
        if not t1 > t0:
            raise ConfigError("t1 must exceed t0", "horizon")
    for key in sorted(required):
        if key not in obj:
            raise ConfigError("required field missing", key)
    if "K" in obj and ("H" in obj or "Gamma" in obj):
        raise ConfigError("give either K or H/Gamma, not both", "K")

    tol = {k: obj[k] for k in ("rank_tol", "cluster_tol") if k in obj}
    for key in _STATE_FIELDS:
        if key in obj:
            m = matrix_from_json(obj[key], key)
            try:
                DensityOperator(m, **tol)
            except GeometryError as exc:
                raise ConfigError(f"not a valid density matrix: {exc}", key) from None
            arrays[key] = m
    for key in _HERMITIAN_FIELDS:
        if key in obj:
            arrays[key] = _hermitian(obj[key], key)
    if "K" in obj:
        k = matrix_from_json(obj["K"], "K")
        if k.shape[0] != k.shape[1]:
            raise ConfigError("must be square", "K")
        arrays["K"] = k
    if "H0" in obj:
        if not isinstance(obj["H0"], list) or not obj["H0"]:
            raise ConfigError("expected a non-empty list of polynomial coefficients", "H0")
        arrays["H0"] = [_hermitian(c, f"H0[{i}]") for i, c in enumerate(obj["H0"])]

    dims = {k: (v[0].shape[0] if isinstance(v, list) else v.shape[0]) for k, v in arrays.items()}
    if len(set(dims.values())) > 1:
        first = next((k for k in _STATE_FIELDS if k in dims), min(dims))
        bad = next(k for k in sorted(dims) if dims[k] != dims[first])
        raise ConfigError(f"dimension {dims[bad]} does not match {first} ({dims[first]})", bad)
    if "H0" in arrays and len({c.shape for c in arrays["H0"]}) > 1:
        raise ConfigError("coefficients differ in shape", "H0")
    if cmd == "decompose" and "tangent" in obj and (set(obj) & _GEN):
        raise ConfigError("give either tangent or a generator, not both", "tangent")
    if "tangent" in arrays:
        try:
            TangentVector(DensityOperator(arrays["rho"], **tol), arrays["tangent"])
        except GeometryError as exc:
            raise ConfigError(str(exc), "tangent") from None
    if cmd == "geodesic" and "rho1" in arrays:
        r1, r2 = (DensityOperator(arrays[k], **tol) for k in ("rho1", "rho2"))
        if r1.rank != r2.rank:
            raise ConfigError(f"rank {r2.rank} differs from rho1 rank {r1.rank}", "rho2")

    known = {f.name for f in fields(ExperimentConfig)}
    return ExperimentConfig(**{k: v for k, v in obj.items() if k in known}, _arrays=arrays)
