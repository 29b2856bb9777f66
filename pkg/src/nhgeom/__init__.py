"""Geometry of non-Hermitian dynamics on fixed-rank density operators.

Modules:
    operators: Hermitian linear algebra, clustered spectra, polar factors, JSON exchange.
    states: density operators, tangents, monotone metrics, SLD, fidelity.
    dynamics: normalised evolution, success-rate optimisation, speed limits, STA.
    geodesics: purifications, horizontal lifts, shortest Bures geodesics.
    experiments, config, cli: reproduction drivers and the ``nhgeom`` command.
"""

__version__ = "0.1.0"

from .errors import ConfigError, GeometryError  # noqa: F401
from .states import DensityOperator, NonHermitianGenerator, TangentVector  # noqa: F401
