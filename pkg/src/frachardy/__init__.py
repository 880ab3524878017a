"""Numerics for fractional Schroedinger forms with multipolar Hardy-type potentials.

Layers, bottom to top:

- ``specfun``: gamma function, the fractional-order constants, and the
  homogeneous-weight dispersion curve relating pole mass to the leading
  angular eigenvalue.
- ``potential``: the admissible potential class (truncated inverse-square
  poles, an exterior tail, bounded remainders) with exact cell averages,
  translation and Kelvin-inversion algebra.
- ``angular``: weighted spherical eigensolver behind the dispersion curve.
- ``rayleigh``: spectral grids, the quadratic form, and the positivity
  index mu(V) computed by a Lanczos iteration on the preconditioned
  potential operator.
- ``extension``: weighted half-space extension of grid fields, the trace
  constant identity, and supersolution certificates for lower bounds.
- ``harness``: reproducible experiment runner; ``cli`` exposes it as the
  ``frac-hardy`` command.
"""

from .specfun import FracParams, params, gamma_fn, lambda_of_alpha, alpha_of_lambda
from .potential import Pole, RemainderSpec, ThetaPotential
from .rayleigh import SpectralGrid, MuResult, mu

__all__ = [
    "FracParams",
    "params",
    "gamma_fn",
    "lambda_of_alpha",
    "alpha_of_lambda",
    "Pole",
    "RemainderSpec",
    "ThetaPotential",
    "SpectralGrid",
    "MuResult",
    "mu",
]

__version__ = "0.1.0"
