"""Special-function layer: gamma, fractional constants, and the mass-exponent curve.

Everything downstream (potentials, the angular solver, extension traces)
consumes the constants assembled here:

- ``c_ns``: normalization of the singular-integral form, chosen so the form
  agrees with the Fourier-side integral of |xi|^{2s} |u-hat|^2.
- ``kappa_s``: trace constant of the weighted half-space extension.
- ``gamma_hardy``: best constant in the fractional Hardy inequality.
- ``lambda_of_alpha`` / ``alpha_of_lambda``: the curve Lambda(alpha) linking a
  pole mass lambda to the homogeneity exponent -(N-2s)/2 + alpha of the
  associated radial profile, and its inverse.

``gamma_fn`` is a self-contained Lanczos evaluation (15-term, g = 607/128)
so the package does not depend on any library gamma for its own constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

_LANCZOS_G = 607.0 / 128.0
_LANCZOS_C = (
    0.99999999999999709182,
    57.156235665862923517,
    -59.597960355475491248,
    14.136097974741747174,
    -0.49191381609762019978,
    0.33994649984811888699e-4,
    0.46523628927048575665e-4,
    -0.98374475304879564677e-4,
    0.15808870322491248884e-3,
    -0.21026444172410488319e-3,
    0.21743961811521264320e-3,
    -0.16431810653676389022e-3,
    0.84418223983852743293e-4,
    -0.26190838401581408670e-4,
    0.36899182659531622704e-5,
)


def gamma_fn(x: float) -> float:
    """Gamma function for positive real arguments.

    Lanczos approximation, relative error below 1e-13 on (0, 50].

    Raises
    ------
    ValueError
        If ``x <= 0`` or ``x`` is not finite.
    """
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise ValueError(f"gamma_fn: argument must be a positive real, got {x!r}")
    if x < 0.5:
        # Lanczos degrades near 0; reflect into [0.5, inf)
        return math.pi / (math.sin(math.pi * x) * gamma_fn(1.0 - x))
    acc = _LANCZOS_C[0]
    for k in range(1, len(_LANCZOS_C)):
        acc += _LANCZOS_C[k] / (x + k - 1.0)
    base = x + _LANCZOS_G - 0.5
    # log-form avoids premature overflow of base**(x - 0.5) for x up to ~170
    return math.sqrt(2.0 * math.pi) * math.exp((x - 0.5) * math.log(base) - base) * acc


_SOBOLEV_CACHE: dict[tuple[int, float], float] = {}


@dataclass(frozen=True)
class FracParams:
    """Dimension, order, and the derived constants for one (N, s) pair.

    Attributes
    ----------
    N : int
        Ambient dimension, ``N >= 1`` and ``N > 2 s``.
    s : float
        Fractional order in (0, 1).
    c_ns : float
        Normalization of the singular-integral energy.
    kappa_s : float
        Trace constant of the weighted extension.
    gamma_hardy : float
        Best fractional Hardy constant.
    """

    N: int
    s: float
    c_ns: float
    kappa_s: float
    gamma_hardy: float

    @property
    def sobolev_const(self) -> float:
        """Discrete estimate of the critical Sobolev constant (diagnostic only).

        Computed lazily on first access by minimizing the discrete Sobolev
        quotient on a fixed reference grid, then cached per (N, s).
        """
        key = (self.N, self.s)
        if key not in _SOBOLEV_CACHE:
            from . import rayleigh

            _SOBOLEV_CACHE[key] = rayleigh.sobolev_estimate(self)
        return _SOBOLEV_CACHE[key]


def params(N: int, s: float) -> FracParams:
    """Build :class:`FracParams`, validating ``N >= 1``, ``0 < s < 1``, ``N > 2 s``."""
    if int(N) != N or N < 1:
        raise ValueError(f"params: N must be a positive integer, got {N!r}")
    N = int(N)
    s = float(s)
    if not (0.0 < s < 1.0):
        raise ValueError(f"params: s must lie in (0, 1), got {s!r}")
    if not (N > 2.0 * s):
        raise ValueError(f"params: need N > 2 s, got N={N}, s={s}")
    c_ns = (
        math.pi ** (-N / 2.0)
        * 2.0 ** (2.0 * s)
        * s
        * (1.0 - s)
        * gamma_fn((N + 2.0 * s) / 2.0)
        / gamma_fn(2.0 - s)
    )
    kappa_s = gamma_fn(1.0 - s) / (2.0 ** (2.0 * s - 1.0) * gamma_fn(s))
    gamma_hardy = 2.0 ** (2.0 * s) * (gamma_fn((N + 2.0 * s) / 4.0) / gamma_fn((N - 2.0 * s) / 4.0)) ** 2
    return FracParams(N=N, s=s, c_ns=c_ns, kappa_s=kappa_s, gamma_hardy=gamma_hardy)


def lambda_of_alpha(alpha: float, p: FracParams) -> float:
    """Mass on the dispersion curve for exponent offset ``alpha``.

    Even in ``alpha``; defined for ``|alpha| <= (N - 2 s) / 2``, with value
    ``gamma_hardy`` at 0 and 0 at the endpoints (continuous extension).
    """
    alpha = abs(float(alpha))
    theta = 0.5 * (p.N - 2.0 * p.s)
    if alpha > theta:
        raise ValueError(
            f"lambda_of_alpha: |alpha| must not exceed (N - 2 s)/2 = {theta}, got {alpha}"
        )
    if alpha == theta:
        return 0.0
    return (
        2.0 ** (2.0 * p.s)
        * gamma_fn((p.N + 2.0 * p.s + 2.0 * alpha) / 4.0)
        * gamma_fn((p.N + 2.0 * p.s - 2.0 * alpha) / 4.0)
        / (
            gamma_fn((p.N - 2.0 * p.s + 2.0 * alpha) / 4.0)
            * gamma_fn((p.N - 2.0 * p.s - 2.0 * alpha) / 4.0)
        )
    )


def alpha_of_lambda(lam: float, p: FracParams) -> float:
    """Inverse of :func:`lambda_of_alpha` on the branch ``alpha in [0, (N-2s)/2]``.

    Bisection to absolute tolerance 1e-13 (at most 200 halvings); the result
    satisfies ``|Lambda(alpha) - lam| <= 1e-12 * gamma_hardy``.

    Raises
    ------
    ValueError
        If ``lam`` is outside ``(0, gamma_hardy]``.
    """
    lam = float(lam)
    if not (0.0 < lam <= p.gamma_hardy):
        raise ValueError(
            f"alpha_of_lambda: mass must lie in (0, gamma_hardy={p.gamma_hardy!r}], got {lam!r}"
        )
    if lam == p.gamma_hardy:
        return 0.0
    theta = 0.5 * (p.N - 2.0 * p.s)
    lo, hi = 0.0, theta
    # Lambda is strictly decreasing on [0, theta]: keep Lambda(lo) >= lam >= Lambda(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if lambda_of_alpha(mid, p) >= lam:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13:
            break
    alpha = 0.5 * (lo + hi)
    if abs(lambda_of_alpha(alpha, p) - lam) > 1e-12 * p.gamma_hardy:
        raise ArithmeticError(
            f"alpha_of_lambda: bisection failed to invert the curve at lam={lam!r}"
        )
    return alpha


def mu1_of_lambda(lam: float, p: FracParams) -> float:
    """First angular eigenvalue shift for pole mass ``lam <= gamma_hardy``.

    For ``lam`` in ``(0, gamma_hardy]`` this is the closed form
    ``alpha^2 - ((N-2s)/2)^2`` through :func:`alpha_of_lambda`; ``lam = 0``
    gives 0; negative masses are handled numerically by the weighted angular
    eigensolver.
    """
    lam = float(lam)
    theta = 0.5 * (p.N - 2.0 * p.s)
    if lam > p.gamma_hardy:
        raise ValueError(
            f"mu1_of_lambda: mass must not exceed gamma_hardy={p.gamma_hardy!r}, got {lam!r}"
        )
    if lam == 0.0:
        return 0.0
    if lam > 0.0:
        alpha = alpha_of_lambda(lam, p)
        return alpha * alpha - theta * theta
    from . import angular  # deferred: angular depends on this module

    return angular.mu_k(lam, 1, p)


def a_lambda(lam: float, p: FracParams) -> float:
    """Homogeneity exponent offset ``-(N-2s)/2 + sqrt(((N-2s)/2)^2 + mu_1(lam))``."""
    theta = 0.5 * (p.N - 2.0 * p.s)
    disc = theta * theta + mu1_of_lambda(lam, p)
    if disc < 0.0:
        raise ArithmeticError(f"a_lambda: negative discriminant {disc!r} at lam={lam!r}")
    return -theta + math.sqrt(disc)
