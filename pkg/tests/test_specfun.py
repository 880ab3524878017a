"""Constants and curve inversions against independently computed values.

All literal expectations below were generated with mpmath at 30 digits and
frozen here; the package itself never touches mpmath.
"""

import math

import pytest
from hypothesis import given, settings, strategies as st

from frachardy import specfun

# (x, Gamma(x)) computed with mpmath, 17 significant digits
GAMMA_TABLE = [
    (1e-6, 999999.42278532415),
    (0.1, 9.5135076986687318),
    (0.5, 1.772453850905516),
    (1.0, 1.0),
    (1.5, 0.88622692545275801),
    (2.0, 1.0),
    (3.7, 4.1706517837966032),
    (7.5, 1871.2543057977883),
    (12.3, 83385367.899969855),
    (25.0, 6.2044840173323944e23),
    (37.5, 2.2551157841065115e42),
    (50.0, 6.0828186403426756e62),
]

# (N, s) -> (c_ns, kappa_s, gamma_hardy), same provenance
CONST_TABLE = {
    (2, 0.5): (0.15915494309189534, 1.0, 0.22847329052223181),
    (1, 0.25): (0.19947114020071634, 0.477988797486125, 0.13999967745248263),
    (3, 0.75): (0.11905056737670182, 2.0920992401062033, 0.44642959996256534),
}

# (N, s, alpha) -> Lambda(alpha), same provenance
LAMBDA_TABLE = [
    (2, 0.5, 0.1, 0.22007481731092311),
    (2, 0.5, 0.25, 0.17505466952649788),
    (2, 0.5, 0.4, 0.087002408689886964),
    (1, 0.25, 0.05, 0.13497120861315797),
    (1, 0.25, 0.125, 0.10785717441248439),
    (1, 0.25, 0.2, 0.054074456896526104),
]


@pytest.mark.parametrize("x,expected", GAMMA_TABLE)
def test_gamma_matches_frozen_oracle(x, expected):
    assert specfun.gamma_fn(x) == pytest.approx(expected, rel=1e-12)


def test_gamma_rejects_nonpositive():
    for bad in (0.0, -1.0, -3.5, float("nan"), float("inf")):
        with pytest.raises(ValueError):
            specfun.gamma_fn(bad)


def test_gamma_functional_equation():
    # Gamma(x+1) = x Gamma(x) across the contract interval
    for x in [1e-5, 0.3, 1.7, 9.2, 33.0, 49.0]:
        assert specfun.gamma_fn(x + 1.0) == pytest.approx(x * specfun.gamma_fn(x), rel=1e-12)


@pytest.mark.parametrize("key,expected", sorted(CONST_TABLE.items()))
def test_derived_constants(key, expected):
    N, s = key
    p = specfun.params(N, s)
    c_ns, kappa_s, gamma_hardy = expected
    assert p.c_ns == pytest.approx(c_ns, rel=1e-12)
    assert p.kappa_s == pytest.approx(kappa_s, rel=1e-12)
    assert p.gamma_hardy == pytest.approx(gamma_hardy, rel=1e-12)


def test_kappa_is_one_at_half():
    assert specfun.params(2, 0.5).kappa_s == pytest.approx(1.0, rel=1e-13)


def test_params_validation():
    with pytest.raises(ValueError):
        specfun.params(0, 0.5)
    with pytest.raises(ValueError):
        specfun.params(2, 0.0)
    with pytest.raises(ValueError):
        specfun.params(2, 1.0)
    with pytest.raises(ValueError):
        specfun.params(1, 0.5)  # N > 2s fails at equality


@pytest.mark.parametrize("N,s,alpha,expected", LAMBDA_TABLE)
def test_lambda_curve_frozen_values(N, s, alpha, expected):
    p = specfun.params(N, s)
    assert specfun.lambda_of_alpha(alpha, p) == pytest.approx(expected, rel=1e-12)
    # even in alpha
    assert specfun.lambda_of_alpha(-alpha, p) == specfun.lambda_of_alpha(alpha, p)


def test_lambda_curve_endpoints():
    for N, s in [(2, 0.5), (1, 0.25)]:
        p = specfun.params(N, s)
        theta = 0.5 * (N - 2 * s)
        assert specfun.lambda_of_alpha(0.0, p) == pytest.approx(p.gamma_hardy, rel=1e-12)
        assert specfun.lambda_of_alpha(theta, p) == 0.0
        assert specfun.lambda_of_alpha(1e-4 * theta, p) == pytest.approx(p.gamma_hardy, rel=1e-2)
        assert specfun.lambda_of_alpha(0.9999 * theta, p) < 1e-2 * p.gamma_hardy
        with pytest.raises(ValueError):
            specfun.lambda_of_alpha(theta * (1 + 1e-9), p)


@settings(max_examples=60, deadline=None)
@given(
    frac=st.floats(min_value=1e-6, max_value=1.0, exclude_max=True),
    combo=st.sampled_from([(2, 0.5), (1, 0.25), (3, 0.75)]),
)
def test_alpha_lambda_round_trip(frac, combo):
    p = specfun.params(*combo)
    theta = 0.5 * (p.N - 2 * p.s)
    alpha = frac * theta
    lam = specfun.lambda_of_alpha(alpha, p)
    back = specfun.alpha_of_lambda(lam, p)
    # the curve is quadratically flat at alpha = 0, so alpha itself is only
    # determined to sqrt precision there; the contract is the curve residual
    assert abs(specfun.lambda_of_alpha(back, p) - lam) <= 1e-12 * p.gamma_hardy
    if alpha >= 1e-3 * theta:
        assert abs(back - alpha) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(
    f1=st.floats(min_value=0.0, max_value=1.0, exclude_max=True),
    f2=st.floats(min_value=0.0, max_value=1.0, exclude_max=True),
    combo=st.sampled_from([(2, 0.5), (1, 0.25)]),
)
def test_lambda_strictly_decreasing(f1, f2, combo):
    p = specfun.params(*combo)
    theta = 0.5 * (p.N - 2 * p.s)
    a, b = sorted((f1 * theta, f2 * theta))
    if b - a > 1e-12:
        assert specfun.lambda_of_alpha(a, p) > specfun.lambda_of_alpha(b, p)


def test_alpha_of_lambda_domain():
    p = specfun.params(2, 0.5)
    assert specfun.alpha_of_lambda(p.gamma_hardy, p) == 0.0
    for bad in (0.0, -0.1, p.gamma_hardy * (1 + 1e-9)):
        with pytest.raises(ValueError):
            specfun.alpha_of_lambda(bad, p)


@pytest.mark.parametrize(
    "N,s,alpha",
    [(N, s, a) for (N, s, a, _) in LAMBDA_TABLE],
)
def test_mu1_closed_form_on_curve(N, s, alpha):
    p = specfun.params(N, s)
    theta = 0.5 * (N - 2 * s)
    lam = specfun.lambda_of_alpha(alpha, p)
    assert specfun.mu1_of_lambda(lam, p) == pytest.approx(alpha**2 - theta**2, abs=1e-9)


def test_mu1_edges():
    p = specfun.params(2, 0.5)
    theta = 0.5 * (p.N - 2 * p.s)
    assert specfun.mu1_of_lambda(0.0, p) == 0.0
    assert specfun.mu1_of_lambda(p.gamma_hardy, p) == pytest.approx(-(theta**2), abs=1e-10)
    with pytest.raises(ValueError):
        specfun.mu1_of_lambda(p.gamma_hardy * 1.01, p)


def test_a_lambda_matches_alpha_shift():
    # on the curve, a_Lambda(alpha) = -(N-2s)/2 + alpha
    for N, s, alpha, _ in LAMBDA_TABLE:
        p = specfun.params(N, s)
        theta = 0.5 * (N - 2 * s)
        lam = specfun.lambda_of_alpha(alpha, p)
        assert specfun.a_lambda(lam, p) == pytest.approx(-theta + alpha, abs=1e-9)
    p = specfun.params(2, 0.5)
    assert specfun.a_lambda(0.0, p) == pytest.approx(0.0, abs=1e-12)


def test_mu1_negative_mass_is_positive():
    # negative masses push the first angular eigenvalue shift above zero
    p = specfun.params(1, 0.25)
    val = specfun.mu1_of_lambda(-0.5, p)
    assert val > 0.0
    assert math.isfinite(val)
