"""Weighted extension tests: mode profiles, energy identities, the barrier field,
and the supersolution certificate."""

import numpy as np
import pytest

from frachardy import extension as ext
from frachardy import potential as pot
from frachardy import rayleigh as ray
from frachardy import specfun

P1 = specfun.params(1, 0.25)
P2 = specfun.params(2, 0.5)
G1 = ray.SpectralGrid(N=1, n=1024, L=32.0)
TG1 = ext.tgrid_for(P1, G1, m_t=1024)


def band_limited(grid, rng, kmax=128, modes=12):
    c = np.zeros(grid.shape(), dtype=complex)
    for _ in range(modes):
        k = int(rng.integers(1, kmax + 1))
        a = rng.normal() + 1j * rng.normal()
        c[k] += a
        c[-k] += np.conj(a)
    return np.fft.ifft(c).real


def full_pole(p, lam):
    return pot.ThetaPotential(params=p, lambda_inf=lam, r_inf=0.0)


def test_tgrid_validation():
    with pytest.raises(ValueError):
        ext.TGrid(t_max=0.0, m_t=64)
    with pytest.raises(ValueError):
        ext.TGrid(t_max=10.0, m_t=16)
    with pytest.raises(ValueError):
        ext.TGrid(t_max=10.0, m_t=64, gamma=0.5)


def test_tgrid_for_geometry():
    tg = ext.tgrid_for(P1, G1, m_t=256, depth=10.0)
    assert tg.t_max == pytest.approx(10.0 * G1.L / np.pi)
    assert tg.gamma == pytest.approx(2.0 / (2.0 - 2.0 * P1.s))
    nodes = tg.nodes()
    assert nodes[0] == 0.0
    assert nodes[-1] == pytest.approx(tg.t_max)
    assert np.all(np.diff(nodes) > 0)


def test_extend_zero_trace():
    U = ext.extend(np.zeros(G1.shape()), P1, G1, TG1)
    assert not np.any(U.values)
    assert ext.energy(U) == 0.0


def test_extend_rejects_nonzero_mean():
    u = np.ones(G1.shape())
    with pytest.raises(ValueError, match="mean-zero"):
        ext.extend(u, P1, G1, TG1)


def test_extend_warns_when_cap_too_shallow():
    tg = ext.TGrid(t_max=3.0, m_t=64)
    u = band_limited(G1, np.random.default_rng(0), kmax=8)
    with pytest.warns(UserWarning, match="decay not resolved"):
        ext.extend(u, P1, G1, tg)


def test_universal_profile_collapse():
    """Mode profiles W(t; omega) collapse onto one curve of omega*t.

    Each profile is evaluated through its fitted element interpolant
    (a + b t^{2s} per element) at common rescaled query points.
    """
    tg = ext.tgrid_for(P1, G1, m_t=8192)
    nodes = tg.nodes()
    pw = 2 * P1.s

    def rescaled(kmode, tq):
        c = np.zeros(G1.shape(), dtype=complex)
        c[kmode] = 1.0
        c[-kmode] = 1.0
        u = np.fft.ifft(c).real
        U = ext.extend(u, P1, G1, tg)
        w = np.fft.fft(U.values, axis=1)[:, kmode].real
        w = w / w[0]
        omega = 2 * np.pi * np.fft.fftfreq(G1.n, d=G1.h)[kmode]
        t = nodes * omega
        idx = np.clip(np.searchsorted(t, tq) - 1, 0, len(t) - 2)
        b = (w[idx + 1] - w[idx]) / (t[idx + 1] ** pw - t[idx] ** pw)
        a = w[idx] - b * t[idx] ** pw
        return a + b * tq**pw

    tq = np.linspace(0.01, 20.0, 500)
    dev = np.max(np.abs(rescaled(5, tq) - rescaled(10, tq)))
    assert dev <= 1e-6


def test_extension_is_energy_minimal():
    # any interior perturbation with the same trace must cost energy
    rng = np.random.default_rng(3)
    u = band_limited(G1, rng, kmax=32)
    U = ext.extend(u, P1, G1, TG1)
    base = ext.energy(U)
    bump = np.zeros_like(U.values)
    tprof = np.exp(-((TG1.nodes() - 5.0) ** 2))
    tprof[0] = 0.0
    bump[:] = tprof[:, None] * np.cos(np.pi * G1.axes()[0] / G1.L)
    comp = ext.ExtensionField(params=P1, xgrid=G1, tgrid=TG1,
                              values=U.values + 0.1 * bump)
    assert comp.trace == pytest.approx(U.trace)
    assert ext.energy(comp) > base * (1 + 1e-6)


def test_kappa_identity_band_limited():
    rng = np.random.default_rng(7)
    for _ in range(10):
        u = band_limited(G1, rng, kmax=128)
        U = ext.extend(u, P1, G1, TG1)
        ratio = ext.energy(U) / (P1.kappa_s * ray.dsnorm_sq(u, G1, P1))
        assert ratio == pytest.approx(1.0, rel=1e-3)


def test_kappa_identity_half_case():
    g2 = ray.SpectralGrid(N=2, n=128, L=16.0)
    tg2 = ext.tgrid_for(P2, g2, m_t=256)
    rng = np.random.default_rng(11)
    c = np.zeros(g2.shape(), dtype=complex)
    for _ in range(8):
        i, j = rng.integers(1, 33, size=2)
        a = rng.normal() + 1j * rng.normal()
        c[i, j] += a
        c[-i, -j] += np.conj(a)
    u = np.fft.ifft2(c).real
    U = ext.extend(u, P2, g2, tg2)
    ratio = ext.energy(U) / (P2.kappa_s * ray.dsnorm_sq(u, g2, P2))
    assert ratio == pytest.approx(1.0, rel=1e-3)


def test_neumann_flux_single_mode():
    # flux of a single extended mode is kappa_s |xi|^{2s} times the trace
    tg = ext.tgrid_for(P1, G1, m_t=1024)
    k = 5
    c = np.zeros(G1.shape(), dtype=complex)
    c[k] = 1.0
    c[-k] = 1.0
    u = np.fft.ifft(c).real
    U = ext.extend(u, P1, G1, tg)
    xi = 2 * np.pi * np.fft.fftfreq(G1.n, d=G1.h)[k]
    want = P1.kappa_s * xi ** (2 * P1.s) * u
    got = ext.neumann_flux(U)
    assert np.max(np.abs(got - want)) <= 1e-2 * np.max(np.abs(want))


def test_trace_energy_bound_arbitrary_fields():
    # kappa_s ||Tr U||_ds^2 <= energy(U) structurally, extension or not
    from scipy.ndimage import gaussian_filter

    for seed in range(5):
        rng = np.random.default_rng(200 + seed)
        vals = gaussian_filter(rng.normal(size=(TG1.m_t + 1, G1.n)),
                               sigma=(8, 8), mode="wrap")
        U = ext.ExtensionField(params=P1, xgrid=G1, tgrid=TG1, values=vals)
        assert P1.kappa_s * ray.dsnorm_sq(U.trace, G1, P1) <= ext.energy(U) * (1 + 1e-6)
    # sharp case: the minimal extension itself
    u = band_limited(G1, np.random.default_rng(5), kmax=64)
    U = ext.extend(u, P1, G1, TG1)
    assert P1.kappa_s * ray.dsnorm_sq(u, G1, P1) <= ext.energy(U) * (1 + 1e-6)


def test_extended_hardy_bound():
    from scipy.ndimage import gaussian_filter

    Vunit = full_pole(P1, 1.0)
    for seed in range(5):
        rng = np.random.default_rng(300 + seed)
        vals = gaussian_filter(rng.normal(size=(TG1.m_t + 1, G1.n)),
                               sigma=(8, 8), mode="wrap")
        U = ext.ExtensionField(params=P1, xgrid=G1, tgrid=TG1, values=vals)
        lhs = P1.kappa_s * P1.gamma_hardy * ray.potential_energy(U.trace, Vunit, G1)
        assert lhs <= ext.energy(U) * (1 + 1e-2)


def test_mu_extended_zero_potential():
    V = pot.ThetaPotential(params=P1)
    assert ext.mu_extended(V, G1, TG1) == 1.0


def test_mu_extended_matches_rayleigh_full_pole():
    V = full_pole(P1, 0.5 * P1.gamma_hardy)
    me = ext.mu_extended(V, G1, TG1)
    mr = ray.mu(V, G1).mu
    assert me == pytest.approx(mr, abs=2e-2)


def test_mu_extended_matches_rayleigh_two_pole():
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        m1, m2 = rng.uniform(0.2, 0.6, size=2) * P1.gamma_hardy
        x1, x2 = -rng.uniform(2, 6), rng.uniform(2, 6)
        V = pot.ThetaPotential(params=P1, poles=(
            pot.Pole((x1,), m1, 1.0), pot.Pole((x2,), m2, 1.0)))
        me = ext.mu_extended(V, G1, TG1)
        mr = ray.mu(V, G1).mu
        assert me == pytest.approx(mr, abs=2e-2)


def test_build_upsilon_trace_and_positivity():
    grid = ray.SpectralGrid(N=1, n=512, L=64.0)
    tg = ext.tgrid_for(P1, grid, m_t=512)
    alpha = 0.125
    ups = ext.build_upsilon(alpha, P1, grid, tg)
    x = grid.axes()[0]
    q = (P1.N - 2 * P1.s) / 2.0 - alpha
    away = np.abs(x) > grid.h
    assert np.max(np.abs(ups.trace[away] - np.abs(x[away]) ** -q)) <= 1e-6
    # positive below the Dirichlet cap; the cap row itself is pinned to zero
    assert np.all(ups.values[:-1] > 0)
    assert not np.any(ups.values[-1])


def test_build_upsilon_alpha_domain():
    theta = (P1.N - 2 * P1.s) / 2.0
    grid = ray.SpectralGrid(N=1, n=64, L=8.0)
    tg = ext.tgrid_for(P1, grid, m_t=64)
    for bad in (0.0, theta, -0.1, theta + 0.2):
        with pytest.raises(ValueError, match="alpha"):
            ext.build_upsilon(bad, P1, grid, tg)


def test_build_upsilon_flux_identity():
    """Neumann flux approximates kappa_s Lambda(alpha) |x|^{-2s} Upsilon.

    The box must be large (periodic images depress the flux at fixed x like
    L^{-something<1}) and the cap deep but t-resolved; the frozen instance
    keeps the mismatch within 5% on 0.5 <= |x| <= 2.
    """
    grid = ray.SpectralGrid(N=1, n=4096, L=128.0)
    tg = ext.tgrid_for(P1, grid, m_t=4096, depth=60.0)
    alpha = 0.125
    lam = specfun.lambda_of_alpha(alpha, P1)
    ups = ext.build_upsilon(alpha, P1, grid, tg)
    fl = ext.neumann_flux(ups)
    x = grid.axes()[0]
    win = (np.abs(x) >= 0.5) & (np.abs(x) <= 2.0)
    target = P1.kappa_s * lam * np.abs(x[win]) ** (-2 * P1.s) * ups.trace[win]
    rel = np.abs(fl[win] - target) / target
    assert np.max(rel) <= 5e-2


def _capped_field_from_trace(trace, p, grid, tg):
    # same mode assembly as build_upsilon, for arbitrary (not mean-zero) traces
    _, W, _, _, inverse = ext._mode_table(p, grid, tg)
    c = np.fft.fftn(trace)
    vals = np.empty((tg.m_t + 1,) + grid.shape())
    for j in range(tg.m_t + 1):
        vals[j] = np.fft.ifftn(c * W[inverse, j]).real
    return ext.ExtensionField(params=p, xgrid=grid, tgrid=tg, values=vals)


def test_certificate_degenerate_pass():
    # V = 0: any positive capped field passes vacuously at eps = 0
    grid = ray.SpectralGrid(N=1, n=256, L=16.0)
    tg = ext.tgrid_for(P1, grid, m_t=128)
    x = grid.axes()[0]
    phi = _capped_field_from_trace(0.5 + np.exp(-(x**2) / 8.0), P1, grid, tg)
    assert np.all(phi.values[:-1] > 0)
    cert = ext.Certificate(phi=phi, epsilon=0.0,
                           v=pot.ThetaPotential(params=P1),
                           v_tilde=np.zeros(grid.shape()))
    ver = ext.certificate_check(cert, test_basis_size=6)
    assert ver.passed
    assert ver.bound == 0.0


def test_certificate_rejects_negated_phi():
    grid = ray.SpectralGrid(N=1, n=256, L=16.0)
    tg = ext.tgrid_for(P1, grid, m_t=128)
    x = grid.axes()[0]
    phi = _capped_field_from_trace(0.5 + np.exp(-(x**2) / 8.0), P1, grid, tg)
    neg = ext.ExtensionField(params=P1, xgrid=grid, tgrid=tg, values=-phi.values)
    cert = ext.Certificate(phi=neg, epsilon=0.0,
                           v=pot.ThetaPotential(params=P1),
                           v_tilde=np.zeros(grid.shape()))
    with pytest.raises(ValueError, match="positive"):
        ext.certificate_check(cert)


def test_certificate_rejects_bad_vtilde():
    grid = ray.SpectralGrid(N=1, n=512, L=64.0)
    tg = ext.tgrid_for(P1, grid, m_t=512)
    alpha = 0.125
    lam = specfun.lambda_of_alpha(alpha, P1)
    V = full_pole(P1, lam)
    ups = ext.build_upsilon(alpha, P1, grid, tg)
    vbar = ray.cell_averages(V, grid)
    with pytest.raises(ValueError, match="Vtilde"):
        ext.certificate_check(ext.Certificate(
            phi=ups, epsilon=0.1, v=V, v_tilde=vbar - 1.0))
    with pytest.raises(ValueError):
        ext.Certificate(phi=ups, epsilon=-0.2, v=V, v_tilde=vbar)


def test_certificate_full_pole_small_eps():
    """Upsilon certifies the marginal full pole lam = Lambda(alpha) with room.

    The Dirichlet cap gives the mean mode a uniform positive flux, which is
    the genuine slack budget of the finite cylinder; small eps passes and the
    bound stays below the closed-form ceiling 1 - Lambda(alpha)/gamma_H.
    """
    grid = ray.SpectralGrid(N=1, n=512, L=64.0)
    tg = ext.tgrid_for(P1, grid, m_t=512)
    alpha = 0.125
    lam = specfun.lambda_of_alpha(alpha, P1)
    V = full_pole(P1, lam)
    ups = ext.build_upsilon(alpha, P1, grid, tg)
    vtil = np.abs(ray.cell_averages(V, grid))
    ver = ext.certificate_check(ext.Certificate(
        phi=ups, epsilon=0.1, v=V, v_tilde=vtil))
    assert ver.passed
    assert ver.bound == pytest.approx(0.1 / 1.1)
    assert ver.bound <= 1.0 - lam / P1.gamma_hardy + 5e-2
    # a clearly supercritical margin must fail, at the pole hat
    ver2 = ext.certificate_check(ext.Certificate(
        phi=ups, epsilon=0.8, v=V, v_tilde=vtil))
    assert not ver2.passed
    assert ver2.worst_value < 0


def test_largest_passing_epsilon_scan():
    grid = ray.SpectralGrid(N=1, n=512, L=64.0)
    tg = ext.tgrid_for(P1, grid, m_t=512)
    alpha = 0.125
    lam = specfun.lambda_of_alpha(alpha, P1)
    V = full_pole(P1, lam)
    ups = ext.build_upsilon(alpha, P1, grid, tg)
    vtil = np.abs(ray.cell_averages(V, grid))
    eps, ver = ext.largest_passing_epsilon(ups, V, vtil, [0.1, 0.3, 0.45, 0.8])
    assert eps == 0.45
    assert ver.passed
    assert ver.bound == pytest.approx(0.45 / 1.45)
    # all-fail grid degrades to the eps = 0 verdict
    eps0, ver0 = ext.largest_passing_epsilon(ups, V, vtil, [5.0])
    assert eps0 == 0.0
    assert ver0.bound == 0.0
