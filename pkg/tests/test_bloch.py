"""Bloch pairs, Weyl functions, normalized products, identity residuals."""

import numpy as np
import pytest

from hillwave.bloch import (
    EdgeProximityError,
    band_amplitude,
    bloch_pair,
    fourier_coeffs,
    identity_suite,
    product_kernel_factor,
    weyl_m,
)
from hillwave.quasimomentum import GapDomainError


def _interior(bs, n, frac=0.37):
    lo, hi = bs.bands[n]
    return lo + frac * (hi - lo)


def test_free_bloch_is_plane_wave(free):
    pot, bs, _ = free
    w = 6.6
    ev = bloch_pair(pot, bs, w)
    assert ev.band == 2
    assert ev.k == pytest.approx(w, abs=1e-9)
    # theta + m phi = e^{iwx} forces m = iw, N^2 = 1, m0 = 1
    assert ev.m_plus == pytest.approx(1j * w, abs=1e-7)
    assert ev.m_minus == pytest.approx(-1j * w, abs=1e-7)
    assert ev.n_squared == pytest.approx(1.0, abs=1e-9)
    assert np.max(np.abs(ev.m0_plus - 1.0)) < 1e-8
    assert np.max(np.abs(ev.bloch_plus - np.exp(1j * w * ev.x))) < 1e-8
    assert ev.quasi_defect < 1e-9


def test_weyl_consistency_with_bloch_pair(mathieu):
    pot, bs, _ = mathieu
    rng = np.random.default_rng(11)
    for n in range(5):
        w = _interior(bs, n, rng.uniform(0.15, 0.85))
        mp, mm = weyl_m(pot, bs, w)
        assert mm == pytest.approx(np.conj(mp), abs=1e-12)
        assert mp.imag > 0  # upper half plane on the band interior
        ev = bloch_pair(pot, bs, w)
        assert ev.m_plus == pytest.approx(mp, abs=1e-10)


def test_bloch_pair_structure_on_band(mathieu):
    pot, bs, _ = mathieu
    ev = bloch_pair(pot, bs, _interior(bs, 1))
    # real coefficients: the two Bloch branches are complex conjugates
    assert np.max(np.abs(ev.bloch_minus - np.conj(ev.bloch_plus))) < 1e-12
    assert ev.n_squared.real > 0
    assert abs(ev.n_squared.imag) < 1e-10
    assert ev.quasi_defect < 1e-8
    # |m0_+| = |m0_-| pointwise, and both integrate to unit product mass
    assert np.max(np.abs(np.abs(ev.m0_plus) - np.abs(ev.m0_minus))) < 1e-10
    assert np.mean(ev.m0_plus * ev.m0_minus).real == pytest.approx(1.0, abs=1e-9)


def test_bloch_pair_custom_grid_and_validation(mathieu):
    pot, bs, _ = mathieu
    w = _interior(bs, 2)
    ref = bloch_pair(pot, bs, w)
    sub = bloch_pair(pot, bs, w, x_grid=np.array([0.0, 0.25, 0.5, 0.75]))
    ix = np.searchsorted(ref.x, sub.x)
    assert np.max(np.abs(ref.bloch_plus[ix] - sub.bloch_plus)) < 1e-9
    with pytest.raises(ValueError):
        bloch_pair(pot, bs, w, x_grid=np.array([0.5, 0.25]))
    with pytest.raises(ValueError):
        bloch_pair(pot, bs, w, x_grid=np.array([0.0, 1.5]))


def test_bloch_rejects_gap_and_foreign_potential(mathieu, free):
    pot, bs, _ = mathieu
    free_pot, _, _ = free
    glo, ghi = bs.gap_interval(1)
    with pytest.raises(GapDomainError):
        bloch_pair(pot, bs, 0.5 * (glo + ghi))
    with pytest.raises(ValueError):
        bloch_pair(free_pot, bs, 1.0)


def test_weyl_raises_at_dirichlet_zero(free):
    # free phi(1, w) = sin(w)/w vanishes at every band junction w = n pi
    pot, bs, _ = free
    with pytest.raises(EdgeProximityError):
        weyl_m(pot, bs, 2 * np.pi + 1e-10)


def test_band_amplitude_matches_bloch_products(mathieu):
    pot, bs, _ = mathieu
    w = _interior(bs, 1, 0.3)
    ev = bloch_pair(pot, bs, w)
    ix, iy = 37, 411
    out = band_amplitude(bs, 1, [w], float(ev.x[ix]), float(ev.x[iy]))
    want = ev.m0_plus[ix] * ev.m0_minus[iy]
    assert out["b"][0] == pytest.approx(want, abs=1e-9)
    assert out["k"][0] == pytest.approx(ev.k, abs=1e-10)


def test_band_amplitude_finite_where_weyl_fails(mathieu):
    # just inside a band edge the Weyl quotient blows up (phi(1) -> 0 at
    # the Dirichlet edge) but the rescaled amplitude stays finite
    pot, bs, _ = mathieu
    hits = 0
    for n, w_edge in ((0, bs.bands[0][1]), (1, bs.bands[1][0])):
        w = w_edge - 1e-11 if n == 0 else w_edge + 1e-11
        try:
            weyl_m(pot, bs, w)
        except EdgeProximityError:
            hits += 1
        out = band_amplitude(bs, n, [w], 0.31, 0.07)
        assert np.all(np.isfinite(out["b"]))
        assert abs(out["b"][0]) < 50.0
    assert hits >= 1  # the Dirichlet eigenvalue sits on one side of the gap


def test_band_amplitude_reduces_x_mod_one(mathieu):
    _, bs, _ = mathieu
    w = [_interior(bs, 2, 0.61)]
    a = band_amplitude(bs, 2, w, 0.31, 0.07)
    b = band_amplitude(bs, 2, w, 1.31, -0.93)
    assert b["b"][0] == pytest.approx(a["b"][0], rel=1e-12)


def test_product_kernel_factor_grid(mathieu):
    pot, bs, _ = mathieu
    w = _interior(bs, 0, 0.55)
    ev = bloch_pair(pot, bs, w, x_grid=np.linspace(0.0, 1.0, 129))
    prod = product_kernel_factor(ev, ev)
    assert prod.shape == (129, 129)
    want = ev.m0_plus[5] * ev.m0_minus[60]
    assert prod[5, 60] == pytest.approx(want, abs=1e-10)
    other = bloch_pair(pot, bs, _interior(bs, 0, 0.56))
    with pytest.raises(ValueError):
        product_kernel_factor(ev, other)


def test_identity_suite_residuals_small(mathieu):
    pot, bs, _ = mathieu
    rng = np.random.default_rng(5)
    ws = [_interior(bs, n, rng.uniform(0.1, 0.9)) for n in range(6) for _ in (0, 1)]
    rep = identity_suite(pot, bs, ws)
    assert rep.worst_edot < 1e-8
    assert rep.worst_dprime < 1e-8
    assert rep.worst_product < 1e-8


def test_integral_laws_scaled_residuals_bounded(mathieu):
    # the large-k laws for int theta^2, k^2 int phi^2, 2k int theta phi:
    # residuals x k^2 stay bounded along the bands
    pot, bs, _ = mathieu
    ws = [_interior(bs, n, 0.5) for n in range(2, 12)]
    rep = identity_suite(pot, bs, ws)
    assert np.max(rep.scaled_theta2) < 10.0
    assert np.max(rep.scaled_phi2) < 10.0
    assert np.max(rep.scaled_theta_phi) < 10.0
    # and the raw residuals actually decay with k
    assert rep.res_theta2[-1] < rep.res_theta2[0]


def test_fourier_coeffs_concentrate_on_band_harmonics(mathieu):
    # high band: m0_+ is a small perturbation of 1, so the l = 0 line
    # carries almost all of the mass
    pot, bs, _ = mathieu
    ev = bloch_pair(pot, bs, _interior(bs, 8, 0.43))
    fc = fourier_coeffs(ev, L=4)
    assert fc.ell.tolist() == list(range(-4, 5))
    assert fc.concentration([0]) > 0.95
    assert fc.concentration(range(-4, 5)) > 0.999
    assert ev.fourier is fc
    with pytest.raises(ValueError):
        fourier_coeffs(ev, L=-1)


def test_free_fourier_single_line(free):
    pot, bs, _ = free
    ev = bloch_pair(pot, bs, 6.6)
    fc = fourier_coeffs(ev, L=3)
    assert abs(fc.m_plus[3] - 1.0) < 1e-9  # l = 0 entry
    off = np.abs(fc.m_plus[fc.ell != 0])
    assert np.max(off) < 1e-9
