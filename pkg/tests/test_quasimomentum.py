"""Quasimomentum charts, k <-> w maps, gap densities, comb asymptotics."""

import numpy as np
import pytest
from scipy.integrate import quad

from hillwave.quasimomentum import (
    GapDomainError,
    asymptotic_residual,
    band_function,
    band_function_many,
    build_charts,
    exact_gap_integral,
    gap_density,
    inflection_point,
    k_of_w,
    p_prime_series,
    poisson_extension,
    w_of_k,
    w_of_k_many,
)


def test_free_charts_are_exact(free):
    # k = w, E = k^2: every chart column has a closed form.  The e_dot
    # column doubles as a regression check for the degenerate-edge
    # fallback, whose sign once silently poisoned the whole spline.
    _, bs, charts = free
    for n in charts.bands():
        ch = charts[n]
        # k = arccos(D) loses half the digits at the outermost grid nodes
        # (1 - |D| ~ eps there), hence the looser tolerance on k alone
        assert np.max(np.abs(ch.k - ch.w)) < 1e-6
        interior = np.abs(np.sin(ch.k)) > 1e-3
        assert np.max(np.abs(ch.k - ch.w)[interior]) < 1e-11
        assert np.max(np.abs(ch.e - ch.w**2)) < 1e-8
        assert np.max(np.abs(ch.e_dot - 2.0 * ch.w)) < 1e-8
        kq = np.linspace(n * np.pi + 0.05, (n + 1) * np.pi - 0.05, 21)
        assert np.max(np.abs(charts.spline(n, "e_dot")(kq) - 2 * kq)) < 5e-7
        assert np.max(np.abs(charts.spline(n, "e_ddot")(kq) - 2.0)) < 1e-7


def test_k_of_w_w_of_k_roundtrip(mathieu):
    _, bs, charts = mathieu
    rng = np.random.default_rng(3)
    for n in range(6):
        lo, hi = bs.bands[n]
        w = rng.uniform(lo + 0.02 * (hi - lo), hi - 0.02 * (hi - lo))
        k = k_of_w(bs, charts, w)
        assert n * np.pi < k < (n + 1) * np.pi
        assert w_of_k(bs, k) == pytest.approx(w, abs=1e-9)


def test_k_of_w_rejects_gaps(mathieu):
    _, bs, charts = mathieu
    glo, ghi = bs.gap_interval(1)
    with pytest.raises(GapDomainError):
        k_of_w(bs, charts, 0.5 * (glo + ghi))
    with pytest.raises(GapDomainError):
        k_of_w(bs, charts, bs.bands[-1][1] + 5.0)


def test_w_of_k_many_matches_scalar(mathieu):
    _, bs, charts = mathieu
    k = np.linspace(0.3, 3 * np.pi - 0.3, 17)
    k = k[np.abs(np.sin(k)) > 0.05]  # keep away from edges
    ws = w_of_k_many(bs, k, charts)
    for ki, wi in zip(k, ws):
        assert wi == pytest.approx(w_of_k(bs, float(ki)), abs=1e-8)


def test_band_function_derivatives_consistent(mathieu):
    # analytic E'(k), E''(k) against central differences of E itself
    _, bs, charts = mathieu
    h = 1e-4
    for k0 in (1.1, 4.4, 7.9):
        e, e_dot, e_ddot, _, limited = band_function_many(
            bs, [k0 - h, k0, k0 + h], charts
        )
        assert not limited.any()
        assert e_dot[1] == pytest.approx((e[2] - e[0]) / (2 * h), rel=2e-5, abs=2e-5)
        assert e_ddot[1] == pytest.approx(
            (e[2] - 2 * e[1] + e[0]) / h**2, rel=2e-3, abs=2e-3
        )


def test_band_function_scalar_entry(mathieu):
    _, bs, charts = mathieu
    v = band_function(bs, 1.3, charts)
    assert v.e == pytest.approx(w_of_k(bs, 1.3) ** 2, rel=1e-9)
    assert v.e_dot > 0  # E increases through every band


def test_inflection_point_unique_and_interior(mathieu):
    _, bs, charts = mathieu
    for n in (1, 2):
        k_star = inflection_point(bs, n, charts)
        assert k_star is not None
        assert n * np.pi < k_star < (n + 1) * np.pi
        assert charts[n].inflection_e3 < 0  # E'' falls through its zero
        # E'' holds both signs across the band: positive in the interior,
        # negative in the boundary layer at the open-gap edge
        col = charts[n].e_ddot
        assert np.any(col > 0) and np.any(col < 0)


def test_inflection_unresolvable_past_tiny_gaps(mathieu):
    # band 3 ends at a ~4e-8 gap; the negative-curvature layer it induces
    # is ~1e-6 wide in k, below what the charts resolve, so no sign change
    # is ever observed and the locator reports None rather than guessing
    _, bs, charts = mathieu
    assert inflection_point(bs, 3, charts) is None


@pytest.fixture(scope="module")
def mathieu_densities(mathieu):
    _, bs, _ = mathieu
    return bs, [gap_density(bs, n) for n in range(1, 9)]


def test_gap_density_positive_and_vanishing_at_edges(mathieu):
    _, bs, _ = mathieu
    den = gap_density(bs, 1)
    assert np.all(den.q >= 0)
    assert den.mass > 0
    lo, hi = bs.gap_interval(1)
    # q -> 0 like sqrt(dist) at both edges
    assert den.interpolate(lo) == pytest.approx(0.0, abs=1e-12)
    assert den.interpolate(hi) == pytest.approx(0.0, abs=1e-12)
    mid = den.interpolate(0.5 * (lo + hi))
    assert mid == pytest.approx(bs.slit_heights[1], rel=1e-3)
    assert den.bounds_ok


def test_empty_gap_density_is_trivial(free):
    _, bs, _ = free
    den = gap_density(bs, 2)
    assert den.t_nodes.size == 0 and den.mass == 0.0


def test_poisson_extension_reduces_to_q_on_axis(mathieu_densities):
    bs, dens = mathieu_densities
    glo, ghi = bs.gap_interval(1)
    u = 0.5 * (glo + ghi)
    q0 = poisson_extension(dens, u, 0.0).q
    assert q0 == pytest.approx(bs.slit_heights[1], rel=1e-3)
    # continuity down the v axis: the closed-form arctan split keeps the
    # Poisson quadrature honest even when v is far below the node spacing
    qv = poisson_extension(dens, u, 1e-7).q
    assert qv == pytest.approx(q0, abs=1e-6)


def test_poisson_extension_decays_off_axis(mathieu_densities):
    bs, dens = mathieu_densities
    glo, ghi = bs.gap_interval(1)
    u = 0.5 * (glo + ghi)
    q_on = poisson_extension(dens, u, 0.0).q
    i_far = sum(poisson_extension(dens, u, 50.0).i_n)
    assert i_far < 0.2 * q_on  # gap contribution spreads out and dilutes


def test_exact_gap_integral_vs_quadrature():
    rng = np.random.default_rng(17)
    for _ in range(8):
        a = rng.uniform(1.0, 5.0)
        b = a + rng.uniform(0.1, 2.0)
        side = rng.choice([-1.0, 1.0])
        u = a - rng.uniform(0.3, 2.0) if side < 0 else b + rng.uniform(0.3, 2.0)
        for power in (3, 4):
            ref, err = quad(
                lambda t: np.sqrt((t - a) * (b - t)) / (t - u) ** power,
                a,
                b,
                limit=400,
            )
            assert exact_gap_integral(a, b, u, power) == pytest.approx(
                ref, rel=1e-8, abs=1e-12
            )


def test_exact_gap_integral_rejects_interior_u():
    with pytest.raises(ValueError):
        exact_gap_integral(1.0, 2.0, 1.5, 3)
    with pytest.raises(ValueError):
        exact_gap_integral(1.0, 2.0, 3.0, 5)


def test_p_prime_series_matches_k_derivative(mathieu, mathieu_densities):
    # dk/dw at a band-interior point, two very different routes: the
    # gap-integral series against a central difference of k(w)
    _, bs, charts = mathieu
    _, dens = mathieu_densities
    lo, hi = bs.bands[2]
    u = lo + 0.47 * (hi - lo)
    h = 1e-5
    fd = (k_of_w(bs, charts, u + h) - k_of_w(bs, charts, u - h)) / (2 * h)
    assert p_prime_series(bs, dens, u) == pytest.approx(fd, rel=1e-8)


def test_p_prime_series_refuses_near_gap_edges(mathieu_densities):
    bs, dens = mathieu_densities
    lo, hi = bs.bands[1]
    with pytest.raises(ValueError, match="gap lengths"):
        p_prime_series(bs, dens, hi - 1e-9)


def test_asymptotic_residual_shrinks_with_w(mathieu_deep):
    pot, bs = mathieu_deep
    w = np.array([w_of_k(bs, (n + 0.5) * np.pi) for n in (10, 20, 30, 40)])
    r0 = asymptotic_residual(bs, None, 0, w)
    assert np.all(np.abs(r0.residual) < 1e-3)
    assert np.abs(r0.residual[-1]) < np.abs(r0.residual[0])
    # scaled residual |r| w^3 stays bounded once Q0/w is removed (N=1 adds
    # nothing: odd moments vanish)
    r1 = asymptotic_residual(bs, None, 1, w)
    assert np.all(r1.scaled < 10.0)


def test_charts_cover_requested_bands(mathieu):
    _, bs, charts = mathieu
    assert sorted(charts.bands()) == list(range(len(bs.bands)))
    ch = charts[3]
    assert ch.w_left == pytest.approx(bs.bands[3][0])
    assert ch.w_right == pytest.approx(bs.bands[3][1])
    assert np.all(np.diff(ch.k) > 0)


def test_build_charts_subset(mathieu):
    _, bs, _ = mathieu
    sub = build_charts(bs, bands=[0, 2], locate_inflections=False)
    assert sorted(sub.bands()) == [0, 2]
    with pytest.raises(KeyError):
        sub[1]
