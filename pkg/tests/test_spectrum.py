"""Band edges: bracketing, refinement, and the Mathieu oracle.

scipy's mathieu_a/mathieu_b give the characteristic values of
y'' + (a - 2q cos 2v) y = 0; rescaling v = pi x maps our operator
-y'' + 2cos(2 pi x) y = E y onto q = 1/pi^2, E = pi^2 a.  The band
edges must then be pi^2 [a_0, b_1], pi^2 [a_1, b_2], ... -- a fully
independent check of the whole edge pipeline.
"""

import numpy as np
import pytest
from scipy.special import mathieu_a, mathieu_b

from hillwave.floquet import discriminant_e
from hillwave.potential import from_fourier
from hillwave.spectrum import EMPTY_GAP_TOL, band_edges, gap_height, hill_eigenvalues


def test_free_edges_at_multiples_of_pi(free):
    _, bs, _ = free
    for n, (lo, hi) in enumerate(bs.bands):
        assert lo == pytest.approx(n * np.pi, abs=1e-9)
        assert hi == pytest.approx((n + 1) * np.pi, abs=1e-9)
    assert all(g < EMPTY_GAP_TOL for g in bs.gap_lengths[1:])
    assert all(bs.empty[1:])
    assert bs.shift == pytest.approx(0.0, abs=1e-12)


def test_mathieu_edges_vs_scipy(mathieu):
    _, bs, _ = mathieu
    q = 1.0 / np.pi**2
    for n in range(6):
        # band n is [a_n, b_{n+1}] in Mathieu characteristic values
        lo_ref = np.pi**2 * mathieu_a(n, q)
        hi_ref = np.pi**2 * mathieu_b(n + 1, q)
        e_lo, e_hi = bs.e_interval(n)
        assert e_lo == pytest.approx(min(lo_ref, hi_ref), rel=1e-9, abs=1e-9)
        assert e_hi == pytest.approx(max(lo_ref, hi_ref), rel=1e-9, abs=1e-9)


def test_edges_are_ordered_and_consistent(mathieu):
    _, bs, _ = mathieu
    seq = []
    for n, lo, hi in bs.edges:
        assert hi >= lo - 1e-14
        seq.extend([lo, hi])
    assert all(b >= a - 1e-12 for a, b in zip(seq, seq[1:]))
    for n in range(1, bs.n_max + 1):
        lo, hi = bs.gap_interval(n)
        assert bs.gap_lengths[n] == pytest.approx(hi - lo, abs=1e-13)
    # bands fill the complement of the gaps
    for n in range(len(bs.bands) - 1):
        assert bs.bands[n][1] == pytest.approx(bs.gap_interval(n + 1)[0], abs=1e-13)
        assert bs.bands[n + 1][0] == pytest.approx(bs.gap_interval(n + 1)[1], abs=1e-13)


def test_edges_solve_discriminant_equation(mathieu):
    pot, bs, _ = mathieu
    spot = bs.shifted_potential
    for n in range(1, 5):
        lo, hi = bs.gap_interval(n)
        sign = 1.0 if n % 2 == 0 else -1.0
        (d,) = discriminant_e(spot, [lo * lo, hi * hi], order=0)
        assert np.max(np.abs(d - sign)) < 1e-9


def test_shift_is_the_ground_energy(mathieu):
    pot, bs, _ = mathieu
    (d,) = discriminant_e(pot, [bs.shift], order=0)
    assert d[0] == pytest.approx(1.0, abs=1e-10)
    (below,) = discriminant_e(pot, [bs.shift - 0.5], order=0)
    assert below[0] > 1.0  # strictly below the spectrum


def test_band_of_and_gap_of(mathieu):
    _, bs, _ = mathieu
    lo, hi = bs.bands[1]
    assert bs.band_of(0.5 * (lo + hi)) == 1
    glo, ghi = bs.gap_interval(1)
    assert bs.gap_of(0.5 * (glo + ghi)) == 1
    assert bs.band_of(0.5 * (glo + ghi)) is None
    assert bs.gap_of(0.5 * (lo + hi)) is None
    assert bs.band_of(-1.0) is None


def test_mathieu_gap_decay_and_flags(mathieu):
    _, bs, _ = mathieu
    g = np.array(bs.gap_lengths[1:])
    assert g[0] > g[1] > g[2] > g[3]  # factorially shrinking gaps
    assert not bs.empty[1] and not bs.empty[2]
    assert bs.resolved[1] and bs.resolved[2]


def test_slit_heights(mathieu):
    pot, bs, _ = mathieu
    for n in (1, 2, 3):
        h = gap_height(pot, bs, n)
        # arccosh(1+delta) ~ sqrt(2 delta) amplifies ODE noise near the
        # edges of tiny gaps, so the refit tolerance scales down with h
        assert h == pytest.approx(bs.slit_heights[n], rel=1e-3, abs=1e-12)
        assert h > 0
        # arccosh|D| at the gap midpoint is a lower bound for the max
        lo, hi = bs.gap_interval(n)
        mid = 0.5 * (lo + hi)
        sign = 1.0 if n % 2 == 0 else -1.0
        (d,) = discriminant_e(bs.shifted_potential, [mid * mid], order=0)
        assert h >= np.arccosh(max(1.0, sign * d[0])) - 1e-12
    # slit height scales like the gap length for thin gaps
    assert bs.slit_heights[4] < bs.slit_heights[1]


def test_hill_eigenvalues_bracket_edges(mathieu):
    pot, bs, _ = mathieu
    lam = hill_eigenvalues(pot, 0.0, 32)  # periodic:     D = +1 edges
    mu = hill_eigenvalues(pot, np.pi, 32)  # antiperiodic: D = -1 edges
    # gap 1 is antiperiodic, gap 2 periodic; compare in the original frame
    g1 = bs.gap_interval(1)
    assert mu[0] == pytest.approx(g1[0] ** 2 + bs.shift, rel=1e-8)
    assert mu[1] == pytest.approx(g1[1] ** 2 + bs.shift, rel=1e-8)
    g2 = bs.gap_interval(2)
    assert lam[1] == pytest.approx(g2[0] ** 2 + bs.shift, rel=1e-8)
    assert lam[2] == pytest.approx(g2[1] ** 2 + bs.shift, rel=1e-8)


def test_open_gap_potential_has_wide_gaps(open_gaps):
    # one open gap per harmonic of the potential
    _, bs, _ = open_gaps
    assert all(g > 0.01 for g in bs.gap_lengths[1:5])


def test_band_edges_rejects_bad_n_max():
    with pytest.raises(ValueError):
        band_edges(from_fourier([0.0, 1.0]), n_max=0)
