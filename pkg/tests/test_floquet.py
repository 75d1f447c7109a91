"""Fundamental pair, discriminant and the Picard series engine."""

import numpy as np
import pytest
from scipy.integrate import simpson

from hillwave.floquet import (
    discriminant,
    discriminant_e,
    discriminant_many,
    fundamental_pair,
    fundamental_system,
    picard_series,
    picard_term_bound,
)
from hillwave.potential import from_fourier

FREE = from_fourier([0.0])
GENERIC = from_fourier([0.4, 1.3, -0.6], [0.9, 0.25])


def test_free_pair_closed_form():
    # theta = cos(wx), phi = sin(wx)/w when P = 0
    x = np.linspace(0, 1, 257)
    for w in (0.7, 3.3, 11.0):
        fp = fundamental_pair(FREE, w, x_grid=x)
        assert np.max(np.abs(fp.theta - np.cos(w * x))) < 1e-9
        assert np.max(np.abs(fp.phi - np.sin(w * x) / w)) < 1e-9
        assert abs(fp.theta_prime_1 + w * np.sin(w)) < 1e-9
        assert fp.wronskian_defect < 1e-9


def test_initial_conditions():
    fp = fundamental_pair(GENERIC, 2.2, x_grid=np.linspace(0, 1, 9))
    assert fp.theta[0] == pytest.approx(1.0, abs=1e-13)
    assert fp.phi[0] == pytest.approx(0.0, abs=1e-13)
    assert fp.theta_prime[0] == pytest.approx(0.0, abs=1e-13)
    assert fp.phi_prime[0] == pytest.approx(1.0, abs=1e-13)


def test_wronskian_defect_random_potentials():
    rng = np.random.default_rng(11)
    for _ in range(6):
        pot = from_fourier(rng.normal(scale=1.5, size=4), rng.normal(scale=0.8, size=2))
        sys = fundamental_system(pot, rng.uniform(0.5, 80.0, size=7))
        assert np.max(sys.wronskian_defect()) < 1e-11


def test_free_discriminant_is_cos_w():
    w = np.array([0.5, 1.8, 4.0, 9.3, 20.0])
    d, dp = discriminant_many(FREE, w)
    assert np.max(np.abs(d - np.cos(w))) < 1e-11
    assert np.max(np.abs(dp + np.sin(w))) < 1e-10


def test_discriminant_derivative_vs_finite_difference():
    h = 1e-5
    for w in (1.1, 2.6, 7.4):
        val = discriminant(GENERIC, w)
        (dm,) = discriminant_many(GENERIC, [w - h], order=0)
        (dp,) = discriminant_many(GENERIC, [w + h], order=0)
        fd = (dp[0] - dm[0]) / (2 * h)
        assert val.d_prime == pytest.approx(fd, rel=1e-7, abs=1e-9)


def test_discriminant_e_chain_rule():
    # D'(w) = 2 w dD/dE
    w = 3.7
    (_, d_e) = discriminant_e(GENERIC, [w * w], order=1)
    assert discriminant(GENERIC, w).d_prime == pytest.approx(
        2 * w * d_e[0], rel=1e-10
    )


def test_discriminant_blows_up_below_spectrum():
    (d,) = discriminant_e(GENERIC, [-25.0], order=0)
    assert d[0] > 2.0  # cosh-type growth under the spectrum


def test_trace_integrals_match_quadrature():
    # the closed forms telescope E-derivative end data, so order >= 1
    x = np.linspace(0, 1, 4097)
    w = np.array([1.3, 5.2])
    sys = fundamental_system(GENERIC, w * w, order=1, x_eval=x)
    nx = sys.x.size
    for i in range(w.size):
        th = sys.theta[0][:nx, i]
        ph = sys.phi[0][:nx, i]
        assert sys.int_theta2()[i] == pytest.approx(
            simpson(th * th, x=sys.x), abs=1e-9
        )
        assert sys.int_phi2()[i] == pytest.approx(simpson(ph * ph, x=sys.x), abs=1e-9)
        assert sys.int_theta_phi()[i] == pytest.approx(
            simpson(th * ph, x=sys.x), abs=1e-9
        )


def test_picard_series_converges_to_ode():
    w = 9.0
    E = w * w
    ps = picard_series(GENERIC, k=w, E=E, n_terms=8)
    fp = fundamental_pair(GENERIC, w)
    assert ps.theta_partial == pytest.approx(fp.theta_1, abs=5e-8)
    assert ps.phi_partial == pytest.approx(fp.phi_1, abs=5e-8)
    # partial sums settle monotonically in scale: successive corrections shrink
    gaps = np.abs(np.diff(ps.theta_partials))
    assert gaps[-1] < gaps[0]


def test_picard_term_bound_decays_factorially():
    vals = [picard_term_bound(n, k=12.0, x=1.0, forcing_sup=4.0) for n in range(8)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[7] < 1e-6 * vals[0]


def test_rejects_points_outside_cell():
    with pytest.raises(ValueError):
        fundamental_system(GENERIC, [4.0], x_eval=[-0.1])
    with pytest.raises(ValueError):
        fundamental_system(GENERIC, [4.0], x_eval=[1.2])
