"""Potential container: evaluation, serialization, moments."""

import json

import numpy as np
import pytest
from scipy.integrate import quad

from hillwave.potential import (
    PeriodicPotential,
    from_fourier,
    load_potential,
    moment_q0,
    moment_q2,
)


def test_eval_matches_explicit_series():
    rng = np.random.default_rng(7)
    for _ in range(20):
        nc = rng.integers(1, 6)
        ns = rng.integers(0, 5)
        a = rng.normal(size=nc)
        b = rng.normal(size=ns)
        pot = from_fourier(a, b)
        x = rng.uniform(-3, 3, size=11)
        ref = np.full(x.shape, a[0] if nc else 0.0)
        for j in range(1, nc):
            ref += a[j] * np.cos(2 * np.pi * j * x)
        for j in range(1, ns + 1):
            ref += b[j - 1] * np.sin(2 * np.pi * j * x)
        assert np.allclose(pot(x), ref, atol=1e-14)


def test_period_is_one():
    pot = from_fourier([0.3, 1.0, -0.5], [0.2])
    x = np.linspace(-2, 2, 37)
    assert np.allclose(pot(x + 1.0), pot(x), atol=1e-13)


def test_scalar_and_array_eval_agree():
    pot = from_fourier([0.0, 2.0])
    xs = [0.0, 0.25, 1.7]
    assert np.allclose([pot(x) for x in xs], pot(np.array(xs)))


def test_json_round_trip(tmp_path):
    pot = from_fourier([0.1, -1.5, 0.0, 2.25], [0.5, -0.125])
    path = tmp_path / "p.json"
    path.write_text(pot.to_json())
    back = load_potential(path)
    assert back.cosine_coeffs == pot.cosine_coeffs
    assert back.sine_coeffs == pot.sine_coeffs


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps([1, 2, 3]))
    with pytest.raises(ValueError):
        load_potential(path)
    path.write_text(json.dumps({"cosine": ["x"]}))
    with pytest.raises((ValueError, TypeError)):
        load_potential(path)


def test_is_zero_and_sup_bound():
    assert from_fourier([0.0]).is_zero
    assert not from_fourier([0.0, 1e-12]).is_zero
    pot = from_fourier([0.5, 2.0], [-1.0])
    grid = np.linspace(0, 1, 2001)
    assert pot.sup_bound() >= np.max(np.abs(pot(grid)))
    assert pot.sup_bound() == pytest.approx(3.5)


def test_shifted_by_moves_only_the_mean():
    pot = from_fourier([0.3, 2.0], [0.7])
    sh = pot.shifted_by(0.3 - 1.25)
    x = np.linspace(0, 1, 11)
    assert np.allclose(sh(x), pot(x) - (0.3 - 1.25), atol=1e-14)
    assert sh.cosine_coeffs[1:] == pot.cosine_coeffs[1:]
    assert sh.sine_coeffs == pot.sine_coeffs


def test_moments_against_quadrature():
    # Q0 = (1/2) int P, Q2 = (1/8) int P^2 over one period
    pot = from_fourier([0.8, 1.5, -0.3], [0.4, 0.0, 1.1])
    q0_num, _ = quad(pot, 0.0, 1.0, limit=200)
    q2_num, _ = quad(lambda x: pot(x) ** 2, 0.0, 1.0, limit=200)
    assert moment_q0(pot) == pytest.approx(q0_num / 2.0, abs=1e-12)
    assert moment_q2(pot) == pytest.approx(q2_num / 8.0, abs=1e-12)


def test_empty_series_is_zero_potential():
    pot = PeriodicPotential()
    assert pot.is_zero
    assert pot(0.37) == 0.0
    assert moment_q0(pot) == 0.0 and moment_q2(pot) == 0.0
