"""Fundamental solutions theta/phi of -u'' + P u = E u and the discriminant.

The single integration engine solves the Cauchy problems of the pair
(theta, phi) together with their derivatives in the energy E, vectorized
over many E values at once.  Derivatives in the spectral parameter w
(E = w^2) are obtained by the chain rule, never by finite differences:
the variational system

    u_d'' = (P - E) u_d - d * u_{d-1}        (u_d = d-th E-derivative)

is integrated alongside the base pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson, solve_ivp

from .potential import PeriodicPotential

__all__ = [
    "FundamentalPair",
    "DiscriminantValue",
    "IntegrationError",
    "fundamental_system",
    "fundamental_pair",
    "discriminant",
    "discriminant_many",
    "discriminant_e",
    "picard_series",
    "PicardSeries",
]

DEFAULT_RTOL = 1e-13
DEFAULT_ATOL = 1e-14


class IntegrationError(RuntimeError):
    """Adaptive integration of the fundamental system failed."""


@dataclass(frozen=True)
class FundamentalSystem:
    """Values of theta, phi, their x-derivatives and E-derivatives.

    Arrays have shape (order+1, nx, nE); index 0 along the first axis is the
    solution itself, index d its d-th derivative in E.  x always contains 1.0.
    """

    e_values: np.ndarray
    x: np.ndarray
    theta: np.ndarray
    theta_prime: np.ndarray
    phi: np.ndarray
    phi_prime: np.ndarray

    def at_one(self, name: str, d: int = 0) -> np.ndarray:
        arr = getattr(self, name)
        i = int(np.argmin(np.abs(self.x - 1.0)))
        return arr[d, i, :]

    def wronskian_defect(self) -> np.ndarray:
        """max over the grid of |theta phi' - theta' phi - 1| per energy."""
        w = self.theta[0] * self.phi_prime[0] - self.theta_prime[0] * self.phi[0]
        return np.max(np.abs(w - 1.0), axis=0)

    # Closed forms for the period-cell integrals of products of solutions:
    # for solutions u, v of -u'' + Pu = Eu with E-independent initial data,
    # d/dx [u' v_E - u v_E'] = u v, so the integral telescopes to x=1 values.
    def int_theta2(self) -> np.ndarray:
        return self.at_one("theta_prime") * self.at_one("theta", 1) - self.at_one(
            "theta"
        ) * self.at_one("theta_prime", 1)

    def int_phi2(self) -> np.ndarray:
        return self.at_one("phi_prime") * self.at_one("phi", 1) - self.at_one(
            "phi"
        ) * self.at_one("phi_prime", 1)

    def int_theta_phi(self) -> np.ndarray:
        return self.at_one("theta_prime") * self.at_one("phi", 1) - self.at_one(
            "theta"
        ) * self.at_one("phi_prime", 1)


def fundamental_system(
    pot: PeriodicPotential,
    e_values,
    order: int = 0,
    x_eval=None,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> FundamentalSystem:
    """Integrate the fundamental pair and E-derivatives up to `order`.

    Vectorized over e_values: one adaptive solve handles the whole batch
    (the step size is set by the stiffest row, accuracy by the RMS norm).
    """
    E = np.atleast_1d(np.asarray(e_values, dtype=float))
    nE = E.size
    nd = order + 1

    if x_eval is None:
        xs = np.array([1.0])
    else:
        xs = np.union1d(np.atleast_1d(np.asarray(x_eval, dtype=float)), [1.0])
    if xs.min() < 0.0 or xs.max() > 1.0 + 1e-15:
        raise ValueError("evaluation points must lie in [0, 1]")

    def rhs(x, y):
        V = pot.eval(x)
        Y = y.reshape(nd, 4, nE)
        dY = np.empty_like(Y)
        coeff = V - E
        for d in range(nd):
            th, thp, ph, php = Y[d]
            s_th = coeff * th
            s_ph = coeff * ph
            if d >= 1:
                s_th = s_th - d * Y[d - 1][0]
                s_ph = s_ph - d * Y[d - 1][2]
            dY[d, 0] = thp
            dY[d, 1] = s_th
            dY[d, 2] = php
            dY[d, 3] = s_ph
        return dY.ravel()

    y0 = np.zeros((nd, 4, nE))
    y0[0, 0] = 1.0  # theta(0) = 1
    y0[0, 3] = 1.0  # phi'(0) = 1

    sol = solve_ivp(
        rhs,
        (0.0, 1.0),
        y0.ravel(),
        method="DOP853",
        t_eval=xs,
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise IntegrationError(f"fundamental system integration failed: {sol.message}")

    Y = sol.y.reshape(nd, 4, nE, xs.size)  # -> (order, comp, E, x)
    Y = np.moveaxis(Y, 3, 1)  # -> (order, x, comp, E)
    return FundamentalSystem(
        e_values=E,
        x=xs,
        theta=Y[:, :, 0, :],
        theta_prime=Y[:, :, 1, :],
        phi=Y[:, :, 2, :],
        phi_prime=Y[:, :, 3, :],
    )


@dataclass(frozen=True)
class FundamentalPair:
    """theta/phi data at one spectral point w (E = w^2)."""

    w: float
    theta_1: float
    phi_1: float
    theta_prime_1: float
    phi_prime_1: float
    x_grid: np.ndarray | None = None
    theta: np.ndarray | None = None
    phi: np.ndarray | None = None
    theta_prime: np.ndarray | None = None
    phi_prime: np.ndarray | None = None
    wronskian_defect: float = 0.0


def fundamental_pair(
    pot: PeriodicPotential, w: float, x_grid=None, tol: float = 1e-10
) -> FundamentalPair:
    """Solve the pair at a single w > 0, optionally tracing an x-grid."""
    if not 0 < tol <= 1e-6:
        raise ValueError("tol must lie in (0, 1e-6]")
    sys = fundamental_system(
        pot, [w * w], order=0, x_eval=x_grid, rtol=tol, atol=tol * 1e-2
    )
    trace = x_grid is not None
    return FundamentalPair(
        w=float(w),
        theta_1=float(sys.at_one("theta")[0]),
        phi_1=float(sys.at_one("phi")[0]),
        theta_prime_1=float(sys.at_one("theta_prime")[0]),
        phi_prime_1=float(sys.at_one("phi_prime")[0]),
        x_grid=sys.x if trace else None,
        theta=sys.theta[0, :, 0] if trace else None,
        phi=sys.phi[0, :, 0] if trace else None,
        theta_prime=sys.theta_prime[0, :, 0] if trace else None,
        phi_prime=sys.phi_prime[0, :, 0] if trace else None,
        wronskian_defect=float(sys.wronskian_defect()[0]),
    )


@dataclass(frozen=True)
class DiscriminantValue:
    w: float
    d: float
    d_prime: float


def discriminant(pot: PeriodicPotential, w: float) -> DiscriminantValue:
    """D(w) = (theta(1) + phi'(1))/2 and D'(w) from the variational system."""
    d, dp = discriminant_many(pot, [w])
    return DiscriminantValue(w=float(w), d=float(d[0]), d_prime=float(dp[0]))


def discriminant_many(pot: PeriodicPotential, w_values, order: int = 1):
    """Vectorized (D, D', [D'']) over an array of w values.

    D'(w) = 2w dD/dE and D''(w) = 2 dD/dE + 4w^2 d^2D/dE^2.
    """
    w = np.atleast_1d(np.asarray(w_values, dtype=float))
    sys = fundamental_system(pot, w * w, order=order)
    d = 0.5 * (sys.at_one("theta") + sys.at_one("phi_prime"))
    out = [d]
    if order >= 1:
        d_e = 0.5 * (sys.at_one("theta", 1) + sys.at_one("phi_prime", 1))
        out.append(2.0 * w * d_e)
    if order >= 2:
        d_ee = 0.5 * (sys.at_one("theta", 2) + sys.at_one("phi_prime", 2))
        out.append(2.0 * d_e + 4.0 * w * w * d_ee)
    return tuple(out)


def discriminant_e(pot: PeriodicPotential, e_values, order: int = 1):
    """(D, dD/dE, ...) as functions of the energy E (valid below the spectrum too)."""
    E = np.atleast_1d(np.asarray(e_values, dtype=float))
    sys = fundamental_system(pot, E, order=order)
    return tuple(
        0.5 * (sys.at_one("theta", d) + sys.at_one("phi_prime", d))
        for d in range(order + 1)
    )


@dataclass(frozen=True)
class PicardSeries:
    """Partial sums of the iterated-integral series for theta and phi."""

    theta_partial: float
    phi_partial: float
    bound: float
    phi_bound: float
    theta_partials: np.ndarray
    phi_partials: np.ndarray

    def __iter__(self):
        return iter((self.theta_partial, self.phi_partial, self.bound))


def picard_term_bound(n: int, k: float, x: float, forcing_sup: float) -> float:
    """A-priori size of the (n+1)-th series term: x^n B^n / (|k|^{n+1} n!)."""
    return (x * forcing_sup) ** n / (abs(k) ** (n + 1) * float(math.factorial(n)))


def picard_series(
    pot: PeriodicPotential,
    k: float,
    E: float,
    n_terms: int,
    x: float = 1.0,
    grid: int = 16385,
) -> PicardSeries:
    """Series solution theta = cos(kx) + (1/k) int_0^x sin(k(x-s)) F theta ds.

    F(s) = P(s) + k^2 - E.  Each iterate is reduced to two cumulative
    integrals through sin(k(x-s)) = sin(kx)cos(ks) - cos(kx)sin(ks), so a
    term costs O(grid).  Returns partial sums after 0..n_terms corrections
    and the a-priori deviation bound (1/|k|) e^{(x/|k|) (||P||_inf + |k^2-E|)}.
    """
    if k == 0:
        raise ValueError("k must be nonzero")
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    s = np.linspace(0.0, x, grid)
    F = np.asarray(pot.eval(s), dtype=float) + (k * k - E)
    cos_ks = np.cos(k * s)
    sin_ks = np.sin(k * s)

    def step(cur):
        fc = F * cur
        C = cumulative_simpson(cos_ks * fc, x=s, initial=0.0)
        S = cumulative_simpson(sin_ks * fc, x=s, initial=0.0)
        return (sin_ks * C - cos_ks * S) / k

    theta_terms = [cos_ks.copy()]
    phi_terms = [sin_ks / k]
    for _ in range(n_terms):
        theta_terms.append(step(theta_terms[-1]))
        phi_terms.append(step(phi_terms[-1]))

    theta_partials = np.cumsum([t[-1] for t in theta_terms])
    phi_partials = np.cumsum([p[-1] for p in phi_terms])
    B = pot.sup_bound() + abs(k * k - E)
    bound = np.exp(x * B / abs(k)) / abs(k)
    return PicardSeries(
        theta_partial=float(theta_partials[-1]),
        phi_partial=float(phi_partials[-1]),
        bound=float(bound),
        phi_bound=float(bound / abs(k)),
        theta_partials=theta_partials,
        phi_partials=phi_partials,
    )
