"""Bloch waves, Weyl functions, and the band normalization N^2(w).

On a band interior the two bounded wave solutions of -u'' + P u = w^2 u are
phi~_pm = theta + m_pm phi with Weyl constants

    m_pm(w) = [ (phi'(1) - theta(1))/2  +-  i sin k ] / phi(1),

and phi~_pm(x) = e^{+-ikx} xi_pm(x) with xi_pm periodic.  The normalization
N^2 = int_0^1 phi~_+ phi~_- > 0 turns xi_pm/N into the unit Bloch factors
m0_pm whose product is the propagator amplitude.  Near a band edge phi(1)
can degenerate (Dirichlet spectrum sits in the gap closures), so all kernel
work goes through the phi(1)^2-rescaled product where the 1/phi(1) poles of
m_pm cancel identically.

Everything below evaluates in the shifted frame of the BandStructure
(spectrum in [0, inf), w = sqrt E).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .floquet import fundamental_system
from .potential import PeriodicPotential
from .spectrum import BandStructure
from .quasimomentum import GapDomainError, _derive_band_quantities, _sample_raw

__all__ = [
    "EdgeProximityError",
    "BlochEvaluation",
    "FourierCoefficients",
    "IdentityReport",
    "weyl_m",
    "bloch_pair",
    "fourier_coeffs",
    "identity_suite",
    "product_kernel_factor",
    "band_amplitude",
]

# |phi(1,w)| below this multiple of the numerator scale means the Weyl
# quotient is a ratio of two vanishing quantities; callers should switch to
# the rescaled product path (band_amplitude), where the pole cancels.
EDGE_PHI_FACTOR = 1e-8


class EdgeProximityError(ValueError):
    """phi(1, w) too close to zero for the Weyl quotient at this w."""


def _check_potential(pot: PeriodicPotential, bs: BandStructure) -> None:
    if pot != bs.potential and pot != bs.shifted_potential:
        raise ValueError(
            "potential does not match the one the band structure was built from"
        )


def _band_index(bs: BandStructure, w: float) -> int:
    n = bs.band_of(w)
    if n is None:
        g = bs.gap_of(w)
        where = f"inside gap {g}" if g is not None else "outside the computed range"
        raise GapDomainError(f"w={w:.12g} is {where}; Bloch waves live on bands")
    return int(n)


def _weyl_from_end_data(der, i=0):
    """m_pm from a _derive_band_quantities record; raises near phi(1)=0."""
    alpha = float(der["alpha_bar"][i])
    rho = float(der["rho"][i])
    s = float(der["s"][i])
    if abs(rho) < EDGE_PHI_FACTOR * (1.0 + abs(alpha) + abs(s)):
        raise EdgeProximityError(
            f"|phi(1)|={abs(rho):.3e} is below the edge-proximity threshold; "
            "evaluate the normalized product via band_amplitude instead"
        )
    m_plus = (alpha + 1j * s) / rho
    m_minus = (alpha - 1j * s) / rho
    return m_plus, m_minus


def weyl_m(pot: PeriodicPotential, bs: BandStructure, w: float):
    """Weyl values (m_plus, m_minus) at a band-interior w.

    sin k comes from the same discriminant evaluation (sin k = sqrt(1-D^2)
    with the parity of the band), so cos k = D and this m_pm are mutually
    consistent by construction.
    """
    _check_potential(pot, bs)
    n = _band_index(bs, float(w))
    rec = _sample_raw(bs.shifted_potential, np.array([float(w)]), order=1)
    der = _derive_band_quantities(rec, n)
    return _weyl_from_end_data(der)


@dataclass
class BlochEvaluation:
    """phi~_pm and the normalized factors m0_pm sampled on an x-grid."""

    w: float
    k: float
    band: int
    m_plus: complex
    m_minus: complex
    n_squared: complex
    x: np.ndarray
    bloch_plus: np.ndarray
    bloch_minus: np.ndarray
    m0_plus: np.ndarray
    m0_minus: np.ndarray
    quasi_defect: float  # transfer-matrix defect of phi~(1) = e^{ik} phi~(0)
    fourier: "FourierCoefficients | None" = None


def _grid_is_periodic_uniform(x: np.ndarray) -> bool:
    if x.size < 2 or x[0] != 0.0 or x[-1] >= 1.0:
        return False
    return bool(np.allclose(np.diff(x), 1.0 / x.size, rtol=0.0, atol=1e-12))


def _assemble(pot, bs, w, n, x_grid):
    rec = _sample_raw(pot, np.array([w]), order=1, x_eval=x_grid)
    der = _derive_band_quantities(rec, n)
    m_plus, m_minus = _weyl_from_end_data(der)
    k = float(der["k"][0])
    sys = rec["system"]
    nx = x_grid.size
    # fundamental_system appends x=1; the first nx rows are the grid proper
    theta = sys.theta[0][:nx, 0]
    phi = sys.phi[0][:nx, 0]
    bloch_plus = theta + m_plus * phi
    bloch_minus = theta + m_minus * phi

    if _grid_is_periodic_uniform(x_grid):
        n_squared = complex(np.mean(bloch_plus * bloch_minus))
    elif x_grid[0] == 0.0 and x_grid[-1] == 1.0 and x_grid.size >= 64:
        n_squared = complex(np.trapezoid(bloch_plus * bloch_minus, x_grid))
    else:
        # the grid cannot support the N^2 quadrature (sparse or partial);
        # fall back on the monodromy trace identities, which need no grid
        n_squared = complex(der["rho2_nsq"][0] / der["rho"][0] ** 2)

    # quasi-periodicity defect from the monodromy data at x = 1
    theta1, phi1 = float(rec["theta1"][0]), float(rec["phi1"][0])
    theta_p1, phi_p1 = float(rec["theta_p1"][0]), float(rec["phi_p1"][0])
    defect = 0.0
    for m, sgn in ((m_plus, 1.0), (m_minus, -1.0)):
        mult = np.exp(sgn * 1j * k)
        end_val = theta1 + m * phi1
        end_der = theta_p1 + m * phi_p1
        defect = max(
            defect,
            abs(end_val - mult) / (1.0 + abs(m)),
            abs(end_der - mult * m) / (1.0 + abs(m)),
        )
    return k, m_plus, m_minus, n_squared, bloch_plus, bloch_minus, float(defect)


def bloch_pair(
    pot: PeriodicPotential, bs: BandStructure, w: float, x_grid=None
) -> BlochEvaluation:
    """Evaluate phi~_pm, N^2 and the normalized factors m0_pm at one w.

    With x_grid=None a uniform periodic grid is used, doubled from 1024
    points until the N^2 quadrature is stable to 1e-10 (the integrand is
    smooth and periodic, so the trapezoid rule converges spectrally and the
    loop exits almost immediately).
    """
    _check_potential(pot, bs)
    w = float(w)
    n = _band_index(bs, w)
    pot_sh = bs.shifted_potential

    if x_grid is None:
        prev = None
        for m_pts in (1024, 2048, 4096, 8192):
            grid = np.arange(m_pts) / m_pts
            out = _assemble(pot_sh, bs, w, n, grid)
            if prev is not None and abs(out[3] - prev) <= 1e-10 * max(
                1.0, abs(out[3])
            ):
                break
            prev = out[3]
    else:
        grid = np.asarray(x_grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise ValueError("x_grid must be strictly increasing, with >= 2 points")
        if grid[0] < 0.0 or grid[-1] > 1.0:
            raise ValueError("x_grid must lie inside [0, 1]")
        out = _assemble(pot_sh, bs, w, n, grid)

    k, m_plus, m_minus, n_squared, bloch_plus, bloch_minus, defect = out
    if n_squared.real <= 0.0:
        raise RuntimeError(
            f"N^2 = {n_squared:.6g} not positive at w={w:.12g}; this breaks the "
            "band-interior normalization and indicates an internal inconsistency"
        )
    n_val = np.sqrt(n_squared.real)
    xi_plus = np.exp(-1j * k * grid) * bloch_plus
    xi_minus = np.exp(1j * k * grid) * bloch_minus
    return BlochEvaluation(
        w=w,
        k=k,
        band=n,
        m_plus=m_plus,
        m_minus=m_minus,
        n_squared=n_squared,
        x=grid,
        bloch_plus=bloch_plus,
        bloch_minus=bloch_minus,
        m0_plus=xi_plus / n_val,
        m0_minus=xi_minus / n_val,
        quasi_defect=defect,
    )


@dataclass
class FourierCoefficients:
    """Trapezoid-rule Fourier coefficients of the periodic factors m0_pm."""

    ell: np.ndarray
    m_plus: np.ndarray
    m_minus: np.ndarray

    def concentration(self, harmonics) -> float:
        """Fraction of the m0_plus L^2 mass carried by the given harmonics."""
        total = float(np.sum(np.abs(self.m_plus) ** 2))
        sel = np.isin(self.ell, np.asarray(harmonics, dtype=int))
        return float(np.sum(np.abs(self.m_plus[sel]) ** 2) / total)


def fourier_coeffs(ev: BlochEvaluation, L: int) -> FourierCoefficients:
    """Coefficients m^_pm(l) = int_0^1 m0_pm(x) e^{-2 pi i l x} dx, |l| <= L."""
    if L < 0:
        raise ValueError("L must be nonnegative")
    m_pts = ev.x.size
    if m_pts < 8 * max(L, 1):
        raise ValueError(f"grid of {m_pts} points is too coarse for L={L} (need >= 8L)")
    ell = np.arange(-L, L + 1)
    if _grid_is_periodic_uniform(ev.x):
        c_plus = np.fft.fft(ev.m0_plus) / m_pts
        c_minus = np.fft.fft(ev.m0_minus) / m_pts
        coef_p = c_plus[np.mod(ell, m_pts)]
        coef_m = c_minus[np.mod(ell, m_pts)]
    else:
        phase = np.exp(-2j * np.pi * ell[:, None] * ev.x[None, :])
        coef_p = np.trapezoid(phase * ev.m0_plus[None, :], ev.x, axis=1)
        coef_m = np.trapezoid(phase * ev.m0_minus[None, :], ev.x, axis=1)
    out = FourierCoefficients(ell=ell, m_plus=coef_p, m_minus=coef_m)
    ev.fourier = out
    return out


# ---------------------------------------------------------------------------
# identity suite: the same quantities along two independent routes


@dataclass
class IdentityReport:
    """Relative residuals of the band identities at each sample.

    res_edot      : Edot (discriminant route)  vs  2 sin k / (phi(1) N^2)
    res_dprime    : D'(w)                      vs  -w phi(1) N^2
    res_product   : int m0_+ m0_- dx = 1, with N^2 on the quadrature side and
                    the monodromy trace identities on the normalization side
    res_theta2 / res_phi2 / res_theta_phi : large-k integral laws
        |int theta^2 - 1/2 - sin(2k)/(4k)|,
        |k^2 int phi^2 - 1/2 + sin(2k)/(4k)|,
        |2k int theta phi - (1 - cos 2k)/(2k)|,
    each reported raw and scaled by k^2 (the law says scaled stays bounded).
    """

    w: np.ndarray
    k: np.ndarray
    band: np.ndarray
    res_edot: np.ndarray
    res_dprime: np.ndarray
    res_product: np.ndarray
    res_theta2: np.ndarray
    res_phi2: np.ndarray
    res_theta_phi: np.ndarray

    @property
    def scaled_theta2(self) -> np.ndarray:
        return self.res_theta2 * self.k**2

    @property
    def scaled_phi2(self) -> np.ndarray:
        return self.res_phi2 * self.k**2

    @property
    def scaled_theta_phi(self) -> np.ndarray:
        return self.res_theta_phi * self.k**2

    @property
    def worst_edot(self) -> float:
        return float(np.max(self.res_edot))

    @property
    def worst_dprime(self) -> float:
        return float(np.max(self.res_dprime))

    @property
    def worst_product(self) -> float:
        return float(np.max(self.res_product))


def identity_suite(
    pot: PeriodicPotential, bs: BandStructure, w_samples, grid_points: int = 2048
) -> IdentityReport:
    """Residuals of the Edot / D' / normalization / integral identities.

    The left sides come from the discriminant flow (D, D', trace-identity
    integrals); the right sides from grid quadrature of the Bloch pair, so
    each residual compares two genuinely different computations.
    """
    _check_potential(pot, bs)
    ws = np.atleast_1d(np.asarray(w_samples, dtype=float))
    bands = np.empty(ws.size, dtype=int)
    for i, wv in enumerate(ws):
        bands[i] = _band_index(bs, float(wv))

    grid = np.arange(grid_points) / grid_points
    rec = _sample_raw(bs.shifted_potential, ws, order=1, x_eval=grid)
    der = _derive_band_quantities(rec, bands)
    sys = rec["system"]
    theta = sys.theta[0][:grid_points, :]  # (nx, nw)
    phi = sys.phi[0][:grid_points, :]

    alpha = der["alpha_bar"]
    rho = der["rho"]
    s = der["s"]
    k = der["k"]
    # phi~_+ phi~_- = theta^2 + 2(alpha/rho) theta phi + ((alpha^2+s^2)/rho^2) phi^2
    # (the imaginary parts cancel algebraically, so the mean is real)
    n2_quad = np.mean(
        theta**2
        + (2.0 * alpha / rho) * theta * phi
        + ((alpha**2 + s**2) / rho**2) * phi**2,
        axis=0,
    )
    n2_trace = der["rho2_nsq"] / rho**2

    res_edot = np.abs(2.0 * s / (rho * n2_quad) / der["e_dot"] - 1.0)
    res_dprime = np.abs((-ws * rho * n2_quad) / rec["d_prime"] - 1.0)
    res_product = np.abs(n2_quad / n2_trace - 1.0)

    res_theta2 = np.abs(rec["int_theta2"] - 0.5 - np.sin(2 * k) / (4 * k))
    res_phi2 = np.abs(k**2 * rec["int_phi2"] - 0.5 + np.sin(2 * k) / (4 * k))
    res_theta_phi = np.abs(
        2 * k * rec["int_theta_phi"] - (1.0 - np.cos(2 * k)) / (2 * k)
    )
    return IdentityReport(
        w=ws,
        k=k,
        band=bands,
        res_edot=res_edot,
        res_dprime=res_dprime,
        res_product=res_product,
        res_theta2=res_theta2,
        res_phi2=res_phi2,
        res_theta_phi=res_theta_phi,
    )


# ---------------------------------------------------------------------------
# normalized products (the kernel amplitude)


def product_kernel_factor(ev_x: BlochEvaluation, ev_y: BlochEvaluation):
    """m0_+(x, k) m0_-(y, k) over the two grids, via the N^2-scaled product.

    Computed as e^{-ik(x-y)} phi~_+(x) phi~_-(y) / N^2, which needs no square
    root of N^2 and no branch bookkeeping.  Returns a (len(x), len(y)) array,
    collapsed to a scalar when both grids are single points.
    """
    if abs(ev_x.w - ev_y.w) > 1e-10 * (1.0 + abs(ev_x.w)):
        raise ValueError("evaluations must share the same w")
    k = ev_x.k
    prod = (
        ev_x.bloch_plus[:, None]
        * ev_y.bloch_minus[None, :]
        / ev_x.n_squared
        * np.exp(-1j * k * (ev_x.x[:, None] - ev_y.x[None, :]))
    )
    if prod.size == 1:
        return complex(prod[0, 0])
    return prod


def band_amplitude(bs: BandStructure, n: int, w, x: float, y: float) -> dict:
    """m0_+(x,k) m0_-(y,k) for fixed (x, y), batched over w in band n.

    Works in the phi(1)^2-rescaled form

        b = e^{-ik(rx-ry)} [ r^2 th(x)th(y) + a r (th(x)ph(y) + ph(x)th(y))
              + i r s (ph(x)th(y) - th(x)ph(y)) + (a^2+s^2) ph(x)ph(y) ]
            / [ r^2 I_tt + 2 a r I_tp + (a^2+s^2) I_pp ]

    (r = phi(1), a = (phi'(1)-theta(1))/2, s = sin k, I_* the trace-identity
    integrals), finite at band edges where phi(1) -> 0.  x and y are reduced
    mod 1 first; m0_pm are periodic so the value is unchanged, and the full
    e^{ik(x-y)} carrier phase stays with the caller.
    """
    w = np.atleast_1d(np.asarray(w, dtype=float))
    rx = float(x - np.floor(x))
    ry = float(y - np.floor(y))
    pts = np.unique([rx, ry])
    rec = _sample_raw(bs.shifted_potential, w, order=1, x_eval=pts)
    der = _derive_band_quantities(rec, n)
    sys = rec["system"]
    ix = int(np.searchsorted(sys.x, rx))
    iy = int(np.searchsorted(sys.x, ry))
    th_x, ph_x = sys.theta[0][ix, :], sys.phi[0][ix, :]
    th_y, ph_y = sys.theta[0][iy, :], sys.phi[0][iy, :]

    a = der["alpha_bar"]
    r = der["rho"]
    s = der["s"]
    k = der["k"]
    num = (
        r * r * th_x * th_y
        + a * r * (th_x * ph_y + ph_x * th_y)
        + 1j * r * s * (ph_x * th_y - th_x * ph_y)
        + (a * a + s * s) * ph_x * ph_y
    )
    den = (
        r * r * rec["int_theta2"]
        + 2.0 * a * r * rec["int_theta_phi"]
        + (a * a + s * s) * rec["int_phi2"]
    )
    b = np.exp(-1j * k * (rx - ry)) * num / den
    return {
        "w": w,
        "e": der["e"],
        "k": k,
        "s": s,
        "b": b,
        "rho": r,
        "n2_scaled": den,
    }
