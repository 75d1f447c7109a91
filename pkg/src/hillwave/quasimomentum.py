"""Quasimomentum k(w), band functions E(k), gap densities and their calculus.

All derivative formulas are exact chain-rule consequences of cos k = D(w):

    dk/dw = -D'/sin k,   Edot = -2 w sin k / D',
    Eddot = 2 s^2/D'^2 - 2 w c/D' - 2 w s^2 D''/D'^3   (s = sin k, c = D),

with D', D'' taken from the variational ODE system, so no finite
differencing enters below third order.  E''' uses Richardson-extrapolated
central differences of the analytic Eddot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .floquet import discriminant_e, fundamental_system
from .potential import moment_q0, moment_q2
from .spectrum import EMPTY_GAP_TOL, BandStructure

__all__ = [
    "GapDomainError",
    "QuasimomentumChart",
    "ChartSet",
    "build_charts",
    "k_of_w",
    "w_of_k",
    "w_of_k_many",
    "BandFunctionValue",
    "band_function",
    "band_function_many",
    "inflection_point",
    "GapDensity",
    "gap_density",
    "PoissonExtension",
    "poisson_extension",
    "AsymptoticResidual",
    "asymptotic_residual",
    "exact_gap_integral",
    "p_prime_series",
]

CLAMP_TOL = 1e-12  # |D|-1 within this of 0 is treated as an edge value


class GapDomainError(ValueError):
    """Evaluation requested at a point where the map k(w) is not real."""


# ---------------------------------------------------------------------------
# raw band sampling


def _sample_raw(pot, w, order=2, x_eval=None):
    """Discriminant, its w-derivatives and monodromy end data at each w."""
    w = np.asarray(w, dtype=float)
    sys = fundamental_system(pot, w * w, order=order, x_eval=x_eval)
    th = sys.at_one("theta")
    php = sys.at_one("phi_prime")
    d = 0.5 * (th + php)
    d_e = 0.5 * (sys.at_one("theta", 1) + sys.at_one("phi_prime", 1))
    rec = {
        "w": w,
        "system": sys,
        "d": d,
        "d_prime": 2.0 * w * d_e,
        "theta1": th,
        "phi1": sys.at_one("phi"),
        "theta_p1": sys.at_one("theta_prime"),
        "phi_p1": php,
        "int_theta2": sys.int_theta2(),
        "int_phi2": sys.int_phi2(),
        "int_theta_phi": sys.int_theta_phi(),
    }
    if order >= 2:
        d_ee = 0.5 * (sys.at_one("theta", 2) + sys.at_one("phi_prime", 2))
        rec["d_second"] = 2.0 * d_e + 4.0 * (w * w) * d_ee
    return rec


def _derive_band_quantities(rec, n):
    """k, E and its first two k-derivatives plus Bloch normalization data."""
    w = rec["w"]
    d = rec["d"]
    dp = rec["d_prime"]
    n = np.broadcast_to(np.asarray(n), w.shape)
    parity = np.where(n % 2 == 0, 1.0, -1.0)
    arg = np.clip(parity * d, -1.0, 1.0)
    kappa = np.arccos(arg)
    k = n * np.pi + kappa
    s = parity * np.sin(kappa)  # equals sin k
    beta2 = np.maximum(0.0, 1.0 - d * d)

    with np.errstate(divide="ignore", invalid="ignore"):
        e_dot = -2.0 * w * s / dp
        e_ddot = (
            2.0 * s * s / dp**2 - 2.0 * w * d / dp - 2.0 * w * s * s * rec.get(
                "d_second", np.zeros_like(d)
            ) / dp**3
        )
    # 0/0 only at edges of *empty* gaps, where sin k and D' vanish together;
    # differentiating cos kappa = parity*D twice there gives
    # (dkappa/dw)^2 = -D*D'' (D = +-1 kills the parity), and the band
    # function is smooth across the closed gap.  The sin k floor sits
    # above the ~sqrt(2e-13) noise of arccos(clip(D)).
    degenerate = (np.abs(s) < 1e-6) & (np.abs(dp) < 1e-7)
    if np.any(degenerate):
        dsec = rec.get("d_second")
        if dsec is None:
            raise ValueError("order-2 data required at empty-gap edges")
        kp = np.sqrt(np.maximum(-d * dsec, 1e-300))
        e_dot = np.where(degenerate, 2.0 * w / kp, e_dot)
        e_ddot = np.where(degenerate, np.nan, e_ddot)

    alpha_bar = 0.5 * (rec["phi_p1"] - rec["theta1"])
    rho = rec["phi1"]
    rho2_nsq = (
        rho * rho * rec["int_theta2"]
        + 2.0 * rho * alpha_bar * rec["int_theta_phi"]
        + (alpha_bar * alpha_bar + beta2) * rec["int_phi2"]
    )
    return {
        "k": k,
        "e": w * w,
        "e_dot": e_dot,
        "e_ddot": e_ddot,
        "s": s,
        "alpha_bar": alpha_bar,
        "rho": rho,
        "rho2_nsq": rho2_nsq,
        "degenerate_edge": degenerate,
    }


# ---------------------------------------------------------------------------
# charts


@dataclass(frozen=True)
class QuasimomentumChart:
    """Sampled band data on a grid refined geometrically toward the edges."""

    n: int
    w: np.ndarray
    k: np.ndarray
    e: np.ndarray
    e_dot: np.ndarray
    e_ddot: np.ndarray
    e_dddot: np.ndarray
    d: np.ndarray
    d_prime: np.ndarray
    d_second: np.ndarray
    theta1: np.ndarray
    phi1: np.ndarray
    theta_p1: np.ndarray
    phi_p1: np.ndarray
    int_theta2: np.ndarray
    int_phi2: np.ndarray
    int_theta_phi: np.ndarray
    alpha_bar: np.ndarray
    rho2_nsq: np.ndarray
    markers: tuple  # section thresholds inside the band, in w
    w_left: float
    w_right: float
    gap_left: float
    gap_right: float
    inflection_k: float | None
    inflection_e3: float

    @property
    def n_sq(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.rho2_nsq / (self.phi1 * self.phi1)


class ChartSet:
    """Per-band charts plus lazily built splines in k."""

    def __init__(self, bs: BandStructure, charts: dict, c: float = 8.0):
        self.bs = bs
        self.charts = charts
        self.c = c
        self._splines: dict = {}

    def __getitem__(self, n: int) -> QuasimomentumChart:
        return self.charts[n]

    def __contains__(self, n: int) -> bool:
        return n in self.charts

    def bands(self):
        return sorted(self.charts)

    def spline(self, n: int, name: str) -> CubicSpline:
        key = (n, name)
        if key not in self._splines:
            ch = self.charts[n]
            y = getattr(ch, name)
            good = np.isfinite(y)
            self._splines[key] = CubicSpline(ch.k[good], y[good])
        return self._splines[key]


def _band_grid(bs: BandStructure, n: int, interior_points: int, c: float):
    """w samples: uniform interior + dyadic refinement toward nonempty edges."""
    A, B = bs.bands[n]
    width = B - A
    gl = bs.gap_lengths[n]
    gr = bs.gap_lengths[n + 1] if n + 1 <= bs.n_max else 0.0
    pts = set(np.linspace(A, B, interior_points))

    def refine(edge, toward_right, gap):
        if gap < EMPTY_GAP_TOL:
            return
        start = 0.25 * width
        floor = max(1e-3 * gap, 1e-12, 4.0 * np.finfo(float).eps * max(edge, 1.0))
        delta = start
        while delta > floor:
            pts.add(edge + delta if toward_right else edge - delta)
            delta *= 0.5
        pts.add(edge + floor if toward_right else edge - floor)

    refine(A, True, gl)
    refine(B, False, gr)

    markers = []
    if gl >= EMPTY_GAP_TOL:
        markers += [A + c * gl, A + gl**0.25]
    if gr >= EMPTY_GAP_TOL:
        markers += [B - gr**0.6, B - c * gr]
    markers = sorted({m for m in markers if A < m < B})
    pts.update(markers)

    grid = np.array(sorted(pts))
    keep = np.concatenate([[True], np.diff(grid) > 1e-13 * max(B, 1.0)])
    return grid[keep], tuple(markers)


def build_charts(
    bs: BandStructure,
    bands=None,
    c: float = 8.0,
    interior_points: int = 41,
    locate_inflections: bool = True,
) -> ChartSet:
    if bands is None:
        bands = range(len(bs.bands))
    charts = {}
    for n in bands:
        grid, markers = _band_grid(bs, n, interior_points, c)
        rec = _sample_raw(bs.shifted_potential, grid, order=2)
        der = _derive_band_quantities(rec, n)
        # drop samples whose k collides with a neighbor (w spacing below the
        # resolution of arccos(D) near barely-resolvable gap edges); scan
        # against the last retained value so noise dips cannot leave ties
        kvals = der["k"]
        keep = np.ones(kvals.size, dtype=bool)
        last = -np.inf
        for i, kv in enumerate(kvals):
            if kv > last + 1e-11:
                last = kv
            else:
                keep[i] = False
        if not keep.all():
            grid = grid[keep]
            rec = {key: (v[keep] if np.ndim(v) else v) for key, v in rec.items()}
            der = {key: (v[keep] if np.ndim(v) else v) for key, v in der.items()}
        e_ddot = der["e_ddot"]
        # patch NaN Eddot at empty-gap edges by one-sided continuation
        bad = ~np.isfinite(e_ddot)
        if bad.any():
            good = ~bad
            e_ddot = e_ddot.copy()
            e_ddot[bad] = np.interp(grid[bad], grid[good], e_ddot[good])
        e_dddot = np.gradient(e_ddot, der["k"])
        chart = QuasimomentumChart(
            n=n,
            w=grid,
            k=der["k"],
            e=der["e"],
            e_dot=der["e_dot"],
            e_ddot=e_ddot,
            e_dddot=e_dddot,
            d=rec["d"],
            d_prime=rec["d_prime"],
            d_second=rec["d_second"],
            theta1=rec["theta1"],
            phi1=rec["phi1"],
            theta_p1=rec["theta_p1"],
            phi_p1=rec["phi_p1"],
            int_theta2=rec["int_theta2"],
            int_phi2=rec["int_phi2"],
            int_theta_phi=rec["int_theta_phi"],
            alpha_bar=der["alpha_bar"],
            rho2_nsq=der["rho2_nsq"],
            markers=markers,
            w_left=bs.bands[n][0],
            w_right=bs.bands[n][1],
            gap_left=bs.gap_lengths[n],
            gap_right=bs.gap_lengths[n + 1] if n + 1 <= bs.n_max else 0.0,
            inflection_k=None,
            inflection_e3=np.nan,
        )
        charts[n] = chart
    cs = ChartSet(bs, charts, c=c)
    if locate_inflections:
        for n in list(charts):
            k_n, e3 = _locate_inflection(bs, cs, n)
            object.__setattr__(charts[n], "inflection_k", k_n)
            object.__setattr__(charts[n], "inflection_e3", e3)
    return cs


# ---------------------------------------------------------------------------
# the maps k(w) and w(k)


def k_of_w(bs: BandStructure, chart_cache, w):
    """Quasimomentum of w (band n maps onto [n pi, (n+1) pi]).

    chart_cache may be None; evaluation is direct from the discriminant so
    that cos(k(w)) = D(w) holds to the integration tolerance, not to spline
    accuracy.
    """
    w_arr = np.atleast_1d(np.asarray(w, dtype=float))
    ns = np.empty(w_arr.shape, dtype=int)
    for i, wi in enumerate(w_arr):
        n = bs.band_of(wi)
        if n is None:
            g = bs.gap_of(wi)
            if g is not None:
                lo, hi = bs.gap_interval(g)
                raise GapDomainError(
                    f"w={wi:.12g} lies strictly inside gap {g} "
                    f"({lo:.12g}, {hi:.12g}); k(w) is not real there"
                )
            raise GapDomainError(
                f"w={wi:.12g} is outside the computed bands "
                f"(max edge {bs.bands[-1][1]:.12g})"
            )
        ns[i] = n
    (d,) = discriminant_e(bs.shifted_potential, w_arr * w_arr, order=0)
    parity = np.where(ns % 2 == 0, 1.0, -1.0)
    arg = parity * d
    over = np.abs(arg) - 1.0
    if np.any(over > CLAMP_TOL):
        i = int(np.argmax(over))
        raise GapDomainError(
            f"|D(w)| = {abs(d[i]):.15g} exceeds 1 beyond clamping tolerance "
            f"at w={w_arr[i]:.12g}"
        )
    k = ns * np.pi + np.arccos(np.clip(arg, -1.0, 1.0))
    return float(k[0]) if np.isscalar(w) or np.asarray(w).ndim == 0 else k


def _kappa_of(pot, w, n):
    (d,) = discriminant_e(pot, w * w, order=0)
    parity = 1.0 if n % 2 == 0 else -1.0
    return np.arccos(np.clip(parity * d, -1.0, 1.0))


def w_of_k(bs: BandStructure, k: float) -> float:
    """Inverse map on band n = floor(k/pi), by bracketed root finding."""
    k = abs(float(k))
    n = int(np.floor(k / np.pi))
    kappa = k - n * np.pi
    if n >= len(bs.bands):
        if n == len(bs.bands) and kappa < 1e-12:
            return bs.bands[-1][1]
        raise GapDomainError(
            f"k={k:.12g} lies beyond the computed bands (n_max={bs.n_max})"
        )
    A, B = bs.bands[n]
    if kappa <= 1e-12:
        return A
    if np.pi - kappa <= 1e-12:
        return B
    pot = bs.shifted_potential
    f = lambda w: float(_kappa_of(pot, np.array([w]), n)[0]) - kappa
    return float(brentq(f, A, B, xtol=1e-13, rtol=8.0 * np.finfo(float).eps))


def w_of_k_many(bs: BandStructure, k, charts: ChartSet | None = None) -> np.ndarray:
    """Vectorized inverse map: safeguarded Newton on kappa(w), batched over k."""
    k = np.abs(np.asarray(k, dtype=float))
    ns = np.floor(k / np.pi).astype(int)
    kappa_t = k - ns * np.pi
    # snap near-edge requests
    top = (ns == len(bs.bands)) & (kappa_t < 1e-12)
    ns = np.where(top, ns - 1, ns)
    kappa_t = np.where(top, np.pi, kappa_t)
    if np.any(ns >= len(bs.bands)):
        raise GapDomainError("k beyond computed bands")
    A = np.array([bs.bands[n][0] for n in ns])
    B = np.array([bs.bands[n][1] for n in ns])
    parity = np.where(ns % 2 == 0, 1.0, -1.0)

    if charts is not None:
        w = np.empty_like(k)
        for n in np.unique(ns):
            m = ns == n
            ch = charts[n]
            w[m] = np.interp(k[m], ch.k, ch.w)
        w = np.clip(w, A, B)
    else:
        w = A + (B - A) * kappa_t / np.pi
    lo, hi = A.copy(), B.copy()
    pot = bs.shifted_potential
    active = np.ones(k.shape, dtype=bool)
    for _ in range(70):
        if not active.any():
            break
        wa = w[active]
        d, dp = discriminant_e(pot, wa * wa, order=1)
        d_prime = 2.0 * wa * dp
        arg = np.clip(parity[active] * d, -1.0, 1.0)
        kappa = np.arccos(arg)
        res = kappa - kappa_t[active]
        below = res < 0.0
        lo[active] = np.where(below, wa, lo[active])
        hi[active] = np.where(below, hi[active], wa)
        sin_kappa = np.sqrt(np.maximum(1.0 - arg * arg, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            step = res * sin_kappa / np.abs(d_prime)
        w_new = wa - step
        # degenerate slope (empty-gap edge) or an out-of-bracket step: bisect
        bad = (
            ~np.isfinite(w_new)
            | ~((lo[active] < w_new) & (w_new < hi[active]))
            | (sin_kappa <= 1e-14)
            | (np.abs(d_prime) < 1e-300)
        )
        w_new = np.where(bad, 0.5 * (lo[active] + hi[active]), w_new)
        done = (np.abs(res) <= 1e-12) | (
            hi[active] - lo[active] <= 4.0 * np.finfo(float).eps * np.maximum(wa, 1.0)
        )
        w[active] = np.where(done, wa, w_new)
        still = active.copy()
        still[active] = ~done
        active = still
    return w


# ---------------------------------------------------------------------------
# band function with derivatives


@dataclass(frozen=True)
class BandFunctionValue:
    e: float
    e_dot: float
    e_ddot: float
    e_dddot: float
    edge_limited: bool = False

    def __iter__(self):
        return iter((self.e, self.e_dot, self.e_ddot, self.e_dddot))


def band_function_many(bs: BandStructure, k, charts: ChartSet | None = None):
    """Arrays (E, Edot, Eddot, Edddot, edge_limited) over a batch of k."""
    k = np.abs(np.asarray(k, dtype=float))
    ns = np.floor(k / np.pi + 1e-15).astype(int)
    ns = np.minimum(ns, len(bs.bands) - 1)
    kappa = k - ns * np.pi

    w = w_of_k_many(bs, k, charts)
    rec = _sample_raw(bs.shifted_potential, w, order=2)
    der = _derive_band_quantities(rec, ns)
    e, e_dot, e_ddot = der["e"], der["e_dot"], der["e_ddot"]

    gap_l = np.array([bs.gap_lengths[n] for n in ns])
    gap_r = np.array([bs.gap_lengths[n + 1] for n in ns])
    at_left = kappa <= 1e-12
    at_right = (np.pi - kappa) <= 1e-12
    edge_limited = (at_left & (gap_l >= EMPTY_GAP_TOL)) | (
        at_right & (gap_r >= EMPTY_GAP_TOL)
    )
    e_dot = np.where(at_left & (gap_l >= EMPTY_GAP_TOL), 0.0, e_dot)
    e_dot = np.where(at_right & (gap_r >= EMPTY_GAP_TOL), 0.0, e_dot)

    # Eddot at empty-gap edges: evaluate just inside instead of the 0/0 form.
    # The offset must clear the ~sqrt(eps) noise floor of sin k near an edge
    # (Eddot noise grows like 2 w deltaD / kappa^3), so it cannot be tiny.
    nan_rows = ~np.isfinite(e_ddot)
    if nan_rows.any():
        k_off = np.where(
            kappa[nan_rows] < 0.5 * np.pi, k[nan_rows] + 5e-3, k[nan_rows] - 5e-3
        )
        sub = band_function_many(bs, k_off, charts)
        e_ddot = e_ddot.copy()
        e_ddot[nan_rows] = sub[2]

    # E''' by Richardson-extrapolated differences of the analytic Eddot;
    # the stencil stays strictly inside the band
    interior = ~(at_left | at_right)
    e_dddot = np.full_like(e, np.nan)
    if interior.any():
        ki = k[interior]
        hi = np.minimum(
            0.05, 0.45 * np.minimum(kappa[interior], np.pi - kappa[interior])
        )
        stencil = np.concatenate([ki + hi, ki - hi, ki + 0.5 * hi, ki - 0.5 * hi])
        ws = w_of_k_many(bs, stencil, charts)
        recs = _sample_raw(bs.shifted_potential, ws, order=2)
        ders = _derive_band_quantities(
            recs, np.floor(stencil / np.pi + 1e-15).astype(int)
        )
        m = ki.size
        ep, em, ep2, em2 = (
            ders["e_ddot"][:m],
            ders["e_ddot"][m : 2 * m],
            ders["e_ddot"][2 * m : 3 * m],
            ders["e_ddot"][3 * m :],
        )
        d_h = (ep - em) / (2.0 * hi)
        d_h2 = (ep2 - em2) / hi
        e_dddot[interior] = (4.0 * d_h2 - d_h) / 3.0
    return e, e_dot, e_ddot, e_dddot, edge_limited


def band_function(bs: BandStructure, k: float, charts: ChartSet | None = None):
    """(E, Edot, Eddot, Edddot) at one k; see BandFunctionValue for edge flags."""
    e, ed, edd, eddd, lim = band_function_many(bs, [float(k)], charts)
    return BandFunctionValue(
        e=float(e[0]),
        e_dot=float(ed[0]),
        e_ddot=float(edd[0]),
        e_dddot=float(eddd[0]),
        edge_limited=bool(lim[0]),
    )


def _locate_inflection(bs, charts: ChartSet, n: int):
    """Unique zero of Eddot inside band n, or (None, nan) when absent."""
    ch = charts[n]
    interior = (ch.k > n * np.pi + 1e-6) & (ch.k < (n + 1) * np.pi - 1e-6)
    kk, ee = ch.k[interior], ch.e_ddot[interior]
    sgn = np.sign(ee)
    flips = np.nonzero(np.diff(sgn) != 0)[0]
    if flips.size == 0:
        return None, np.nan
    i = flips[0]
    spline = CubicSpline(kk, ee)
    k_n = brentq(spline, kk[i], kk[i + 1], xtol=1e-11)

    def analytic_eddot(kv):
        _, _, edd, _, _ = band_function_many(bs, [kv], charts)
        return float(edd[0])

    # one polishing pass on the analytic curve around the spline root
    dk = max(4.0 * (kk[i + 1] - kk[i]), 1e-7)
    lo, hi = max(k_n - dk, kk[0]), min(k_n + dk, kk[-1])
    f_lo, f_hi = analytic_eddot(lo), analytic_eddot(hi)
    if f_lo * f_hi < 0:
        k_n = brentq(analytic_eddot, lo, hi, xtol=1e-10)
    _, _, _, e3, _ = band_function_many(bs, [k_n], charts)
    return float(k_n), float(e3[0])


def inflection_point(bs: BandStructure, n: int, charts: ChartSet | None = None):
    """The unique k_n in (n pi, (n+1) pi) with Eddot(k_n) = 0, else None."""
    if charts is not None and n in charts:
        return charts[n].inflection_k
    cs = build_charts(bs, bands=[n], locate_inflections=True)
    return cs[n].inflection_k


# ---------------------------------------------------------------------------
# gap densities and the Poisson extension


@dataclass(frozen=True)
class GapDensity:
    """q(u) = arccosh|D(u)| on gap n, with quadrature nodes for extensions."""

    n: int
    a_minus: float
    a_plus: float
    u: np.ndarray
    q: np.ndarray
    t_nodes: np.ndarray
    q_nodes: np.ndarray
    quad_weights: np.ndarray  # GL weight * Jacobian of t = c + r sin(theta)
    theta_nodes: np.ndarray  # angle of each quadrature node, kept exactly
    mass: float  # integral of q over the gap
    c0: float
    bound_ratio_max: float
    bound_ratio_min: float
    bounds_ok: bool

    def interpolate(self, u):
        """q at interior points via a spline in the angle theta, where the
        square-root endpoint behavior of q is smoothed away.  The gap edges
        are pinned at exactly zero (|D| = 1 there)."""
        c_mid = 0.5 * (self.a_minus + self.a_plus)
        r = 0.5 * (self.a_plus - self.a_minus)
        theta_u = np.arcsin(np.clip((np.asarray(u) - c_mid) / r, -1.0, 1.0))
        th = np.concatenate([[-np.pi / 2], self.theta_nodes, [np.pi / 2]])
        qn = np.concatenate([[0.0], self.q_nodes, [0.0]])
        return CubicSpline(th, qn)(theta_u)


def _gap_q(pot, n, u):
    sign = 1.0 if n % 2 == 0 else -1.0
    (d,) = discriminant_e(pot, np.asarray(u, float) ** 2, order=0)
    return np.arccosh(np.maximum(1.0, sign * d))


def gap_density(
    bs: BandStructure, n: int, u_grid=None, quad_nodes: int = 80
) -> GapDensity:
    if n < 1 or n > bs.n_max:
        raise ValueError(f"gap index {n} outside 1..{bs.n_max}")
    a, b = bs.gap_interval(n)
    if b - a < EMPTY_GAP_TOL:
        z = np.array([])
        return GapDensity(n, a, b, z, z, z, z, z, z, 0.0, 1.0, 0.0, 0.0, True)
    if u_grid is None:
        theta = np.linspace(-np.pi / 2, np.pi / 2, 65)[1:-1]
        u_grid = 0.5 * (a + b) + 0.5 * (b - a) * np.sin(theta)
    u_grid = np.asarray(u_grid, dtype=float)
    if np.any(u_grid < a - 1e-12) or np.any(u_grid > b + 1e-12):
        raise ValueError("u_grid must lie inside the gap")
    pot = bs.shifted_potential
    q = _gap_q(pot, n, u_grid)

    # quadrature nodes under t = c0 + r sin(theta): integrand becomes smooth
    x, wts = np.polynomial.legendre.leggauss(quad_nodes)
    theta = 0.5 * np.pi * x
    c_mid, r = 0.5 * (a + b), 0.5 * (b - a)
    t_nodes = c_mid + r * np.sin(theta)
    jac = 0.5 * np.pi * r * np.cos(theta)
    q_nodes = _gap_q(pot, n, t_nodes)
    quad_w = wts * jac
    mass = float(np.sum(quad_w * q_nodes))

    q0 = moment_q0(bs.shifted_potential)
    min_band = min(hi - lo for lo, hi in bs.bands)
    c0 = 1.0 + q0 / min_band
    root = np.sqrt(np.maximum((u_grid - a) * (b - u_grid), 0.0))
    # arccosh loses the signal once |D|-1 sinks toward rounding noise, i.e.
    # when q^2/2 is comparable to the ~1e-13 accuracy of D; only validate
    # the two-sided bound where the density is actually resolvable.
    usable = (q * q > 2e-11) & (root > 0.0)
    if usable.any():
        ratio = q[usable] / root[usable]
        r_max, r_min = float(np.max(ratio)), float(np.min(ratio))
        ok = (r_max <= c0 * (1.0 + 1e-6)) and (r_min >= 1.0 - 1e-6)
    else:
        r_max, r_min = float("nan"), float("nan")
        ok = True
    return GapDensity(
        n=n,
        a_minus=a,
        a_plus=b,
        u=u_grid,
        q=q,
        t_nodes=t_nodes,
        q_nodes=q_nodes,
        quad_weights=quad_w,
        theta_nodes=theta,
        mass=mass,
        c0=c0,
        bound_ratio_max=r_max,
        bound_ratio_min=r_min,
        bounds_ok=ok,
    )


@dataclass(frozen=True)
class PoissonExtension:
    q: float
    i_n: tuple
    tail_bound: float

    def __iter__(self):
        return iter((self.q, self.i_n))


def _poisson_gap(den, u: float, v: float) -> float:
    """(v/pi) int_gap q(t)/((t-u)^2+v^2) dt, robust down to tiny v.

    The Poisson kernel concentrates on a scale v around t = u, far below the
    node spacing once v is small, so the constant part of q near u is split
    off and integrated in closed form (arctan); the quadrature only sees the
    remainder q(t) - q(u*), whose kernel-weighted integral stays resolvable.
    """
    u_star = float(np.clip(u, den.a_minus, den.a_plus))
    q_star = float(max(den.interpolate(u_star), 0.0))
    exact = (q_star / np.pi) * (
        np.arctan((den.a_plus - u) / v) - np.arctan((den.a_minus - u) / v)
    )
    kern = 1.0 / ((den.t_nodes - u) ** 2 + v * v)
    rem = (v / np.pi) * np.sum(den.quad_weights * (den.q_nodes - q_star) * kern)
    return float(exact + rem)


def poisson_extension(densities, u: float, v: float) -> PoissonExtension:
    """Harmonic extension q(u+iv) = v + sum_n I_n(u, v) over the computed gaps."""
    if v < 0:
        raise ValueError("v must be >= 0")
    densities = [d for d in densities if d.t_nodes.size]
    if v == 0.0:
        i_n = []
        q_val = 0.0
        for den in densities:
            if den.a_minus < u < den.a_plus:
                q_here = float(den.interpolate(u))
                i_n.append(q_here)
                q_val = q_here
            else:
                i_n.append(0.0)
        return PoissonExtension(q=q_val, i_n=tuple(i_n), tail_bound=0.0)

    i_n = []
    mirror = 0.0
    for den in densities:
        i_n.append(_poisson_gap(den, u, v))
        # mirror gap on the negative axis (q even in t); reported I_n stays
        # per positive gap, the reflection only enters the total.
        mirror += _poisson_gap(den, -u, v)
    if densities:
        w_max = max(den.a_plus for den in densities)
        mass_last = max(densities[-1].mass, 0.0)
        tail = (mass_last / np.pi**2) * (
            2.0 * (np.pi / 2.0)
            - np.arctan(max(w_max - u, 0.0) / v)
            - np.arctan(max(w_max + u, 0.0) / v)
        )
    else:
        tail = 0.0
    return PoissonExtension(
        q=float(v + np.sum(i_n) + mirror), i_n=tuple(i_n), tail_bound=float(tail)
    )


# ---------------------------------------------------------------------------
# large-w asymptotics of w - k(w)


@dataclass(frozen=True)
class AsymptoticResidual:
    order: int
    w: np.ndarray
    residual: np.ndarray
    scaled: np.ndarray  # |r_N| * w^{N+1}
    q0: float
    q2: float


def asymptotic_residual(bs: BandStructure, charts, N: int, w_list) -> AsymptoticResidual:
    """r_N(w) = w - k(w) - Q0/w [- Q2/w^3]; odd moments vanish identically."""
    if N < 0 or N > 3:
        raise ValueError("N must be in 0..3")
    w = np.asarray(w_list, dtype=float)
    k = k_of_w(bs, charts, w)
    q0 = moment_q0(bs.shifted_potential)
    q2 = moment_q2(bs.shifted_potential)
    r = w - k - q0 / w
    if N >= 2:
        r = r - q2 / w**3
    return AsymptoticResidual(
        order=N, w=w, residual=r, scaled=np.abs(r) * w ** (N + 1), q0=q0, q2=q2
    )


# ---------------------------------------------------------------------------
# closed-form gap integrals and the p'(u) series


def exact_gap_integral(a: float, b: float, u: float, power: int) -> float:
    """int_a^b sqrt((t-a)(b-t)) / (t-u)^power dt for u outside [a, b].

    power 3 changes sign with the side u is on (the integrand does); power 4
    is positive on both sides.  Magnitudes are the residue-calculus closed
    forms; signs were pinned by adaptive quadrature.
    """
    if not b > a:
        raise ValueError("need a < b")
    if a <= u <= b:
        raise ValueError(f"u={u} lies inside [{a}, {b}]; integral is singular")
    if power not in (3, 4):
        raise ValueError("power must be 3 or 4")
    da = abs(u - a)
    db = abs(u - b)
    base = (np.pi / 8.0) * (b - a) ** 2 / (da**1.5 * db**1.5)
    if power == 3:
        return base if u < a else -base
    return 0.5 * base * (1.0 / da + 1.0 / db)


def p_prime_series(
    bs: BandStructure,
    densities,
    u: float,
    exclusion_factor: float = 8.0,
) -> float:
    """p'(u) = 1 + (1/pi) sum_n int_{g_n} q(t)/(t-u)^2 dt for u in a band.

    Refuses within exclusion_factor * |g_n| of any nonempty gap edge, where
    the quadrature loses the integrable-singularity structure.
    """
    n_band = bs.band_of(u)
    if n_band is None:
        raise GapDomainError(f"u={u:.12g} is not inside a computed band")
    for den in densities:
        if not den.t_nodes.size:
            continue
        g = den.a_plus - den.a_minus
        if min(abs(u - den.a_minus), abs(u - den.a_plus)) < exclusion_factor * g:
            raise ValueError(
                f"u={u:.12g} is within {exclusion_factor} gap lengths of gap "
                f"{den.n}; p'(u) quadrature refused there"
            )
    total = 0.0
    for den in densities:
        if not den.t_nodes.size:
            continue
        # q is even in t, so every gap (a-, a+) has a mirror image on the
        # negative axis contributing int q(t)/(t+u)^2 dt after reflection.
        total += float(
            np.sum(
                den.quad_weights
                * den.q_nodes
                * (1.0 / (den.t_nodes - u) ** 2 + 1.0 / (den.t_nodes + u) ** 2)
            )
        )
    return 1.0 + total / np.pi
