"""Band edges a_n± as roots of D(w) = ±1, gaps, and slit heights.

Initial edge brackets come from truncated plane-wave (Hill-matrix)
eigenvalues of the periodic and antiperiodic problems on [0,1]; edges of
gaps the discriminant can actually resolve in float64 are then polished by
a safeguarded, fully batched Newton iteration on D(E) -/+ 1 = 0.  Gaps too
small for |D|-1 to rise above rounding noise near the band edges keep
their (already spectrally accurate) matrix eigenvalues and are flagged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .floquet import discriminant_e
from .potential import PeriodicPotential

__all__ = [
    "BandStructure",
    "EdgeBracketError",
    "hill_matrix",
    "hill_eigenvalues",
    "band_edges",
    "gap_height",
]

EMPTY_GAP_TOL = 1e-12  # in w units
# s*D - 1 at mid-gap must clear rounding noise before Newton refinement pays
RESOLVE_EXCESS = 2e-13


class EdgeBracketError(RuntimeError):
    """Could not bracket a band edge; carries diagnostic discriminant samples."""

    def __init__(self, gap_index: int, message: str, samples):
        self.gap_index = gap_index
        self.samples = list(samples)  # (E, D) pairs
        lines = ", ".join(f"D({e:.6g})={d:.6g}" for e, d in self.samples)
        super().__init__(f"gap {gap_index}: {message} [{lines}]")


def hill_matrix(pot: PeriodicPotential, kappa: float, m_cut: int) -> np.ndarray:
    """Fiber matrix of -d^2/dx^2 + P in the basis e^{i(kappa+2 pi m)x}."""
    m = np.arange(-m_cut, m_cut + 1)
    H = np.zeros((m.size, m.size), dtype=complex)
    a = pot.cosine_coeffs
    H[np.diag_indices_from(H)] = (kappa + 2.0 * np.pi * m) ** 2 + (a[0] if a else 0.0)
    for l in range(1, max(len(a), len(pot.sine_coeffs) + 1)):
        al = a[l] if l < len(a) else 0.0
        bl = pot.sine_coeffs[l - 1] if l - 1 < len(pot.sine_coeffs) else 0.0
        c_plus = 0.5 * (al - 1j * bl)  # Fourier coefficient of e^{+2 pi i l x}
        off = np.full(m.size - l, 1.0)
        H += np.diag(off * np.conj(c_plus), l)  # entry (m, m+l) = P_hat(-l)
        H += np.diag(off * c_plus, -l)
    return H


def hill_eigenvalues(pot: PeriodicPotential, kappa: float, m_cut: int) -> np.ndarray:
    return np.linalg.eigvalsh(hill_matrix(pot, kappa, m_cut))


@dataclass(frozen=True)
class BandStructure:
    """Edges, bands, gaps and slit heights in the w = sqrt(E) variable.

    All w quantities refer to the shifted potential P - shift whose spectrum
    starts at 0.  Index n runs over gaps 0..n_max (gap 0 is the degenerate
    bottom edge); band n is [a_n^+, a_{n+1}^-] for n = 0..n_max-1.
    """

    potential: PeriodicPotential
    shifted_potential: PeriodicPotential
    shift: float
    n_max: int
    edges: tuple  # (n, a_minus, a_plus)
    bands: tuple  # (w_left, w_right)
    gap_lengths: tuple
    slit_heights: tuple
    ell: tuple
    empty: tuple  # gap n below EMPTY_GAP_TOL
    resolved: tuple  # gap n wide enough for discriminant-based refinement

    @property
    def a_minus(self) -> np.ndarray:
        return np.array([e[1] for e in self.edges])

    @property
    def a_plus(self) -> np.ndarray:
        return np.array([e[2] for e in self.edges])

    def band_interval(self, n: int):
        return self.bands[n]

    def gap_interval(self, n: int):
        return self.edges[n][1], self.edges[n][2]

    def band_of(self, w: float, tol: float = 1e-12):
        """Index of the band containing w (closed intervals), else None."""
        for n, (lo, hi) in enumerate(self.bands):
            if lo - tol <= w <= hi + tol:
                return n
        return None

    def gap_of(self, w: float):
        """Index of the open gap strictly containing w, else None."""
        for n, lo, hi in self.edges[1:]:
            if lo < w < hi:
                return n
        return None

    def e_interval(self, n: int):
        """Band n in the original energy variable E = w^2 + shift."""
        lo, hi = self.bands[n]
        return lo * lo + self.shift, hi * hi + self.shift


def _default_m_cut(pot: PeriodicPotential, n_max: int) -> int:
    L = max(len(pot.cosine_coeffs) - 1, len(pot.sine_coeffs), 1)
    return max(n_max + 16, 3 * L + 8)


def _refine_ground(pot: PeriodicPotential, e_guess: float) -> float:
    """Newton on D(E) - 1 = 0 for the bottom of the spectrum (simple zero)."""
    e = float(e_guess)
    for _ in range(40):
        (d,), (d_e,) = discriminant_e(pot, [e], order=1)
        step = (d - 1.0) / d_e
        e -= step
        if abs(step) <= 1e-14 * (1.0 + abs(e)):
            break
    return e


def _batched_newton_edges(pot, e_init, lo, hi, sign, increasing, tol):
    """Polish edge locations on f(E) = sign*D(E) - 1 with bracket safeguards.

    `increasing` marks edges where f passes from negative (band side) to
    positive (gap side) as E grows, i.e. left gap edges.  Brackets [lo, hi]
    must straddle the root.  Fully vectorized over edges.
    """
    e = np.asarray(e_init, dtype=float).copy()
    lo = np.asarray(lo, dtype=float).copy()
    hi = np.asarray(hi, dtype=float).copy()
    sgn = np.asarray(sign, dtype=float)
    inc = np.where(np.asarray(increasing, dtype=bool), 1.0, -1.0)
    active = np.ones(e.shape, dtype=bool)
    for _ in range(80):
        if not active.any():
            break
        (d, d_e) = discriminant_e(pot, e[active], order=1)
        f = sgn[active] * d - 1.0
        fp = sgn[active] * d_e
        # f*inc < 0 exactly when the iterate sits below the root
        below = (f * inc[active]) < 0.0
        lo[active] = np.where(below, e[active], lo[active])
        hi[active] = np.where(below, hi[active], e[active])
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(fp != 0.0, f / fp, np.inf)
        e_new = e[active] - step
        bad = ~((lo[active] < e_new) & (e_new < hi[active])) | ~np.isfinite(e_new)
        e_new = np.where(bad, 0.5 * (lo[active] + hi[active]), e_new)
        done = (np.abs(f) <= tol) | (
            hi[active] - lo[active] <= 1e-15 * (1.0 + np.abs(e_new))
        )
        e[active] = np.where(done, e[active], e_new)
        still = active.copy()
        still[active] = ~done
        active = still
    return e


def _golden_slit_heights(pot, gaps_w, signs, iters=70):
    """max arccosh|D| over each gap by simultaneous golden-section search."""
    if not gaps_w:
        return []
    a = np.array([g[0] for g in gaps_w])
    b = np.array([g[1] for g in gaps_w])
    s = np.asarray(signs, dtype=float)
    r = (np.sqrt(5.0) - 1.0) / 2.0
    for _ in range(iters):
        if np.max((b - a) / np.maximum(b, 1.0)) < 1e-13:
            break
        x1 = b - r * (b - a)
        x2 = a + r * (b - a)
        (f,) = discriminant_e(pot, np.concatenate([x1 * x1, x2 * x2]), order=0)
        f1 = s * f[: a.size]
        f2 = s * f[a.size :]
        take_left = f1 >= f2
        b = np.where(take_left, x2, b)
        a = np.where(take_left, a, x1)
    x_best = 0.5 * (a + b)
    (d_best,) = discriminant_e(pot, x_best * x_best, order=0)
    return list(np.arccosh(np.maximum(1.0, s * d_best)))


def band_edges(
    pot: PeriodicPotential,
    n_max: int = 12,
    tol: float = 1e-10,
    auto_shift: bool = True,
    m_cut: int | None = None,
) -> BandStructure:
    """Locate all gap edges with ell_n <= n_max and assemble the structure."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if m_cut is None:
        m_cut = _default_m_cut(pot, n_max)
    lam = hill_eigenvalues(pot, 0.0, m_cut)
    mu = hill_eigenvalues(pot, np.pi, m_cut)

    if auto_shift:
        e0 = _refine_ground(pot, lam[0])
        shifted = pot.shifted_by(e0)
    else:
        e0 = 0.0
        shifted = pot
        if lam[0] < -1e-10:
            raise ValueError(
                "spectrum extends below 0; use auto_shift=True "
                f"(ground energy ~ {lam[0]:.6g})"
            )
    lam_s = lam - e0
    mu_s = mu - e0
    lam_s[0] = max(lam_s[0], 0.0)

    # gap n: antiperiodic pair (mu_{n-1}, mu_n) for odd n, periodic pair
    # (lam_{n-1}, lam_n) for even n; D = (-1)^n at its edges.
    gaps_e = []
    signs = []
    for n in range(1, n_max + 1):
        src = mu_s if n % 2 == 1 else lam_s
        gaps_e.append((float(src[n - 1]), float(src[n])))
        signs.append(1.0 if n % 2 == 0 else -1.0)

    mids = np.array([0.5 * (lo + hi) for lo, hi in gaps_e])
    (d_mid,) = discriminant_e(shifted, mids, order=0)
    excess = np.asarray(signs) * d_mid - 1.0
    width_w = np.array(
        [np.sqrt(max(hi, 0.0)) - np.sqrt(max(lo, 0.0)) for lo, hi in gaps_e]
    )
    empty = width_w < EMPTY_GAP_TOL
    resolved = (excess > RESOLVE_EXCESS) & ~empty

    # assemble Newton batch: left and right edge of every resolvable gap
    e_init, b_lo, b_hi, b_sign, b_inc, owner = [], [], [], [], [], []
    prev_hi = 0.0
    for i, (lo, hi) in enumerate(gaps_e):
        band_below = lo - prev_hi
        next_lo = gaps_e[i + 1][0] if i + 1 < len(gaps_e) else lo + 10.0
        band_above = next_lo - hi
        if resolved[i]:
            pad_lo = lo - 0.2 * band_below
            pad_hi = hi + 0.2 * band_above
            (d_pads,) = discriminant_e(shifted, [pad_lo, pad_hi], order=0)
            f_lo = signs[i] * d_pads[0] - 1.0
            f_hi = signs[i] * d_pads[1] - 1.0
            if f_lo >= 0.0 or f_hi >= 0.0:
                samples = [(pad_lo, d_pads[0]), (mids[i], d_mid[i]), (pad_hi, d_pads[1])]
                raise EdgeBracketError(
                    i + 1, "discriminant brackets do not straddle the edges", samples
                )
            e_init += [lo, hi]
            b_lo += [pad_lo, mids[i]]
            b_hi += [mids[i], pad_hi]
            b_sign += [signs[i], signs[i]]
            b_inc += [True, False]
            owner += [(i, 0), (i, 1)]
        prev_hi = hi

    if e_init:
        refined = _batched_newton_edges(
            shifted, e_init, b_lo, b_hi, b_sign, b_inc, tol
        )
        gaps_e = [list(g) for g in gaps_e]
        for (i, side), val in zip(owner, refined):
            gaps_e[i][side] = float(val)
        gaps_e = [tuple(g) for g in gaps_e]

    a_minus_w = np.array([np.sqrt(max(lo, 0.0)) for lo, hi in gaps_e])
    a_plus_w = np.array([np.sqrt(max(hi, 0.0)) for lo, hi in gaps_e])

    # interlacing sanity
    for i in range(len(gaps_e)):
        if a_minus_w[i] > a_plus_w[i] + 1e-12:
            raise EdgeBracketError(
                i + 1,
                "crossed edges after refinement",
                [(gaps_e[i][0], 0.0), (gaps_e[i][1], 0.0)],
            )
        if i > 0 and a_plus_w[i - 1] >= a_minus_w[i]:
            raise EdgeBracketError(
                i + 1, "gap overlaps previous gap", [(gaps_e[i][0], 0.0)]
            )

    gap_w = a_plus_w - a_minus_w
    empty = gap_w < EMPTY_GAP_TOL

    slit = np.zeros(n_max + 1)
    to_measure = [i for i in range(n_max) if resolved[i]]
    if to_measure:
        heights = _golden_slit_heights(
            shifted,
            [(a_minus_w[i], a_plus_w[i]) for i in to_measure],
            [signs[i] for i in to_measure],
        )
        for i, h in zip(to_measure, heights):
            slit[i + 1] = h

    edges = [(0, 0.0, 0.0)]
    for i in range(n_max):
        edges.append((i + 1, float(a_minus_w[i]), float(a_plus_w[i])))
    bands = []
    for n in range(n_max):
        left = edges[n][2]
        right = edges[n + 1][1]
        bands.append((left, right))
    gap_lengths = [0.0] + [float(g) for g in gap_w]
    ell = [0] + [
        int(np.rint(0.5 * (a_minus_w[i] + a_plus_w[i]) / np.pi)) for i in range(n_max)
    ]

    return BandStructure(
        potential=pot,
        shifted_potential=shifted,
        shift=float(e0),
        n_max=n_max,
        edges=tuple(edges),
        bands=tuple(bands),
        gap_lengths=tuple(gap_lengths),
        slit_heights=tuple(float(h) for h in slit),
        ell=tuple(ell),
        empty=(False,) + tuple(bool(b) for b in empty),
        resolved=(True,) + tuple(bool(b) for b in resolved),
    )


def gap_height(pot: PeriodicPotential, bs: BandStructure, n: int) -> float:
    """Slit height h_n = max over the gap of arccosh|D|, by golden section."""
    if n < 1 or n > bs.n_max:
        raise ValueError(f"gap index {n} outside 1..{bs.n_max}")
    lo, hi = bs.gap_interval(n)
    if hi - lo < EMPTY_GAP_TOL:
        return 0.0
    sign = 1.0 if n % 2 == 0 else -1.0
    (h,) = _golden_slit_heights(bs.shifted_potential, [(lo, hi)], [sign])
    return float(h)
