"""Shared fixtures.

Band structures and quasimomentum charts dominate the suite's cost
(tens of seconds of batched ODE sweeps each), so the three workhorse
potentials are built once per session and shared read-only:

* ``free``      P = 0, every gap closed -- closed forms for everything
* ``mathieu``   P = 2 cos(2 pi x) -- generic, gaps shrink factorially
* ``open_gaps`` P = sum 4/j^2 cos(2 pi j x) -- first gaps all wide open,
                which keeps per-band quantities well conditioned near
                corners (Mathieu's tiny high gaps are the stress case)
"""

from pathlib import Path

import numpy as np
import pytest

from hillwave.potential import from_fourier
from hillwave.quasimomentum import build_charts
from hillwave.spectrum import band_edges

POTENTIALS_DIR = Path(__file__).resolve().parent.parent / "potentials"


@pytest.fixture(scope="session")
def free():
    pot = from_fourier([0.0])
    bs = band_edges(pot, n_max=8)
    return pot, bs, build_charts(bs)


@pytest.fixture(scope="session")
def mathieu():
    pot = from_fourier([0.0, 2.0])
    bs = band_edges(pot, n_max=14)
    return pot, bs, build_charts(bs)


@pytest.fixture(scope="session")
def open_gaps():
    pot = from_fourier([0.0] + [4.0 / (j * j) for j in range(1, 5)])
    bs = band_edges(pot, n_max=8)
    return pot, bs, build_charts(bs)


@pytest.fixture(scope="session")
def mathieu_deep():
    """Edges only (no charts), out to band 41 for the asymptotic laws."""
    pot = from_fourier([0.0, 2.0])
    return pot, band_edges(pot, n_max=41)


def gl_norm_grid(a: float, b: float, per_cell: int = 15):
    """Gauss-Legendre nodes/weights tiled over unit cells of [a, b].

    Integer cell boundaries keep the fractional parts of the nodes the
    same in every cell, which the Bloch samplers exploit; the rule is
    exact for the smooth band-limited functions the tests integrate.
    """
    x_gl, w_gl = np.polynomial.legendre.leggauss(per_cell)
    edges = np.arange(np.floor(a), np.ceil(b) + 0.5)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * np.diff(edges)
    x = (mid[:, None] + half[:, None] * x_gl[None, :]).ravel()
    w = (half[:, None] * w_gl[None, :]).ravel()
    return x, w
