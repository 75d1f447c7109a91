"""Period-1 real potentials as finite Fourier series, with spectral moments."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PeriodicPotential",
    "from_fourier",
    "load_potential",
    "moment_q0",
    "moment_q2",
]


@dataclass(frozen=True)
class PeriodicPotential:
    """P(x) = sum a_l cos(2 pi l x) + sum b_l sin(2 pi l x), period exactly 1.

    `shift` records the energy offset already folded into the series when the
    operator was renormalized so that the spectrum starts at 0; eval() always
    returns the series as stored.
    """

    cosine_coeffs: tuple[float, ...] = ()
    sine_coeffs: tuple[float, ...] = ()
    shift: float = 0.0

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for l, a in enumerate(self.cosine_coeffs):
            if a == 0.0:
                continue
            out = out + (a if l == 0 else a * np.cos(2.0 * np.pi * l * x))
        for l, b in enumerate(self.sine_coeffs, start=1):
            if b != 0.0:
                out = out + b * np.sin(2.0 * np.pi * l * x)
        return out if out.shape else float(out)

    def __call__(self, x):
        return self.eval(x)

    @property
    def is_zero(self) -> bool:
        return all(a == 0.0 for a in self.cosine_coeffs) and all(
            b == 0.0 for b in self.sine_coeffs
        )

    def sup_bound(self) -> float:
        """Rigorous upper bound for ||P||_inf: sum of |coefficients|."""
        return sum(abs(a) for a in self.cosine_coeffs) + sum(
            abs(b) for b in self.sine_coeffs
        )

    def shifted_by(self, e0: float) -> "PeriodicPotential":
        """Return the potential of the operator H - e0 with the offset recorded."""
        cos = list(self.cosine_coeffs) or [0.0]
        cos[0] -= e0
        return PeriodicPotential(tuple(cos), self.sine_coeffs, self.shift + e0)

    def to_json(self) -> str:
        return json.dumps(
            {"cosine": list(self.cosine_coeffs), "sine": list(self.sine_coeffs)}
        )


def _validated(coeffs, name):
    out = []
    for i, c in enumerate(coeffs):
        c = float(c)
        if not math.isfinite(c):
            raise ValueError(f"non-finite {name} coefficient at index {i}")
        out.append(c)
    return tuple(out)


def from_fourier(cosine_coeffs, sine_coeffs=()) -> PeriodicPotential:
    """Build a potential from cos/sin coefficient lists (cos index from 0, sin from 1)."""
    return PeriodicPotential(
        _validated(cosine_coeffs, "cosine"), _validated(sine_coeffs, "sine")
    )


def load_potential(path) -> PeriodicPotential:
    """Load {"cosine": [a0, a1, ...], "sine": [b1, ...]} from a JSON file."""
    with open(path) as fh:
        blob = json.load(fh)
    if not isinstance(blob, dict):
        raise ValueError("potential file must hold a JSON object")
    return from_fourier(blob.get("cosine", []), blob.get("sine", []))


def moment_q0(pot: PeriodicPotential) -> float:
    """(1/2) integral of P over one period; analytic, = a0/2."""
    a0 = pot.cosine_coeffs[0] if pot.cosine_coeffs else 0.0
    return a0 / 2.0


def moment_q2(pot: PeriodicPotential) -> float:
    """(1/8) integral of P^2 over one period, via Parseval on the coefficients."""
    a0 = pot.cosine_coeffs[0] if pot.cosine_coeffs else 0.0
    s = a0 * a0
    s += 0.5 * sum(a * a for a in pot.cosine_coeffs[1:])
    s += 0.5 * sum(b * b for b in pot.sine_coeffs)
    return s / 8.0
