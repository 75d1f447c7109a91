"""Floquet-Bloch spectral toolkit for 1D periodic Schrodinger operators.

The package computes, for H = -d^2/dx^2 + P(x) with P of period one:

* band structure (edges, gaps, slit heights) via Hill-matrix bracketing
  plus discriminant refinement -- :mod:`hillwave.spectrum`;
* the fundamental pair theta, phi and the discriminant D(E) with
  energy derivatives -- :mod:`hillwave.floquet`;
* the quasimomentum k(w), band functions E(k) with three derivatives,
  inflection points, gap densities and the comb-domain asymptotics --
  :mod:`hillwave.quasimomentum`;
* Bloch functions, Weyl solutions and the N^2 normalization --
  :mod:`hillwave.bloch`;
* the distorted Fourier transform (analysis / synthesis / evolution)
  -- :mod:`hillwave.transform`;
* the propagator kernel K(t,x,y) as band-wise oscillatory integrals
  with tail bounds, decay scans and van der Corput tests --
  :mod:`hillwave.kernel`.

All interior energies use the shifted variable w = sqrt(E - E_min), in
which the spectrum starts at 0; ``BandStructure.shift`` records E_min.
"""

from .bloch import (
    BlochEvaluation,
    EdgeProximityError,
    FourierCoefficients,
    IdentityReport,
    band_amplitude,
    bloch_pair,
    fourier_coeffs,
    identity_suite,
    product_kernel_factor,
    weyl_m,
)
from .floquet import (
    DiscriminantValue,
    FundamentalPair,
    FundamentalSystem,
    IntegrationError,
    PicardSeries,
    discriminant,
    discriminant_e,
    discriminant_many,
    fundamental_pair,
    fundamental_system,
    picard_series,
    picard_term_bound,
)
from .kernel import (
    BandKernelResult,
    BandTable,
    DecayReport,
    KernelSample,
    VdCBoundRequest,
    VdCVerification,
    band_kernel,
    band_table,
    decay_report,
    full_kernel,
    reference_propagator,
    van_der_corput_bound,
    vdc_verify,
)
from .potential import (
    PeriodicPotential,
    from_fourier,
    load_potential,
    moment_q0,
    moment_q2,
)
from .quasimomentum import (
    AsymptoticResidual,
    ChartSet,
    GapDensity,
    GapDomainError,
    PoissonExtension,
    QuasimomentumChart,
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
from .spectrum import (
    EMPTY_GAP_TOL,
    BandStructure,
    EdgeBracketError,
    band_edges,
    gap_height,
    hill_eigenvalues,
    hill_matrix,
)
from .transform import (
    BandCoefficients,
    SpectralCoefficients,
    bloch_values,
    diagonalization_check,
    evolve,
    forward,
    inverse,
)

__version__ = "0.1.0"

__all__ = [
    "AsymptoticResidual",
    "BandCoefficients",
    "BandKernelResult",
    "BandStructure",
    "BandTable",
    "BlochEvaluation",
    "ChartSet",
    "DecayReport",
    "DiscriminantValue",
    "EMPTY_GAP_TOL",
    "EdgeBracketError",
    "EdgeProximityError",
    "FourierCoefficients",
    "FundamentalPair",
    "FundamentalSystem",
    "GapDensity",
    "GapDomainError",
    "IdentityReport",
    "IntegrationError",
    "KernelSample",
    "PeriodicPotential",
    "PicardSeries",
    "PoissonExtension",
    "QuasimomentumChart",
    "SpectralCoefficients",
    "VdCBoundRequest",
    "VdCVerification",
    "asymptotic_residual",
    "band_amplitude",
    "band_edges",
    "band_function",
    "band_function_many",
    "band_kernel",
    "band_table",
    "bloch_pair",
    "bloch_values",
    "build_charts",
    "decay_report",
    "diagonalization_check",
    "discriminant",
    "discriminant_e",
    "discriminant_many",
    "evolve",
    "exact_gap_integral",
    "forward",
    "fourier_coeffs",
    "from_fourier",
    "full_kernel",
    "fundamental_pair",
    "fundamental_system",
    "gap_density",
    "gap_height",
    "hill_eigenvalues",
    "hill_matrix",
    "identity_suite",
    "inflection_point",
    "inverse",
    "k_of_w",
    "load_potential",
    "moment_q0",
    "moment_q2",
    "p_prime_series",
    "picard_series",
    "picard_term_bound",
    "poisson_extension",
    "product_kernel_factor",
    "reference_propagator",
    "van_der_corput_bound",
    "vdc_verify",
    "w_of_k",
    "w_of_k_many",
    "weyl_m",
]
