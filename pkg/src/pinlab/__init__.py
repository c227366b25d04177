"""Numerical laboratory for the disordered pinning model of a renewal chain.

Exact finite-N partition functions (quenched and annealed) by renewal
dynamic programming, an exact solver for the annealed thermodynamics, and
seeded Monte Carlo experiments on free energies, contact fractions and
replica overlaps.
"""

__version__ = "0.1.0"

from .annealed import (
    AnnealedSolution,
    PinningParams,
    crossover_delta1,
    crossover_delta2,
    rate_function,
    solve_annealed,
    small_delta_exponents,
)
from .excursion_law import (
    ExcursionLaw,
    SlowlyVarying,
    TiltedLaw,
    build_law,
    deterministic_law,
    geometric_law,
    log_mgf_deriv,
    mgf,
    recurrentize,
    return_mass,
    sample_excursion,
    tilde_phi,
)
from .quenched import (
    DisorderRealization,
    DPResult,
    EstimateWithCI,
    annealed_dp,
    dp_log_partition,
    dp_mean_contacts,
    quenched_mc,
    sample_path,
)

__all__ = [
    "AnnealedSolution", "PinningParams", "crossover_delta1", "crossover_delta2", "rate_function",
    "solve_annealed", "small_delta_exponents", "ExcursionLaw", "SlowlyVarying", "TiltedLaw", "build_law",
    "deterministic_law", "geometric_law", "log_mgf_deriv", "mgf", "recurrentize", "return_mass",
    "sample_excursion", "tilde_phi", "DisorderRealization", "DPResult", "EstimateWithCI", "annealed_dp",
    "dp_log_partition", "dp_mean_contacts", "quenched_mc", "sample_path",
]
