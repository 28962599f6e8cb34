"""Layered phase-mask / mixer factorization of SU(N) unitaries with a det(C) universality certificate."""

from .certificate import Certificate, certify, correlation_matrix, dft_reference, mixer_entropy, q_positivity, total_transition, transition_matrix
from .costs import frobenius_cost, geodesic_cost, geodesic_gradient, infidelity, infidelity_gradient
from .factorization import PhaseConfiguration, evaluate, jacobian, jacobian_rank, prefix_suffix, probe_rank
from .mixers import (
    Mixer, MixerStack, clements_stack, cyclic_permutation, dft, frdft, haar_random, permutation,
    read_matrix, su_normalize, waveguide, write_matrix,
)
from .optimizer import OptimizationResult, SolveOptions, solve
from .su_algebra import GeneratorBasis, diagonal_layer, gellmann_basis, phase_generator

__version__ = "0.1.0"

__all__ = [
    "Certificate", "certify", "correlation_matrix", "dft_reference", "mixer_entropy", "q_positivity",
    "total_transition", "transition_matrix", "frobenius_cost", "geodesic_cost", "geodesic_gradient",
    "infidelity", "infidelity_gradient", "PhaseConfiguration", "evaluate", "jacobian", "jacobian_rank",
    "prefix_suffix", "probe_rank", "Mixer", "MixerStack", "clements_stack", "cyclic_permutation", "dft",
    "frdft", "haar_random", "permutation", "read_matrix", "su_normalize", "waveguide", "write_matrix",
    "OptimizationResult", "SolveOptions", "solve", "GeneratorBasis", "diagonal_layer", "gellmann_basis",
    "phase_generator",
]
