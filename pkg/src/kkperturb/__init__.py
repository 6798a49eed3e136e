"""Numerical laboratory for perturbations of finite-dimensional C*-algebra inclusions."""
from .algebra import (
    ConcreteAlgebra,
    algebra_from_generators,
    algebras_equal,
    block_diagonal_algebra,
    conjugate_algebra,
    diagonal_algebra,
    full_matrix_algebra,
    polar_unitary,
    random_unitary_near_identity,
    relative_commutant,
    scalar_algebra,
    spectral_projection,
)
from .basic_construction import BasicConstruction, build_basic_construction, theta_inverse, verify_covariant
from .errors import KKError, NumericalFailure
from .expectation import ConditionalExpectation, QuasiBasis, quasi_basis, trace_expectation, verify_quasi_basis
from .factorization import FactorizationWitness, RowElement, check_factorization, search_length2
from .metrics import Bracket, LinearMap, MetricConfig, amplified_distance, kk_distance, row_distance
from .perturbation import PerturbationReport, perturbation_pipeline

__version__ = "0.1.0"
