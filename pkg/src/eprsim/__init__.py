"""Finite-dimensional projective-measurement simulator."""
from .linalg import (DensityOperator, Operator, PureState, partial_trace, state_distance,
                     tensor)
from .spectral import (CoarseGraining, SpectralDecomposition, apply_function,
                       commutator_norm, find_coarse_graining, spectral_decompose)
from .measurement import (AmbiguousPostState, MeasurementRecord, born_probabilities,
                          luders_update, make_canonical_pair, nonselective_update,
                          sample_outcome, von_neumann_update)
from .composite import (EprAssignmentReport, SchmidtDecomposition, biorthogonal_expansion,
                        build_joint_refinement, conditional_partner_state,
                        epr_assignment_report, no_signaling_check, schmidt_decompose)

__version__ = "0.1.0"
