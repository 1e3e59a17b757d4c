"""Koopman-generator system identification and Zubov-based region-of-attraction
certification from trajectory data."""
from .certificates import (CertificationImpossible, LyapunovCandidate, QuadraticLyapunov,
                           lyapunov_lsq, lyapunov_lsq_direct, solve_matrix_lyapunov, zubov_lsq,
                           zubov_lsq_direct)
from .dictionary import make_monomial, make_tanh
from .dynamics import (OdeSystem, TrajectoryDataset, builtin, flow, integrate, linear,
                       sample_trajectories, scalar_linear, two_machine, vdp_reversed)
from .interval import Box, Interval
from .koopman import (ConfigError, GeneratorModel, VectorFieldModel, correct_equilibrium,
                      extract_vector_field, learn_from_dataset, learn_generator,
                      resolvent_quadrature)
from .verify import (CertificationReport, VerifierConfig, certify_roa, check_band_condition,
                     check_domain_containment, check_sublevel_inclusion, required_beta)

__version__ = "0.1.0"
