"""mhlab: a numerical laboratory for random-walk Metropolis on unimodal targets.

Exact finite-state twins of 1D Metropolis-Hastings kernels, drift
certificates, path-congestion spectral-gap bounds, coupled hitting-time
experiments, and the sweep harness that validates every closed-form bound
against brute-force computation.
"""

from .bounds import (BoundReport, CalibrationConstants, HarrisRate,
                     calibrate_constants, congestion_constant_bound,
                     congestion_gap_bound, escape_prob_bound, harris_rate,
                     mixing_time_bound, relaxation_bound,
                     restricted_mixing_bound)
from .coupling import (CouplingOrderError, EscapeResult, HittingTail,
                       TripleTrajectory, escape_frequency, hitting_tail,
                       run_triple)
from .drift import (DriftCertificate, DriftFit, apply_kernel_to_V,
                    check_theta_condition, exponential_V, finalize_certificate,
                    fit_drift, quadratic_V, sublevel_set, verify_certificate)
from .harness import (SweepConfig, emit_plots, fit_scaling, make_sweep_target,
                      run_sweep, write_sweep_csv)
from .kernel import (IndependenceProposal, MHKernel, acceptance, forward_map,
                     iid_kernel, run_chain, step)
from .model import (EnvelopeReport, NearUniformReport, ProposalSpec,
                    TargetSpec, UnimodalReport, check_near_uniform,
                    check_unimodal, custom_proposal, gaussian_proposal,
                    gaussian_target, laplace_proposal, laplace_target,
                    proposal_from_config, simpson_quad, target_from_config,
                    tent_target, uniform_ball_proposal, uniform_target,
                    verify_envelope)
from .operator_lab import (DiscretizedChain, build_matrix,
                           detailed_balance_error, discrete_path_gap_bound,
                           export_text, load_text, mixing_time,
                           restricted_start_indices, spectral_gap,
                           total_variation, tv_curve)
from .rng import make_rng, seed_sequence, split

__version__ = "0.1.0"
