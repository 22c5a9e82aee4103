"""Interval-averaged step and piecewise-linear approximation of evolution
equations u' + A(t) u = f governed by time-dependent symmetric forms."""
from .analysis import (apriori_report, convergence_study, energy_identity_residual,
                       h_norm_rule_residual, mr_norms)
from .approx import (AveragedFamily, Kind, Subdivision, average, eval_linear,
                     eval_scalar_linear, eval_scalar_rate, eval_step,
                     probe_l2_convergence, probe_pointwise_convergence)
from .forms import (EvolutionProblem, FormFamily, preset_rhs, preset_vector, scenario,
                    shift_omega, shift_rhs,
                    verify_form_axioms)
from .solver import Trajectory, oracle_for, solve_approximate, solve_spectral_oracle, solve_theta
from .triple import GelfandTriple, build_fem_triple, embedding_constant, from_grams, norm

__version__ = "0.1.0"
