"""Hidden Markov models with sparse state-specific precision matrices."""
from .baselines import (adjusted_rand_index, fit_diagcov, fit_unpenalized,
                        graph_metrics, kmeans, kmeans_glasso, kmeans_init,
                        pooled_glasso, state_graph_metrics)
from .core import (GaussianState, HmmModel, Responsibilities, SufficientStats,
                   forward_backward, log_emission_density, log_likelihood,
                   sample_path)
from .em import (FitConfig, FitResult, Initialization, fit_hmmglasso, lambda_uni,
                 m_step, penalized_nll)
from .errors import (DataFormatError, DegenerateStateError, DimensionError,
                     FitError, GlassoConvergenceError, HmmGlassoError,
                     SingularCovarianceError)
from .glasso import (PENALTY_KINDS, PenaltySpec, glasso_solve, graph_of,
                     partial_correlation, penalty_value)
from .io import ModelDocument, deserialize, read_matrix, serialize
from .pruning import (PruneStep, PruneTrace, backward_prune, closest_pair,
                      delete_init, merge_init, sym_kl)
from .selection import CRITERIA, ScoreBreakdown, degrees_of_freedom, score
from .simbench import (SimSpec, build_truth, generate, run_experiment_1,
                       run_experiment_2)

__version__ = "0.1.0"
