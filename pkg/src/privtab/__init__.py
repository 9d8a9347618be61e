"""privtab: privacy-protected tabular survey data products.

Two risk-weighted Bayesian synthesizers generate private microdata releases
(outcome and weights jointly), from which count and mean tables with design-
based standard errors are built; a Laplace additive-noise baseline with local
sensitivities provides the comparison at matched privacy budgets.
"""

__version__ = "0.1.0"

from .data import CellId, SurveyDataset, SurveyRecord, all_cells, load_csv
from .fbp import FbpModel, FbpParams, FbpPriorSpec
from .fbs import FbsModel, FbsParams, FbsPriorSpec
from .laplace import (BudgetAllocation, SensitivityProfile, add_laplace,
                      allocate_budget, build_noised_tables, replicate_variance,
                      sensitivity_count, sensitivity_mean)
from .mcmc import (FunctionTarget, PosteriorDraws, SampleConfig,
                   effective_sample_size, sample)
from .release import SyntheticRelease, load_release
from .riskweights import (PrivacyAccount, RiskProfile, compute_alpha, epsilon,
                          record_lipschitz, scale_shift, tune_to_target,
                          weighted_lipschitz)
from .simharness import (MonteCarloResult, PopulationSpec,
                         default_population_spec, gen_population, monte_carlo,
                         population_truth, pps_sample, rmse)
from .tabulate import (CellTable, CombinedEstimate, build_release_tables,
                       build_sample_tables, cell_estimates, combine_partial,
                       taylor_variance)

__all__ = [name for name in dir() if not name.startswith("_")]
