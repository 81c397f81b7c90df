"""Normal-approximation bounds for negatively associated sums and lattice fields."""
from .bounds import (BoundReport, DecayConstants, MultivariateInputs, decay_constants,
                     field_bound_multivariate, field_bound_univariate, multivariate_na_bound,
                     psi_n_from_sigma, sigma_inv_infty_bound, univariate_na_bound,
                     univariate_pa_bound)
from .lattice import (BlockPartition, BlockSpec, CovarianceModel, block_cov_exact, block_sum_xi,
                      compute_An, decompose_block)
from .metrics import normal_quantile, smooth_metric_lower_bound, wasserstein_to_std_normal
from .samplers import FieldSpec, sample_field, sample_vector, verify_na

__version__ = "0.1.0"

__all__ = [
    "BoundReport", "DecayConstants", "MultivariateInputs", "decay_constants",
    "field_bound_multivariate", "field_bound_univariate", "multivariate_na_bound",
    "psi_n_from_sigma", "sigma_inv_infty_bound", "univariate_na_bound", "univariate_pa_bound",
    "BlockPartition", "BlockSpec", "CovarianceModel", "block_cov_exact", "block_sum_xi",
    "compute_An", "decompose_block", "normal_quantile", "smooth_metric_lower_bound",
    "wasserstein_to_std_normal", "FieldSpec", "sample_field", "sample_vector", "verify_na",
]
