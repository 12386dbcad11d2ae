# Statistics, acceptance checks and experiment configuration.
from .._src.stats import (
    HurstReport, EcfReport, KsResult, CovarianceReport, mean_stderr, estimate_hurst,
    ecf, ecf_distance, stable_cf, ecf_zscore, ks_test, cov_matrix, gaussian_abs_mean, normal_cdf,
)
from .._src.acceptance import register_check, acceptance_checks, resolve_checks, run_check, override_replicates
from .._src.config import (
    ExperimentConfig, ModelConfig, SizeConfig, RantConfig, RecurseConfig, ExtractConfig,
    YamlLoader, load_config, config_from_dict, config_hash, apply_overrides,
)
