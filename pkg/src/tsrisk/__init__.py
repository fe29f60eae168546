"""Risk-controlling threshold calibration for two-stage retrieve-then-rank systems."""

from ._backend import BACKEND
from .core import (
    FeasibleSet, GridError, LossTable1, LossTable2, LossTableError, ParameterGrid, RiskLevels, ceil_to_grid,
    empirical_risk1, empirical_risk2,
)
from .crc import (
    CrcThresholds, InfeasibleError, SplitConfig, crc_thresholds, estimate_lambda0, gamma_hat0, lambda_hat0_stage1,
    lambda_hat0_stage2, lambda_hat_t, split_thresholds, tcrc_feasible_set, tcrc_point, tcrc_split_feasible_set,
    tcrc_split_point,
)
from .experiment import ExperimentConfig, MCConfig, calibrate, mc_validate, run_experiment
from .io import ParseError, load_dataset, read_dataset, write_dataset
from .ltt import (
    PROCEDURES, LttConfig, PValueFamilies, compute_pvalue_families, level_table, ltt_appendix1, ltt_appendix2,
    ltt_appendix3, ltt_calibrate, ltt_main, run_procedure,
)
from .pvalue import binom_cdf, hb_pvalue, hb_pvalues_from_sums, kl_bernoulli
from .retrieval import (
    DocRecord, QueryBatch, QueryRecord, R0Config, ValidationError, build_c1, build_c2, build_loss_tables,
    monotonize1, monotonize2, ranking_loss, retrieval_loss,
)
from .selection import EmptyFeasibleSetError, EvalReport, ObjectiveConfig, evaluate, select_pair
from .synth import SynthConfig, synth_batch, synth_generate, true_risk1, true_risk2

__version__ = "0.1.0"
