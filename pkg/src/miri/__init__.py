"""Missing-data imputation by mutual-information-reducing iterations of a
mask-conditioned rectified flow."""

from .data import ImputationState, MaskedDataset, Standardizer, initial_impute, load_csv, standardize, write_csv
from .errors import MiriError
from .flow import VelocityModel, euler_solve, impute_once, train_velocity
from .iterations import DiagnosticsTrace, MiriConfig, run_miri, run_multiple
from .masking import MaskSpec, apply_mask, gen_mar, gen_mcar, gen_mnar
from .metrics import MetricsReport, evaluate, mae_masked, mi_plugin, mmd_rbf, rmse_masked
from .numeric import Rng

__version__ = "0.1.0"
