"""Random forests with MPSVM-based oblique splits and an RVFL-routed hybrid."""

from .dataset import (BagSample, DataError, Dataset, NormalizationParams, apply_normalizer, draw_bag,
                      fit_normalizer, invert_normalizer, kfold_splits, load_csv)
from .ensemble import (KINDS, EnsembleParams, ForestModel, HybridModel, load_model, save_model,
                       train_forest, train_hybrid, train_model)
from .harness import (ConfigError, EvaluationReport, ExperimentConfig, emit_report, friedman_ranks,
                      load_config, measure_training, read_report, run_experiment, sweep_parameter)
from .numerics import NumericError, gen_eig_smallest, ridge_solve
from .rvfl import RvflConfig, RvflModel, train_rvfl
from .tree import HyperplaneSplit, TreeNode, TreeParams, best_axis_split, best_oblique_split, grow_tree

__version__ = "0.1.0"
