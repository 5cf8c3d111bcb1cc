"""Policy-regularized offline multi-objective RL on toy environments."""

__version__ = "0.1.0"

from .core import (AugmentedPreference, Preference, Trajectory, Transition, augment,
                   cosine_distance, dominates, l1_normalize, preference_grid, scalarize)
from .envs import EnvSpec, EnvState, get_spec, make_env, oracle_pareto_front, rollout, step
from .dataset import (OfflineDataset, SampleBatch, filter_subdataset, generate_dataset,
                      load_dataset, ratio_subdataset, sample_batch, save_dataset)
from .metrics import (ParetoFront, expected_utility, hypervolume, hypervolume_exact,
                      hypervolume_mc, pareto_filter, sparsity)
from .trainer import PolicyBundle, TrainConfig, evaluate_policy, load_bundle, save_bundle, train
from .adaptation import AdaptationReport, adapt, oracle_wbc
from .baselines import BcpConfig, CqlConfig, train_bc_p, train_mo_cql
