"""LinUCB and MLinUCB (LinUCB with cluster-imputed missing rewards)."""

from .cluster_impute import ClusterModel, FallbackLevel, init_centroids
from .environment import BanditDataset, MaskSchedule, ReplayEnvironment, make_mask, shuffle, step
from .harness import ExperimentConfig, RoundLog, Summary, bound_trace, make_grid, run_experiment, sweep
from .ingest import DatasetSpec, load_csv, load_dataset, pca2_variance, synth_linear
from .linalg import SpdState, spd_identity, spd_logdet, spd_quad_form, spd_rank1_update, spd_solve
from .policy import ArmModel, LinUCB, MLinUCB, PolicyConfig, RandomPolicy, mlinucb_round, score_arms, select_arm, update_arm

__version__ = "0.1.0"
