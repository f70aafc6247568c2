"""Progressive vector quantization (warmup, k-means init, soft-to-hard annealing)
on the TopoDisc 2D diagnostic, with vanilla and ablation baselines."""

from .config import ExperimentConfig
from .curriculum import Schedule, alpha_at, omega_at, stage_of
from .quantizer import Codebook, UsageHistogram
from .topodisc import TopoDiscConfig, gen_topodisc
from .trainer import evaluate, run_experiment

__all__ = [
    "Codebook", "ExperimentConfig", "Schedule", "TopoDiscConfig", "UsageHistogram",
    "alpha_at", "evaluate", "gen_topodisc", "omega_at", "run_experiment", "stage_of",
]
__version__ = "0.1.0"
