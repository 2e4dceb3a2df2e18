"""Security-latency bounds, queue throughput and Monte Carlo checks for Nakamoto consensus under exponential delay."""

__version__ = "0.1.0"

from .dist import Pmf, convolve, tail_prob, total_variation
from .errors import (
    NakaqueueError,
    NotPositiveRecurrent,
    ParameterDomainError,
    PmfOverflowError,
    SelfishDominates,
    ThresholdUnreachable,
    TruncationFailure,
    Unstable,
)
from .mempool import general_safety_report, general_safety_upper, inclusion_probabilities, lead_chain
from .params import ChainParams, NetworkModel, derive, expected_confirmation_latency, mu1_from_percentile
from .queue import (
    QueueSpec,
    generator_blocks,
    lambda0_design,
    lambda1_empty_block_attack,
    lambda2_selfish_attack,
    queue_steady_state,
    selfish_honest_fraction,
    stability_threshold,
)
from .seclat import (
    BoundKind,
    SafetyReport,
    confirmation_dist,
    fault_tolerance_beta_max,
    inter_jumper_dist,
    lead_distribution,
    max_safe_kappa,
    safety_violation,
    ultimate_beta_max,
)
from .sweeps import SweepSpec, run_sweep

__all__ = [
    "BoundKind",
    "ChainParams",
    "NakaqueueError",
    "NetworkModel",
    "NotPositiveRecurrent",
    "ParameterDomainError",
    "Pmf",
    "PmfOverflowError",
    "QueueSpec",
    "SafetyReport",
    "SelfishDominates",
    "SweepSpec",
    "ThresholdUnreachable",
    "TruncationFailure",
    "Unstable",
    "confirmation_dist",
    "convolve",
    "derive",
    "expected_confirmation_latency",
    "fault_tolerance_beta_max",
    "general_safety_report",
    "general_safety_upper",
    "generator_blocks",
    "inclusion_probabilities",
    "inter_jumper_dist",
    "lambda0_design",
    "lambda1_empty_block_attack",
    "lambda2_selfish_attack",
    "lead_chain",
    "lead_distribution",
    "max_safe_kappa",
    "mu1_from_percentile",
    "queue_steady_state",
    "run_sweep",
    "safety_violation",
    "selfish_honest_fraction",
    "stability_threshold",
    "tail_prob",
    "total_variation",
    "ultimate_beta_max",
]
