"""relaywake: relay selection under partial information for sleep-wake
cycling networks.

Solves the known-count stage thresholds by backward induction on a grid,
builds inner/outer bounds on the optimum stopping set of the partially
observed problem, derives the single-threshold rule of the simplified
(Poisson wake-up) model, and evaluates all policies by Monte-Carlo
simulation at one-hop and end-to-end scale.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    InitialBelief,
    ProgressReward,
    RewardDistribution,
    TabulatedReward,
    TruncatedGaussianReward,
    UniformReward,
    WakeModel,
    forwarding_area,
    sample_episode,
    scenario_preset,
)
