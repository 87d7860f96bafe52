"""Posterior-matching channel coding over the BSC with noiseless feedback.

Flat systematic posterior matching (SPM), its systematically causal variant
(SCE-SPM), the causal sub-block-combining encoder (SBC-SPM) and a bitwise
repetition baseline, plus closed-form bounds and a Monte Carlo harness.
"""

from .analysis import (
    WeightDistribution,
    expected_weight,
    expected_weight_d1,
    expected_weight_d2,
    repetition_bit_target,
    sce_bound,
    traditional_bound,
    weight_distribution,
)
from .channel import (
    ArrivalSchedule,
    ChannelParams,
    bits_available,
    bsc_transmit,
    capacity,
    crossover_for_capacity,
)
from .config import SimConfig, TrialResult
from .sbc import Forest, SBCSession, combine_all, run_sbc_spm, segment
from .sim import lockstep_audit, run_repetition, run_sce, run_trial, simulate, sweep
from .spm import (
    Group,
    GroupList,
    InvariantError,
    decode_status,
    init_groups,
    locate,
    partition,
    rank_pattern,
    run_spm,
    unrank_pattern,
    update,
)

__version__ = "0.1.0"
