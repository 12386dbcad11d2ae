# Constructions built on top of the limit processes; their interfaces may change.
from .._src.recursion import (
    Symbol, RecursionWord, phi, compose_hurst, RecursionState, recurse_step, build_recursion,
    ConditionProxy, PPConditionReport, check_pp_conditions, zero_state,
)
from .._src.time_change import (
    CONVENTION_FACTOR, default_horizon, HittingTimeMap, hitting_times, hitting_time, TimeChangedEnsemble,
    extract_bm_minus, extract_bm_times, brownian_miss_probability,
)
