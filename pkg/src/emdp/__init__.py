"""Energy Markov decision processes: safety and pumping levels, exact
mean-payoff values and synthesis of safe, near-optimal strategies."""

from .model import Configuration, Emdp, Trace, make_emdp, parse_config, parse_emdp, format_emdp
from .energy import min_pump, min_safe, pumping_strategy, safe_strategy
from .synth import (
    Classification,
    UnsafeStart,
    approx_value,
    classify,
    epsilon_strategy,
    limit_value,
    sp_strategy,
)
from .sim import SimReport, estimate_mp, oracle_value, run_trace

__all__ = [
    "Classification", "Configuration", "Emdp", "SimReport", "Trace", "UnsafeStart",
    "approx_value", "classify", "epsilon_strategy", "estimate_mp", "format_emdp", "limit_value",
    "make_emdp", "min_pump", "min_safe", "oracle_value", "parse_config", "parse_emdp",
    "pumping_strategy", "run_trace", "safe_strategy", "sp_strategy",
]
