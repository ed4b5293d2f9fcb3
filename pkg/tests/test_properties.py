"""Cross-module properties on random models."""

import math
from fractions import Fraction

from hypothesis import given, settings, strategies as st

from emdp import Classification, approx_value, classify, epsilon_strategy, limit_value, min_safe
from emdp.machines import StagedMachine, ThresholdMachine
from emdp.model import Configuration
from emdp.sim import unfold_value
from emdp.synth import cut_level
from helpers import emdps

EPS = Fraction(1, 10)


def safe_configs(e, data, top=3):
    ms = min_safe(e)
    safe = [s for s in e.states if ms[s] != math.inf and ms[s] <= top]
    if not safe:
        return None
    s = data.draw(st.sampled_from(safe))
    return Configuration(s, data.draw(st.integers(int(ms[s]), top)))


@settings(max_examples=40)
@given(emdps(), st.data())
def test_truncation_never_beats_the_value(e, data):
    cfg = safe_configs(e, data)
    if cfg is None:
        return
    v = approx_value(e, cfg, EPS).value
    # the truncated product only adds penalties
    assert v >= unfold_value(e, cfg, 3) - EPS
    assert v <= max(t.reward for t in e.transitions)


@settings(max_examples=40)
@given(emdps(), st.data())
def test_high_levels_report_the_limit(e, data):
    cfg = safe_configs(e, data)
    if cfg is None:
        return
    high = Configuration(cfg.state, cut_level(e, EPS) + 1)
    assert approx_value(e, high, EPS).value == limit_value(e, cfg.state)


@given(emdps())
def test_unsafe_levels_are_minus_infinity(e):
    ms = min_safe(e)
    for s in e.states:
        if ms[s] == math.inf:
            assert limit_value(e, s) == -math.inf
        elif ms[s] > 0:
            assert approx_value(e, Configuration(s, int(ms[s]) - 1), EPS).value == -math.inf


@settings(max_examples=40)
@given(emdps(strongly_connected=True), st.data())
def test_sp_models_get_sp_machines(e, data):
    cfg = safe_configs(e, data)
    if cfg is None:
        return
    m = epsilon_strategy(e, cfg, Fraction(1, 2))
    sp = classify(e) is Classification.SP_EMDP and all(v != math.inf for v in min_safe(e).values())
    assert isinstance(m, (ThresholdMachine, StagedMachine)) == sp


@settings(max_examples=40)
@given(emdps(strongly_connected=True), st.data())
def test_sp_configurations_share_the_flow_value(e, data):
    from emdp.synth import sp_value

    if classify(e) is not Classification.SP_EMDP:
        return
    cfg = safe_configs(e, data)
    if cfg is None or any(v == math.inf for v in min_safe(e).values()):
        return
    assert abs(approx_value(e, cfg, EPS).value - sp_value(e)) <= EPS


@given(emdps(strongly_connected=True))
def test_case_dichotomy(e):
    import pytest

    from emdp.flows import InfeasibleFlow, ProgramKind, solve_flow
    from emdp.synth import NotApplicable, caseA_strategy, caseB_value

    if any(v == math.inf for v in min_safe(e).values()):
        return
    try:
        g = solve_flow(e, ProgramKind.TREND).objective_value
    except InfeasibleFlow:
        return
    assert g >= 0
    if g > 0:
        caseA_strategy(e, None, Fraction(1, 2))
        with pytest.raises(NotApplicable):
            caseB_value(e)
    else:
        caseB_value(e)
        with pytest.raises(NotApplicable):
            caseA_strategy(e, None, Fraction(1, 2))
