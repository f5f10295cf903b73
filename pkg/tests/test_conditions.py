import math

import numpy as np
import pytest

from exitmc import Annulus, Ball, EulerMaruyama, Partition, SimParams
from exitmc import oracles
from exitmc.conditions import (ConditionResult, EstimatorConfig, Hypotheses, check_conditions,
                               check_disjoint, estimate_quantities, example1_bound,
                               example2_inequality_report, feasibility_sweep,
                               find_feasible_constants, multiplicity_enumerate, sweep_partition)
from exitmc.errors import InputError

C0 = (0.0, 0.0, 0.0)


@pytest.fixture
def cheap():
    return EstimatorConfig(params=SimParams(scheme=EulerMaruyama(1e-3), seed=2), n_paths=100,
                           grid_size=8)


def test_condition_margins_and_envelopes():
    le = ConditionResult(1.0, 1.1, "le", lhs_std_error=0.05, z=3)
    assert le.margin == pytest.approx(0.1) and le.verdict
    assert not le.conservative and le.anti_conservative
    ge = ConditionResult(1.0, 0.9, "ge", lhs_std_error=0.01, z=3)
    assert ge.margin == pytest.approx(0.1) and ge.conservative


def test_hypotheses_validation(shell):
    part = Partition(Annulus(C0, 1.2, 1.8), shell)
    with pytest.raises(InputError):
        Hypotheses(1.0, 1.0, 1.0, 1.0, part)
    with pytest.raises(InputError):
        Hypotheses(0.0, 2.0, 1.0, 1.0, part)
    assert not Hypotheses(1.0, 2.0, 2.0, 1.0, part).m_le_M


def test_ball_cond1_saturated(unit_ball, cheap):
    part = Partition(Ball(C0, 0.5), unit_ball)
    hyp = Hypotheses(1.0, 3.0, 0.5, math.sqrt(3), part)
    rep = check_conditions(hyp, cheap)
    assert rep.cond1.margin == pytest.approx(0.0, abs=1e-15)
    assert rep.cond1.verdict
    assert rep.quantities.sup_exit.source == "oracle"


def test_cond1_scaling_invariance(unit_ball, cheap):
    part = Partition(Ball(C0, 0.5), unit_ball)
    q = estimate_quantities(unit_ball, part, cheap)
    p, M = 3.0, 1.5
    for c in (0.1, 2.0, 7.0):
        a = check_conditions(Hypotheses(1.0, p, 0.5, M, part), quantities=q)
        b = check_conditions(Hypotheses(c, p, 0.5, c ** (1 / (1 - p)) * M, part), quantities=q)
        assert a.cond1.verdict == b.cond1.verdict


def test_oracle_sup_over_d2(shell):
    # D1 covers the maximiser: sup over D2 sits on the interface nearest to it
    part = Partition(Annulus(C0, 1.3, 1.6), shell)
    cfg = EstimatorConfig(params=SimParams(scheme=EulerMaruyama(1e-3)), n_paths=50, grid_size=8)
    q = estimate_quantities(shell, part, cfg)
    spec = oracles.AnnulusSpec3D(1.0, 2.0)
    f = lambda r: float(oracles.annulus_exit_time_radial(spec, r))
    assert q.sup_exit_d2.value == pytest.approx(max(f(1.3), f(1.6)))
    assert q.sup_exit.value == pytest.approx(oracles.annulus_sup_exit_time(spec)[0])


def test_find_constants_annulus_M(shell, cheap):
    part = Partition(Annulus(C0, 1.05, 1.2), shell)
    res = find_feasible_constants(shell, part, 1.0, 1.2, cheap)
    sup = oracles.annulus_sup_exit_time(oracles.AnnulusSpec3D(1.0, 2.0))[0]
    assert res.report.M == pytest.approx(sup ** -5)
    assert res.report.cond1.verdict and res.report.cond2.verdict
    # saturation forces m > M: the occupation infimum never exceeds the exit-time supremum
    assert "m_le_M" in res.report.failed and not res.feasible


def test_find_constants_rejects_p_le_1(shell, cheap):
    with pytest.raises(InputError):
        find_feasible_constants(shell, Partition(Annulus(C0, 1.2, 1.8), shell), 1.0, 1.0, cheap)


def test_example1_bound_value():
    assert example1_bound(100.0, 3, 3.0, 1.0) == pytest.approx(math.sqrt(1e4 / 3))


def test_example2_limits():
    rep = example2_inequality_report(1.0, 2.0, 1.1, 1.0)
    assert rep["M_exponent_side"] > 0 and rep["bound_side"] > 0
    near = example2_inequality_report(1.0, 10.0, math.sqrt(2) - 1e-9, 1.0)
    assert near["M_exponent_side"] == pytest.approx(1.0, abs=1e-6)
    assert near["bound_side"] == pytest.approx(1.0, abs=1e-6)
    for p in (1.0, 1.5):
        with pytest.raises(InputError):
            example2_inequality_report(1.0, 10.0, p, 1.0)


def test_multiplicity_singletons_and_pairs(unit_ball):
    comps = [Ball((-0.6, 0, 0), 0.2), Ball((0, 0, 0), 0.2), Ball((0.6, 0, 0), 0.2)]
    sets = multiplicity_enumerate(unit_ball, comps, [1, 2, 3], [5, 4, 6], 1.0, 2.0, None)
    by = {s.index_set: s for s in sets}
    assert by[(2,)].m_hat == 2 and by[(2,)].M_hat == 4
    assert by[(1, 3)].m_hat == 3 and by[(1, 3)].M_hat == 5


def test_multiplicity_overlap_rejected(unit_ball):
    with pytest.raises(InputError):
        check_disjoint([Ball((0, 0, 0), 0.3), Ball((0.2, 0, 0), 0.3)])


def test_sweep_partition_keeps_maximiser_in_d2():
    dom, part = sweep_partition("annulus", {"delta": 1.0, "T": 10.0})
    _, z = oracles.annulus_sup_exit_time(oracles.AnnulusSpec3D(1.0, 10.0))
    assert part.in_d2([z, 0, 0])


def test_sweep_resume_and_errors(tmp_path, cheap):
    cfg = EstimatorConfig(params=SimParams(scheme=EulerMaruyama(1e-2)), n_paths=20, grid_size=4,
                          step_scaling="domain")
    store = tmp_path / "rows.jsonl"
    ranges = {"T": [10.0], "p": [3.0, 0.5], "lambda": [1.0]}
    rows = feasibility_sweep("ball", ranges, cfg, store)
    assert len(rows) == 2
    bad = [r for r in rows if r["params"]["p"] == 0.5][0]
    assert bad["error"].startswith("InputError")
    good = [r for r in rows if r["params"]["p"] == 3.0][0]
    assert "cond3" in good["failed"]
    n_lines = len(store.read_text().splitlines())
    again = feasibility_sweep("ball", ranges, cfg, store)
    assert again == rows
    assert len(store.read_text().splitlines()) == n_lines


def test_one_point_sweep_equals_check(cheap):
    cfg = EstimatorConfig(params=SimParams(scheme=EulerMaruyama(1e-2), seed=0), n_paths=20,
                          grid_size=4, step_scaling="domain")
    rows = feasibility_sweep("ball", {"T": [10.0], "p": [3.0], "lambda": [1.0]}, cfg)
    dom, part = sweep_partition("ball", {"T": 10.0})
    from dataclasses import replace
    from exitmc.conditions import _row_seed
    seed = _row_seed(0, rows[0]["key"])
    res = find_feasible_constants(dom, part, 1.0, 3.0,
                                  replace(cfg, params=replace(cfg.params, seed=seed)))
    assert rows[0]["m"] == res.report.m and rows[0]["failed"] == res.report.failed


def test_off_center_d1_uses_sampled_grids():
    dom = Ball((0, 0, 0), 1.0)
    part = Partition(Ball((-0.6, 0, 0), 0.2), dom)
    cfg = EstimatorConfig(params=SimParams(scheme=EulerMaruyama(1e-3)), n_paths=20,
                          sample_grid_size=16)
    q = estimate_quantities(dom, part, cfg)
    assert q.grids["D1"]["kind"] == "sampled" and q.grids["D1"]["size"] > 0
    assert q.grids["D"]["kind"] == "radial"
