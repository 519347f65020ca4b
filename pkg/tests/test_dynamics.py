import dataclasses

import pytest

from flgame.constructions import (gen_metric_pos, gen_nonmetric_pos, gen_two_node, random_instance,
                                  random_metric_instance)
from flgame.core import EPS_CMP, make_instance, total_cost
from flgame.dynamics import (AuditError, DynamicsTrace, Step, best_response, charging_audit,
                             charging_case, potential, run_ibr)
from flgame.equilibria import is_pure_nash
from flgame.optimum import social_optimum

from conftest import all_profiles, naive_cost


def scan_best_response(inst, prof, i):
    costs = []
    for v in range(inst.node_count):
        alt = list(prof)
        alt[i] = v
        costs.append(naive_cost(inst, alt, i))
    best = min(costs)
    if costs[prof[i]] <= best + EPS_CMP:
        return prof[i]
    return next(v for v, c in enumerate(costs) if c <= best + EPS_CMP)


def test_best_response_matches_scan(rng):
    for _ in range(300):
        n, m = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        inst = random_instance(rng, n, m, weights=[1, 2, 5])
        prof = tuple(int(v) for v in rng.integers(0, m, size=n))
        i = int(rng.integers(n))
        assert best_response(inst, prof, i) == scan_best_response(inst, prof, i)


def test_best_response_ties_stay():
    inst = make_instance([[0, 0], [0, 0]], [1, 1], [0, 0])
    # Agent 1 alone at node 1 pays 1; joining node 0 pays 1/2, so it moves.
    assert best_response(inst, (0, 1), 1) == 0
    # Exactly tied options keep the current node.
    assert best_response(inst, (1, 1), 0) == 1


def test_potential_is_exact(rng):
    for _ in range(200):
        n, m = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        inst = random_instance(rng, n, m)
        prof = [int(v) for v in rng.integers(0, m, size=n)]
        i, v = int(rng.integers(n)), int(rng.integers(m))
        alt = list(prof)
        alt[i] = v
        d_pot = potential(inst, alt) - potential(inst, prof)
        d_cost = naive_cost(inst, alt, i) - naive_cost(inst, prof, i)
        assert d_pot == pytest.approx(d_cost, abs=1e-12)


def test_potential_rejects_weighted():
    inst = make_instance([[0.0]], [1.0], [0, 0], [1.0, 2.0])
    with pytest.raises(ValueError):
        potential(inst, (0, 0))


def test_ibr_converges_with_decreasing_potential(rng):
    for _ in range(500):
        n, m = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        inst = random_instance(rng, n, m)
        start = [int(v) for v in rng.integers(0, m, size=n)]
        trace = run_ibr(inst, start)
        assert trace.converged
        pots = [potential(inst, start)] + [st.potential for st in trace.steps]
        assert all(b < a for a, b in zip(pots, pots[1:]))
        assert trace.profiles()[-1] == trace.final
        for st in trace.steps:
            assert st.delta_agent_cost < -EPS_CMP
        for i in range(n):
            assert best_response(inst, trace.final, i) == trace.final[i]


def test_ibr_fixed_points_are_nash(rng):
    for _ in range(20):
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        inst = random_instance(rng, n, m)
        for prof in all_profiles(inst):
            fixed = not run_ibr(inst, prof).steps
            assert fixed == is_pure_nash(inst, prof)


def test_ibr_trace_csv_and_deltas(rng):
    inst = gen_two_node(3)
    trace = run_ibr(inst, (1, 1, 0))
    assert trace.final == (0, 0, 0)
    lines = trace.to_csv().splitlines()
    assert lines[0] == "step,agent,from,to,delta_agent_cost,delta_social,potential"
    assert len(lines) == 1 + len(trace.steps)
    profs = trace.profiles()
    for st, a, b in zip(trace.steps, profs, profs[1:]):
        assert st.delta_social == pytest.approx(total_cost(inst, b) - total_cost(inst, a))


def test_ibr_orders_and_cap(rng):
    inst = random_instance(rng, 5, 4)
    start = (0, 1, 2, 3, 0)
    a = run_ibr(inst, start, "facility-consecutive")
    b = run_ibr(inst, start, [4, 3, 2, 1, 0])
    assert a.converged and b.converged
    with pytest.raises(ValueError):
        run_ibr(inst, start, "random")
    with pytest.raises(ValueError):
        run_ibr(inst, start, [0, 1])
    with pytest.raises(ValueError):
        run_ibr(inst, start, max_steps=0)
    cascade = gen_nonmetric_pos(4)
    full = run_ibr(cascade, (1,) * 4 + (0,) * 4)
    assert full.converged and len(full.steps) == 4
    capped = run_ibr(cascade, (1,) * 4 + (0,) * 4, max_steps=1)
    assert not capped.converged and len(capped.steps) == 1


def test_ibr_weighted_has_no_potential(rng):
    inst = random_instance(rng, 4, 3, weights=[1, 2, 5])
    trace = run_ibr(inst, (0, 1, 2, 0))
    assert all(st.potential is None for st in trace.steps)


def test_charging_case_table():
    assert charging_case(3, 2) == 1
    assert charging_case(1, 2) == 2
    assert charging_case(2, 1) == 3
    assert charging_case(1, 1) == 4


def test_charging_audit_random_metric(rng):
    for _ in range(100):
        n, m = int(rng.integers(2, 7)), int(rng.integers(2, 7))
        inst = random_metric_instance(rng, n, m, beta_range=(0.2, 3.0))
        s = social_optimum(inst).assignment
        for order in ("round-robin", "facility-consecutive"):
            trace = run_ibr(inst, s, order)
            state = charging_audit(inst, trace, s)
            assert state.passed, state.violations
            assert sorted(state.labels) == list(range(n))
            assert state.total_charge == pytest.approx(state.cost_increase, abs=1e-9)


def test_charging_audit_metric_cascade():
    inst = gen_metric_pos(16)
    s = social_optimum(inst).assignment
    trace = run_ibr(inst, s)
    state = charging_audit(inst, trace, s)
    assert state.passed
    assert len(state.deviations) == len(trace.steps) > 0
    firsts = [d for d in state.deviations if d.first_from_start]
    assert all(d.delta_social <= inst.facility_costs[d.source] / d.group_remaining + 1e-9 for d in firsts)


def test_charging_audit_from_arbitrary_start(rng):
    # The per-step case bound holds for any improving move, not just from OPT.
    for _ in range(50):
        n, m = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        inst = random_instance(rng, n, m)
        start = tuple(int(v) for v in rng.integers(0, m, size=n))
        state = charging_audit(inst, run_ibr(inst, start), start)
        assert all(d.delta_social <= d.case_bound + 1e-9 for d in state.deviations)


def test_charging_audit_flags_tampering():
    inst = gen_nonmetric_pos(3)
    start = (1, 1, 1, 0, 0, 0)
    trace = run_ibr(inst, start)
    assert charging_audit(inst, trace, start).passed
    bad_step = dataclasses.replace(trace.steps[0], delta_social=5.0)
    tampered = DynamicsTrace(trace.start, [bad_step] + trace.steps[1:], trace.final, True)
    state = charging_audit(inst, tampered, start)
    assert not state.passed
    assert any("case" in v for v in state.violations)


def test_charging_audit_preconditions(rng):
    inst = random_instance(rng, 3, 3, weights=[2, 5])
    if not inst.unweighted:
        with pytest.raises(AuditError):
            charging_audit(inst, run_ibr(inst, (0, 0, 0)), (0, 0, 0))
    plain = gen_two_node(3)
    with pytest.raises(AuditError):
        charging_audit(plain, run_ibr(plain, (1, 1, 1)), (0, 0, 0))
    fake = DynamicsTrace((0, 0, 0), [Step(0, 1, 0, -1.0, 0.0, None)], (0, 0, 0), True)
    with pytest.raises(AuditError):
        charging_audit(plain, fake, (0, 0, 0))
