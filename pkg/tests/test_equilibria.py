import json
import math

import numpy as np
import pytest

from flgame.bounds import harmonic
from flgame.constructions import (gen_cycle6, gen_spoa_lb, gen_two_node, perturbed_cycle6,
                                  random_instance, random_metric_instance)
from flgame.core import InstanceError, agent_costs, make_instance, to_json
from flgame.equilibria import (CapExceeded, NotStrongError, ZeroCostError, coalition_dynamics,
                               damage_accounting, enumerate_equilibria, find_coalition_deviation,
                               is_pure_nash, metric_spoa_audit, spoa_peeling_certificate)

from conftest import all_profiles, naive_joint_move_exists, naive_nash


# --- unilateral -----------------------------------------------------------

def test_nash_examples():
    inst = gen_two_node(4)
    assert is_pure_nash(inst, (1, 1, 1, 1))
    assert not is_pure_nash(inst, (0, 0, 1, 1))
    assert is_pure_nash(inst, (0, 0, 1, 1), alpha=1e12)
    with pytest.raises(ValueError):
        is_pure_nash(inst, (0, 0, 0, 0), alpha=0.5)


def test_split_profile_improvement_value():
    inst = gen_two_node(4)
    costs = agent_costs(inst, (0, 0, 1, 1))
    assert costs[2] == pytest.approx(1.25)
    assert agent_costs(inst, (0, 0, 0, 1))[2] == pytest.approx(1 / 3)


# --- coalition moves ------------------------------------------------------

def test_grand_coalition_on_two_node():
    inst = gen_two_node(4)
    before = agent_costs(inst, (1, 1, 1, 1))
    after = agent_costs(inst, (0, 0, 0, 0))
    assert before / after == pytest.approx([4.0] * 4)
    # The size-first order finds a pair before the grand coalition.
    mv = find_coalition_deviation(inst, (1, 1, 1, 1))
    assert mv.coalition == (0, 1) and mv.targets == (0, 0)
    assert mv.improvement_factors == pytest.approx((2.0, 2.0))
    assert find_coalition_deviation(inst, (1, 1, 1, 1), alpha=4.0) is None
    assert find_coalition_deviation(inst, (1, 1, 1, 1), alpha=3.99) is not None


def test_cycle6_first_move():
    inst = gen_cycle6()
    mv = find_coalition_deviation(inst, (0, 2, 4))
    assert mv.coalition == (0, 1) and mv.targets == (1, 1)
    after = agent_costs(inst, mv.apply((0, 2, 4)))
    assert after[0] == pytest.approx(8 / 9) and after[1] == pytest.approx(7 / 9)
    single = find_coalition_deviation(inst, (0, 2, 4), mode="single-target")
    assert single == mv.__class__(mv.coalition, mv.targets, "single-target", mv.improvement_factors)


def test_cycle6_pair_rewires():
    inst = gen_cycle6()
    prof = (1, 1, 4)
    assert agent_costs(inst, prof) == pytest.approx([8 / 9, 7 / 9, 1.0])
    mv = find_coalition_deviation(inst, prof)
    assert set(mv.coalition) == {0, 2} and set(mv.targets) == {5}
    new = agent_costs(inst, mv.apply(prof))
    old = agent_costs(inst, prof)
    assert all(old[i] - new[i] >= 1 / 9 - 1e-12 for i in mv.coalition)


def test_joint_search_matches_brute_force(rng):
    for _ in range(40):
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        inst = random_instance(rng, n, m, weights=[1, 2, 5])
        for prof in all_profiles(inst):
            for alpha in (1.0, 1.5):
                joint = find_coalition_deviation(inst, prof, alpha)
                slow = find_coalition_deviation(inst, prof, alpha, shortcut=False)
                single = find_coalition_deviation(inst, prof, alpha, mode="single-target")
                assert (joint is not None) == naive_joint_move_exists(inst, prof, alpha)
                assert (single is not None) == naive_joint_move_exists(inst, prof, alpha, True)
                assert joint == slow
                if single is not None:
                    assert joint is not None
                    assert len(joint.coalition) == len(single.coalition)


def test_accepted_moves_improve_every_member(rng):
    for _ in range(100):
        n, m = int(rng.integers(2, 6)), int(rng.integers(2, 5))
        inst = random_instance(rng, n, m, weights=[1, 2, 5])
        prof = tuple(int(v) for v in rng.integers(0, m, size=n))
        for mode in ("joint", "single-target"):
            mv = find_coalition_deviation(inst, prof, 1.2, mode)
            if mv is None:
                continue
            assert all(f > 1.2 for f in mv.improvement_factors)
            if mode == "single-target":
                assert len(set(mv.targets)) == 1


def test_random_move_mode_is_seeded(rng):
    inst = random_instance(rng, 5, 4)
    prof = (0, 0, 1, 2, 3)
    a = find_coalition_deviation(inst, prof, rng=np.random.default_rng(7))
    b = find_coalition_deviation(inst, prof, rng=np.random.default_rng(7))
    assert a == b


def test_coalition_caps(rng):
    wide = random_instance(rng, 13, 2)
    with pytest.raises(CapExceeded):
        find_coalition_deviation(wide, (0,) * 13)
    # The single-target search has a wider cap and still runs.
    find_coalition_deviation(wide, (0,) * 13, mode="single-target")
    with pytest.raises(CapExceeded):
        find_coalition_deviation(random_instance(rng, 3, 17), (0, 0, 0))
    with pytest.raises(ValueError):
        find_coalition_deviation(gen_two_node(2), (0, 0), mode="lonely")


# --- enumeration ----------------------------------------------------------

def test_enumeration_examples():
    inst = gen_two_node(4)
    assert enumerate_equilibria(inst, kind="nash") == [(0,) * 4, (1,) * 4]
    assert enumerate_equilibria(inst, kind="strong") == [(0,) * 4]
    cyc = gen_cycle6()
    assert enumerate_equilibria(cyc, kind="strong") == []
    assert enumerate_equilibria(cyc, kind="nash")


def test_enumeration_matches_brute_force(rng):
    for _ in range(30):
        n, m = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        inst = random_instance(rng, n, m, weights=[1, 2, 5])
        slow = [p for p in all_profiles(inst) if naive_nash(inst, p)]
        assert enumerate_equilibria(inst, kind="nash") == slow


def test_enumeration_jobs_and_caps(rng):
    inst = random_instance(rng, 7, 5)
    assert enumerate_equilibria(inst, jobs=2) == enumerate_equilibria(inst)
    assert enumerate_equilibria(inst, kind="strong", jobs=2) == enumerate_equilibria(inst, kind="strong")
    with pytest.raises(CapExceeded):
        enumerate_equilibria(inst, profile_cap=100)
    with pytest.raises(ValueError):
        enumerate_equilibria(inst, kind="mixed")


def test_strong_implies_nash_and_alpha_monotone(rng):
    for _ in range(20):
        n, m = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        inst = random_instance(rng, n, m, weights=[1, 2, 5])
        previous = set()
        for alpha in (1.0, 1.5, math.e, 4.0):
            strong = set(enumerate_equilibria(inst, alpha, kind="strong"))
            nash = set(enumerate_equilibria(inst, alpha, kind="nash"))
            assert strong <= nash
            assert previous <= strong
            previous = strong


# --- dynamics and damage --------------------------------------------------

def test_dynamics_examples():
    cyc = gen_cycle6()
    out = coalition_dynamics(cyc, (0, 2, 4), 1.0)
    assert out.status == "cycle"
    assert out.cycle.profiles[0] == out.cycle.profiles[-1]
    assert out.cycle.dam_max < math.e
    assert abs(out.cycle.telescoping_product - 1) <= 1e-6
    done = coalition_dynamics(cyc, (0, 2, 4), math.e)
    assert done.status == "equilibrium"
    assert find_coalition_deviation(cyc, done.profile, math.e) is None
    two = coalition_dynamics(gen_two_node(4), (1, 1, 1, 1))
    assert two.status == "equilibrium" and two.profile == (0,) * 4


def test_dynamics_cap():
    out = coalition_dynamics(gen_cycle6(), (0, 2, 4), 1.0, max_steps=2)
    assert out.status == "cap" and out.steps == 2


def test_cycle_profiles_differ_on_coalitions_only():
    out = coalition_dynamics(gen_cycle6(), (0, 2, 4))
    cyc = out.cycle
    for a, b, mv in zip(cyc.profiles, cyc.profiles[1:], cyc.moves):
        moved = {i for i in range(3) if a[i] != b[i]}
        assert moved <= set(mv.coalition)
        assert mv.apply(a) == b


def test_damage_is_one_when_outsiders_unchanged():
    inst = make_instance([[0, 1, 1], [1, 0, 1], [1, 1, 0]], [1, 1, 1], [0, 2, 2])
    rep = damage_accounting(inst, [(1, 2, 2), (0, 2, 2)], [(0,)])
    assert rep.dam_values == (1.0,)
    assert rep.impr_values[0] == pytest.approx(2.0)


def test_damage_of_abandoned_agent_is_two():
    inst = make_instance([[0, 0.1], [0.1, 0]], [1, 1], [0, 0])
    rep = damage_accounting(inst, [(0, 0), (1, 0)], [(0,)])
    assert rep.dam_values[0] == pytest.approx(2.0)
    assert rep.dam_max == pytest.approx(2.0)
    assert not rep.closed


def test_damage_rejects_zero_cost_and_bad_steps():
    inst = make_instance([[0, 1], [1, 0]], [0, 1], [0, 1])
    with pytest.raises(ZeroCostError):
        damage_accounting(inst, [(0, 1), (0, 0)], [(1,)])
    ok = gen_two_node(2)
    with pytest.raises(ValueError):
        damage_accounting(ok, [(0, 0), (1, 1)], [(0,)])
    with pytest.raises(ValueError):
        damage_accounting(ok, [(0, 0)], [(0,)])


def test_cycles_on_perturbed_cycle6(rng):
    for seed in range(20):
        inst = perturbed_cycle6(rng, 0.02)
        out = coalition_dynamics(inst, (0, 2, 4), 1.0, seed=seed)
        assert out.status == "cycle"
        assert out.cycle.dam_max < math.e
        assert abs(out.cycle.telescoping_product - 1) <= 1e-6
        assert coalition_dynamics(inst, (0, 2, 4), math.e, seed=seed).status == "equilibrium"


def test_dynamics_json():
    out = coalition_dynamics(gen_cycle6(), (0, 2, 4))
    doc = json.loads(to_json(out))
    assert doc["status"] == "cycle"
    assert doc["cycle"]["profiles"][0] == doc["cycle"]["profiles"][-1]


# --- peeling certificate --------------------------------------------------

def test_certificate_trivial_case():
    inst = gen_two_node(4)
    cert = spoa_peeling_certificate(inst, (0,) * 4, (0,) * 4)
    assert cert.passed
    assert all(not f.misconnected for f in cert.facilities)


def test_certificate_spoa_lb():
    inst = gen_spoa_lb(8, math.e)
    cert = spoa_peeling_certificate(inst, (0,) * 8, alpha=math.e)
    assert cert.passed
    (fac,) = cert.facilities
    assert fac.facility == 1 and len(fac.misconnected) == 8
    assert fac.harmonic_weight == pytest.approx(harmonic(8))
    assert sorted(fac.peel_order) == list(range(8))
    assert fac.bound == pytest.approx(math.e * harmonic(8) * fac.optimum_connection_plus_beta)


def test_certificate_rejects_non_strong():
    inst = gen_two_node(4)
    with pytest.raises(NotStrongError):
        spoa_peeling_certificate(inst, (1,) * 4)
    cert_free = spoa_peeling_certificate(inst, (0,) * 4, verify=False)
    assert cert_free.passed


def test_certificate_no_witness_detected():
    inst = gen_two_node(4)
    with pytest.raises(NotStrongError, match="no unwilling"):
        spoa_peeling_certificate(inst, (1,) * 4, (0,) * 4, verify=False)


def test_certificate_random(rng):
    checked = 0
    while checked < 30:
        n, m = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        weights = [1, 2, 5] if checked % 2 else None
        inst = random_instance(rng, n, m, weights=weights)
        for s in enumerate_equilibria(inst, kind="strong")[:2]:
            cert = spoa_peeling_certificate(inst, s)
            assert cert.passed
            checked += 1
    doc = json.loads(to_json(cert))
    assert "facilities" in doc and "passed" in doc


# --- metric audit ---------------------------------------------------------

def test_metric_audit_trivial():
    audit = metric_spoa_audit(gen_two_node(4), (0,) * 4, (0,) * 4)
    assert audit.passed
    (fac,) = audit.facilities
    assert fac.case == "simple" and fac.ratio == pytest.approx(1.0)


def test_metric_audit_cycle6_approximate():
    inst = gen_cycle6()
    out = coalition_dynamics(inst, (1, 1, 4), math.e)
    assert out.status == "equilibrium"
    audit = metric_spoa_audit(inst, out.profile, alpha=math.e)
    assert audit.passed
    for fac in audit.facilities:
        assert all(c.slack >= -1e-9 for c in fac.checks if c.asserted)


def test_metric_audit_preconditions():
    nonmetric = make_instance([[0, 1, 3], [1, 0, 1], [3, 1, 0]], [1, 1, 1], [0, 2])
    with pytest.raises(InstanceError):
        metric_spoa_audit(nonmetric, (0, 2))
    weighted = make_instance([[0, 1], [1, 0]], [1, 1], [0, 1], [1, 2])
    with pytest.raises(InstanceError):
        metric_spoa_audit(weighted, (0, 1))
    with pytest.raises(NotStrongError):
        metric_spoa_audit(gen_two_node(4), (1,) * 4)


def test_metric_audit_random_exercises_both_cases(rng):
    cases = set()
    checked = 0
    while checked < 40 or len(cases) < 2:
        n, m = int(rng.integers(2, 7)), int(rng.integers(2, 6))
        inst = random_metric_instance(rng, n, m, beta_range=(0.5, 3.0))
        start = tuple(int(v) for v in rng.integers(0, m, size=n))
        out = coalition_dynamics(inst, start, math.e)
        audit = metric_spoa_audit(inst, out.profile, alpha=math.e)
        assert audit.passed
        cases |= {f.case for f in audit.facilities}
        checked += 1
    minimal = [f for f in audit.facilities if f.case == "minimal-subset"]
    for fac in minimal:
        assert fac.unstable_agent in fac.minimal_subset
        assert fac.unstable_agent in fac.remaining
        assert fac.minimal_subset in fac.all_minimal_subsets
        assert fac.r == len(fac.minimal_subset) + len(fac.served_group)
