"""Independent brute-force oracles shared by the test modules.

These deliberately avoid the package's vectorized code paths: plain loops
over the cost formula, all profiles and all joint target tuples.
"""

import itertools

import numpy as np
import pytest

EPS = 1e-9


def naive_cost(inst, profile, i):
    v = profile[i]
    load = sum(inst.agents[j].weight for j in range(inst.n) if profile[j] == v)
    w = inst.agents[i].weight
    return w * inst.distances[inst.agents[i].home, v] + w * inst.facility_costs[v] / load


def naive_social(inst, profile):
    conn = sum(a.weight * inst.distances[a.home, s] for a, s in zip(inst.agents, profile))
    return conn + sum(inst.facility_costs[v] for v in set(profile))


def naive_better(old, new, alpha):
    return old > alpha * new + EPS


def naive_nash(inst, profile, alpha=1.0):
    for i in range(inst.n):
        old = naive_cost(inst, profile, i)
        for v in range(inst.node_count):
            alt = list(profile)
            alt[i] = v
            if naive_better(old, naive_cost(inst, alt, i), alpha):
                return False
    return True


def naive_joint_move_exists(inst, profile, alpha=1.0, single_target=False):
    n, m = inst.n, inst.node_count
    old = [naive_cost(inst, profile, i) for i in range(n)]
    for k in range(1, n + 1):
        for coalition in itertools.combinations(range(n), k):
            tuples = ([(v,) * k for v in range(m)] if single_target
                      else itertools.product(range(m), repeat=k))
            for targets in tuples:
                alt = list(profile)
                for i, t in zip(coalition, targets):
                    alt[i] = t
                if all(naive_better(old[i], naive_cost(inst, alt, i), alpha) for i in coalition):
                    return True
    return False


def all_profiles(inst):
    return itertools.product(range(inst.node_count), repeat=inst.n)


def naive_optimum_cost(inst):
    """Minimum over every nonempty open set and every assignment into it."""
    n, m = inst.n, inst.node_count
    best = np.inf
    w = np.array([a.weight for a in inst.agents])
    dh = inst.distances[[a.home for a in inst.agents]]
    for k in range(1, m + 1):
        for open_set in itertools.combinations(range(m), k):
            fac = sum(inst.facility_costs[v] for v in open_set)
            assign = np.array(list(itertools.product(open_set, repeat=n)))
            conn = (w[None, :] * dh[np.arange(n)[None, :], assign]).sum(axis=1)
            best = min(best, fac + conn.min())
    return float(best)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
