"""Unilateral best-response dynamics, the exact potential and the charging audit."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .bounds import harmonic
from .core import EPS_CMP, GameInstance, Profile, deviation_costs, total_cost


def best_response(inst: GameInstance, profile: Sequence[int], i: int) -> int:
    """Cost-minimizing node for agent ``i`` against the others.

    Ties (within EPS_CMP) keep the current node, then go to the lowest index.
    """
    costs = deviation_costs(inst, profile, i)
    current = int(profile[i])
    best = costs.min()
    if costs[current] <= best + EPS_CMP:
        return current
    return int(np.flatnonzero(costs <= best + EPS_CMP)[0])


def potential(inst: GameInstance, profile: Sequence[int]) -> float:
    """Sum of connection costs plus beta_v * H(occupancy of v); unweighted only."""
    if not inst.unweighted:
        raise ValueError("potential is defined for unweighted instances only")
    prof = np.asarray(profile, dtype=np.int64)
    occ = np.bincount(prof, minlength=inst.node_count)
    conn = inst.distances[inst.homes, prof].sum()
    return float(conn + sum(inst.facility_costs[v] * harmonic(int(c))
                            for v, c in enumerate(occ) if c))


@dataclass(frozen=True)
class Step:
    agent: int
    source: int
    target: int
    delta_agent_cost: float
    delta_social: float
    potential: Optional[float]


@dataclass
class DynamicsTrace:
    start: Profile
    steps: list[Step] = field(default_factory=list)
    final: Profile = ()
    converged: bool = False

    CSV_HEADER = "step,agent,from,to,delta_agent_cost,delta_social,potential"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(self.CSV_HEADER + "\n")
        for k, st in enumerate(self.steps, start=1):
            pot = "" if st.potential is None else repr(st.potential)
            buf.write(f"{k},{st.agent},{st.source},{st.target},{st.delta_agent_cost!r},"
                      f"{st.delta_social!r},{pot}\n")
        return buf.getvalue()

    def profiles(self) -> list[Profile]:
        """Every profile visited, starting with ``start``."""
        out = [self.start]
        cur = list(self.start)
        for st in self.steps:
            cur[st.agent] = st.target
            out.append(tuple(cur))
        return out


OrderPolicy = Union[str, Sequence[int]]


def _scan_order(inst: GameInstance, start: Profile, order: OrderPolicy) -> list[int]:
    if isinstance(order, str):
        if order == "round-robin":
            return list(range(inst.n))
        if order == "facility-consecutive":
            return sorted(range(inst.n), key=lambda i: (start[i], i))
        raise ValueError(f"unknown order policy {order!r}")
    seq = [int(i) for i in order]
    if sorted(set(seq)) != list(range(inst.n)):
        raise ValueError("explicit order must mention every agent")
    return seq


def run_ibr(inst: GameInstance, start: Sequence[int], order: OrderPolicy = "round-robin",
            max_steps: Optional[int] = None) -> DynamicsTrace:
    """Iterated best response until no agent can improve.

    Agents are scanned cyclically in the order given by ``order``; a full pass
    without a move ends the run.  Hitting ``max_steps`` moves returns a trace
    with ``converged=False``.
    """
    prof = list(inst.check_profile(start))
    if max_steps is None:
        max_steps = 10 * inst.n * inst.node_count ** 2
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    seq = _scan_order(inst, tuple(prof), order)
    track_potential = inst.unweighted
    trace = DynamicsTrace(start=tuple(prof))
    social = total_cost(inst, prof)
    quiet = 0
    pos = 0
    while quiet < len(seq):
        i = seq[pos]
        pos = (pos + 1) % len(seq)
        target = best_response(inst, prof, i)
        if target == prof[i]:
            quiet += 1
            continue
        if len(trace.steps) >= max_steps:
            trace.final = tuple(prof)
            return trace
        costs = deviation_costs(inst, prof, i)
        source = prof[i]
        prof[i] = target
        new_social = total_cost(inst, prof)
        pot = potential(inst, prof) if track_potential else None
        trace.steps.append(Step(i, source, target, float(costs[target] - costs[source]),
                                new_social - social, pot))
        social = new_social
        quiet = 0
    trace.final = tuple(prof)
    trace.converged = True
    return trace


# --- charging audit -------------------------------------------------------

class AuditError(ValueError):
    """Audit input does not meet the audit's preconditions."""


def _phi(beta: float, count: int) -> float:
    # Share paid when others remain: beta/count for count > 1, nothing when alone.
    return beta / count if count > 1 else 0.0


@dataclass(frozen=True)
class DeviationCharge:
    step: int
    agent: int
    label: int
    source: int
    target: int
    leave_count: int  # k: occupancy of source right before leaving
    join_count: int  # lambda: occupancy of target right after joining
    case: int
    delta_social: float
    case_bound: float
    first_from_start: bool
    group_remaining: Optional[int]  # |A^i_{s*}(v)| for first deviations


@dataclass
class ChargingState:
    labels: list[int]
    join_counts: dict[tuple[int, int], int]
    leave_counts: dict[tuple[int, int], int]
    charges: list[float]
    initial_groups: dict[int, tuple[int, ...]]
    survivors: dict[int, tuple[int, ...]]
    initial_join: list[int]
    deviations: list[DeviationCharge]
    violations: list[str]
    total_charge: float
    cost_increase: float

    @property
    def passed(self) -> bool:
        return not self.violations


def charging_case(leave_count: int, join_count: int) -> int:
    """Case 1..4 of the charging analysis for one deviation (k, lambda)."""
    if leave_count > 1:
        return 1 if join_count > 1 else 3
    return 2 if join_count > 1 else 4


def charging_audit(inst: GameInstance, trace: DynamicsTrace, s_star: Sequence[int],
                   tol: float = EPS_CMP) -> ChargingState:
    """Replay an IBR trace with the relabeling scheme and check the charge bounds.

    The initial join counts follow the observed order of first deviations from
    each starting facility, so each label is charged against the group size
    still present when its owner first leaves.
    """
    if not inst.unweighted:
        raise AuditError("charging audit requires an unweighted instance")
    s_star = inst.check_profile(s_star)
    if tuple(trace.start) != s_star:
        raise AuditError("trace does not start at the declared profile")
    n = inst.n
    beta = inst.facility_costs

    groups: dict[int, list[int]] = {}
    for i, v in enumerate(s_star):
        groups.setdefault(v, []).append(i)

    # First pass: order of first deviation away from the starting facility.
    first_order: dict[int, list[int]] = {v: [] for v in groups}
    seen: set[int] = set()
    for st in trace.steps:
        if st.agent not in seen:
            seen.add(st.agent)
            first_order[s_star[st.agent]].append(st.agent)

    join: dict[tuple[int, int], int] = {}
    initial_join = [0] * n
    survivors: dict[int, tuple[int, ...]] = {}
    for v, members in groups.items():
        size = len(members)
        order = first_order[v]
        for t, i in enumerate(order):
            initial_join[i] = size - t
        stay = [i for i in members if i not in seen]
        survivors[v] = tuple(stay)
        for t, i in enumerate(stay):
            initial_join[i] = t + 1
        for i in members:
            join[(i, v)] = initial_join[i]

    labels = list(range(n))
    holder = list(range(n))  # holder[label] = agent carrying it
    charges = [0.0] * n
    leave: dict[tuple[int, int], int] = {}
    occupancy = np.bincount(np.asarray(s_star), minlength=inst.node_count).astype(int)
    prof = list(s_star)
    remaining = {v: set(m) for v, m in groups.items()}
    deviations: list[DeviationCharge] = []
    violations: list[str] = []

    for k_step, st in enumerate(trace.steps, start=1):
        i, v, v2 = st.agent, st.source, st.target
        if prof[i] != v:
            raise AuditError(f"step {k_step}: agent {i} is not at node {v}")
        k = int(occupancy[v])
        lab = labels[i]
        if join.get((lab, v)) != k:
            # Out-of-order departure: take the label whose join count equals k.
            partner = None
            for lab2 in range(n):
                j = holder[lab2]
                if j != i and prof[j] == v and join.get((lab2, v)) == k:
                    partner = j
                    break
            if partner is None:
                raise AuditError(f"step {k_step}: no label at node {v} with join count {k}")
            lab_j = labels[partner]
            labels[i], labels[partner] = lab_j, lab
            holder[lab_j], holder[lab] = i, partner
            lab = lab_j
        leave[(lab, v)] = k
        occupancy[v] -= 1
        occupancy[v2] += 1
        prof[i] = v2
        lam = int(occupancy[v2])
        join[(lab, v2)] = lam

        delta = st.delta_social
        case = charging_case(k, lam)
        bound = _phi(beta[v], k) - _phi(beta[v2], lam)
        if delta > bound + tol:
            violations.append(f"step {k_step}: case {case} bound {bound!r} exceeded by delta {delta!r}")
        charges[lab] += delta

        first = i in remaining.get(v, ()) and s_star[i] == v
        group_left = None
        if first:
            group_left = len(remaining[v])
            remaining[v].discard(i)
            if delta > beta[v] / group_left + tol:
                violations.append(
                    f"step {k_step}: first deviation of agent {i} charged {delta!r} > "
                    f"beta/{group_left}")
        deviations.append(DeviationCharge(k_step, i, lab, v, v2, k, lam, case, delta, bound,
                                          first, group_left))

    for lab in range(n):
        v0 = s_star[lab]
        limit = beta[v0] / initial_join[lab]
        if charges[lab] > limit + tol:
            violations.append(f"label {lab}: total charge {charges[lab]!r} exceeds {limit!r}")
    if sorted(labels) != list(range(n)):
        violations.append("labels are not a permutation")

    increase = total_cost(inst, trace.final if trace.final else prof) - total_cost(inst, s_star)
    total = float(sum(charges))
    if abs(total - increase) > 1e-9 * max(1.0, abs(increase), total_cost(inst, s_star)):
        violations.append(f"charges sum to {total!r} but cost increased by {increase!r}")

    return ChargingState(labels, join, leave, charges, {v: tuple(m) for v, m in groups.items()},
                         survivors, initial_join, deviations, violations, total, increase)
