"""Worst-case instance generators, each checked by an oracle before it is returned."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .bounds import harmonic, metric_pos_batch_costs
from .core import Agent, GameInstance, make_instance, metric_closure, total_cost, validate_metric
from .dynamics import run_ibr
from .equilibria import (JOINT, coalition_dynamics, enumerate_equilibria, find_coalition_deviation,
                         is_pure_nash)
from .optimum import social_optimum


class ConstructionError(RuntimeError):
    """A generated instance failed its oracle check."""


@dataclass
class OracleReport:
    name: str
    params: dict
    checks: dict = field(default_factory=dict)  # check name -> bool
    values: dict = field(default_factory=dict)  # named numbers recorded by the oracle

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def header_lines(self) -> list[str]:
        out = [f"generator: {self.name}"]
        out += [f"param {k} = {v!r}" for k, v in self.params.items()]
        out += [f"value {k} = {v!r}" for k, v in self.values.items()]
        out += [f"check {k}: {'pass' if ok else 'FAIL'}" for k, ok in self.checks.items()]
        return out


def _finish(inst: GameInstance, report: OracleReport, verify: bool):
    if verify and not report.passed:
        failed = [k for k, ok in report.checks.items() if not ok]
        raise ConstructionError(f"{report.name}: oracle failed: {', '.join(failed)}")
    return inst, report


# --- two-node PoA n -------------------------------------------------------

def build_two_node(n: int, beta: float = 1.0, verify: bool = True):
    if n < 2:
        raise ValueError("two-node construction needs n >= 2")
    if not beta > 0:
        raise ValueError("two-node construction needs beta > 0")
    d = (n - 1) * beta / n
    inst = make_instance([[0.0, d], [d, 0.0]], [beta, beta], [0] * n, metric=True)
    rep = OracleReport("two-node", {"n": n, "beta": beta})
    if verify:
        rep.checks["all at u is Nash"] = is_pure_nash(inst, (0,) * n)
        rep.checks["all at v is Nash"] = is_pure_nash(inst, (1,) * n)
        bad = total_cost(inst, (1,) * n)
        good = total_cost(inst, (0,) * n)
        rep.values["cost all at v"] = bad
        rep.values["cost all at u"] = good
        rep.checks["cost ratio is n"] = abs(bad / good - n) <= 1e-9 * n
    return _finish(inst, rep, verify)


def gen_two_node(n: int, beta: float = 1.0) -> GameInstance:
    """Two nodes at distance (n-1)beta/n; n agents at node 0.  All-at-node-1 costs n times OPT."""
    return build_two_node(n, beta)[0]


# --- non-metric PoS H(n) ---------------------------------------------------

def nonmetric_pos_default_eps(n: int) -> tuple[float, float]:
    eps = 0.1 / n ** 3
    return eps, eps / (10 * n)


def build_nonmetric_pos(n: int, eps: Optional[float] = None, delta: Optional[float] = None,
                        verify: bool = True):
    if n < 2:
        raise ValueError("non-metric PoS construction needs n >= 2")
    d_eps, d_delta = nonmetric_pos_default_eps(n)
    eps = d_eps if eps is None else float(eps)
    delta = d_delta if delta is None else float(delta)
    if not 0 < delta < eps < 1.0 / n ** 2:
        raise ValueError("need 0 < delta < eps < 1/n^2")
    # nodes: v1 = 0, v2 = 1, u_i = i + 1 for i = 1..n
    m = n + 2
    d = np.full((m, m), 10.0)
    np.fill_diagonal(d, 0.0)
    for i in range(1, n + 1):
        u = i + 1
        d[u, 0] = d[0, u] = eps
        far = 1.0 / i - 1.0 / (2 * n - i + 1) - i * delta
        d[u, 1] = d[1, u] = far
    homes = [1] * n + [i + 1 for i in range(1, n + 1)]
    inst = make_instance(d, np.ones(m), homes, metric=False)
    rep = OracleReport("nonmetric-pos", {"n": n, "eps": eps, "delta": delta})
    if verify:
        _oracle_nonmetric_pos(inst, n, eps, delta, rep)
    return _finish(inst, rep, verify)


def _oracle_nonmetric_pos(inst, n, eps, delta, rep):
    start = tuple([1] * n + [0] * n)
    rep.values["two-facility cost"] = total_cost(inst, start)
    opt = social_optimum(inst)
    rep.values["optimum cost"] = opt.cost
    # For small n the cascade end point itself can be cheaper than 2 + n eps.
    rep.checks["optimum at most 2 + n eps"] = opt.cost <= 2 + n * eps + 1e-12
    trace = run_ibr(inst, start)
    movers = [st.agent - n + 1 for st in trace.steps]  # agent index i = 1..n
    rep.checks["cascade order n..1"] = trace.converged and movers == list(range(n, 0, -1))
    rep.checks["cascade ends at v2"] = trace.final == tuple([1] * (2 * n))
    final = total_cost(inst, trace.final)
    closed = 1.0 + 2 * harmonic(n) - harmonic(2 * n) - delta * n * (n + 1) / 2
    rep.values["cascade cost"] = final
    rep.values["closed form"] = closed
    rep.checks["cascade cost closed form"] = abs(final - closed) <= 1e-9
    rep.checks["all at v2 is Nash"] = is_pure_nash(inst, trace.final)
    rep.checks["optimum is not Nash"] = not is_pure_nash(inst, start)
    if (n + 2) ** (2 * n) <= 20_000:
        eqs = enumerate_equilibria(inst, kind="nash")
        cheapest = min(total_cost(inst, s) for s in eqs)
        rep.values["cheapest equilibrium"] = cheapest
        rep.checks["cheapest equilibrium bound"] = (
            cheapest >= 1 + 2 * harmonic(n) - harmonic(2 * n) - n * n * delta - 1e-12)


def gen_nonmetric_pos(n: int, eps: Optional[float] = None, delta: Optional[float] = None) -> GameInstance:
    """Non-metric instance whose only equilibria cost about 2H(n) - H(2n) + 1 while OPT is 2 + n eps.

    Nodes: v1 = 0, v2 = 1 and the homes u_i = i + 1; agents 0..n-1 sit at v2 and
    agent n - 1 + i at u_i.
    """
    return build_nonmetric_pos(n, eps, delta)[0]


# --- metric PoS lower bound -----------------------------------------------

@dataclass(frozen=True)
class MetricPosLayout:
    k: int
    r: int
    hub: int
    batch_nodes: tuple[int, ...]
    lam: tuple[int, ...]
    delta_x: tuple[tuple[float, ...], ...]  # per batch, per i = 1..r
    x: tuple[tuple[float, ...], ...]


def metric_pos_default_eps(n: int) -> float:
    return 1e-3 / (4.0 * n * n)


def metric_pos_layout(n: int, p_remain: float = 0.27, eps: Optional[float] = None):
    k = math.isqrt(n)
    if n < 4 or k * k != n:
        raise ValueError(f"n = {n} must be a perfect square >= 4")
    if not 0 < p_remain < 1:
        raise ValueError("need 0 < p_remain < 1")
    eps = metric_pos_default_eps(n) if eps is None else float(eps)
    if not eps > 1e-9:
        raise ValueError("eps must exceed the comparison tolerance 1e-9")
    r = k - math.ceil(p_remain * k)
    if r < 1:
        raise ValueError(f"p_remain = {p_remain} leaves no paying agents (r = {r})")
    lams, dxs, xs = [], [], []
    for batch in range(k):
        lam = n + batch * k
        dx = [1.0 / (k - i + 1) - 1.0 / (lam + i) - eps for i in range(1, r + 1)]
        x = [max(0.0, 0.5 * (1.0 / (k - r + 1) - t)) for t in dx]
        if min(dx) <= 0:
            raise ValueError("eps too large: a distance increment is not positive")
        lams.append(lam)
        dxs.append(tuple(dx))
        xs.append(tuple(x))
    return k, r, eps, tuple(lams), tuple(dxs), tuple(xs)


def build_metric_pos(n: int, p_remain: float = 0.27, eps: Optional[float] = None, verify: bool = True):
    k, r, eps, lams, dxs, xs = metric_pos_layout(n, p_remain, eps)
    # nodes: hub 0, batch facility 1..k, then per batch r home nodes
    hub = 0
    batch_nodes = list(range(1, k + 1))
    m = 1 + k + k * r
    edges = []
    homes = [hub] * n
    for b in range(k):
        vb = batch_nodes[b]
        edges.append((vb, hub, 1.0 / (k - r + 1)))
        for i in range(r):
            u = 1 + k + b * r + i
            edges.append((u, vb, xs[b][i]))
            edges.append((u, hub, xs[b][i] + dxs[b][i]))
            homes.append(u)
        homes += [vb] * (k - r)
    agents = tuple(Agent(h) for h in homes)
    inst = metric_closure(m, edges, np.ones(m), agents)
    layout = MetricPosLayout(k, r, hub, tuple(batch_nodes), lams, dxs, xs)
    rep = OracleReport("metric-pos", {"n": n, "p_remain": p_remain, "eps": eps})
    rep.values["k"] = k
    rep.values["r"] = r
    if verify:
        _oracle_metric_pos(inst, layout, n, eps, rep)
    return _finish(inst, rep, verify)


def metric_pos_optimum_profile(inst: GameInstance, n: int) -> tuple[int, ...]:
    """Hub agents at the hub, every batch agent at its batch facility."""
    k = math.isqrt(n)
    out = []
    for i, a in enumerate(inst.agents):
        if i < n:
            out.append(0)
        else:
            b = (i - n) // k
            out.append(1 + b)
    return tuple(out)


def _oracle_metric_pos(inst, layout: MetricPosLayout, n, eps, rep):
    rep.checks["metric"] = validate_metric(inst).is_metric
    start = metric_pos_optimum_profile(inst, n)
    c0 = total_cost(inst, start)
    rep.values["batch-facility profile cost"] = c0
    batch_sum = 1.0  # the hub
    for lam in layout.lam:
        batch_sum += metric_pos_batch_costs(layout.k, layout.r, lam, eps)[0]
    rep.checks["optimum closed form"] = abs(c0 - batch_sum) <= 1e-9
    if inst.node_count <= 20:
        opt = social_optimum(inst)
        rep.values["optimum cost"] = opt.cost
        # Recorded, not asserted: for k = 2 everything at the hub is cheaper.
        rep.values["batch-facility profile is optimal"] = bool(c0 <= opt.cost + 1e-9)
    trace = run_ibr(inst, start)
    rep.checks["cascade converges"] = trace.converged
    rep.checks["every batch reaches the hub"] = trace.final == (0,) * inst.n
    final = total_cost(inst, trace.final)
    rep.values["cascade cost"] = final
    rep.values["ratio"] = final / c0


def gen_metric_pos(n: int, p_remain: float = 0.27, eps: Optional[float] = None) -> GameInstance:
    """Metric instance where IBR from the optimum cascades every batch onto a shared hub.

    Node 0 is the hub holding n agents; nodes 1..k are the batch facilities
    (k = sqrt(n)), each with k - r resident agents plus r agents on their own
    home nodes.
    """
    return build_metric_pos(n, p_remain, eps)[0]


# --- six-cycle without strong equilibria ----------------------------------

CYCLE6_LONG = 7.0 / 18.0
CYCLE6_SHORT = 5.0 / 18.0


def cycle6_edges(long: float = CYCLE6_LONG, short: float = CYCLE6_SHORT):
    # nodes u1, v1, u2, v2, u3, v3 = 0..5
    edges = []
    for i in range(3):
        u, v, nxt = 2 * i, 2 * i + 1, (2 * i + 2) % 6
        edges.append((u, v, long))
        edges.append((v, nxt, short))
    return edges


def build_cycle6(verify: bool = True, edges=None, beta: Optional[Sequence[float]] = None):
    edges = cycle6_edges() if edges is None else edges
    beta = np.ones(6) if beta is None else np.asarray(beta, dtype=float)
    inst = metric_closure(6, edges, beta, tuple(Agent(h) for h in (0, 2, 4)))
    rep = OracleReport("cycle6", {})
    if verify:
        strong = enumerate_equilibria(inst, kind="strong")
        nash = enumerate_equilibria(inst, kind="nash")
        rep.values["strong equilibria"] = len(strong)
        rep.values["nash equilibria"] = len(nash)
        rep.checks["no strong equilibrium"] = not strong
        rep.checks["some Nash equilibrium"] = bool(nash)
        mv = find_coalition_deviation(inst, (0, 2, 4), 1.0, JOINT)
        rep.checks["pair joins v1 first"] = mv is not None and mv.coalition == (0, 1) and mv.targets == (1, 1)
    return _finish(inst, rep, verify)


def gen_cycle6() -> GameInstance:
    """Six-cycle u1 v1 u2 v2 u3 v3 with one agent on each u node; no strong equilibrium."""
    return build_cycle6()[0]


def perturbed_cycle6(rng: np.random.Generator, scale: float = 0.01) -> GameInstance:
    """CYC6 with edge lengths and facility costs jittered by up to ``scale``, unverified."""
    edges = [(u, v, w * (1 + rng.uniform(-scale, scale))) for u, v, w in cycle6_edges()]
    beta = 1 + rng.uniform(-scale, scale, size=6)
    return build_cycle6(verify=False, edges=edges, beta=beta)[0]


# --- SPoA lower bound H(n) ------------------------------------------------

def build_spoa_lb(n: int, alpha: float = math.e, eps: Optional[float] = None, verify: bool = True):
    if n < 2:
        raise ValueError("SPoA construction needs n >= 2")
    alpha = float(alpha)
    if alpha < math.e:
        raise ValueError("SPoA construction needs alpha >= e")
    eps = 1.0 / n ** 2 if eps is None else float(eps)
    if not 0 < eps <= 1.0 / n ** 2:
        raise ValueError("need 0 < eps <= 1/n^2")
    m = n + 2
    d = np.full((m, m), 10.0 * alpha)
    np.fill_diagonal(d, 0.0)
    for i in range(1, n + 1):
        u = i + 1
        far = alpha / i - 1.0 / n
        if far < 0:
            raise ValueError(f"negative distance alpha/{i} - 1/n")
        d[u, 0] = d[0, u] = far
        d[u, 1] = d[1, u] = eps
    inst = make_instance(d, np.ones(m), [i + 1 for i in range(1, n + 1)], metric=False)
    rep = OracleReport("spoa-lb", {"n": n, "alpha": alpha, "eps": eps})
    if verify:
        eq = (0,) * n
        cost = total_cost(inst, eq)
        rep.values["equilibrium cost"] = cost
        rep.values["alpha H(n)"] = alpha * harmonic(n)
        rep.checks["cost is alpha H(n)"] = abs(cost - alpha * harmonic(n)) <= 1e-9
        mv = find_coalition_deviation(inst, eq, alpha, JOINT, shortcut=False)
        rep.checks["alpha-approximate strong (exhaustive joint)"] = mv is None
        opt = social_optimum(inst)
        rep.values["optimum cost"] = opt.cost
        rep.checks["optimum <= 1 + n eps"] = opt.cost <= 1 + n * eps + 1e-12
        rep.values["spoa lower bound"] = cost / opt.cost
    return _finish(inst, rep, verify)


def gen_spoa_lb(n: int, alpha: float = math.e, eps: Optional[float] = None) -> GameInstance:
    """Instance whose all-at-node-0 profile is alpha-strong and costs alpha H(n).

    Node 0 holds the expensive equilibrium, node 1 the cheap optimum, and
    agent i - 1 lives at node i + 1.
    """
    return build_spoa_lb(n, alpha, eps)[0]


GENERATORS: dict[str, Callable] = {
    "two-node": build_two_node,
    "nonmetric-pos": build_nonmetric_pos,
    "metric-pos": build_metric_pos,
    "cycle6": build_cycle6,
    "spoa-lb": build_spoa_lb,
}


# --- random instances -----------------------------------------------------

def random_metric_instance(rng: np.random.Generator, n: int, m: int,
                           weights: Optional[Sequence[float]] = None,
                           beta_range: tuple[float, float] = (0.2, 1.5)) -> GameInstance:
    """Nodes at uniform points of the unit square with Euclidean distances."""
    pts = rng.random((m, 2))
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    d = np.minimum(d, d.T)
    np.fill_diagonal(d, 0.0)
    beta = rng.uniform(*beta_range, size=m)
    homes = rng.integers(0, m, size=n)
    w = None if weights is None else rng.choice(np.asarray(weights, dtype=float), size=n)
    return make_instance(d, beta, homes.tolist(), None if w is None else w.tolist(), metric=True)


def random_instance(rng: np.random.Generator, n: int, m: int,
                    weights: Optional[Sequence[float]] = None,
                    beta_range: tuple[float, float] = (0.2, 1.5),
                    dist_range: tuple[float, float] = (0.05, 1.0)) -> GameInstance:
    """Symmetric random distances, generally not metric."""
    d = rng.uniform(*dist_range, size=(m, m))
    d = np.triu(d, 1)
    d = d + d.T
    beta = rng.uniform(*beta_range, size=m)
    homes = rng.integers(0, m, size=n)
    w = None if weights is None else rng.choice(np.asarray(weights, dtype=float), size=n)
    return make_instance(d, beta, homes.tolist(), None if w is None else w.tolist())


def find_strong_equilibrium(inst: GameInstance, alpha: float = 1.0):
    """Some alpha-strong equilibrium, by enumeration; None if there is none."""
    found = enumerate_equilibria(inst, alpha, kind="strong")
    return found[0] if found else None


def strong_by_dynamics(inst: GameInstance, start, alpha: float = math.e, max_steps: int = 1000):
    out = coalition_dynamics(inst, start, alpha, JOINT, max_steps)
    return out.profile if out.status == "equilibrium" else None

