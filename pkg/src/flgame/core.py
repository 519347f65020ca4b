"""Instances, profiles and exact cost evaluation for the facility location game.

Agents pick a node to be served from.  An agent pays its weighted distance to
that node plus a weight-proportional share of the node's opening cost.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

# Strict comparisons: x is better than y iff x < y - EPS_CMP.
EPS_CMP = 1e-9

Profile = tuple[int, ...]


class InstanceError(ValueError):
    """Malformed or invalid instance data."""


class ClosureError(InstanceError):
    """Shortest-path closure of an edge list failed."""


@dataclass(frozen=True)
class Agent:
    home: int
    weight: float = 1.0


@dataclass(frozen=True, eq=False)
class GameInstance:
    """A complete graph with symmetric distances, opening costs and agents.

    ``metric`` is tri-state: True (asserted metric), False (asserted
    non-metric) or None (unchecked).
    """

    distances: np.ndarray
    facility_costs: np.ndarray
    agents: tuple[Agent, ...]
    metric: Optional[bool] = None
    homes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = np.array(self.distances, dtype=float)
        beta = np.array(self.facility_costs, dtype=float).reshape(-1)
        agents = tuple(self.agents)
        m = beta.shape[0]
        if m < 1:
            raise InstanceError("instance needs at least one node")
        if d.shape != (m, m):
            raise InstanceError(f"distance matrix has shape {d.shape}, expected {(m, m)}")
        if not np.all(np.isfinite(d)) or not np.all(np.isfinite(beta)):
            raise InstanceError("distances and facility costs must be finite")
        if np.any(d < 0):
            raise InstanceError("negative distance")
        if np.any(np.diag(d) != 0):
            raise InstanceError("nonzero diagonal distance")
        if not np.array_equal(d, d.T):
            bad = np.argwhere(d != d.T)[0]
            raise InstanceError(f"asymmetric distances at ({bad[0]}, {bad[1]})")
        if np.any(beta < 0):
            raise InstanceError("negative facility cost")
        if not agents:
            raise InstanceError("instance needs at least one agent")
        for idx, a in enumerate(agents):
            if not 0 <= a.home < m:
                raise InstanceError(f"agent {idx} home {a.home} out of range")
            if not a.weight > 0:
                raise InstanceError(f"agent {idx} weight must be positive")
        d.setflags(write=False)
        beta.setflags(write=False)
        homes = np.array([a.home for a in agents], dtype=np.int64)
        weights = np.array([a.weight for a in agents], dtype=float)
        homes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "facility_costs", beta)
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "homes", homes)
        object.__setattr__(self, "weights", weights)
        if self.metric:
            violations = triangle_violations(d)
            if violations:
                raise InstanceError(
                    f"instance declared metric but violates triangle inequality at {violations[0]}"
                )

    @property
    def node_count(self) -> int:
        return self.facility_costs.shape[0]

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def unweighted(self) -> bool:
        return bool(np.all(self.weights == 1.0))

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def with_metric(self, flag: Optional[bool]) -> "GameInstance":
        return replace(self, metric=flag)

    def agent_distances(self) -> np.ndarray:
        """n x m matrix of d(u_i, v)."""
        return self.distances[self.homes]

    def check_profile(self, profile: Sequence[int]) -> Profile:
        prof = tuple(int(v) for v in profile)
        if len(prof) != self.n:
            raise InstanceError(f"profile has {len(prof)} entries, expected {self.n}")
        for v in prof:
            if not 0 <= v < self.node_count:
                raise InstanceError(f"profile entry {v} out of range")
        return prof


@dataclass(frozen=True)
class CostBreakdown:
    per_agent_connection: tuple[float, ...]
    per_agent_share: tuple[float, ...]
    facility_loads: dict[int, float]
    open_facilities: frozenset[int]
    social_cost: float

    @property
    def per_agent_cost(self) -> tuple[float, ...]:
        return tuple(c + s for c, s in zip(self.per_agent_connection, self.per_agent_share))


@dataclass(frozen=True)
class MetricReport:
    is_metric: bool
    violations: list[tuple[int, int, int]]
    instance: GameInstance


def loads(inst: GameInstance, profile: Sequence[int]) -> np.ndarray:
    """Total weight W_s(v) choosing each node."""
    return np.bincount(np.asarray(profile, dtype=np.int64), weights=inst.weights,
                       minlength=inst.node_count)


def agent_costs(inst: GameInstance, profile: Sequence[int]) -> np.ndarray:
    """Vector of c_i(s) for all agents."""
    prof = np.asarray(profile, dtype=np.int64)
    w = inst.weights
    load = loads(inst, prof)
    return w * inst.distances[inst.homes, prof] + w * inst.facility_costs[prof] / load[prof]


def agent_cost(inst: GameInstance, profile: Sequence[int], i: int) -> float:
    v = int(profile[i])
    w = inst.weights[i]
    share_load = float(loads(inst, profile)[v])
    return float(w * inst.distances[inst.homes[i], v] + w * inst.facility_costs[v] / share_load)


def deviation_costs(inst: GameInstance, profile: Sequence[int], i: int,
                    load: Optional[np.ndarray] = None) -> np.ndarray:
    """Cost agent ``i`` would pay at every node, others fixed.

    The entry at the current node equals the current cost.
    """
    if load is None:
        load = loads(inst, profile)
    w = inst.weights[i]
    others = load.copy()
    others[int(profile[i])] -= w
    return w * inst.distances[inst.homes[i]] + w * inst.facility_costs / (others + w)


def social_cost(inst: GameInstance, profile: Sequence[int]) -> CostBreakdown:
    prof = inst.check_profile(profile)
    idx = np.asarray(prof, dtype=np.int64)
    load = loads(inst, idx)
    w = inst.weights
    conn = w * inst.distances[inst.homes, idx]
    share = w * inst.facility_costs[idx] / load[idx]
    open_set = frozenset(int(v) for v in np.flatnonzero(load > 0))
    total = float(conn.sum() + sum(inst.facility_costs[v] for v in open_set))
    return CostBreakdown(
        per_agent_connection=tuple(float(x) for x in conn),
        per_agent_share=tuple(float(x) for x in share),
        facility_loads={v: float(load[v]) for v in sorted(open_set)},
        open_facilities=open_set,
        social_cost=total,
    )


def total_cost(inst: GameInstance, profile: Sequence[int]) -> float:
    """c(s) as a plain float (no breakdown)."""
    prof = np.asarray(profile, dtype=np.int64)
    used = np.unique(prof)
    return float((inst.weights * inst.distances[inst.homes, prof]).sum()
                 + inst.facility_costs[used].sum())


def triangle_violations(d: np.ndarray, tol: float = EPS_CMP) -> list[tuple[int, int, int]]:
    """Triples ``(u, v, w)``, ``u < w``, with d(u,w) > d(u,v) + d(v,w)."""
    scale = max(1.0, float(d.max()))
    # via[u, v, w] = d(u,v) + d(v,w)
    via = d[:, :, None] + d[None, :, :]
    bad = d[:, None, :] > via + tol * scale
    return [(int(u), int(v), int(w)) for u, v, w in np.argwhere(bad) if u < w]


def validate_metric(inst: GameInstance, tol: float = EPS_CMP) -> MetricReport:
    """Check every triangle inequality; returns a copy with the flag set."""
    violations = triangle_violations(inst.distances, tol)
    ok = not violations
    return MetricReport(ok, violations, inst.with_metric(ok))


def shortest_path_closure(node_count: int, edges: Iterable[tuple[int, int, float]]) -> np.ndarray:
    """All-pairs shortest paths over an undirected weighted edge list.

    Raises ClosureError when the graph is disconnected or when a specified
    edge is strictly longer than the shortest path between its endpoints.
    """
    m = node_count
    d = np.full((m, m), np.inf)
    np.fill_diagonal(d, 0.0)
    edge_list = []
    for u, v, length in edges:
        u, v, length = int(u), int(v), float(length)
        if length < 0:
            raise ClosureError(f"negative edge length on ({u}, {v})")
        if u == v:
            continue
        edge_list.append((u, v, length))
        if length < d[u, v]:
            d[u, v] = d[v, u] = length
    for k in range(m):
        d = np.minimum(d, d[:, k, None] + d[None, k, :])
    if not np.all(np.isfinite(d)):
        raise ClosureError("edge graph is disconnected")
    for u, v, length in edge_list:
        if d[u, v] < length - EPS_CMP * max(1.0, length):
            raise ClosureError(
                f"closure shortens specified edge ({u}, {v}) from {length!r} to {d[u, v]!r}")
    return d


def metric_closure(node_count: int, edges: Iterable[tuple[int, int, float]],
                   facility_costs: Sequence[float], agents: Sequence[Agent]) -> GameInstance:
    d = shortest_path_closure(node_count, edges)
    # Floyd-Warshall on a symmetric input can drift by an ulp; re-symmetrize.
    d = np.minimum(d, d.T)
    return GameInstance(d, np.asarray(facility_costs, dtype=float), tuple(agents), metric=True)


def make_instance(distances, facility_costs, homes: Sequence[int],
                  weights: Optional[Sequence[float]] = None, metric: Optional[bool] = None) -> GameInstance:
    if weights is None:
        weights = [1.0] * len(homes)
    agents = tuple(Agent(int(h), float(w)) for h, w in zip(homes, weights))
    return GameInstance(np.asarray(distances, dtype=float), np.asarray(facility_costs, dtype=float),
                        agents, metric)


# --- instance file format -------------------------------------------------

HEADER = "flg-instance v1"


def _parse_floats(tokens: list[str], lineno: int) -> list[float]:
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise InstanceError(f"line {lineno}: {exc}") from None


def load_instance(text: str) -> GameInstance:
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if stripped:
            lines.append((lineno, stripped))
    it = iter(lines)

    def take(prefix: Optional[str] = None) -> tuple[int, str]:
        try:
            lineno, line = next(it)
        except StopIteration:
            raise InstanceError("unexpected end of instance file") from None
        if prefix is not None:
            if not line.startswith(prefix):
                raise InstanceError(f"line {lineno}: expected '{prefix}', got {line!r}")
            line = line[len(prefix):].strip()
        return lineno, line

    lineno, line = take()
    if line != HEADER:
        raise InstanceError(f"line {lineno}: expected header '{HEADER}'")
    lineno, line = take("nodes:")
    try:
        m = int(line)
    except ValueError:
        raise InstanceError(f"line {lineno}: bad node count {line!r}") from None
    if m < 1:
        raise InstanceError(f"line {lineno}: node count must be positive")
    lineno, line = take("facility_costs:")
    beta = _parse_floats(line.split(), lineno)
    if len(beta) != m:
        raise InstanceError(f"line {lineno}: expected {m} facility costs, got {len(beta)}")
    lineno, line = take("distances:")
    if line:
        raise InstanceError(f"line {lineno}: 'distances:' takes no inline values")
    rows = []
    for _ in range(m):
        lineno, line = take()
        row = _parse_floats(line.split(), lineno)
        if len(row) != m:
            raise InstanceError(f"line {lineno}: expected {m} distances, got {len(row)}")
        rows.append(row)
    lineno, line = take("agents:")
    try:
        n = int(line)
    except ValueError:
        raise InstanceError(f"line {lineno}: bad agent count {line!r}") from None
    agents = []
    for _ in range(n):
        lineno, line = take()
        parts = line.split()
        if len(parts) != 2:
            raise InstanceError(f"line {lineno}: agent line needs '<home> <weight>'")
        try:
            agents.append(Agent(int(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise InstanceError(f"line {lineno}: {exc}") from None
    metric: Optional[bool] = None
    for lineno, line in it:
        if line.startswith("metric:"):
            value = line[len("metric:"):].strip().lower()
            if value not in ("true", "false"):
                raise InstanceError(f"line {lineno}: metric must be true or false")
            metric = value == "true"
        else:
            raise InstanceError(f"line {lineno}: unexpected content {line!r}")
    return GameInstance(np.array(rows), np.array(beta), tuple(agents), metric)


def dump_instance(inst: GameInstance, comments: Sequence[str] = ()) -> str:
    out = [HEADER]
    out += [f"# {c}" for c in comments]
    out.append(f"nodes: {inst.node_count}")
    out.append("facility_costs: " + " ".join(repr(float(b)) for b in inst.facility_costs))
    out.append("distances:")
    for row in inst.distances:
        out.append(" ".join(repr(float(x)) for x in row))
    out.append(f"agents: {inst.n}")
    for a in inst.agents:
        out.append(f"{a.home} {a.weight!r}")
    if inst.metric is not None:
        out.append(f"metric: {'true' if inst.metric else 'false'}")
    return "\n".join(out) + "\n"


def parse_profile(text: str) -> Profile:
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise InstanceError(f"bad profile {text!r}; expected comma-separated node indices") from None


def format_profile(profile: Sequence[int]) -> str:
    return ",".join(str(int(v)) for v in profile)


def jsonable(obj):
    """Convert dataclasses, numpy values and tuples into plain JSON types."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k) if not isinstance(k, tuple) else ",".join(map(str, k)): jsonable(v)
                for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset, np.ndarray)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else list(obj)
        return [jsonable(x) for x in items]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def to_json(obj, indent: Optional[int] = 2) -> str:
    return json.dumps(jsonable(obj), indent=indent)
