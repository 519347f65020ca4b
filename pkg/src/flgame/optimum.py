"""Exact social optimum and equilibrium-to-optimum ratios."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import EPS_CMP, GameInstance, Profile, total_cost

DEFAULT_NODE_CAP = 20
_CHUNK = 4096


class CapExceeded(ValueError):
    """An exhaustive search would exceed its configured size cap."""


@dataclass(frozen=True)
class OptimumSolution:
    open_set: tuple[int, ...]
    assignment: Profile
    cost: float


@dataclass(frozen=True)
class RatioReport:
    opt_cost: float
    min_eq_cost: Optional[float]
    max_eq_cost: Optional[float]
    pos: Optional[float]
    poa: Optional[float]
    spoa: Optional[float]
    alpha: float
    equilibrium_count: int
    status: str = "ok"  # ok | no-equilibria | zero-optimum

    CSV_HEADER = "opt,min_eq,max_eq,pos,poa,spoa,alpha,count"

    def csv_row(self) -> str:
        vals = [self.opt_cost, self.min_eq_cost, self.max_eq_cost, self.pos, self.poa,
                self.spoa, self.alpha]
        cells = ["" if v is None else repr(float(v)) for v in vals]
        return ",".join(cells + [str(self.equilibrium_count)])


def _subset_costs(weighted_dist: np.ndarray, beta: np.ndarray, start: int, stop: int):
    """Cost of every open set whose bitmask lies in [start, stop)."""
    m = beta.shape[0]
    masks = np.arange(start, stop, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(m)) & 1).astype(bool)
    conn = np.where(bits[:, None, :], weighted_dist[None, :, :], np.inf).min(axis=2).sum(axis=1)
    return masks, conn + bits @ beta


def _scan_range(args):
    weighted_dist, beta, start, stop = args
    masks, costs = _subset_costs(weighted_dist, beta, start, stop)
    best = costs.min()
    near = masks[costs <= best + EPS_CMP * max(1.0, abs(best))]
    return float(best), near.tolist()


def _mask_set(mask: int, m: int) -> tuple[int, ...]:
    return tuple(v for v in range(m) if mask >> v & 1)


def social_optimum(inst: GameInstance, node_cap: int = DEFAULT_NODE_CAP, jobs: int = 1) -> OptimumSolution:
    """Minimum-cost profile by exhaustive scan over nonempty open sets.

    Each agent is served by a nearest open facility; this is optimal because
    centralized facility costs do not depend on loads.  Ties go to the
    lexicographically smallest open set, then the lowest-index facility.
    """
    m = inst.node_count
    if m > node_cap:
        raise CapExceeded(f"{m} nodes exceeds the optimum cap of {node_cap}")
    wd = inst.weights[:, None] * inst.agent_distances()
    beta = np.asarray(inst.facility_costs)
    total = 1 << m
    ranges = [(wd, beta, lo, min(lo + _CHUNK, total)) for lo in range(1, total, _CHUNK)]
    if jobs > 1 and len(ranges) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_scan_range, ranges))
    else:
        parts = [_scan_range(r) for r in ranges]
    best = min(p[0] for p in parts)
    tol = EPS_CMP * max(1.0, abs(best))
    candidates = [mask for cost, masks in parts if cost <= best + tol for mask in masks]
    # Chunk-local filtering used the chunk minimum; re-check against the global one.
    sets = []
    for mask in candidates:
        _, c = _subset_costs(wd, beta, mask, mask + 1)
        if c[0] <= best + tol:
            sets.append(_mask_set(mask, m))
    open_set = min(sets)
    cols = np.array(open_set)
    assignment = tuple(int(cols[j]) for j in np.argmin(wd[:, cols], axis=1))
    return OptimumSolution(open_set, assignment, total_cost(inst, assignment))


def ratios(inst: GameInstance, equilibria: Sequence[Sequence[int]], alpha: float = 1.0,
           strong: bool = False, opt: Optional[OptimumSolution] = None) -> RatioReport:
    """PoS/PoA of an equilibrium set against the exact optimum.

    With ``strong=True`` the set is taken to be (alpha-approximate) strong
    equilibria and ``spoa`` is filled in as well.
    """
    if opt is None:
        opt = social_optimum(inst)
    count = len(equilibria)
    if count == 0:
        return RatioReport(opt.cost, None, None, None, None, None, alpha, 0, "no-equilibria")
    costs = [total_cost(inst, s) for s in equilibria]
    lo, hi = min(costs), max(costs)
    if opt.cost <= 0:
        if hi > EPS_CMP:
            return RatioReport(opt.cost, lo, hi, None, None, None, alpha, count, "zero-optimum")
        pos = poa = 1.0
    else:
        pos, poa = lo / opt.cost, hi / opt.cost
    return RatioReport(opt.cost, lo, hi, pos, poa, poa if strong else None, alpha, count)
