"""Facility location games with fair cost sharing: equilibria, dynamics and bounds."""

from .core import (EPS_CMP, Agent, CostBreakdown, GameInstance, InstanceError, agent_cost, agent_costs,
                   dump_instance, load_instance, make_instance, metric_closure, social_cost, total_cost,
                   validate_metric)
from .dynamics import best_response, charging_audit, potential, run_ibr
from .equilibria import (coalition_dynamics, damage_accounting, enumerate_equilibria,
                         find_coalition_deviation, is_pure_nash, metric_spoa_audit,
                         spoa_peeling_certificate)
from .optimum import ratios, social_optimum

__version__ = "0.1.0"
