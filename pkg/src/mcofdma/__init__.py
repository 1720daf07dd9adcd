"""Multi-cell OFDMA downlink resource allocation and Monte-Carlo simulation."""

from .errors import ConfigurationError, EnumerationCapError
from .scenario import (ChannelRealization, ScenarioConfig, channel_stream, generate_scenario,
                       pathloss_gain)
from .radio import SinrTarget, iterative_power_control, mai, rate, rate_approx, required_power, sinr
from .powerplan import PowerPlan, build_plan, plan_power_matrix, planned_power
from .layered_ra import (CellAllocation, InterferenceEstimate, LayeredPolicy, RateRequirement,
                         iterate_network, load_control, min_feedback_filter,
                         packet_scheduler_update, ra_min_power_cell, random_allocate,
                         run_layered, switch_off_worst, uniform_requirement)
from .assignment import (AssignmentResult, beam_gain_hook, centralized_assign,
                         distributed_assign, max_weight_matching, rates_from_plan)
from .dual_sched import (DualSchedConfig, DualState, carrier_metric, power_alloc_grid,
                         rate_weight, run_dual_scheduler, select_exhaustive,
                         select_opportunistic, subgradient_update)
from .metrics import MetricsReport, SlotAllocation, evaluate, jain

__version__ = "0.1.0"
