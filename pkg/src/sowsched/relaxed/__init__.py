"""Relaxed (fractional) scheduling algorithms that post menus and accept forced allocations."""
from .allocation import (
    AggregateAllocation,
    AllocationRecord,
    IntervalAllocation,
    RelaxedAlgorithm,
    force_allocation,
    menu_price,
    plan_allocation,
    submit_fractional_job,
)
from .bundles import (
    BundlePriceAlgorithm,
    UnitAllocation,
    build_fractional_unit_allocation,
    bundle_price_menu,
    duration_class,
)
from .exp_price import ExpPriceAlgorithm, adv_price_update, unit_price
from .lp import LpSolution, Outcome, enumerate_outcomes, lp_residuals, simplex_max, solve_relaxed_lp
