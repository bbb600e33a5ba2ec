"""Truthful posted-price scheduling of stochastic jobs with binding launch plans."""
from .core import (
    NEVER,
    Birth,
    FractionalSoW,
    Instance,
    InstanceParams,
    JointDist,
    SignalModel,
    StatementOfWork,
    ValueFunction,
    relax_sow,
    sample_realization,
    validate_sow,
    value_at,
)
from .mechanism import (
    FailureEstimates,
    LaunchPlan,
    Mechanism,
    PriceMenu,
    choose_launch_plan,
    estimated_utility,
    run_mechanism,
)

__version__ = "0.1.0"
