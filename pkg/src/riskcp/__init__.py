"""Risk-controlling prediction sets and robust decisions over finite label spaces."""

from .core import (
    ActionSpace,
    Dataset,
    DiscreteDistribution,
    LabeledRecord,
    LabelSpace,
    LossTable,
    PredictionSet,
    UsageError,
    ValidationError,
    medical_lambda0,
    medical_lambda1,
    validate_loss_table,
)
from .robust import robust_action, risk_certificate, worst_case_risk
from .pointwise import pointwise_solution, selector, value_profile
from .population import PopulationInstance, coverage_assignment, solve_dual
from .rocp import RocpCalibration, rocp_decide
from .experiment import ExperimentConfig, run_experiment

__all__ = [
    "ActionSpace", "Dataset", "DiscreteDistribution", "LabeledRecord", "LabelSpace",
    "LossTable", "PredictionSet", "UsageError", "ValidationError", "medical_lambda0",
    "medical_lambda1", "validate_loss_table", "robust_action", "risk_certificate",
    "worst_case_risk", "pointwise_solution", "selector", "value_profile",
    "PopulationInstance", "coverage_assignment", "solve_dual", "RocpCalibration",
    "rocp_decide", "ExperimentConfig", "run_experiment",
]
