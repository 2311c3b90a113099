"""bellhv: finite hidden-variable ensembles and Bell-type inequality analysis.

The library simulates measurement runs over a finite hidden space whose
empirical distribution may differ from run to run, quantifies those
differences (l1 deviation, device inconsistency), checks the classical
three-correlation inequality and its budget-corrected relaxations, and
searches for the largest violation a given budget admits.
"""

from .core import (
    DetObservable,
    DeviceSpace,
    DimensionMismatchError,
    Distribution,
    HiddenSpace,
    ModeMismatchError,
    RecordSequence,
    Run,
    StochObservable,
    ensemble_covariation_det,
    ensemble_covariation_stoch,
    ensemble_probabilities,
    frequency_covariation,
    realize_records,
)
from .inequalities import (
    BellInstanceDet,
    BellInstanceStoch,
    BudgetViolationError,
    InequalityReport,
    InternalInvariantError,
    PreconditionError,
    bound_report,
    check_budgeted,
    check_classical,
    check_consistent_devices,
    check_deviation_corrected,
    conditional_product_joint,
    joint_classical_report,
    joint_marginal_plus,
    joint_pair_covariation,
)
from .metrics import (
    ConvergenceTable,
    DeviationReport,
    DeviceMismatchError,
    EnsembleFamily,
    convergence_probe,
    device_inconsistency,
    l1_deviation,
    pairwise_deviations,
    peak_deviation,
)
from .search import (
    DimensionCapError,
    HuntReport,
    SearchProblem,
    SearchResult,
    classical_violation,
    counterexample_hunt,
    maximize_violation,
    transfer_argmax,
)
from .seeding import derive_rng
from .simulate import (
    DeviceModel,
    DriftModel,
    ExperimentPlan,
    ExperimentResult,
    drift_sampler,
    generate_run,
    run_experiment,
    run_realizing,
    singlet_epsilon_grid,
    singlet_reference,
)

__version__ = "0.1.0"

__all__ = [
    "BellInstanceDet",
    "BellInstanceStoch",
    "BudgetViolationError",
    "ConvergenceTable",
    "DetObservable",
    "DeviationReport",
    "DeviceMismatchError",
    "DeviceModel",
    "DeviceSpace",
    "DimensionCapError",
    "DimensionMismatchError",
    "Distribution",
    "DriftModel",
    "EnsembleFamily",
    "ExperimentPlan",
    "ExperimentResult",
    "HiddenSpace",
    "HuntReport",
    "InequalityReport",
    "InternalInvariantError",
    "ModeMismatchError",
    "PreconditionError",
    "RecordSequence",
    "Run",
    "SearchProblem",
    "SearchResult",
    "StochObservable",
    "bound_report",
    "check_budgeted",
    "check_classical",
    "check_consistent_devices",
    "check_deviation_corrected",
    "classical_violation",
    "conditional_product_joint",
    "convergence_probe",
    "counterexample_hunt",
    "derive_rng",
    "device_inconsistency",
    "drift_sampler",
    "ensemble_covariation_det",
    "ensemble_covariation_stoch",
    "ensemble_probabilities",
    "frequency_covariation",
    "generate_run",
    "joint_classical_report",
    "joint_marginal_plus",
    "joint_pair_covariation",
    "l1_deviation",
    "maximize_violation",
    "pairwise_deviations",
    "peak_deviation",
    "realize_records",
    "run_experiment",
    "run_realizing",
    "singlet_epsilon_grid",
    "singlet_reference",
    "transfer_argmax",
]
