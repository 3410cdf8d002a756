from .__version__ import __version__
from .balance_sheets import (
    BankPopulation,
    BankRecord,
    SynthParams,
    generate_synthetic_population,
    load_population,
)
from .contagion import (
    Algorithm,
    ContagionResult,
    ImpactMatrix,
    ShockVector,
    build_impact_matrix,
    debtrank,
    default_cascade,
)
from .experiment import (
    DecaySchedule,
    SweepResult,
    build_decay_schedule,
    impact_histogram,
    run_failure_sweep,
)
from .risk import (
    LossDistribution,
    ScenarioGrid,
    ShockDistribution,
    VaRReport,
    loss_distribution,
    sample_shocks,
    stress_sweep,
    value_at_risk,
)
from .topology import (
    FitnessCalibration,
    Topology,
    TopologyEnsemble,
    calibrate_z,
    edge_probability,
    sample_ensemble,
)
from .weights import WeightedNetwork, assign_weights

CONTAGION_LAB = "contagion-lab"

__all__ = [
    "CONTAGION_LAB",
    "Algorithm",
    "BankPopulation",
    "BankRecord",
    "ContagionResult",
    "DecaySchedule",
    "FitnessCalibration",
    "ImpactMatrix",
    "LossDistribution",
    "ScenarioGrid",
    "ShockDistribution",
    "ShockVector",
    "SweepResult",
    "SynthParams",
    "Topology",
    "TopologyEnsemble",
    "VaRReport",
    "WeightedNetwork",
    "__version__",
    "assign_weights",
    "build_decay_schedule",
    "build_impact_matrix",
    "calibrate_z",
    "debtrank",
    "default_cascade",
    "edge_probability",
    "generate_synthetic_population",
    "impact_histogram",
    "load_population",
    "loss_distribution",
    "run_failure_sweep",
    "sample_ensemble",
    "sample_shocks",
    "stress_sweep",
    "value_at_risk",
]
