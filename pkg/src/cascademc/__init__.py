"""Cascading-outage risk estimation by Monte Carlo and importance sampling.

The package models a cascading outage as an absorbing Markov chain over
component-status states of a DC power grid.  It provides:

- ``grid_model``: network data model and case file I/O,
- ``dc_power``: DC power flow, islanding, and minimum-shed dispatch,
- ``cascade``: outage probability model and chain transitions,
- ``sampling``: plain and importance-sampled path simulation,
- ``estimators``: exceedance, risk, and tail-quantile estimators with
  variance diagnostics,
- ``oracle``: exact path enumeration for small systems,
- ``cli``: the ``cascademc`` command line front end.
"""

from .cascade import (
    ComponentStatus,
    ContradictionError,
    OutageModel,
    SystemState,
    TransitionRecord,
    outage_probabilities,
    path_probability,
    path_proposal_probability,
    transition_probability,
)
from .dc_power import (
    DispatchCache,
    DispatchError,
    DispatchResult,
    StructuralError,
    dc_flow,
    dispatch,
    islands,
    severity,
)
from .estimators import (
    Estimate,
    EstimatorMisuseError,
    TailMeasures,
    W0Report,
    export_csv,
    prob_is,
    prob_mcs,
    replicate_variance,
    risk,
    var_cvar,
    w0_diagnostic,
)
from .grid_model import (
    Branch,
    Bus,
    CaseError,
    CaseFormatError,
    CaseIntegrityError,
    CaseWarning,
    ComponentIndex,
    Generator,
    Network,
    component_count,
    load_case,
    network_from_dict,
    network_to_dict,
    save_case,
)
from .oracle import (
    EnumerationBudgetError,
    EnumerationError,
    EnumSummary,
    PathEnumeration,
    PathRecord,
    PropositionReport,
    enumerate_paths,
    read_golden,
    verify_propositions,
    write_golden,
)
from .sampling import (
    CascadePath,
    SampleSet,
    SisConfig,
    amplify,
    run_campaign,
    simulate_path,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "Branch",
    "Bus",
    "CascadePath",
    "CaseError",
    "CaseFormatError",
    "CaseIntegrityError",
    "CaseWarning",
    "ComponentIndex",
    "ComponentStatus",
    "ContradictionError",
    "DispatchCache",
    "DispatchError",
    "DispatchResult",
    "EnumSummary",
    "EnumerationBudgetError",
    "EnumerationError",
    "Estimate",
    "EstimatorMisuseError",
    "Generator",
    "Network",
    "OutageModel",
    "PathEnumeration",
    "PathRecord",
    "PropositionReport",
    "SampleSet",
    "SisConfig",
    "StructuralError",
    "SystemState",
    "TailMeasures",
    "TransitionRecord",
    "W0Report",
    "amplify",
    "component_count",
    "dc_flow",
    "dispatch",
    "enumerate_paths",
    "export_csv",
    "islands",
    "load_case",
    "network_from_dict",
    "network_to_dict",
    "outage_probabilities",
    "path_probability",
    "path_proposal_probability",
    "prob_is",
    "prob_mcs",
    "read_golden",
    "replicate_variance",
    "risk",
    "run_campaign",
    "save_case",
    "severity",
    "simulate_path",
    "step",
    "transition_probability",
    "var_cvar",
    "verify_propositions",
    "w0_diagnostic",
    "write_golden",
]
