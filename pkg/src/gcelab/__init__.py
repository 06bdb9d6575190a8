"""Generalized continuity equations for SU(N)-coupled 1-D quantum systems.

The package stacks N stationary Schroedinger or Dirac problems into one
field theory, builds the su(N) generator currents that mix different
systems, solves piecewise-constant potentials with delta barriers exactly,
and verifies the induced conservation laws: constant generalized currents on
symmetry domains, junction relations across delta barriers, the global
charge-current identity, and second-order continuity residuals.
"""

from __future__ import annotations

from .engine import (
    ChargeRelation,
    CurrentProfile,
    DegenerateEnergiesError,
    DeltaRelation,
    Domain,
    GaugeConfig,
    GceReport,
    SolutionStack,
    TransformSpec,
    charge_current_relation,
    delta_domain_relation,
    detect_domains,
    dirac_current,
    field_strength,
    gauge_residual,
    gce_residual_dirac,
    gce_residual_schrodinger,
    identity_transform,
    interval_stats,
    ladder_pair_current,
    parity_transform,
    schrodinger_current,
    transformed_current,
    translation_transform,
)
from .scenario import (
    ReportBundle,
    Scenario,
    ScenarioFormatError,
    builtin_scenario_names,
    load_builtin,
    load_scenario,
    run_scenario,
    save_scenario,
    scan_scenario,
    serialize_scenario,
    solution_bundle,
    write_reports,
)
from .solvers import (
    Convention,
    DeltaBarrier,
    InitialValue,
    PotentialProfile,
    ProfileError,
    Scattering,
    Segment,
    get_convention,
    solve_dirac,
    solve_schrodinger,
)
from .sun import (
    PotentialDecomposition,
    RankError,
    SunBasis,
    build_basis,
    decompose,
    source_operator,
    structure_constants,
)

__version__ = "0.1.0"

__all__ = [
    "ChargeRelation",
    "Convention",
    "CurrentProfile",
    "DegenerateEnergiesError",
    "DeltaBarrier",
    "DeltaRelation",
    "Domain",
    "GaugeConfig",
    "GceReport",
    "InitialValue",
    "PotentialDecomposition",
    "PotentialProfile",
    "ProfileError",
    "RankError",
    "ReportBundle",
    "Scattering",
    "Scenario",
    "ScenarioFormatError",
    "Segment",
    "SolutionStack",
    "SunBasis",
    "TransformSpec",
    "build_basis",
    "builtin_scenario_names",
    "charge_current_relation",
    "decompose",
    "delta_domain_relation",
    "detect_domains",
    "dirac_current",
    "field_strength",
    "gauge_residual",
    "gce_residual_dirac",
    "gce_residual_schrodinger",
    "get_convention",
    "identity_transform",
    "interval_stats",
    "ladder_pair_current",
    "load_builtin",
    "load_scenario",
    "parity_transform",
    "run_scenario",
    "save_scenario",
    "scan_scenario",
    "schrodinger_current",
    "serialize_scenario",
    "solution_bundle",
    "solve_dirac",
    "solve_schrodinger",
    "source_operator",
    "structure_constants",
    "transformed_current",
    "translation_transform",
    "write_reports",
]
