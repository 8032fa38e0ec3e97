"""Self-organizing gate network emulator."""
from .circuit import Circuit, CoefficientRangeError, UnitArrays, build_circuit
from .dynamics import EmulatorError, integrate, rates, step, velocity
from .params import DesignParams, FamilyParams, default_design
from .run import (
    RunOutcome,
    SOGSolver,
    SolveResult,
    convergence_fraction,
    derive_seeds,
    run,
    run_ensemble,
    solve,
    write_trajectory_csv,
)

__all__ = [
    "Circuit",
    "CoefficientRangeError",
    "DesignParams",
    "EmulatorError",
    "FamilyParams",
    "RunOutcome",
    "SOGSolver",
    "SolveResult",
    "UnitArrays",
    "build_circuit",
    "convergence_fraction",
    "default_design",
    "derive_seeds",
    "integrate",
    "rates",
    "run",
    "run_ensemble",
    "solve",
    "step",
    "velocity",
    "write_trajectory_csv",
]
