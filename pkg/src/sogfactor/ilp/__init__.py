"""Binary ILP representation, exact evaluation, presolve and file I/O."""
from .io import export_model, from_lp, from_mps, import_model, to_lp, to_mps
from .model import (
    AssignmentLengthError,
    Evaluation,
    IlpModel,
    LinearConstraint,
    ModelBuilder,
    Sense,
    VarRef,
    evaluate,
)
from .presolve import InfeasibleModelError, PresolveResult, presolve

__all__ = [
    "AssignmentLengthError",
    "Evaluation",
    "IlpModel",
    "InfeasibleModelError",
    "LinearConstraint",
    "ModelBuilder",
    "PresolveResult",
    "Sense",
    "VarRef",
    "evaluate",
    "export_model",
    "from_lp",
    "from_mps",
    "import_model",
    "presolve",
    "to_lp",
    "to_mps",
]
