"""Exact quadrature algebra for measurement-induced gates."""

from .circuit import (  # noqa: F401
    BeamSplit,
    CircuitError,
    Displace,
    MeasureSubstitute,
    PhaseShift,
    commutator_coefficient,
    propagate,
)
from .cubic import (  # noqa: F401
    ProofRecord,
    derive_squeezer_law,
    ideal_limit_check,
    nullifier_solve,
    verify_cubic_identity,
)
from .poly import QuadExpr, const, root, sqrt_rational, sym  # noqa: F401
