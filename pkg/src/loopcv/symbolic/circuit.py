"""Heisenberg-picture propagation of quadrature expressions through circuits.

Each mode carries a pair ``(x, p)`` of :class:`QuadExpr`. Beam splitters and
quarter-turn phase shifts recombine them linearly. A measurement removes its
mode and introduces an outcome symbol; the outcome's definition in terms of
the initial quadratures is kept, and one initial symbol of that definition
is solved for and eliminated from the surviving modes. Displacements add
arbitrary expressions, typically in outcome symbols. :meth:`Propagation.heisenberg`
finally writes everything back in terms of the initial quadratures.

Beam-splitter convention, for modes (first, second)::

    first  <- sqrt(R) first - sqrt(T) second      (retained)
    second <- sqrt(T) first + sqrt(R) second      (tap)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .poly import QuadExpr, const, root, sqrt_rational, sym

Param = Union[int, Fraction, str]


class CircuitError(ValueError):
    pass


def bs_coefficients(R: Param) -> Tuple[QuadExpr, QuadExpr, QuadExpr, QuadExpr]:
    """``(R, T, sqrt R, sqrt T)`` for a numeric or symbolic reflectivity.

    A string names a symbolic reflectivity; its transmissivity symbol is
    ``"T"`` for ``"R"`` and ``name + "_T"`` otherwise.
    """
    if isinstance(R, str):
        t = "T" if R == "R" else R + "_T"
        return sym(R), sym(t), root(R), root(t)
    R = Fraction(R)
    if not 0 <= R <= 1:
        raise CircuitError(f"reflectivity {R} outside [0, 1]")
    return const(R), const(1 - R), sqrt_rational(R), sqrt_rational(1 - R)


@dataclass(frozen=True)
class BeamSplit:
    R: Param
    first: str
    second: str


@dataclass(frozen=True)
class PhaseShift:
    mode: str
    theta_deg: int

    def __post_init__(self):
        if self.theta_deg % 90:
            raise CircuitError("exact propagation supports multiples of 90 deg only")


@dataclass(frozen=True)
class MeasureSubstitute:
    """Measure ``a x + b p`` of ``mode``; ``a`` and ``b`` may hold outcomes."""

    mode: str
    a: QuadExpr
    b: QuadExpr
    outcome: str


@dataclass(frozen=True)
class Displace:
    mode: str
    quadrature: str  # "x" or "p"
    amount: QuadExpr

    def __post_init__(self):
        if self.quadrature not in ("x", "p"):
            raise CircuitError(f"quadrature must be x or p, not {self.quadrature!r}")


CircuitStep = Union[BeamSplit, PhaseShift, MeasureSubstitute, Displace]


def measure_x(mode: str, outcome: str) -> MeasureSubstitute:
    return MeasureSubstitute(mode, const(1), const(0), outcome)


def measure_p(mode: str, outcome: str) -> MeasureSubstitute:
    return MeasureSubstitute(mode, const(0), const(1), outcome)


@dataclass
class Propagation:
    modes: Dict[str, Tuple[QuadExpr, QuadExpr]]
    outcomes: Dict[str, QuadExpr] = field(default_factory=dict)  # in initial symbols
    solved: Dict[str, QuadExpr] = field(default_factory=dict)  # eliminated symbol -> expr

    def heisenberg(self, mode: str) -> Tuple[QuadExpr, QuadExpr]:
        """Output quadratures of ``mode`` in the initial symbols only."""
        x, p = self.modes[mode]
        return self.expand(x), self.expand(p)

    def expand(self, e: QuadExpr) -> QuadExpr:
        # later outcomes may refer to earlier ones through adaptive settings
        for name in reversed(list(self.outcomes)):
            e = e.subs({name: self.outcomes[name]})
        return e


def initial_modes(names: Sequence[str]) -> Dict[str, Tuple[QuadExpr, QuadExpr]]:
    return {n: (sym("x_" + n), sym("p_" + n)) for n in names}


def _quarter_turns(x: QuadExpr, p: QuadExpr, theta: int) -> Tuple[QuadExpr, QuadExpr]:
    for _ in range((theta // 90) % 4):
        x, p = -p, x
    return x, p


def _solve_linear(defn: QuadExpr, candidates: Sequence[str]) -> Optional[Tuple[str, QuadExpr, QuadExpr]]:
    """Find a candidate symbol occurring linearly with an invertible coefficient."""
    for s in candidates:
        if s not in defn.symbols() or defn.degree_in(s) != 1 or defn.min_degree_in(s) < 0:
            continue
        c = defn.coeff(s, 1)
        if c.is_monomial() and not (c.symbols() & set(candidates)):
            return s, c, defn - c * sym(s)
    return None


def propagate(
    steps: Sequence[CircuitStep],
    mode_names: Sequence[str],
    eliminate: Sequence[str] = None,
) -> Propagation:
    """Run ``steps`` on fresh symbols ``x_<mode>``, ``p_<mode>``.

    ``eliminate`` lists the initial symbols a measurement may solve for, in
    order of preference (default: every initial quadrature).
    """
    state = Propagation(initial_modes(mode_names))
    initial = [s for n in mode_names for s in ("x_" + n, "p_" + n)]
    eliminate = list(initial if eliminate is None else eliminate)
    for st in steps:
        if isinstance(st, BeamSplit):
            for m in (st.first, st.second):
                if m not in state.modes:
                    raise CircuitError(f"no mode {m!r}")
            if st.first == st.second:
                raise CircuitError("beam splitter needs two distinct modes")
            _, _, a, b = bs_coefficients(st.R)
            (x1, p1), (x2, p2) = state.modes[st.first], state.modes[st.second]
            state.modes[st.first] = (a * x1 - b * x2, a * p1 - b * p2)
            state.modes[st.second] = (b * x1 + a * x2, b * p1 + a * p2)
        elif isinstance(st, PhaseShift):
            state.modes[st.mode] = _quarter_turns(*state.modes[st.mode], st.theta_deg)
        elif isinstance(st, Displace):
            x, p = state.modes[st.mode]
            state.modes[st.mode] = (x + st.amount, p) if st.quadrature == "x" else (x, p + st.amount)
        elif isinstance(st, MeasureSubstitute):
            if st.mode not in state.modes:
                raise CircuitError(f"no mode {st.mode!r}")
            x, p = state.modes.pop(st.mode)
            measured = st.a * x + st.b * p
            if measured.is_zero():
                raise CircuitError("measured combination is identically zero")
            # definition in initial symbols, with earlier outcomes expanded
            defn = state.expand(measured.subs(state.solved))
            found = _solve_linear(defn, [s for s in eliminate if s not in state.solved])
            if found is None:
                raise CircuitError(
                    f"cannot solve measurement of {st.mode} for any quadrature: {defn}"
                )
            s, c, rest = found
            solution = (sym(st.outcome) - rest) / c
            state.solved[s] = solution
            state.outcomes[st.outcome] = defn
            state.modes = {
                k: (vx.subs({s: solution}), vp.subs({s: solution}))
                for k, (vx, vp) in state.modes.items()
            }
        else:
            raise CircuitError(f"unknown step {st!r}")
    return state


def commutator_coefficient(x: QuadExpr, p: QuadExpr, mode_names: Sequence[str]) -> QuadExpr:
    """Formal [x, p]/[x_in, p_in]: sum over modes of a*d - b*c."""
    total = const(0)
    for n in mode_names:
        a, b = x.coeff("x_" + n), x.coeff("p_" + n)
        c, d = p.coeff("x_" + n), p.coeff("p_" + n)
        total = total + a * d - b * c
    return total
