"""Exact Laurent polynomials over commuting symbols with rational coefficients.

Two kinds of square roots are adjoined:

* parameter roots ``sqrt:R`` and ``sqrt:T`` (written ``s_R``, ``s_T``), with
  the rewrite rule ``s_X**2 -> X``;
* numeric surds ``sqrt#k`` for squarefree integers ``k > 1``, which multiply
  together (``sqrt#2 * sqrt#3 -> sqrt#6``) and release square factors into
  the rational coefficient.

After these rewrites every monomial carries each root with exponent 0 or 1
and at most one numeric surd, so two expressions that differ only by the
rules compare equal after canonicalisation.

Ordinary symbols may carry negative exponents. That is how ``1/R`` and
``T**(-3/2) = T**-2 * s_T`` are represented.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, Iterable, Mapping, Tuple, Union

Monomial = Tuple[Tuple[str, int], ...]
Number = Union[int, Fraction]

ROOT_PREFIX = "sqrt:"
SURD_PREFIX = "sqrt#"


def root_symbol(base: str) -> str:
    return ROOT_PREFIX + base


def _squarefree_split(n: int) -> Tuple[int, int]:
    """Return ``(s, k)`` with ``n = s*s*k`` and ``k`` squarefree."""
    s, k, d = 1, 1, 2
    while d * d <= n:
        e = 0
        while n % d == 0:
            n //= d
            e += 1
        s *= d ** (e // 2)
        k *= d ** (e % 2)
        d += 1
    return s, k * n


def _reduce_monomial(mono: Dict[str, int]) -> Tuple[Fraction, Monomial]:
    coeff = Fraction(1)
    out: Dict[str, int] = {}
    surd = 1
    for name, e in mono.items():
        if e == 0:
            continue
        if name.startswith(ROOT_PREFIX):
            base = name[len(ROOT_PREFIX):]
            half, odd = divmod(e, 2)
            if half:
                out[base] = out.get(base, 0) + half
            if odd:
                out[name] = out.get(name, 0) + 1
        elif name.startswith(SURD_PREFIX):
            k = int(name[len(SURD_PREFIX):])
            half, odd = divmod(e, 2)
            coeff *= Fraction(k) ** half
            if odd:
                surd *= k
        else:
            out[name] = out.get(name, 0) + e
    if surd > 1:
        s, k = _squarefree_split(surd)
        coeff *= s
        if k > 1:
            out[SURD_PREFIX + str(k)] = 1
    # a root rewrite can feed an exponent back into a base already seen
    return coeff, tuple(sorted((n, e) for n, e in out.items() if e != 0))


class QuadExpr:
    """Immutable canonical polynomial. Build with :func:`sym` and :func:`const`."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[Monomial, Fraction] = None):
        acc: Dict[Monomial, Fraction] = {}
        for mono, c in (terms or {}).items():
            if c == 0:
                continue
            k, m = _reduce_monomial(dict(mono))
            acc[m] = acc.get(m, Fraction(0)) + Fraction(c) * k
        object.__setattr__(self, "terms", {m: c for m, c in sorted(acc.items()) if c != 0})

    def __setattr__(self, *_):
        raise AttributeError("QuadExpr is immutable")

    # arithmetic

    @staticmethod
    def lift(v) -> "QuadExpr":
        if isinstance(v, QuadExpr):
            return v
        if isinstance(v, (int, Fraction)):
            return const(v)
        raise TypeError(f"cannot use {type(v).__name__} in exact arithmetic")

    def __add__(self, other) -> "QuadExpr":
        other = QuadExpr.lift(other)
        acc = dict(self.terms)
        for m, c in other.terms.items():
            acc[m] = acc.get(m, Fraction(0)) + c
        return QuadExpr(acc)

    __radd__ = __add__

    def __neg__(self) -> "QuadExpr":
        return QuadExpr({m: -c for m, c in self.terms.items()})

    def __sub__(self, other) -> "QuadExpr":
        return self + (-QuadExpr.lift(other))

    def __rsub__(self, other) -> "QuadExpr":
        return QuadExpr.lift(other) - self

    def __mul__(self, other) -> "QuadExpr":
        other = QuadExpr.lift(other)
        acc: Dict[Monomial, Fraction] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                merged = dict(m1)
                for n, e in m2:
                    merged[n] = merged.get(n, 0) + e
                k, m = _reduce_monomial(merged)
                acc[m] = acc.get(m, Fraction(0)) + c1 * c2 * k
        return QuadExpr(acc)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "QuadExpr":
        return self * QuadExpr.lift(other).inverse()

    def __rtruediv__(self, other) -> "QuadExpr":
        return QuadExpr.lift(other) * self.inverse()

    def __pow__(self, n: int) -> "QuadExpr":
        if not isinstance(n, int):
            raise TypeError("integer exponents only")
        if n < 0:
            return self.inverse() ** (-n)
        out = const(1)
        for _ in range(n):
            out = out * self
        return out

    def inverse(self) -> "QuadExpr":
        """Inverse of a single term; sums are not invertible in this ring."""
        if len(self.terms) != 1:
            raise ZeroDivisionError(f"{self} is not an invertible monomial")
        (mono, c), = self.terms.items()
        inv: Dict[str, int] = {}
        coeff = 1 / c
        for n, e in mono:
            if n.startswith(SURD_PREFIX):
                # 1/sqrt(k) = sqrt(k)/k
                coeff /= int(n[len(SURD_PREFIX):])
                inv[n] = 1
            else:
                inv[n] = -e
        return QuadExpr({tuple(inv.items()): coeff})

    # comparison and inspection

    def __eq__(self, other) -> bool:
        try:
            other = QuadExpr.lift(other)
        except TypeError:
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self) -> int:
        return hash(tuple(self.terms.items()))

    def is_zero(self) -> bool:
        return not self.terms

    def is_monomial(self) -> bool:
        return len(self.terms) == 1

    def symbols(self) -> set:
        return {n for m in self.terms for n, _ in m}

    def degree_in(self, name: str) -> int:
        return max((dict(m).get(name, 0) for m in self.terms), default=0)

    def min_degree_in(self, name: str) -> int:
        return min((dict(m).get(name, 0) for m in self.terms), default=0)

    def coeff(self, name: str, power: int = 1) -> "QuadExpr":
        """Coefficient of ``name**power`` (other symbols kept)."""
        out = {}
        for m, c in self.terms.items():
            d = dict(m)
            if d.get(name, 0) == power:
                d.pop(name, None)
                out[tuple(d.items())] = c
        return QuadExpr(out)

    def subs(self, mapping: Mapping[str, "QuadExpr"]) -> "QuadExpr":
        """Simultaneous substitution of symbols by expressions."""
        mapping = {k: QuadExpr.lift(v) for k, v in mapping.items()}
        out = const(0)
        for m, c in self.terms.items():
            term = const(c)
            rest = {}
            for n, e in m:
                if n in mapping:
                    term = term * mapping[n] ** e
                else:
                    rest[n] = e
            out = out + term * QuadExpr({tuple(rest.items()): 1})
        return out

    def to_float(self, values: Mapping[str, float] = None) -> float:
        values = dict(values or {})
        total = 0.0
        for m, c in self.terms.items():
            v = float(c)
            for n, e in m:
                if n.startswith(SURD_PREFIX):
                    v *= float(int(n[len(SURD_PREFIX):])) ** (0.5 * e)
                elif n.startswith(ROOT_PREFIX):
                    v *= float(values[n[len(ROOT_PREFIX):]]) ** (0.5 * e)
                else:
                    v *= float(values[n]) ** e
            total += v
        return total

    def __repr__(self) -> str:
        return f"QuadExpr({self})"

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for m, c in self.terms.items():
            factors = [_fmt_factor(n, e) for n, e in m]
            if not factors:
                parts.append(_fmt_coeff(c))
            elif c == 1:
                parts.append("*".join(factors))
            elif c == -1:
                parts.append("-" + "*".join(factors))
            else:
                parts.append(_fmt_coeff(c) + "*" + "*".join(factors))
        return " + ".join(parts).replace("+ -", "- ")

    def to_dict(self) -> dict:
        return {"terms": [[[list(f) for f in m], str(c)] for m, c in self.terms.items()]}


def _fmt_coeff(c: Fraction) -> str:
    return str(c) if c.denominator == 1 else f"({c})"


def _fmt_factor(name: str, e: int) -> str:
    if name.startswith(ROOT_PREFIX):
        name = "s_" + name[len(ROOT_PREFIX):]
    elif name.startswith(SURD_PREFIX):
        name = f"sqrt({name[len(SURD_PREFIX):]})"
    return name if e == 1 else f"{name}^{e}"


def const(v: Number) -> QuadExpr:
    return QuadExpr({(): Fraction(v)})


def sym(name: str) -> QuadExpr:
    return QuadExpr({((name, 1),): Fraction(1)})


def sqrt_rational(v: Number) -> QuadExpr:
    """Exact square root of a nonnegative rational."""
    v = Fraction(v)
    if v < 0:
        raise ValueError(f"square root of negative {v}")
    if v == 0:
        return const(0)
    s, k = _squarefree_split(v.numerator * v.denominator)
    coeff = Fraction(s, v.denominator)
    if k == 1:
        return const(coeff)
    return QuadExpr({((SURD_PREFIX + str(k), 1),): coeff})


def root(base: str) -> QuadExpr:
    """Adjoined square root of the parameter ``base``."""
    return sym(root_symbol(base))


def clear_denominators(e: QuadExpr, names: Iterable[str]) -> QuadExpr:
    """Multiply by the smallest powers of ``names`` making their exponents >= 0."""
    factor = const(1)
    for n in names:
        low = e.min_degree_in(n)
        if low < 0:
            factor = factor * sym(n) ** (-low)
    return e * factor


def is_zero_mod_RT(e: QuadExpr, R: str = "R", T: str = "T") -> bool:
    """Exact zero test modulo ``R + T = 1`` (roots ``s_R``, ``s_T`` adjoined).

    Denominators in R and T are cleared first, then T is eliminated. Over
    Q(R) the elements 1, s_R, s_T and s_R*s_T are linearly independent, so
    the reduced form is zero iff the input is.
    """
    cleared = clear_denominators(e, [R, T])
    return cleared.subs({T: 1 - sym(R)}).is_zero()


def reduce_RT(e: QuadExpr, R: str = "R", T: str = "T") -> QuadExpr:
    """Eliminate T from the numerator after clearing denominators."""
    return clear_denominators(e, [R, T]).subs({T: 1 - sym(R)})
