"""Rational functions in Z = q^(-s) with exact scalar coefficients.

Carrier of L-factors, gamma factors and s-regularized integrals; equality is
decided by cross-multiplication, so no gcd pivoting over the (possibly
non-integral) scalar ring is ever needed.
"""

from __future__ import annotations

from fractions import Fraction

from .chars import pow_scalar
from .errors import PoleAtOne
from .scalars import ExactScalar


class RatFnQs:
    """num(Z)/den(Z), coefficients ExactScalar, Laurent handled by shifts."""

    __slots__ = ("q", "num", "den")

    def __init__(self, q: int, num, den=None):
        self.q = q
        self.num = _trim([_coerce(q, c) for c in num])
        self.den = _trim([_coerce(q, c) for c in (den if den is not None else [1])])
        if not self.den:
            raise ZeroDivisionError("zero denominator polynomial")

    # -- constructors ---------------------------------------------------
    @staticmethod
    def const(q: int, c) -> "RatFnQs":
        return RatFnQs(q, [c])

    @staticmethod
    def monomial(q: int, c, k: int) -> "RatFnQs":
        """c * Z^k (k may be negative)."""
        if k >= 0:
            return RatFnQs(q, [0] * k + [c])
        return RatFnQs(q, [c], [0] * (-k) + [1])

    @staticmethod
    def zero(q: int) -> "RatFnQs":
        return RatFnQs(q, [0])

    def is_zero(self) -> bool:
        return not self.num

    # -- arithmetic -------------------------------------------------------
    def __add__(self, o: "RatFnQs") -> "RatFnQs":
        o = self._co(o)
        num = _poly_add(_poly_mul(self.num, o.den), _poly_mul(o.num, self.den))
        return RatFnQs(self.q, num, _poly_mul(self.den, o.den))

    def __sub__(self, o: "RatFnQs") -> "RatFnQs":
        return self + o.scale(-1)

    def __mul__(self, o: "RatFnQs") -> "RatFnQs":
        o = self._co(o)
        return RatFnQs(
            self.q, _poly_mul(self.num, o.num), _poly_mul(self.den, o.den)
        )

    def __truediv__(self, o: "RatFnQs") -> "RatFnQs":
        o = self._co(o)
        if o.is_zero():
            raise ZeroDivisionError("division by zero rational function")
        return RatFnQs(
            self.q, _poly_mul(self.num, o.den), _poly_mul(self.den, o.num)
        )

    def scale(self, a) -> "RatFnQs":
        a = _coerce(self.q, a)
        return RatFnQs(self.q, [c * a for c in self.num], self.den)

    def _co(self, o) -> "RatFnQs":
        if isinstance(o, RatFnQs):
            assert o.q == self.q
            return o
        return RatFnQs.const(self.q, o)

    def __eq__(self, o) -> bool:
        if not isinstance(o, (RatFnQs, int, Fraction, ExactScalar)):
            return NotImplemented
        o = self._co(o)
        lhs = _poly_mul(self.num, o.den)
        rhs = _poly_mul(o.num, self.den)
        return _poly_eq(lhs, rhs)

    def __hash__(self):
        raise TypeError("RatFnQs is unhashable")

    # -- substitutions ----------------------------------------------------
    def subst_one_minus_s(self) -> "RatFnQs":
        """s -> 1 - s, i.e. Z -> 1/(q Z)."""
        d = max(len(self.num), len(self.den))
        qinv = ExactScalar.from_rat(self.q, Fraction(1, self.q))
        num = _flip(self.num, d, qinv, self.q)
        den = _flip(self.den, d, qinv, self.q)
        return RatFnQs(self.q, num, den)

    def shift_s(self, t: int) -> "RatFnQs":
        """s -> s + t, i.e. Z -> q^(-t) Z."""
        fac = ExactScalar.from_rat(self.q, Fraction(self.q) ** (-t))
        num = [c * pow_scalar(fac, k) for k, c in enumerate(self.num)]
        den = [c * pow_scalar(fac, k) for k, c in enumerate(self.den)]
        return RatFnQs(self.q, num, den)

    # -- evaluation ---------------------------------------------------------
    def eval_at(self, z0: ExactScalar) -> ExactScalar:
        num = _horner(self.num, z0, self.q)
        den = _horner(self.den, z0, self.q)
        if den.is_zero():
            if num.is_zero():
                # removable singularity: divide out (Z - z0) exactly
                return self._deflate(z0).eval_at(z0)
            raise PoleAtOne(f"pole at the requested point")
        return num / den

    def _deflate(self, z0: ExactScalar) -> "RatFnQs":
        num = _syn_div(self.num, z0, self.q)
        den = _syn_div(self.den, z0, self.q)
        return RatFnQs(self.q, num, den)

    def eval_at_s_one(self) -> ExactScalar:
        return self.eval_at(ExactScalar.from_rat(self.q, Fraction(1, self.q)))

    def eval_at_s_half(self) -> ExactScalar:
        return self.eval_at(ExactScalar.sqrtq_pow(self.q, -1))

    def as_monomial(self) -> tuple[ExactScalar, int] | None:
        """(c, k) with self = c Z^k, or None."""
        nz_n = [i for i, c in enumerate(self.num) if not c.is_zero()]
        nz_d = [i for i, c in enumerate(self.den) if not c.is_zero()]
        if len(nz_n) != 1 or len(nz_d) != 1:
            return None
        return (self.num[nz_n[0]] / self.den[nz_d[0]], nz_n[0] - nz_d[0])

    def reduced(self) -> tuple[list[ExactScalar], list[ExactScalar]]:
        """Best-effort cancellation for printing: common Z^k and a scalar."""
        num, den = list(self.num), list(self.den)
        while num and den and num[0].is_zero() and den[0].is_zero():
            num.pop(0)
            den.pop(0)
        if den:
            lead = next((c for c in den if not c.is_zero()), None)
            if lead is not None and not (lead - ExactScalar.one(self.q)).is_zero():
                try:
                    inv = lead.inv()
                    num = [c * inv for c in num]
                    den = [c * inv for c in den]
                except Exception:
                    pass
        return num, den

    def pretty(self) -> str:
        num, den = self.reduced()
        def side(cs):
            terms = []
            for k, c in enumerate(cs):
                if c.is_zero():
                    continue
                r = c.rational_part()
                cc = str(r) if r is not None else "(" + _scalar_txt(c) + ")"
                terms.append(f"{cc}*Z^{k}" if k else f"{cc}")
            return " + ".join(terms) if terms else "0"
        d = side(den)
        return side(num) if d == "1" else f"({side(num)}) / ({d})"

    def __repr__(self):
        return f"RatFnQs[{self.pretty()}]"


def _scalar_txt(c: ExactScalar) -> str:
    v = c.embed(12)
    return f"{v.real:.6g}{v.imag:+.6g}i"


def _coerce(q, c) -> ExactScalar:
    if isinstance(c, ExactScalar):
        return c
    return ExactScalar.from_rat(q, c)


def _trim(cs: list[ExactScalar]) -> list[ExactScalar]:
    while cs and cs[-1].is_zero():
        cs.pop()
    return cs


def _poly_add(a, b):
    n = max(len(a), len(b))
    out = []
    for i in range(n):
        x = a[i] if i < len(a) else None
        y = b[i] if i < len(b) else None
        if x is None:
            out.append(y)
        elif y is None:
            out.append(x)
        else:
            out.append(x + y)
    return out


def _poly_mul(a, b):
    if not a or not b:
        return []
    q = a[0].q if a else b[0].q
    out = [ExactScalar.zero(q) for _ in range(len(a) + len(b) - 1)]
    for i, x in enumerate(a):
        if x.is_zero():
            continue
        for j, y in enumerate(b):
            if y.is_zero():
                continue
            out[i + j] = out[i + j] + x * y
    return out


def _poly_eq(a, b) -> bool:
    n = max(len(a), len(b))
    for i in range(n):
        x = a[i] if i < len(a) else None
        y = b[i] if i < len(b) else None
        if x is None:
            if y is not None and not y.is_zero():
                return False
        elif y is None:
            if not x.is_zero():
                return False
        elif not (x - y).is_zero():
            return False
    return True


def _flip(cs, d, qinv, q):
    """p(Z) -> p(1/(qZ)) * (qZ)^(d-1) as a polynomial of degree < d."""
    out = [ExactScalar.zero(q) for _ in range(d)]
    for k, c in enumerate(cs):
        # c Z^k -> c q^(-k) Z^(-k) * (q Z)^(d-1) = c q^(d-1-k) Z^(d-1-k)
        out[d - 1 - k] = c * ExactScalar.from_rat(q, Fraction(q) ** (d - 1 - k))
    return out


def _horner(cs, z0, q):
    acc = ExactScalar.zero(q)
    for c in reversed(cs):
        acc = acc * z0 + c
    return acc


def _syn_div(cs, z0, q):
    """cs / (Z - z0), raising if the division is not exact."""
    n = len(cs)
    if n <= 1:
        if n == 1 and not cs[0].is_zero():
            raise PoleAtOne("pole is not removable")
        return []
    out = [ExactScalar.zero(q) for _ in range(n - 1)]
    out[n - 2] = cs[n - 1]
    for k in range(n - 2, 0, -1):
        out[k - 1] = cs[k] + z0 * out[k]
    rem = cs[0] + z0 * out[0]
    if not rem.is_zero():
        raise PoleAtOne("pole is not removable")
    return out
