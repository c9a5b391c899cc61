"""p-adic elements at finite precision and the additive character psi.

A LocalElem is (valuation, unit residue mod p^N); arithmetic follows the
ultrametric rules and fails loudly (InsufficientPrecision) rather than
silently truncating when cancellation eats the stored digits.
"""

from __future__ import annotations

from fractions import Fraction

from .errors import EvenResidualChar, InsufficientPrecision
from .scalars import ExactScalar

DEFAULT_PREC = 12


def _val_of_int(n: int, p: int) -> int:
    v = 0
    while n % p == 0:
        n //= p
        v += 1
    return v


class LocalElem:
    """Element of Q_p known to N significant p-adic digits."""

    __slots__ = ("p", "v", "u", "n")

    def __init__(self, p: int, v: int | None, u: int, n: int = DEFAULT_PREC):
        if p == 2:
            raise EvenResidualChar("p = 2 not supported")
        self.p = p
        self.v = v  # None encodes 0 (valuation +infinity)
        self.n = n
        self.u = 0 if v is None else u % p**n
        if v is not None and self.u % p == 0:
            raise ValueError("unit residue divisible by p")

    @staticmethod
    def from_rat(r, p: int, n: int = DEFAULT_PREC) -> "LocalElem":
        r = Fraction(r)
        if r == 0:
            return LocalElem(p, None, 0, n)
        vn = _val_of_int(r.numerator, p)
        vd = _val_of_int(r.denominator, p)
        num = r.numerator // p**vn
        den = r.denominator // p**vd
        u = num * pow(den, -1, p**n) % p**n
        return LocalElem(p, vn - vd, u, n)

    @staticmethod
    def zero(p: int, n: int = DEFAULT_PREC) -> "LocalElem":
        return LocalElem(p, None, 0, n)

    @staticmethod
    def uniformizer(p: int, n: int = DEFAULT_PREC) -> "LocalElem":
        return LocalElem(p, 1, 1, n)

    def is_zero(self) -> bool:
        return self.v is None

    def valuation(self) -> int:
        if self.v is None:
            raise InsufficientPrecision("valuation of zero")
        return self.v

    def unit_mod(self, d: int) -> int:
        """Unit residue mod p^d."""
        if self.v is None:
            raise InsufficientPrecision("zero has no unit part")
        if d > self.n:
            raise InsufficientPrecision(f"requested depth {d} > stored {self.n}")
        return self.u % self.p**d

    def __mul__(self, o: "LocalElem") -> "LocalElem":
        o = self._co(o)
        if self.v is None or o.v is None:
            return LocalElem.zero(self.p, min(self.n, o.n))
        n = min(self.n, o.n)
        return LocalElem(self.p, self.v + o.v, self.u * o.u, n)

    def inv(self) -> "LocalElem":
        if self.v is None:
            raise ZeroDivisionError("inverse of p-adic zero")
        return LocalElem(self.p, -self.v, pow(self.u, -1, self.p**self.n), self.n)

    def __truediv__(self, o):
        return self * self._co(o).inv()

    def __neg__(self) -> "LocalElem":
        if self.v is None:
            return self
        return LocalElem(self.p, self.v, -self.u, self.n)

    def __add__(self, o) -> "LocalElem":
        o = self._co(o)
        if self.v is None:
            return o
        if o.v is None:
            return self
        if self.v > o.v:
            return o + self
        # now self.v <= o.v
        shift = o.v - self.v
        n = min(self.n, o.n + shift)
        acc = (self.u + o.u * self.p**shift) % self.p**n
        if acc == 0:
            if shift == 0 and (self.u + o.u) % self.p**n == 0:
                # cancellation beyond stored digits: only exact negatives
                # are representable as zero
                if (self.u + o.u) % self.p ** max(self.n, o.n) == 0:
                    return LocalElem.zero(self.p, n)
            raise InsufficientPrecision("cancellation exceeds stored digits")
        dv = _val_of_int(acc, self.p)
        if dv >= n:
            raise InsufficientPrecision("cancellation exceeds stored digits")
        return LocalElem(self.p, self.v + dv, acc // self.p**dv, n - dv)

    def __sub__(self, o):
        return self + (-self._co(o))

    def _co(self, o) -> "LocalElem":
        if isinstance(o, LocalElem):
            assert o.p == self.p
            return o
        return LocalElem.from_rat(o, self.p, self.n)

    def rational_lift(self) -> Fraction:
        """The canonical rational with the same stored digits."""
        if self.v is None:
            return Fraction(0)
        return Fraction(self.u) * Fraction(self.p) ** self.v

    def __eq__(self, o) -> bool:
        if isinstance(o, (int, Fraction)):
            o = LocalElem.from_rat(o, self.p, self.n)
        if not isinstance(o, LocalElem):
            return NotImplemented
        if self.v is None or o.v is None:
            return self.v is None and o.v is None
        d = min(self.n, o.n)
        return self.v == o.v and self.unit_mod(d) == o.unit_mod(d)

    def __hash__(self):
        return hash((self.p, self.v, self.u))

    def __repr__(self):
        if self.v is None:
            return f"LocalElem(0; p={self.p})"
        return f"LocalElem(p={self.p}, v={self.v}, u={self.u} mod {self.p}^{self.n})"


def valuation_and_unit(x: LocalElem, depth: int) -> tuple[int, int]:
    """(v(x), unit residue mod p^depth)."""
    return x.valuation(), x.unit_mod(depth)


class AddChar:
    """The additive character psi, trivial on o, nontrivial on p^(-1) o.

    The paper fixes psi only up to conductor; the lift psi(a/p^k) =
    zeta_(p^k)^a is scaled by the configurable unit: psi_u(x) = psi(u x).
    """

    __slots__ = ("p", "unit", "sign", "_cache")

    def __init__(self, p: int, unit: int = 1, sign: int = 1):
        if p == 2:
            raise EvenResidualChar("p = 2 not supported")
        if unit % p == 0:
            raise ValueError("psi scaling must be a unit")
        assert sign in (1, -1)
        self.p = p
        self.unit = unit
        self.sign = sign
        self._cache: dict = {}

    def bar(self) -> "AddChar":
        """psi^(-1)."""
        return AddChar(self.p, self.unit, -self.sign)

    def __call__(self, x) -> ExactScalar:
        p = self.p
        if isinstance(x, LocalElem):
            if x.is_zero() or x.v >= 0:
                return ExactScalar.one(p)
            k = -x.v
            if k > x.n:
                raise InsufficientPrecision("fractional part beyond stored digits")
            a = x.unit_mod(k)
        else:
            x = Fraction(x)
            if x == 0:
                return ExactScalar.one(p)
            vd = _val_of_int(x.denominator, p)
            if vd == 0:
                return ExactScalar.one(p)
            k = vd
            den = x.denominator // p**k
            a = x.numerator * pow(den, -1, p**k) % p**k
        a = a * self.unit * self.sign % p**k
        while a % p == 0 and a:
            a //= p
            k -= 1
        if k == 0 or a == 0:
            return ExactScalar.one(p)
        key = (a, k)
        hit = self._cache.get(key)
        if hit is None:
            hit = ExactScalar.zeta(p, p**k, a)
            self._cache[key] = hit
        return hit

    def value_at_frac(self, num: int, k: int) -> ExactScalar:
        """psi(num / p^k) without building a LocalElem."""
        return self(Fraction(num, self.p**k)) if k > 0 else ExactScalar.one(self.p)
