"""Exact scalars: the cyclotomic field Q(zeta_M) with sqrt(q) adjoined.

All character values, Gauss sums, Weil constants and half-integral powers
q^(k/2) live here.  An element is a + b*sqrt(q) with a, b in Q(zeta_M);
the cyclotomic part is stored as a polynomial in zeta_M reduced mod the
M-th cyclotomic polynomial, so the coefficient vector has length phi(M).

Conductors are managed lazily: binary operations lift both operands to the
lcm conductor.  sqrt(q) stays formal (never resolved into Q(zeta_4q)); for
some (q, M) the formal ring has zero divisors (sqrt(5) lies in Q(zeta_5)),
in which case inversion raises ZeroDivisor instead of guessing.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import gcd

import mpmath

from .errors import ZeroDivisor

Rat = Fraction

_ZERO = Fraction(0)
_ONE = Fraction(1)


@lru_cache(maxsize=None)
def cyclotomic_poly(m: int) -> tuple[Fraction, ...]:
    """Coefficients (ascending) of the m-th cyclotomic polynomial."""
    if m == 1:
        return (Fraction(-1), Fraction(1))
    # x^m - 1 divided by prod of Phi_d for proper divisors d
    num = [Fraction(0)] * (m + 1)
    num[0] = Fraction(-1)
    num[m] = Fraction(1)
    for d in range(1, m):
        if m % d == 0:
            num = _poly_divexact(num, list(cyclotomic_poly(d)))
    return tuple(num)


def _poly_trim(p: list[Fraction]) -> list[Fraction]:
    while p and p[-1] == 0:
        p.pop()
    return p


def _poly_divexact(num: list[Fraction], den: list[Fraction]) -> list[Fraction]:
    num = list(num)
    out = [Fraction(0)] * (len(num) - len(den) + 1)
    for i in range(len(out) - 1, -1, -1):
        c = num[i + len(den) - 1] / den[-1]
        out[i] = c
        if c:
            for j, dj in enumerate(den):
                num[i + j] -= c * dj
    assert not any(num), "non-exact polynomial division"
    return out


def _poly_mod(p: list[Fraction], mod: tuple[Fraction, ...]) -> list[Fraction]:
    deg = len(mod) - 1
    p = list(p)
    for i in range(len(p) - 1, deg - 1, -1):
        c = p[i]
        if c:
            p[i] = Fraction(0)
            for j in range(deg):
                p[i - deg + j] += -c * mod[j]
    del p[deg:]
    while len(p) < deg:
        p.append(Fraction(0))
    return p


@lru_cache(maxsize=None)
def _zeta_power(m: int, k: int) -> tuple[Fraction, ...]:
    """zeta_m^k reduced mod Phi_m, as a phi(m)-vector."""
    k %= m
    mod = cyclotomic_poly(m)
    p = [Fraction(0)] * (k + 1)
    p[k] = Fraction(1)
    return tuple(_poly_mod(p, mod))


def _phi(m: int) -> int:
    return len(cyclotomic_poly(m)) - 1


class Cyclo:
    """Element of Q(zeta_M), coefficients on 1, zeta, ..., zeta^(phi(M)-1)."""

    __slots__ = ("m", "c")

    def __init__(self, m: int, coeffs):
        c = tuple(coeffs)
        assert len(c) == _phi(m)
        # demote rational values to conductor 1 to keep vectors small
        if m > 1 and not any(c[1:]):
            m, c = 1, (c[0],)
        self.m = m
        self.c = c

    @staticmethod
    def from_rat(m: int, r: Fraction) -> "Cyclo":
        v = [Fraction(0)] * _phi(m)
        v[0] = Fraction(r)
        return Cyclo(m, v)

    @staticmethod
    def zeta(m: int, k: int = 1) -> "Cyclo":
        return Cyclo(m, _zeta_power(m, k))

    def lift(self, l: int) -> "Cyclo":
        """Re-embed into Q(zeta_L) for M | L via zeta_M -> zeta_L^(L/M)."""
        if l == self.m:
            return self
        return Cyclo(l, self._lift_vec(l))

    def _lift_vec(self, l: int) -> list[Fraction]:
        if l == self.m:
            return list(self.c)
        assert l % self.m == 0
        step = l // self.m
        out = [Fraction(0)] * _phi(l)
        for j, cj in enumerate(self.c):
            if cj:
                for i, wi in enumerate(_zeta_power(l, j * step)):
                    out[i] += cj * wi
        return out

    def __add__(self, o: "Cyclo") -> "Cyclo":
        l = _lcm(self.m, o.m)
        a, b = self._lift_vec(l), o._lift_vec(l)
        return Cyclo(l, [x + y for x, y in zip(a, b)])

    def __neg__(self) -> "Cyclo":
        return Cyclo(self.m, [-x for x in self.c])

    def __sub__(self, o: "Cyclo") -> "Cyclo":
        return self + (-o)

    def __mul__(self, o: "Cyclo") -> "Cyclo":
        if self.m == 1:
            return o.scale(self.c[0])
        if o.m == 1:
            return self.scale(o.c[0])
        l = _lcm(self.m, o.m)
        a, b = self._lift_vec(l), o._lift_vec(l)
        prod = [Fraction(0)] * (2 * _phi(l) - 1)
        for i, ai in enumerate(a):
            if ai:
                for j, bj in enumerate(b):
                    if bj:
                        prod[i + j] += ai * bj
        return Cyclo(l, _poly_mod(prod, cyclotomic_poly(l)))

    def scale(self, r: Fraction) -> "Cyclo":
        return Cyclo(self.m, [r * x for x in self.c])

    def is_zero(self) -> bool:
        return not any(self.c)

    def conj(self) -> "Cyclo":
        out = Cyclo.from_rat(self.m, Fraction(0))
        for j, cj in enumerate(self.c):
            if cj:
                out = out + Cyclo(self.m, _zeta_power(self.m, -j)).scale(cj)
        return out

    def inv(self) -> "Cyclo":
        """Inverse via extended Euclid against Phi_M (a genuine field)."""
        if self.is_zero():
            raise ZeroDivisionError("inverse of zero cyclotomic element")
        mod = list(cyclotomic_poly(self.m))
        r0, r1 = mod, _poly_trim(list(self.c))
        s0, s1 = [], [Fraction(1)]
        while True:
            if len(r1) == 1:
                c = r1[0]
                inv = [x / c for x in s1]
                return Cyclo(self.m, _poly_mod(inv, cyclotomic_poly(self.m)))
            q, r = _poly_divmod(r0, r1)
            s = _poly_sub(s0, _poly_mul(q, s1))
            r0, s0, r1, s1 = r1, s1, _poly_trim(r), s

    def rational_part(self) -> Fraction | None:
        """The value as a rational if it is one, else None."""
        if any(self.c[1:]):
            return None
        return self.c[0]

    def embed(self, prec: int = 30):
        with mpmath.workdps(prec + 10):
            z = mpmath.mpc(0)
            for j, cj in enumerate(self.c):
                if cj:
                    z += mpmath.mpc(cj.numerator) / cj.denominator * mpmath.expjpi(
                        mpmath.mpf(2 * j) / self.m
                    )
            return complex(z)

    def __eq__(self, o) -> bool:
        if not isinstance(o, Cyclo):
            return NotImplemented
        return (self - o).is_zero()

    def __hash__(self):
        return hash((self.m, self.c))

    def __repr__(self):
        return f"Cyclo(m={self.m}, {self.c})"


def _poly_divmod(a: list[Fraction], b: list[Fraction]):
    a = list(a)
    q = [Fraction(0)] * max(len(a) - len(b) + 1, 0)
    for i in range(len(q) - 1, -1, -1):
        c = a[i + len(b) - 1] / b[-1]
        q[i] = c
        if c:
            for j, bj in enumerate(b):
                a[i + j] -= c * bj
    return q, _poly_trim(a)


def _poly_mul(a: list[Fraction], b: list[Fraction]) -> list[Fraction]:
    if not a or not b:
        return []
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai:
            for j, bj in enumerate(b):
                out[i + j] += ai * bj
    return out


def _poly_sub(a: list[Fraction], b: list[Fraction]) -> list[Fraction]:
    n = max(len(a), len(b))
    a = list(a) + [Fraction(0)] * (n - len(a))
    b = list(b) + [Fraction(0)] * (n - len(b))
    return [x - y for x, y in zip(a, b)]


def _lcm(a: int, b: int) -> int:
    return a * b // gcd(a, b)


_RAT_CACHE: dict = {}


class ExactScalar:
    """a + b*sqrt(q) with a, b cyclotomic; the workhorse scalar."""

    __slots__ = ("q", "a", "b")

    def __init__(self, q: int, a: Cyclo, b: Cyclo | None = None):
        self.q = q
        self.a = a
        self.b = b if b is not None else Cyclo.from_rat(a.m, Fraction(0))

    # -- constructors -------------------------------------------------
    @staticmethod
    def from_rat(q: int, r) -> "ExactScalar":
        key = (q, r)
        hit = _RAT_CACHE.get(key)
        if hit is not None:
            return hit
        out = ExactScalar(q, Cyclo.from_rat(1, Fraction(r)))
        if isinstance(r, int) and -4 <= r <= 4 or len(_RAT_CACHE) < 50000:
            _RAT_CACHE[key] = out
        return out

    @staticmethod
    def zero(q: int) -> "ExactScalar":
        return ExactScalar.from_rat(q, 0)

    @staticmethod
    def one(q: int) -> "ExactScalar":
        return ExactScalar.from_rat(q, 1)

    @staticmethod
    def zeta(q: int, m: int, k: int = 1) -> "ExactScalar":
        return ExactScalar(q, Cyclo.zeta(m, k))

    @staticmethod
    def sqrtq_pow(q: int, k: int) -> "ExactScalar":
        """q^(k/2) for any integer k."""
        if k % 2 == 0:
            return ExactScalar.from_rat(q, Fraction(q) ** (k // 2))
        r = Fraction(q) ** ((k - 1) // 2)
        return ExactScalar(q, Cyclo.from_rat(1, Fraction(0)), Cyclo.from_rat(1, r))

    # -- ring ops ------------------------------------------------------
    def _chk(self, o: "ExactScalar"):
        assert self.q == o.q, "mixed base primes"

    def __add__(self, o):
        o = _coerce(self.q, o)
        self._chk(o)
        if self.is_zero():
            return o
        if o.is_zero():
            return self
        return ExactScalar(self.q, self.a + o.a, self.b + o.b)

    __radd__ = __add__

    def __neg__(self):
        return ExactScalar(self.q, -self.a, -self.b)

    def __sub__(self, o):
        return self + (-_coerce(self.q, o))

    def __rsub__(self, o):
        return _coerce(self.q, o) - self

    def __mul__(self, o):
        o = _coerce(self.q, o)
        self._chk(o)
        # fast paths: a purely rational factor scales coefficients directly
        r = self._as_rat()
        if r is not None:
            if r == 1:
                return o
            return ExactScalar(self.q, o.a.scale(r), o.b.scale(r))
        r = o._as_rat()
        if r is not None:
            if r == 1:
                return self
            return ExactScalar(self.q, self.a.scale(r), self.b.scale(r))
        if self.b.is_zero() and o.b.is_zero():
            return ExactScalar(self.q, self.a * o.a)
        qr = Cyclo.from_rat(1, Fraction(self.q))
        a = self.a * o.a + (self.b * o.b) * qr
        b = self.a * o.b + self.b * o.a
        return ExactScalar(self.q, a, b)

    __rmul__ = __mul__

    def _as_rat(self) -> Fraction | None:
        if self.a.m == 1 and self.b.m == 1 and self.b.c[0] == 0:
            return self.a.c[0]
        return None

    def inv(self) -> "ExactScalar":
        if self.b.is_zero():
            return ExactScalar(self.q, self.a.inv())
        norm = self.a * self.a - (self.b * self.b) * Cyclo.from_rat(1, Fraction(self.q))
        if norm.is_zero():
            raise ZeroDivisor(
                f"a^2 - {self.q} b^2 = 0: sqrt({self.q}) collides with Q(zeta_{self.a.m})"
            )
        ninv = norm.inv()
        return ExactScalar(self.q, self.a * ninv, (-self.b) * ninv)

    def __truediv__(self, o):
        return self * _coerce(self.q, o).inv()

    def __rtruediv__(self, o):
        return _coerce(self.q, o) * self.inv()

    def conj(self) -> "ExactScalar":
        """Complex conjugation: zeta -> zeta^(-1), sqrt(q) fixed."""
        return ExactScalar(self.q, self.a.conj(), self.b.conj())

    def is_zero(self) -> bool:
        return self.a.is_zero() and self.b.is_zero()

    def __eq__(self, o) -> bool:
        if isinstance(o, (int, Fraction)):
            o = ExactScalar.from_rat(self.q, o)
        if not isinstance(o, ExactScalar):
            return NotImplemented
        return (self - o).is_zero()

    def __hash__(self):
        return hash((self.q, self.a.m, self.a.c, self.b.c))

    def rational_part(self) -> Fraction | None:
        if not self.b.is_zero():
            return None
        return self.a.rational_part()

    def embed(self, prec: int = 30) -> complex:
        with mpmath.workdps(prec + 10):
            val = mpmath.mpc(self.a.embed(prec)) + mpmath.sqrt(
                mpmath.mpf(self.q)
            ) * mpmath.mpc(self.b.embed(prec))
            return complex(val)

    def __repr__(self):
        r = self.rational_part()
        if r is not None:
            return f"ExactScalar({r})"
        return f"ExactScalar(q={self.q}, a={self.a}, b={self.b})"

    def to_json(self) -> dict:
        return {
            "q": self.q,
            "M": self.a.m if self.a.m == self.b.m else _lcm(self.a.m, self.b.m),
            "coeffs": [str(x) for x in self.a.lift(_lcm(self.a.m, self.b.m)).c],
            "sqrtq": [str(x) for x in self.b.lift(_lcm(self.a.m, self.b.m)).c],
        }

    @staticmethod
    def from_json(d: dict) -> "ExactScalar":
        m = d["M"]
        a = Cyclo(m, [Fraction(x) for x in d["coeffs"]])
        b = Cyclo(m, [Fraction(x) for x in d["sqrtq"]])
        return ExactScalar(d["q"], a, b)


def _coerce(q: int, x) -> ExactScalar:
    if isinstance(x, ExactScalar):
        return x
    if isinstance(x, Magnitude):
        return x.to_scalar()
    if isinstance(x, (int, Fraction)):
        return ExactScalar.from_rat(q, x)
    raise TypeError(f"cannot coerce {type(x)} to ExactScalar")


class Magnitude:
    """a + b*sqrt(q) with rational a, b and a nonnegative real value.

    Carrier of volumes, Delta(c) = |c^2-4|^(1/2) and tail-law moduli; closed
    under + and *, with exact sign/size comparisons through the real
    embedding (a + b*sqrt(q) >= 0 is decidable by comparing a^2 and q b^2).
    """

    __slots__ = ("q", "a", "b")

    def __init__(self, q: int, a, b=0):
        self.q = q
        self.a = Fraction(a)
        self.b = Fraction(b)
        if self._sign() < 0:
            raise ValueError(f"negative magnitude {self.a} + {self.b} sqrt({q})")

    def _sign(self) -> int:
        a, b, q = self.a, self.b, self.q
        if a == 0 and b == 0:
            return 0
        if a >= 0 and b >= 0:
            return 1
        if a <= 0 and b <= 0:
            return -1
        big = a * a > q * b * b
        if a > 0:
            return 1 if big else -1
        return -1 if big else 1

    @staticmethod
    def qpow_half(q: int, k: int) -> "Magnitude":
        """q^(k/2)."""
        if k % 2 == 0:
            return Magnitude(q, Fraction(q) ** (k // 2), 0)
        return Magnitude(q, 0, Fraction(q) ** ((k - 1) // 2))

    @staticmethod
    def from_rat(q: int, r) -> "Magnitude":
        return Magnitude(q, Fraction(r), 0)

    def __add__(self, o):
        o = self._co(o)
        return Magnitude(self.q, self.a + o.a, self.b + o.b)

    def __mul__(self, o):
        o = self._co(o)
        return Magnitude(
            self.q, self.a * o.a + self.q * self.b * o.b, self.a * o.b + self.b * o.a
        )

    __rmul__ = __mul__

    def inv(self) -> "Magnitude":
        n = self.a * self.a - self.q * self.b * self.b
        if n == 0:
            raise ZeroDivisionError("inverse of zero magnitude")
        return Magnitude(self.q, self.a / n, -self.b / n)

    def _co(self, o) -> "Magnitude":
        if isinstance(o, Magnitude):
            assert o.q == self.q
            return o
        return Magnitude(self.q, Fraction(o), 0)

    def cmp(self, o) -> int:
        o = self._co(o)
        d_a = self.a - o.a
        d_b = self.b - o.b
        if d_a == 0 and d_b == 0:
            return 0
        if d_a >= 0 and d_b >= 0:
            return 1
        if d_a <= 0 and d_b <= 0:
            return -1
        big = d_a * d_a > self.q * d_b * d_b
        if d_a > 0:
            return 1 if big else -1
        return -1 if big else 1

    def __lt__(self, o):
        return self.cmp(o) < 0

    def __le__(self, o):
        return self.cmp(o) <= 0

    def __gt__(self, o):
        return self.cmp(o) > 0

    def __ge__(self, o):
        return self.cmp(o) >= 0

    def __eq__(self, o):
        if isinstance(o, (Magnitude, int, Fraction)):
            return self.cmp(o) == 0
        return NotImplemented

    def __hash__(self):
        return hash((self.q, self.a, self.b))

    def is_zero(self) -> bool:
        return self.a == 0 and self.b == 0

    def to_scalar(self) -> ExactScalar:
        return ExactScalar(
            self.q, Cyclo.from_rat(1, self.a), Cyclo.from_rat(1, self.b)
        )

    def embed(self) -> float:
        return float(self.a) + float(self.b) * float(self.q) ** 0.5

    def __repr__(self):
        if self.b == 0:
            return f"Magnitude({self.a})"
        return f"Magnitude({self.a} + {self.b}*sqrt({self.q}))"


def haar_volume(q: int, m: int) -> Magnitude:
    """Volume of p^m o under the additive measure with vol(o) = 1."""
    return Magnitude.from_rat(q, Fraction(1, q**m) if m >= 0 else Fraction(q) ** (-m))
