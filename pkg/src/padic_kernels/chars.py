"""Multiplicative characters of F^x and their Gauss sums.

A character is (unramified value z = chi(pi), conductor exponent c, unit-part
index t): on units it factors through (Z/p^c)^x, which is cyclic for odd p,
so the table is one discrete log away from a power of a fixed root of unity.
Characters are stored with c equal to the true conductor exponent.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

from .errors import EvenResidualChar, UnramifiedInput
from .local import AddChar, LocalElem
from .scalars import ExactScalar


@lru_cache(maxsize=None)
def primitive_root(pc: int, p: int) -> int:
    """Smallest primitive root mod p^c (p odd)."""
    order = pc // p * (p - 1)
    for g in range(2, pc):
        if g % p == 0:
            continue
        seen = 1
        x = g % pc
        while x != 1:
            x = x * g % pc
            seen += 1
        if seen == order:
            return g
    raise ValueError(f"no primitive root mod {pc}")


@lru_cache(maxsize=None)
def _dlog_table(pc: int, p: int) -> dict[int, int]:
    g = primitive_root(pc, p)
    order = pc // p * (p - 1)
    table = {}
    x = 1
    for e in range(order):
        table[x] = e
        x = x * g % pc
    return table


def _unit_order(p: int, c: int) -> int:
    return p ** (c - 1) * (p - 1) if c >= 1 else 1


class MultChar:
    """Character of F^x: chi(u p^k) = z^k * zeta_n^(t * dlog(u)), n = phi(p^c)."""

    __slots__ = ("p", "c", "t", "z")

    def __init__(self, p: int, c: int, t: int, z: ExactScalar | None = None):
        if p == 2:
            raise EvenResidualChar("p = 2 not supported")
        self.p = p
        self.z = z if z is not None else ExactScalar.one(p)
        c = max(c, 0)
        t = t % _unit_order(p, c) if c >= 1 else 0
        # reduce (c, t) to the true conductor: the unit part is trivial on the
        # depth-c kernel iff t = 0 mod p, and then re-expresses at level c-1
        while c >= 1:
            if t == 0:
                c = 0
                break
            if c == 1 or t % p != 0:
                break
            g_lower = primitive_root(p ** (c - 1), p)
            e = _dlog_table(p**c, p)[g_lower % p**c]
            n_lower = _unit_order(p, c - 1)
            t, c = (t // p) * e % n_lower, c - 1
        self.c = c
        self.t = t % _unit_order(p, c) if c >= 1 else 0

    def unit_order(self) -> int:
        return _unit_order(self.p, self.c)

    @staticmethod
    def trivial(p: int) -> "MultChar":
        return MultChar(p, 0, 0)

    @staticmethod
    def unramified(p: int, z: ExactScalar) -> "MultChar":
        return MultChar(p, 0, 0, z)

    def is_trivial(self) -> bool:
        return self.c == 0 and self.z == ExactScalar.one(self.p)

    def is_unit_trivial(self) -> bool:
        return self.c == 0

    def on_unit(self, u: int) -> ExactScalar:
        """Value on a unit residue (mod p^c suffices)."""
        if self.c == 0:
            return ExactScalar.one(self.p)
        pc = self.p**self.c
        e = _dlog_table(pc, self.p)[u % pc]
        n = self.unit_order()
        return ExactScalar.zeta(self.p, n, self.t * e % n)

    def __call__(self, x) -> ExactScalar:
        if not isinstance(x, LocalElem):
            x = LocalElem.from_rat(Fraction(x), self.p, max(self.c, 1) + 4)
        v = x.valuation()
        u = x.unit_mod(max(self.c, 1))
        return pow_scalar(self.z, v) * self.on_unit(u)

    def inv(self) -> "MultChar":
        return MultChar(self.p, self.c, -self.t, self.z.inv())

    def __mul__(self, o: "MultChar") -> "MultChar":
        assert o.p == self.p
        p = self.p
        c = max(self.c, o.c)
        if c == 0:
            return MultChar(p, 0, 0, self.z * o.z)
        n = _unit_order(p, c)
        g = primitive_root(p**c, p)
        ta = self._index_at(c, g)
        tb = o._index_at(c, g)
        return MultChar(p, c, (ta + tb) % n, self.z * o.z)

    def _index_at(self, c: int, g: int) -> int:
        """Exponent t' with chi(g) = zeta_phi(p^c)^t' for the level-c generator."""
        if self.c == 0:
            return 0
        n = _unit_order(self.p, c)
        na = self.unit_order()
        e = _dlog_table(self.p**self.c, self.p)[g % self.p**self.c]
        return self.t * e % na * (n // na)

    def square(self) -> "MultChar":
        return self * self

    def conj(self) -> "MultChar":
        return MultChar(self.p, self.c, -self.t, self.z.conj())

    def key(self):
        return (self.p, self.c, self.t, self.z)

    def __eq__(self, o):
        if not isinstance(o, MultChar):
            return NotImplemented
        return self.key() == o.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        zr = self.z.rational_part()
        ztxt = str(zr) if zr is not None else "z"
        return f"MultChar(p={self.p}, c={self.c}, t={self.t}, z={ztxt})"


def unit_characters(p: int, c: int) -> list[MultChar]:
    """All characters of (Z/p^c)^x, as MultChars with trivial z."""
    if c == 0:
        return [MultChar.trivial(p)]
    n = _unit_order(p, c)
    return [MultChar(p, c, t) for t in range(n)]


def legendre_char(p: int) -> MultChar:
    """The quadratic character of conductor 1 (Legendre symbol on units)."""
    return MultChar(p, 1, (p - 1) // 2)


def quadratic_chars(p: int) -> dict[str, MultChar]:
    """The four quadratic characters of F^x, keyed by torus label.

    eta_0 trivial; eta_1 unramified with eta(pi) = -1.  The ramified labels
    are tied to discriminants: +1/2 <-> F(sqrt(pi)), -1/2 <-> F(sqrt(eps pi)),
    and each eta is the character with kernel Nr(E^x): since Nr(sqrt(d)) = -d,
    eta_(F(sqrt(pi)))(pi) = Leg(-1) and eta_(F(sqrt(eps pi)))(pi) = -Leg(-1).
    """
    if p == 2:
        raise EvenResidualChar("p = 2 not supported")
    minus_one = ExactScalar.from_rat(p, -1)
    leg = legendre_char(p)
    leg_m1 = 1 if p % 4 == 1 else -1
    return {
        "0": MultChar.trivial(p),
        "1": MultChar.unramified(p, minus_one),
        "+1/2": MultChar(p, 1, leg.t, ExactScalar.from_rat(p, leg_m1)),
        "-1/2": MultChar(p, 1, leg.t, ExactScalar.from_rat(p, -leg_m1)),
    }


def gauss_sum(chi: MultChar, psi: AddChar) -> ExactScalar:
    """tau(chi, psi) = sum over units mod p^c of chi(u) psi(u / p^c)."""
    if chi.c == 0:
        raise UnramifiedInput("Gauss sum needs a ramified character")
    p = chi.p
    pc = p**chi.c
    acc = ExactScalar.zero(p)
    for u in range(1, pc):
        if u % p:
            acc = acc + chi.on_unit(u) * psi.value_at_frac(u, chi.c)
    return acc


_POW_CACHE: dict = {}


def pow_scalar(z: ExactScalar, k: int) -> ExactScalar:
    if k == 0:
        return ExactScalar.one(z.q)
    if k == 1:
        return z
    r = z._as_rat()
    if r is not None:
        return ExactScalar.from_rat(z.q, r**k)
    key = (z, k)
    hit = _POW_CACHE.get(key)
    if hit is not None:
        return hit
    if k < 0:
        out = pow_scalar(z.inv(), -k)
    else:
        out = ExactScalar.one(z.q)
        base = z
        kk = k
        while kk:
            if kk & 1:
                out = out * base
            base = base * base
            kk >>= 1
    if len(_POW_CACHE) < 200000:
        _POW_CACHE[key] = out
    return out
