"""Quadratic algebras E_alpha, norm-one tori, their finite quotients and the
descent/ascent maps between torus functions and cell functions on the trace
line.

The four algebras are indexed by I = {0, 1, +1/2, -1/2}: split, unramified
(disc = eps, the least positive non-residue mod p), and the two ramified ones
(disc = pi and eps*pi).  Torus functions live on the depth-M quotient
E^1 / (E^1 cap (1 + p^M o_E)); their descent to the trace line is an exact
CellFn with 1/Delta-type geometric tails at +-2.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .cellfn import (
    Cell,
    CellFn,
    ball,
    law,
    unit_of_frac,
    val_of_frac,
)
from .chars import legendre_char, pow_scalar, quadratic_chars
from .errors import (
    BadParams,
    DepthMismatch,
    EvenResidualChar,
    NotTauInvariant,
    SingularPoint,
    SplitForV,
    SplitInput,
)
from .local import AddChar
from .scalars import ExactScalar, Magnitude

LABELS = ("0", "1", "+1/2", "-1/2")


def least_nonresidue(p: int) -> int:
    for u in range(2, p):
        if pow(u, (p - 1) // 2, p) == p - 1:
            return u
    raise ValueError(f"no non-residue mod {p}")


def sqrt_mod_pk(x: int, p: int, k: int) -> int | None:
    """A square root of x mod p^k for unit x (p odd), or None."""
    x %= p**k
    if x % p == 0:
        raise ValueError("unit expected")
    if pow(x, (p - 1) // 2, p) != 1:
        return None
    # find root mod p by scan (p is small), then Hensel
    r = next(r for r in range(1, p) if r * r % p == x % p)
    pw = p
    while pw < p**k:
        pw_next = min(pw * pw, p**k)
        # r' = r - (r^2 - x)/(2r) mod pw_next
        inv = pow(2 * r, -1, pw_next)
        r = (r - (r * r - x) * inv) % pw_next
        pw = pw_next
    return r % p**k


def frac_sqrt(x: Fraction, p: int, depth: int) -> Fraction | None:
    """A square root of rational x in Q_p, exact as a canonical fraction
    u * p^(v/2) with u determined mod p^depth; None if x is not a square."""
    if x == 0:
        return Fraction(0)
    v = val_of_frac(x, p)
    if v % 2:
        return None
    u = unit_of_frac(x, p, depth)
    r = sqrt_mod_pk(u, p, depth)
    if r is None:
        return None
    return Fraction(r) * Fraction(p) ** (v // 2)


@dataclass(frozen=True)
class QuadAlg:
    """One of the four etale quadratic F-algebras."""

    p: int
    label: str

    def __post_init__(self):
        if self.p == 2:
            raise EvenResidualChar("p = 2 not supported")
        if self.label not in LABELS:
            raise BadParams(f"unknown torus label {self.label}")

    @property
    def is_split(self) -> bool:
        return self.label == "0"

    def disc(self) -> Fraction:
        """Discriminant representative d with E = F(sqrt(d))."""
        p = self.p
        eps = least_nonresidue(p)
        if self.label == "0":
            return Fraction(1)
        if self.label == "1":
            return Fraction(eps)
        # ramified: +1/2 <-> pi, -1/2 <-> eps*pi (the documented convention;
        # swap via quadratic_chars if ever needed)
        return Fraction(p) if self.label == "+1/2" else Fraction(eps * p)

    def quad_char(self):
        return quadratic_chars(self.p)[self.label]

    def ramification(self) -> int:
        return 2 if self.label in ("+1/2", "-1/2") else 1

    def residue_size(self) -> int:
        return self.p**2 if self.label == "1" else self.p

    def vol_e1(self) -> Magnitude:
        """vol(E^1) = (1 - q_E^-1)|D|^(1/2) e(E|F) / (1 - q_F^-1)."""
        p = self.p
        if self.is_split:
            raise SplitInput("split torus is noncompact")
        if self.label == "1":
            # (1 - q^-2)/(1 - q^-1) = 1 + 1/q
            return Magnitude.from_rat(p, Fraction(p + 1, p))
        # ramified: (1 - q^-1) q^(-1/2) * 2 / (1 - q^-1) = 2 q^(-1/2)
        return Magnitude.qpow_half(p, -1) * Magnitude.from_rat(p, 2)


def vol_e1(alg: QuadAlg) -> Magnitude:
    return alg.vol_e1()


# ---------------------------------------------------------------------
# the norm-one quotient as an explicit finite abelian group
# ---------------------------------------------------------------------

class NormOneQuotient:
    """E^1 / (E^1 cap (1 + p^M o_E)) with coset representatives (a, b) mod p^M.

    Representatives are the lexicographically minimal integer lifts; the
    group law is coordinatewise multiplication in F[sqrt(d)] mod p^M.
    """

    def __init__(self, alg: QuadAlg, depth: int):
        if alg.is_split:
            raise SplitInput("split torus has no finite norm-one quotient")
        if depth < 1:
            raise BadParams("depth must be >= 1")
        self.alg = alg
        self.depth = depth
        p = alg.p
        mod = p**depth
        d = int(alg.disc())
        sols = []
        for b in range(mod):
            rhs = (1 + d * b * b) % mod
            roots = _all_sqrts_mod(rhs, p, depth)
            for a in roots:
                sols.append((a, b))
        self.elements = sorted(set(sols))
        self.index = {e: i for i, e in enumerate(self.elements)}
        self._d = d
        self._mod = mod
        self._char_basis: list[tuple[tuple[int, int], int]] | None = None

    def __len__(self):
        return len(self.elements)

    def mul(self, e1, e2):
        a1, b1 = e1
        a2, b2 = e2
        return (
            (a1 * a2 + self._d * b1 * b2) % self._mod,
            (a1 * b2 + a2 * b1) % self._mod,
        )

    def inv(self, e):
        a, b = e
        return (a, (-b) % self._mod)

    def identity(self):
        return (1, 0)

    def reduce(self, e):
        return (e[0] % self._mod, e[1] % self._mod)

    def order_of(self, e) -> int:
        n = 1
        x = e
        while x != (1, 0):
            x = self.mul(x, e)
            n += 1
        return n

    def power(self, e, n: int):
        out = (1, 0)
        x = e
        n %= self.order_of(e)
        while n:
            if n & 1:
                out = self.mul(out, x)
            x = self.mul(x, x)
            n >>= 1
        return out

    def generators(self) -> list[tuple[tuple[int, int], int]]:
        """Basis [(g, order)] with the group = direct product of the <g>.

        Computed per primary component (the 2-part and p-part are coprime);
        within an l-group the standard max-order-with-adjustment algorithm
        produces a direct basis.
        """
        if self._char_basis is not None:
            return self._char_basis
        orders = {e: self.order_of(e) for e in self.elements}
        primes = set()
        for o in orders.values():
            n = o
            l = 2
            while l * l <= n:
                while n % l == 0:
                    primes.add(l)
                    n //= l
                l += 1
            if n > 1:
                primes.add(n)
        basis: list[tuple[tuple[int, int], int]] = []
        for l in sorted(primes):
            comp = [e for e in self.elements if _is_power_of(orders[e], l)]
            basis.extend(self._primary_basis(comp, orders))
        self._char_basis = basis
        # sanity: the basis spans with the right cardinality
        total = 1
        for _, n in basis:
            total *= n
        assert total == len(self.elements), "basis does not span"
        return basis

    def _primary_basis(self, comp, orders):
        """Direct basis of an l-primary component (small, brute force)."""
        basis: list[tuple[tuple[int, int], int]] = []
        span = {(1, 0): ()}
        while len(span) < len(comp):
            best, best_m = None, 1
            for g in comp:
                if g in span:
                    continue
                m = 1
                x = g
                while x not in span:
                    x = self.mul(x, g)
                    m += 1
                if m > best_m:
                    best, best_m = g, m
            g, m = best, best_m
            # adjust so that g^m = 1: g^m lies in the span with exponents
            # divisible by m (max-order property within an l-group)
            exps = span[self.power(g, m)]
            for (b_i, n_i), s_i in zip(basis, exps):
                if s_i % m:
                    raise RuntimeError("primary basis adjustment failed")
                g = self.mul(g, self.power(b_i, (-(s_i // m)) % n_i))
            if self.power(g, m) != (1, 0):
                raise RuntimeError("adjusted generator has wrong order")
            basis.append((g, m))
            new_span = {}
            x = (1, 0)
            for t in range(m):
                for s, ex in span.items():
                    new_span[self.mul(s, x)] = ex + (t,)
            # rebuild exponent map walking powers of g
                x = self.mul(x, g)
            if len(new_span) != len(span) * m:
                raise RuntimeError("primary basis span mismatch")
            span = new_span
        return basis

    def dlog(self, e) -> tuple[int, ...]:
        """Exponents of e along the generator basis (cached)."""
        if not hasattr(self, "_dlog_cache"):
            table: dict = {}
            basis = self.generators()

            def walk(i, acc, exps):
                if i == len(basis):
                    table[acc] = tuple(exps)
                    return
                g, n = basis[i]
                x = acc
                for t in range(n):
                    walk(i + 1, x, exps + [t])
                    x = self.mul(x, g)

            walk(0, (1, 0), [])
            self._dlog_cache = table
        return self._dlog_cache[self.reduce(e)]

    def characters(self) -> list["TorusChar"]:
        basis = self.generators()
        out = []
        def build(i, idx):
            if i == len(basis):
                out.append(TorusChar(self, tuple(idx)))
                return
            for t in range(basis[i][1]):
                build(i + 1, idx + [t])
        build(0, [])
        return out

    def trace_frac(self, e) -> Fraction:
        """tr(e) = 2a as a canonical rational mod p^depth."""
        return Fraction(2 * e[0] % self._mod)

    def coset_of_point(self, a_frac: Fraction, b_frac: Fraction):
        """Coset representative of an exact norm-one point (a, b)."""
        p, mod = self.alg.p, self._mod
        a = unit_or_zero_mod(a_frac, p, self.depth)
        b = unit_or_zero_mod(b_frac, p, self.depth)
        key = (a % mod, b % mod)
        if key not in self.index:
            raise BadParams(f"point {key} is not on the norm-one torus mod {mod}")
        return key


def _is_power_of(n: int, l: int) -> bool:
    while n % l == 0:
        n //= l
    return n == 1


def unit_or_zero_mod(x: Fraction, p: int, depth: int) -> int:
    v = val_of_frac(x, p)
    if v is None or v >= depth:
        return 0
    if v < 0:
        raise BadParams("integral coordinate expected")
    return unit_of_frac(x, p, depth - v) * p**v % p**depth


def _all_sqrts_mod(x: int, p: int, k: int) -> list[int]:
    """All square roots of x mod p^k (x arbitrary, p odd)."""
    mod = p**k
    x %= mod
    if x == 0:
        step = p ** ((k + 1) // 2)
        return list(range(0, mod, step))
    v = 0
    y = x
    while y % p == 0:
        y //= p
        v += 1
    if v % 2:
        return []
    r0 = sqrt_mod_pk(y, p, k - v)
    if r0 is None:
        return []
    # r = p^(v/2) s with s^2 = y mod p^(k-v); s matters mod p^(k-v)
    half = v // 2
    out = set()
    for t in range(p**half):
        for s in (r0, -r0):
            out.add(p**half * (s + t * p ** (k - v)) % mod)
    return sorted(out)


class TorusChar:
    """Character of a norm-one quotient, given by exponents on the basis."""

    def __init__(self, quot: NormOneQuotient, idx: tuple[int, ...]):
        self.quot = quot
        self.idx = idx

    def __call__(self, e) -> ExactScalar:
        p = self.quot.alg.p
        basis = self.quot.generators()
        exps = self.quot.dlog(self.quot.reduce(e))
        val = ExactScalar.one(p)
        for (g, n), t, s in zip(basis, exps, self.idx):
            val = val * ExactScalar.zeta(p, n, t * s % n)
        return val

    def inv(self) -> "TorusChar":
        basis = self.quot.generators()
        return TorusChar(
            self.quot, tuple((-s) % n for (g, n), s in zip(basis, self.idx))
        )

    def is_trivial(self) -> bool:
        return all(s == 0 for s in self.idx)

    def square_is_trivial(self) -> bool:
        basis = self.quot.generators()
        return all(2 * s % n == 0 for (g, n), s in zip(basis, self.idx))

    def order(self) -> int:
        from math import gcd, lcm

        o = 1
        for (g, n), s in zip(self.quot.generators(), self.idx):
            if s:
                o = lcm(o, n // gcd(n, s))
        return o

    def key(self):
        return (self.quot.alg.label, self.quot.depth, self.idx)

    def __repr__(self):
        return f"TorusChar({self.quot.alg.label}, M={self.quot.depth}, {self.idx})"


def quadratic_torus_char(quot: NormOneQuotient) -> TorusChar:
    """The unique nontrivial character with trivial square."""
    cands = [
        ch for ch in quot.characters()
        if not ch.is_trivial() and ch.square_is_trivial()
    ]
    if len(cands) != 1:
        raise RuntimeError(f"expected one quadratic character, got {len(cands)}")
    return cands[0]


# ---------------------------------------------------------------------
# torus functions
# ---------------------------------------------------------------------

class TorusFn:
    """Function on the depth-M norm-one quotient (nonsplit tori)."""

    def __init__(self, quot: NormOneQuotient, values: dict):
        self.quot = quot
        p = quot.alg.p
        self.values = {
            quot.reduce(e): _as_scalar(v, p) for e, v in values.items()
        }
        for e in quot.elements:
            self.values.setdefault(e, ExactScalar.zero(p))

    @staticmethod
    def from_char(quot: NormOneQuotient, chi: TorusChar) -> "TorusFn":
        return TorusFn(quot, {e: chi(e) for e in quot.elements})

    @staticmethod
    def zero(quot: NormOneQuotient) -> "TorusFn":
        return TorusFn(quot, {})

    @staticmethod
    def delta_identity(quot: NormOneQuotient) -> "TorusFn":
        """Unit of the convolution algebra: mass 1/cosetvol at the identity."""
        p = quot.alg.p
        coset_vol = quot.alg.vol_e1() * Magnitude.from_rat(p, Fraction(1, len(quot)))
        return TorusFn(quot, {quot.identity(): coset_vol.inv().to_scalar()})

    def value(self, e) -> ExactScalar:
        return self.values[self.quot.reduce(e)]

    def is_tau_invariant(self) -> bool:
        return all(
            (self.values[e] - self.values[self.quot.inv(e)]).is_zero()
            for e in self.quot.elements
        )

    def tau_symmetrize(self) -> "TorusFn":
        half = Fraction(1, 2)
        return TorusFn(
            self.quot,
            {
                e: (self.values[e] + self.values[self.quot.inv(e)]) * half
                for e in self.quot.elements
            },
        )

    def dual(self) -> "TorusFn":
        """f^vee(e) = f(e^-1)."""
        return TorusFn(
            self.quot, {e: self.values[self.quot.inv(e)] for e in self.quot.elements}
        )

    def conj(self) -> "TorusFn":
        return TorusFn(self.quot, {e: v.conj() for e, v in self.values.items()})

    def __add__(self, o: "TorusFn") -> "TorusFn":
        self._chk(o)
        return TorusFn(
            self.quot, {e: self.values[e] + o.values[e] for e in self.quot.elements}
        )

    def __sub__(self, o: "TorusFn") -> "TorusFn":
        return self + o.scale(-1)

    def scale(self, a) -> "TorusFn":
        p = self.quot.alg.p
        a = _as_scalar(a, p)
        return TorusFn(self.quot, {e: v * a for e, v in self.values.items()})

    def _chk(self, o: "TorusFn"):
        if o.quot.depth != self.quot.depth or o.quot.alg != self.quot.alg:
            raise DepthMismatch("torus functions on different quotients")

    def coset_volume(self) -> Magnitude:
        p = self.quot.alg.p
        return self.quot.alg.vol_e1() * Magnitude.from_rat(
            p, Fraction(1, len(self.quot))
        )

    def integral(self) -> ExactScalar:
        """Integral over E^1 against the invariant measure."""
        p = self.quot.alg.p
        acc = ExactScalar.zero(p)
        for e in self.quot.elements:
            acc = acc + self.values[e]
        return acc * self.coset_volume().to_scalar()

    def pair_char(self, chi: TorusChar) -> ExactScalar:
        """<f, chi> = integral of f * chi over E^1."""
        p = self.quot.alg.p
        acc = ExactScalar.zero(p)
        for e in self.quot.elements:
            acc = acc + self.values[e] * chi(e)
        return acc * self.coset_volume().to_scalar()

    def convolve(self, o: "TorusFn") -> "TorusFn":
        """(f * g)(e) = integral f(x) g(e x^-1) dx on E^1."""
        self._chk(o)
        p = self.quot.alg.p
        vol = self.coset_volume().to_scalar()
        out = {}
        for e in self.quot.elements:
            acc = ExactScalar.zero(p)
            for x in self.quot.elements:
                acc = acc + self.values[x] * o.values[
                    self.quot.mul(e, self.quot.inv(x))
                ]
            out[e] = acc * vol
        return TorusFn(self.quot, out)

    def is_zero(self) -> bool:
        return all(v.is_zero() for v in self.values.values())


def _as_scalar(v, p) -> ExactScalar:
    if isinstance(v, ExactScalar):
        return v
    if isinstance(v, Magnitude):
        return v.to_scalar()
    return ExactScalar.from_rat(p, v)


# ---------------------------------------------------------------------
# elliptic labels, Delta and v on the trace line
# ---------------------------------------------------------------------

def elliptic_label(p: int, c: Fraction) -> str | None:
    """Torus label of the regular class c, or None for singular c = +-2."""
    c = Fraction(c)
    if c == 2 or c == -2:
        return None
    disc = c * c - 4
    v = val_of_frac(disc, p)
    u = unit_of_frac(disc, p, 1)
    eps = least_nonresidue(p)
    square_unit = pow(u, (p - 1) // 2, p) == 1
    if v % 2 == 0:
        return "0" if square_unit else "1"
    # odd valuation: ramified; disc ~ pi * u: compare u against 1 or eps
    return "+1/2" if square_unit else "-1/2"


def delta_fn(p: int, c: Fraction) -> Magnitude:
    """Delta(c) = |c^2 - 4|^(1/2)."""
    disc = Fraction(c) * Fraction(c) - 4
    if disc == 0:
        raise SingularPoint("Delta vanishes at +-2")
    v = val_of_frac(disc, p)
    return Magnitude.qpow_half(p, -v)


def v_fn(p: int, c: Fraction) -> Magnitude:
    """Inverse volume of the centralizer torus at elliptic regular c."""
    lbl = elliptic_label(p, c)
    if lbl is None:
        raise SingularPoint("v undefined at +-2")
    if lbl == "0":
        raise SplitForV("v is supported on the elliptic locus")
    return QuadAlg(p, lbl).vol_e1().inv()


# ---------------------------------------------------------------------
# descent to the trace line: tau-invariant torus data -> CellFn
# ---------------------------------------------------------------------

def descend_to_trace(
    psi: AddChar,
    alg: QuadAlg,
    table,
    weight: int = 0,
) -> CellFn:
    """The function on tr(E^1) with value table(e_c) * Delta(c)^(-weight).

    `table` maps quotient cosets to scalars and must be tau-invariant; the
    result is an exact CellFn: balls on the resolved region and geometric
    (q^(weight/2))^k tails on the square-class slices near +-2.
    """
    p = psi.p
    if alg.is_split:
        raise SplitInput("use descend_split_to_trace for the split slot")
    quot = table.quot
    if not table.is_tau_invariant():
        raise NotTauInvariant("descent needs a tau-invariant table")
    M = quot.depth
    d = alg.disc()
    cells: list[Cell] = []

    tail_start = {
        1: val_of_frac(d, p) + 2 * M + 1,
        -1: val_of_frac(d, p) + 2 * M + 1,
    }

    def fiber_coset(c0: Fraction, depth_c: int):
        """Coset of e_c for any c in the depth-depth_c ball at c0, or None."""
        disc = (c0 * c0 - 4) / (4 * d)
        b = frac_sqrt(disc, p, M + 4)
        if b is None:
            return None
        a = c0 / 2
        return quot.coset_of_point(a, b)

    def emit_ball(c0: Fraction, j: int):
        cos = fiber_coset(c0, j)
        if cos is None:
            return
        val = table.values[cos]
        if weight:
            vdisc = val_of_frac(c0 * c0 - 4, p)
            val = val * ExactScalar.sqrtq_pow(p, weight * vdisc)
        if not val.is_zero():
            cells.append(ball(c0, val, j))

    def process(c0: Fraction, j: int):
        # is the whole ball beyond the tail threshold at +-2?
        for sgn in (1, -1):
            vv = val_of_frac(c0 - 2 * sgn, p)
            if (vv is None or vv >= j) and j >= tail_start[sgn]:
                emit_tails(sgn, j)
                return
        disc = c0 * c0 - 4
        vdisc = val_of_frac(disc, p)
        if vdisc is not None and vdisc < j - 1 and j >= M + vdisc + 2:
            # square class and fiber coset stable on this ball: resolve
            lbl = elliptic_label(p, c0)
            if lbl == alg.label:
                emit_ball(c0, j)
            return
        for t in range(p):
            process(c0 + t * Fraction(p) ** j, j + 1)

    def emit_tails(sgn: int, j: int):
        """Closed-form tails on {v(c - 2 sgn) >= j} inside tr(E^1)."""
        # near sgn*1 in E^1: table value is constant
        ident = quot.identity()
        neg_ident = quot.reduce((-1 % quot._mod, 0))
        t_val = table.values[ident if sgn == 1 else neg_ident]
        if t_val.is_zero():
            return
        # support: (c - 2 sgn) = sgn * d * (square) * (unit adj):
        # c - 2sgn = 2 sgn (a - sgn) and a - sgn = d b^2 / (a + sgn):
        # unit class = (2 sgn)(d u_b^2)/(2 sgn) ... compute the class of
        # (c - 2 sgn) / d: it is sgn * (square) since a + sgn ~ 2 sgn.
        vd = val_of_frac(d, p)
        ud = unit_of_frac(d, p, 1)
        # c - 2 sgn = 2 sgn (a - sgn) = d b^2 * (2 sgn/(a + sgn)); with
        # a + sgn ~ 2 sgn the unit class is sgn * ud * (square), and the
        # valuation is v(d) + 2 v(b)
        parity = vd % 2
        leg = legendre_char(p)
        leg_target = 1 if pow(sgn * ud % p, (p - 1) // 2, p) == 1 else -1
        one = ExactScalar.one(p)
        quarter = ExactScalar.from_rat(p, Fraction(1, 4))
        beta_mag = ExactScalar.sqrtq_pow(p, weight)  # value law q^(k*weight/2)
        for eps_par in (1, -1):  # parity projector (1 + eps (-1)^(k-parity))/2
            for use_leg in (0, 1):  # class projector (1 + leg_target*Leg(u))/2
                coef = quarter * t_val
                if eps_par == -1:
                    coef = coef * ExactScalar.from_rat(p, (-1) ** parity)
                if use_leg:
                    coef = coef * ExactScalar.from_rat(p, leg_target)
                beta = beta_mag
                if eps_par == -1:
                    beta = beta * ExactScalar.from_rat(p, -1)
                chi = leg if use_leg else None
                cells.append(
                    law(Fraction(2 * sgn), coef, j, None, beta, chi)
                )

    process(Fraction(0), 0)
    return CellFn(psi, cells).normalize()


def pullback_from_trace(quot: NormOneQuotient, f: CellFn) -> TorusFn:
    """pi^*(f): the torus function e -> f(tr e).

    The cell function must be constant on the trace image of each depth-M
    coset; representatives are evaluated at a deep exact lift (checked by
    sampling a second lift).
    """
    vals = {}
    for e in quot.elements:
        try:
            vals[e] = f.evaluate(_exact_trace_lift(quot, e))
        except SingularPoint:
            vals[e] = f.evaluate(_exact_trace_lift(quot, e, salt=1))
        c2 = _exact_trace_lift(quot, e, salt=2)
        if not (f.evaluate(c2) - vals[e]).is_zero():
            raise BadParams(
                "cell function is not constant on depth-"
                f"{quot.depth} trace cosets; deepen the quotient"
            )
    return TorusFn(quot, vals)


def _exact_trace_lift(quot: NormOneQuotient, e, salt: int = 0) -> Fraction:
    """tr of an exact norm-one point lifting the coset e."""
    p = quot.alg.p
    d = quot.alg.disc()
    M = quot.depth
    a, b = e
    deep = 2 * M + 14
    # move b within its coset (plus an optional deep salt) until 1 + d b^2
    # is an exact square whose root reduces to a mod p^M
    for t in range(p**3):
        b_l = Fraction(b) + t * Fraction(p) ** M + salt * Fraction(p) ** (M + 5)
        r = frac_sqrt(1 + d * b_l * b_l, p, deep)
        if r is None:
            continue
        for cand in (r, -r):
            if unit_or_zero_mod(cand, p, M) == a % p**M:
                return 2 * cand
    raise BadParams(f"no exact lift found for coset {e}")


# ---------------------------------------------------------------------
# split-torus functions
# ---------------------------------------------------------------------

class SplitTorusFn:
    """Function on F^x, locally constant of finite depth, finite valuation
    support: the split slot of descent data."""

    def __init__(self, p: int, depth: int, values: dict):
        # values: (k, u mod p^depth unit) -> scalar
        self.p = p
        self.depth = depth
        self.values = {
            (k, u % p**depth): _as_scalar(v, p) for (k, u), v in values.items()
        }

    @staticmethod
    def zero(p: int, depth: int) -> "SplitTorusFn":
        return SplitTorusFn(p, depth, {})

    @staticmethod
    def from_mult_char(p: int, depth: int, chi, supp: range) -> "SplitTorusFn":
        vals = {}
        for k in supp:
            for u in range(1, p**depth):
                if u % p:
                    vals[(k, u)] = pow_scalar(chi.z, k) * chi.on_unit(u)
        return SplitTorusFn(p, depth, vals)

    def value_at(self, t: Fraction) -> ExactScalar:
        v = val_of_frac(t, self.p)
        if v is None:
            raise SingularPoint("0 is not on the torus")
        u = unit_of_frac(t, self.p, self.depth)
        return self.values.get((v, u), ExactScalar.zero(self.p))

    def support_range(self) -> tuple[int, int]:
        ks = [k for (k, u), v in self.values.items() if not v.is_zero()]
        if not ks:
            return (0, 0)
        return min(ks), max(ks)

    def dual(self) -> "SplitTorusFn":
        p = self.p
        out = {}
        for (k, u), v in self.values.items():
            out[(-k, pow(u, -1, p**self.depth))] = v
        return SplitTorusFn(p, self.depth, out)

    def conj(self) -> "SplitTorusFn":
        return SplitTorusFn(self.p, self.depth, {k: v.conj() for k, v in self.values.items()})

    def tau_flip(self) -> "SplitTorusFn":
        return self.dual()

    def is_tau_invariant(self) -> bool:
        p = self.p
        for (k, u), v in self.values.items():
            w = self.values.get((-k, pow(u, -1, p**self.depth)), ExactScalar.zero(p))
            if not (v - w).is_zero():
                return False
        return True

    def __add__(self, o: "SplitTorusFn") -> "SplitTorusFn":
        if o.depth != self.depth:
            raise DepthMismatch("split torus functions of different depth")
        out = dict(self.values)
        for key, v in o.values.items():
            out[key] = out.get(key, ExactScalar.zero(self.p)) + v
        return SplitTorusFn(self.p, self.depth, out)

    def __sub__(self, o):
        return self + o.scale(-1)

    def scale(self, a) -> "SplitTorusFn":
        a = _as_scalar(a, self.p)
        return SplitTorusFn(self.p, self.depth, {k: v * a for k, v in self.values.items()})

    def mellin(self, chi) -> ExactScalar:
        """<f, chi> = integral over F^x of f(t) chi(t) d^x t.

        Each depth-M unit coset has d^x-volume q^(-M).
        """
        p = self.p
        acc = ExactScalar.zero(p)
        for (k, u), v in self.values.items():
            acc = acc + v * pow_scalar(chi.z, k) * chi.on_unit(u)
        return acc * ExactScalar.from_rat(p, Fraction(1, p**self.depth))

    def convolve(self, o: "SplitTorusFn") -> "SplitTorusFn":
        if o.depth != self.depth:
            raise DepthMismatch("split torus functions of different depth")
        p = self.p
        unit_vol = ExactScalar.from_rat(p, Fraction(1, p**self.depth))
        out: dict = {}
        for (k1, u1), v1 in self.values.items():
            if v1.is_zero():
                continue
            for (k2, u2), v2 in o.values.items():
                if v2.is_zero():
                    continue
                key = (k1 + k2, u1 * u2 % p**self.depth)
                out[key] = out.get(key, ExactScalar.zero(p)) + v1 * v2 * unit_vol
        return SplitTorusFn(p, self.depth, out)

    def is_zero(self) -> bool:
        return all(v.is_zero() for v in self.values.values())


def restrict_to_split_trace(psi: AddChar, f: CellFn, depth: int, krange: int) -> SplitTorusFn:
    """T_0-style restriction: t -> f(t + 1/t) as a SplitTorusFn."""
    p = psi.p
    vals = {}
    for k in range(-krange, krange + 1):
        for u in range(1, p**depth):
            if u % p == 0:
                continue
            t = Fraction(u) * Fraction(p) ** k
            c = t + 1 / t
            try:
                vals[(k, u)] = f.evaluate(c)
            except SingularPoint:
                # t = +-1 exactly: perturb within the coset
                t2 = t * (1 + Fraction(p) ** (depth + 6))
                vals[(k, u)] = f.evaluate(t2 + 1 / t2)
    return SplitTorusFn(p, depth, vals)


def descend_split_to_trace(psi: AddChar, table: SplitTorusFn, weight: int = 0) -> CellFn:
    """nu_0: tau-invariant split-torus function -> CellFn on the split locus,
    with value table(t_c) * Delta(c)^(-weight)."""
    p = psi.p
    if not table.is_tau_invariant():
        raise NotTauInvariant("split descent needs tau-invariance")
    M = table.depth
    cells: list[Cell] = []
    kmin, kmax = table.support_range()
    span = max(abs(kmin), abs(kmax))
    # region |v(t)| = k > 0: c = t + 1/t has v(c) = -k; cosets biject
    for k in range(1, span + 1):
        for u in range(1, p**M):
            if u % p == 0:
                continue
            # tau-invariance: the value at (-k, 1/u) matches (k, u)
            val = table.values.get((k, u), ExactScalar.zero(p))
            if val.is_zero():
                continue
            if weight:
                # Delta = |t - 1/t| = q^k on this region: Delta^(-w) = q^(-wk)
                val = val * ExactScalar.sqrtq_pow(p, -2 * weight * k)
            # c = u p^k + u^-1 p^-k: canonical coset of depth M - k...
            t = Fraction(u) * Fraction(p) ** k
            c = 1 / t + t
            cells.append(ball(c, val, M - k))
    # region v(t) = 0: recursive resolution against c in o
    tail_start = 2 * M + 1

    def fiber_value(c0: Fraction) -> ExactScalar | None:
        disc = c0 * c0 - 4
        r = frac_sqrt(disc, p, M + 4)
        if r is None:
            return None
        t = (c0 + r) / 2
        return table.value_at(t)

    def emit_ball(c0: Fraction, j: int):
        val = fiber_value(c0)
        if val is None:
            return
        if weight:
            vdisc = val_of_frac(c0 * c0 - 4, p)
            val = val * ExactScalar.sqrtq_pow(p, weight * vdisc)
        if not val.is_zero():
            cells.append(ball(c0, val, j))

    def emit_tails(sgn: int, j: int):
        val = table.value_at(Fraction(sgn))
        if val.is_zero():
            return
        # c - 2 sgn = (t - sgn)^2 / t with t ~ sgn: even valuation, unit
        # class sgn * (square)
        leg = legendre_char(p)
        leg_target = 1 if pow(sgn % p, (p - 1) // 2, p) == 1 else -1
        quarter = ExactScalar.from_rat(p, Fraction(1, 4))
        beta_mag = ExactScalar.sqrtq_pow(p, weight)
        for eps_par in (1, -1):
            for use_leg in (0, 1):
                coef = quarter * val
                if use_leg:
                    coef = coef * ExactScalar.from_rat(p, leg_target)
                beta = beta_mag
                if eps_par == -1:
                    beta = beta * ExactScalar.from_rat(p, -1)
                chi = leg if use_leg else None
                cells.append(law(Fraction(2 * sgn), coef, j, None, beta, chi))

    def process(c0: Fraction, j: int):
        for sgn in (1, -1):
            vv = val_of_frac(c0 - 2 * sgn, p)
            if (vv is None or vv >= j) and j >= tail_start:
                emit_tails(sgn, j)
                return
        disc = c0 * c0 - 4
        vdisc = val_of_frac(disc, p)
        if vdisc is not None and vdisc < j - 1 and j >= M + vdisc + 2:
            if elliptic_label(p, c0) == "0":
                emit_ball(c0, j)
            return
        for t in range(p):
            process(c0 + t * Fraction(p) ** j, j + 1)

    process(Fraction(0), 0)
    return CellFn(psi, cells).normalize()
