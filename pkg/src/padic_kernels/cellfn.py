"""Cell functions on F: the closed calculus carrying every distribution here.

A CellFn is a finite sum of cells over a fixed (p, psi) context.  Two kinds:

* ball -- s * psi(b x) on {v(x - c) >= m}
* law  -- s * beta^k * chi(unit(x - c)) * psi(b x) on {kmin <= k <= kmax},
          k = v(x - c); kmin/kmax may be None (unbounded)

Centers and twists are rationals (dense in Q_p; all exact data lives there).
The class is closed under +, pointwise product, |.|^(h/2), global-character
multiplication, additive convolution, and the Fourier transform.  Transforms
of infinite ranges are geometric closed forms, never truncations; non-L^1
tails follow the stably convergent shell-limit semantics, and genuinely
log-divergent tails raise DivergentTail.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

from .chars import MultChar, gauss_sum, pow_scalar
from .errors import (
    DivergentTail,
    InsufficientPrecision,
    SingularPoint,
    WindowOverflow,
)
from .local import AddChar, LocalElem
from .scalars import ExactScalar, Magnitude

Rat = Fraction


def val_of_frac(r: Fraction, p: int) -> int | None:
    if r == 0:
        return None
    v = 0
    n = r.numerator
    while n % p == 0:
        n //= p
        v += 1
    d = r.denominator
    while d % p == 0:
        d //= p
        v -= 1
    return v


def unit_of_frac(r: Fraction, p: int, depth: int) -> int:
    v = val_of_frac(r, p)
    assert v is not None
    num = r.numerator
    den = r.denominator
    if v >= 0:
        num //= p**v
    else:
        den //= p ** (-v)
    return num * pow(den, -1, p**depth) % p**depth


@dataclass(frozen=True)
class Cell:
    center: Fraction
    s: ExactScalar
    b: Fraction = Fraction(0)
    # ball data
    m: int | None = None
    # law data: coefficient s * k^kpow * beta^k on kmin <= k = v(x-c) <= kmax
    kmin: int | None = None
    kmax: int | None = None
    beta: ExactScalar | None = None
    chi: MultChar | None = None
    kpow: int = 0

    @property
    def is_ball(self) -> bool:
        return self.m is not None

    def chi_depth(self) -> int:
        return self.chi.c if self.chi is not None else 0


def ball(center, s: ExactScalar, m: int, b=Fraction(0)) -> Cell:
    return Cell(center=Fraction(center), s=s, b=Fraction(b), m=m)


def law(
    center,
    s: ExactScalar,
    kmin: int | None,
    kmax: int | None,
    beta: ExactScalar,
    chi: MultChar | None = None,
    b=Fraction(0),
    kpow: int = 0,
) -> Cell:
    if chi is not None and chi.is_unit_trivial():
        chi = None
    return Cell(
        center=Fraction(center), s=s, b=Fraction(b),
        kmin=kmin, kmax=kmax, beta=beta, chi=chi, kpow=kpow,
    )


class CellFn:
    """Finite sum of cells over a fixed (p, psi) context."""

    __slots__ = ("psi", "cells", "window")

    def __init__(self, psi: AddChar, cells: list[Cell], window=None):
        assert psi.sign == 1, "CellFn context uses the base psi"
        self.psi = psi
        self.cells = [c for c in cells if not c.s.is_zero()]
        # window = (outer_val, resolution): certified exact only for points
        # with v(x) >= outer_val, at coset resolution p^resolution
        self.window = window

    @property
    def p(self) -> int:
        return self.psi.p

    # ---- linear structure -------------------------------------------
    def __add__(self, o: "CellFn") -> "CellFn":
        assert o.psi.p == self.psi.p and o.psi.unit == self.psi.unit
        return CellFn(self.psi, self.cells + o.cells, _join_windows(self.window, o.window))

    def __sub__(self, o: "CellFn") -> "CellFn":
        return self + o.scale(-1)

    def scale(self, a) -> "CellFn":
        if isinstance(a, (int, Fraction)):
            a = ExactScalar.from_rat(self.p, a)
        if isinstance(a, Magnitude):
            a = a.to_scalar()
        return CellFn(self.psi, [replace(c, s=c.s * a) for c in self.cells], self.window)

    def conj(self) -> "CellFn":
        out = []
        for c in self.cells:
            out.append(
                replace(
                    c,
                    s=c.s.conj(),
                    b=-c.b,
                    beta=c.beta.conj() if c.beta is not None else None,
                    chi=c.chi.conj() if c.chi is not None else None,
                )
            )
        return CellFn(self.psi, out, self.window)

    @staticmethod
    def zero(psi: AddChar) -> "CellFn":
        return CellFn(psi, [])

    @staticmethod
    def indicator_ball(psi: AddChar, center, m: int) -> "CellFn":
        return CellFn(psi, [ball(center, ExactScalar.one(psi.p), m)])

    @staticmethod
    def indicator_annulus(psi: AddChar, center, k: int) -> "CellFn":
        one = ExactScalar.one(psi.p)
        return CellFn(psi, [law(center, one, k, k, one)])

    # ---- evaluation --------------------------------------------------
    def evaluate(self, x) -> ExactScalar:
        if isinstance(x, LocalElem):
            xr = x.rational_lift()
        else:
            xr = Fraction(x)
        if self.window is not None:
            outer, _res = self.window
            v = val_of_frac(xr, self.p)
            if v is not None and v < outer:
                raise WindowOverflow(f"point at valuation {v} outside window {self.window}")
        acc = ExactScalar.zero(self.p)
        for c in self.cells:
            acc = acc + self._cell_value(c, xr)
        return acc

    def _cell_value(self, c: Cell, xr: Fraction) -> ExactScalar:
        p = self.p
        zero = ExactScalar.zero(p)
        diff = xr - c.center
        v = val_of_frac(diff, p)
        if c.is_ball:
            if v is not None and v < c.m:
                return zero
            val = c.s
        else:
            if v is None:
                if c.kmax is None:
                    raise SingularPoint(f"evaluation at law-cell center {c.center}")
                return zero
            if (c.kmin is not None and v < c.kmin) or (c.kmax is not None and v > c.kmax):
                return zero
            val = c.s * pow_scalar(c.beta, v)
            if c.kpow:
                val = val * ExactScalar.from_rat(p, v**c.kpow)
            if c.chi is not None:
                val = val * c.chi.on_unit(unit_of_frac(diff, p, c.chi.c))
        if c.b != 0:
            val = val * self.psi(c.b * xr)
        return val

    # ---- normalization ----------------------------------------------
    def normalize(self) -> "CellFn":
        acc: dict[tuple, ExactScalar] = {}
        order: list[tuple] = []
        protos: dict[tuple, Cell] = {}
        for c in self.cells:
            for cc in _canonicalize(c, self.p, self.psi):
                key = _cell_key(cc)
                if key in acc:
                    acc[key] = acc[key] + cc.s
                else:
                    acc[key] = cc.s
                    order.append(key)
                    protos[key] = cc
        cells = []
        for key in order:
            s = acc[key]
            if not s.is_zero():
                cells.append(replace(protos[key], s=s))
        return CellFn(self.psi, cells, self.window)

    def __repr__(self):
        return f"CellFn(p={self.p}, {len(self.cells)} cells)"


def _join_windows(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return (max(a[0], b[0]), min(a[1], b[1]))


def _cell_key(c: Cell):
    chi_key = c.chi.key() if c.chi is not None else None
    return (c.center, c.b, c.m, c.kmin, c.kmax, c.beta, chi_key, c.kpow)


def _canonicalize(c: Cell, p: int, psi: AddChar) -> list[Cell]:
    """Canonical centers, absorbed constant twists, far laws recentered to 0."""
    if c.is_ball:
        vc = val_of_frac(c.center, p)
        if vc is None or vc >= c.m:
            center = Fraction(0)
        else:
            center = _canonical_rep(c.center, p, c.m)
        c = replace(c, center=center)
        vb = val_of_frac(c.b, p)
        if c.b != 0 and vb is not None and vb + c.m >= 0:
            c = replace(c, s=c.s * psi(c.b * c.center), b=Fraction(0))
        elif c.b != 0:
            # psi(b x) on the ball depends on b mod p^(-m) only
            b2 = _canonical_rep(c.b, p, -c.m)
            if b2 != c.b:
                c = replace(c, s=c.s * psi((c.b - b2) * c.center), b=b2)
        return [c]
    if c.kmin is not None and c.kmax is not None and c.kmin > c.kmax:
        return []
    # only the unit part of a twist acts on cells: normalize away chi.z
    if c.chi is not None and not (c.chi.z - ExactScalar.one(p)).is_zero():
        c = replace(c, chi=MultChar(c.chi.p, c.chi.c, c.chi.t))
    vb = val_of_frac(c.b, p)
    if c.b != 0 and vb is not None and c.kmin is not None and vb + c.kmin >= 0:
        c = replace(c, s=c.s * psi(c.b * c.center), b=Fraction(0))
    elif c.b != 0 and c.kmin is not None:
        b2 = _canonical_rep(c.b, p, -c.kmin)
        if b2 != c.b:
            c = replace(c, s=c.s * psi((c.b - b2) * c.center), b=b2)
    # inward untwisted law with beta = 1 is exactly a ball indicator
    if (
        c.kmin is not None
        and c.kmax is None
        and c.chi is None
        and c.kpow == 0
        and c.beta.rational_part() == 1
    ):
        return _canonicalize(ball(c.center, c.s, c.kmin, c.b), p, psi)
    # single-annulus laws absorb beta and k^kpow into the scalar
    if c.kmin is not None and c.kmin == c.kmax:
        if c.kpow:
            c = replace(
                c, s=c.s * ExactScalar.from_rat(p, c.kmin**c.kpow), kpow=0
            )
        if c.beta.rational_part() != 1:
            c = replace(c, s=c.s * pow_scalar(c.beta, c.kmin), beta=ExactScalar.one(p))
        d = max(c.chi_depth(), 1)
        c = replace(c, center=_canonical_rep(c.center, p, c.kmin + d))
    vc = val_of_frac(c.center, p)
    if vc is None:
        return [c]
    if c.kmin is None:
        # far law at a nonzero center: identical to the same law at center 0
        # for k <= v(center) - depth; middle band becomes single-k cells
        d = max(c.chi_depth(), 1)
        cut = vc - d
        out: list[Cell] = []
        far_hi = cut if c.kmax is None else min(cut, c.kmax)
        far = law(0, c.s, None, far_hi, c.beta, c.chi, c.b)
        out.extend(_canonicalize(far, p, psi))
        hi = c.kmax if c.kmax is not None else vc
        for k in range(cut + 1, min(hi, vc - 1) + 1):
            out.append(replace(c, kmin=k, kmax=k))
        if c.kmax is None or c.kmax >= vc:
            out.append(replace(c, kmin=vc))
        return out
    # law centers stay exact: v(x - c) grades the value, so the center
    # cannot be reduced modulo any finite depth
    return [c]


def _canonical_rep(r: Fraction, p: int, depth: int) -> Fraction:
    """Canonical representative of r mod p^depth."""
    v = val_of_frac(r, p)
    if v is None or v >= depth:
        return Fraction(0)
    shift = p ** max(0, -v)
    scaled = r * shift  # integral at p now
    dd = depth + max(0, -v)
    num, den = scaled.numerator, scaled.denominator
    inv = pow(den, -1, p**dd)
    return Fraction(num * inv % p**dd, shift)


# ---------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------

def integrate(f: CellFn) -> ExactScalar:
    """Integral against dx with vol(o) = 1; DivergentTail if a tail escapes."""
    p = f.p
    acc = ExactScalar.zero(p)
    for c in f.normalize().cells:
        acc = acc + _integrate_cell(c, f.psi, p)
    return acc


def _integrate_cell(c: Cell, psi: AddChar, p: int) -> ExactScalar:
    zero = ExactScalar.zero(p)
    vb = val_of_frac(c.b, p)
    if c.is_ball:
        if c.b == 0 or (vb is not None and vb + c.m >= 0):
            return c.s * _qpow(p, -c.m) * psi(c.b * c.center)
        return zero
    lo, hi = c.kmin, c.kmax
    tw = psi(c.b * c.center) if c.b != 0 else ExactScalar.one(p)
    j = c.chi_depth()
    if j >= 1:
        # chi-twisted annulus mass vanishes unless k = -v(b) - j
        if c.b == 0 or vb is None:
            return zero
        k = -vb - j
        if (lo is not None and k < lo) or (hi is not None and k > hi):
            return zero
        g = gauss_sum(c.chi, psi)
        ub = unit_of_frac(c.b, p, j)
        val = c.s * pow_scalar(c.beta, k) * _qpow(p, -k - j) * c.chi.inv().on_unit(ub) * g
        return val * tw
    if c.b != 0 and vb is not None:
        pieces = zero
        kr = -vb - 1
        if (lo is None or kr >= lo) and (hi is None or kr <= hi):
            pieces = pieces + c.s * pow_scalar(c.beta, kr) * (-_qpow(p, -kr - 1))
        lo2 = max(lo, -vb) if lo is not None else -vb
        return (pieces + _annulus_mass_sum(c, lo2, hi, p)) * tw
    return _annulus_mass_sum(c, lo, hi, p) * tw


def _annulus_mass_sum(c: Cell, lo: int | None, hi: int | None, p: int) -> ExactScalar:
    """sum over lo <= k <= hi of s k^kpow beta^k q^(-k) (1 - 1/q)."""
    one_minus = ExactScalar.from_rat(p, Fraction(p - 1, p))
    r = c.beta * _qpow(p, -1)
    if lo is None:
        rinv = r.inv() if not r.is_zero() else None
        if rinv is None or not _abs_less_than_one(rinv, p):
            raise DivergentTail("outward tail has infinite additive mass")
        if c.kpow == 0:
            # sum_{k<=hi} r^k = r^hi / (1 - 1/r)
            return c.s * one_minus * pow_scalar(r, hi) / (ExactScalar.one(p) - rinv)
        # sum_{k<=hi} k r^k = -sum_{j>=-hi} j (1/r)^j
        return -(c.s * one_minus * _geom_sum_linear(rinv, -hi, None, p))
    if c.kpow == 0:
        return c.s * one_minus * _geom_sum(r, lo, hi, p)
    return c.s * one_minus * _geom_sum_linear(r, lo, hi, p)


def _geom_sum(r: ExactScalar, lo: int, hi: int | None, p: int) -> ExactScalar:
    """sum of r^k for lo <= k <= hi (hi None = infinity, needs |r| < 1)."""
    if hi is not None:
        if hi < lo:
            return ExactScalar.zero(p)
        one = ExactScalar.one(p)
        if (one - r).is_zero():
            return ExactScalar.from_rat(p, hi - lo + 1)
        return (pow_scalar(r, lo) - pow_scalar(r, hi + 1)) / (one - r)
    if not _abs_less_than_one(r, p):
        raise DivergentTail("geometric tail ratio has modulus >= 1")
    one = ExactScalar.one(p)
    return pow_scalar(r, lo) / (one - r)


def _geom_sum_linear(r: ExactScalar, lo: int, hi: int | None, p: int) -> ExactScalar:
    """sum of k r^k for lo <= k <= hi (hi None = infinity, needs |r| < 1)."""
    if hi is not None:
        if hi < lo:
            return ExactScalar.zero(p)
        if hi - lo <= 64:
            acc = ExactScalar.zero(p)
            rk = pow_scalar(r, lo)
            for k in range(lo, hi + 1):
                acc = acc + rk * ExactScalar.from_rat(p, k)
                rk = rk * r
            return acc
        return _geom_sum_linear(r, lo, None, p) - _geom_sum_linear(r, hi + 1, None, p)
    if not _abs_less_than_one(r, p):
        raise DivergentTail("geometric tail ratio has modulus >= 1")
    one = ExactScalar.one(p)
    # sum_{k>=lo} k r^k = r^lo (lo - (lo-1) r) / (1-r)^2
    num = pow_scalar(r, lo) * (
        ExactScalar.from_rat(p, lo) - ExactScalar.from_rat(p, lo - 1) * r
    )
    d = one - r
    return num / (d * d)


def _abs_less_than_one(r: ExactScalar, p: int) -> bool:
    m2 = r * r.conj()
    rp = m2.rational_part()
    if rp is not None:
        return rp < 1
    val = abs(m2.embed(40))
    if abs(val - 1) < 1e-25:
        raise DivergentTail("tail modulus numerically indistinguishable from 1")
    return val < 1


def _qpow(p: int, k: int) -> ExactScalar:
    return ExactScalar.from_rat(p, Fraction(p) ** k)


def _qpow_half(p: int, h: int) -> ExactScalar:
    return ExactScalar.sqrtq_pow(p, h)


# ---------------------------------------------------------------------
# Fourier transform
# ---------------------------------------------------------------------

def fourier(f: CellFn, sign: int = 1, pv: bool = False) -> CellFn:
    """F_psi (sign=+1) or F_(psi^-1) (sign=-1), exact on the cell class.

    Stably convergent semantics for non-L^1 tails; DivergentTail where a
    tail is genuinely log-divergent (beta = q) or carries a delta mass
    (constant outward tail) unless pv=True drops the delta.
    """
    out: list[Cell] = []
    for c in f.normalize().cells:
        out.extend(_fourier_cell(c, f.psi, sign, pv))
    win = None
    if f.window is not None:
        outer, res = f.window
        win = (-res, -outer)
    return CellFn(f.psi, out, win).normalize()


def _fourier_cell(c: Cell, psi: AddChar, sign: int, pv: bool) -> list[Cell]:
    """F_s(cell)(y) = s0 psi(ab) psi(s a y) G(b + s y); G = centered transform."""
    p = psi.p
    a, b = c.center, c.b
    s_pref = c.s * (psi(b * a) if b != 0 else ExactScalar.one(p))
    if c.is_ball:
        g_cells = [ball(0, _qpow(p, -c.m), -c.m)]
    else:
        g_cells = _centered_law_transform(c, psi, pv)
    out = []
    for gc in g_cells:
        # w = b + s y: v(w - w0) = v(y - s (w0 - b)); gc always sits at w0 = 0
        new_center = Fraction(sign) * (gc.center - b)
        chi_fix = ExactScalar.one(p)
        if sign == -1 and gc.chi is not None:
            chi_fix = gc.chi.on_unit(p - 1)  # chi(-1) from u(w) = u(-(y - c'))
        new_b = Fraction(sign) * a
        s_out = s_pref * gc.s * chi_fix
        if gc.is_ball:
            out.append(ball(new_center, s_out, gc.m, new_b))
        else:
            out.append(law(new_center, s_out, gc.kmin, gc.kmax, gc.beta, gc.chi,
                           new_b, kpow=gc.kpow))
    return out


def _centered_law_transform(c: Cell, psi: AddChar, pv: bool) -> list[Cell]:
    """Transform of k^kpow beta^k chi(u) on kmin <= v(u) <= kmax (center 0)."""
    p = psi.p
    one = ExactScalar.one(p)
    # the cell scalar rides on the prefactor in _fourier_cell
    beta, lo, hi = c.beta, c.kmin, c.kmax
    j = c.chi_depth()
    out: list[Cell] = []
    if j >= 1:
        g = gauss_sum(c.chi, psi)
        r = beta * _qpow(p, -1)
        beta_out = _qpow(p, 1) / beta
        s_out = g * _qpow(p, -j) * pow_scalar(r, -j)
        l_lo = None if hi is None else -hi - j
        l_hi = None if lo is None else -lo - j
        if c.kpow == 0:
            out.append(law(0, s_out, l_lo, l_hi, beta_out, c.chi.inv()))
        else:
            # k = -l-j: k^1 = -l - j
            out.append(law(0, -s_out, l_lo, l_hi, beta_out, c.chi.inv(), kpow=1))
            out.append(law(0, -s_out * ExactScalar.from_rat(p, j), l_lo, l_hi,
                           beta_out, c.chi.inv()))
        return out
    one_minus = ExactScalar.from_rat(p, Fraction(p - 1, p))
    r = beta * _qpow(p, -1)
    if lo is not None and hi is not None:
        for k in range(lo, hi + 1):
            coef = pow_scalar(beta, k) * ExactScalar.from_rat(p, k**c.kpow)
            out.append(ball(0, coef * _qpow(p, -k) * one_minus, -k))
            out.append(law(0, -coef * _qpow(p, -k - 1), -k - 1, -k - 1, one))
        return out
    if (one - r).is_zero():
        # beta = q exactly: inward is divergent everywhere; outward has
        # linear-in-valuation shell sums, representable with kpow = 1
        if lo is not None:
            raise DivergentTail("inward tail with beta = q is log-divergent")
        if c.kpow:
            raise DivergentTail("second-order log tail is outside the calculus")
        out.append(law(0, one_minus, -hi, None, one, kpow=1))
        const = one_minus * ExactScalar.from_rat(p, hi + 1) - _qpow(p, -1)
        out.append(ball(0, const, -hi))
        out.append(law(0, -_qpow(p, -1), -hi - 1, -hi - 1, one))
        return out
    beta_out = _qpow(p, 1) / beta
    if c.kpow == 0:
        a_coef = one_minus / (one - r) - beta.inv()
        if lo is not None:
            # inward tail: needs |beta| < q for pointwise convergence
            if not _abs_less_than_one(r, p):
                raise DivergentTail("inward tail with |beta| > q diverges pointwise")
            big = one_minus * pow_scalar(r, lo) / (one - r)
            out.append(ball(0, big, -lo))
            if not a_coef.is_zero():
                out.append(law(0, a_coef, None, -lo - 1, beta_out))
            return out
        # outward tail (lo is None, hi finite)
        b_coef = -one_minus * pow_scalar(r, hi + 1) / (one - r)
        if a_coef.is_zero() and not pv:
            raise DivergentTail(
                "constant-type outward tail transforms to a delta mass; "
                "pv=True keeps the function part"
            )
        if not a_coef.is_zero():
            out.append(law(0, a_coef, -hi - 1, None, beta_out))
        if not b_coef.is_zero():
            out.append(ball(0, b_coef, -hi - 1))
        return out
    # kpow = 1: value(l) = A1 l beta_out^l + A0 beta_out^l on the law range
    d1 = one - r
    a1 = beta.inv() - one_minus / d1
    a0 = one_minus * r / (d1 * d1) + beta.inv()
    if lo is not None:
        if not _abs_less_than_one(r, p):
            raise DivergentTail("inward tail with |beta| > q diverges pointwise")
        big = one_minus * _geom_sum_linear(r, lo, None, p)
        out.append(ball(0, big, -lo))
        if not a1.is_zero():
            out.append(law(0, a1, None, -lo - 1, beta_out, kpow=1))
        if not a0.is_zero():
            out.append(law(0, a0, None, -lo - 1, beta_out))
        return out
    # outward linear tail
    rinv_ok = False
    try:
        rinv_ok = _abs_less_than_one(r.inv(), p)
    except Exception:
        rinv_ok = False
    if not rinv_ok and not pv:
        raise DivergentTail(
            "non-L1 linear outward tail needs pv=True (drops the delta part)"
        )
    l_const = pow_scalar(r, hi + 1) * (
        ExactScalar.from_rat(p, hi + 1) - ExactScalar.from_rat(p, hi) * r
    ) / (d1 * d1)
    b0 = -one_minus * l_const
    if not a1.is_zero():
        out.append(law(0, a1, -hi - 1, None, beta_out, kpow=1))
    if not a0.is_zero():
        out.append(law(0, a0, -hi - 1, None, beta_out))
    if not b0.is_zero():
        out.append(ball(0, b0, -hi - 1))
    return out


# ---------------------------------------------------------------------
# pointwise multipliers
# ---------------------------------------------------------------------

def _split_ball(c: Cell, p: int) -> list[Cell]:
    out = []
    for d in range(p):
        out.append(replace(c, center=c.center + d * Fraction(p) ** c.m, m=c.m + 1))
    return out


def _split_annulus(c: Cell, p: int) -> list[Cell]:
    """Single-k law cell -> balls of depth k + max(chi depth, 1)."""
    assert c.kmin == c.kmax and c.kmin is not None
    k = c.kmin
    d = max(c.chi_depth(), 1)
    out = []
    pk = Fraction(p) ** k
    for u in range(1, p**d):
        if u % p == 0:
            continue
        val = c.s * pow_scalar(c.beta, k)
        if c.kpow:
            val = val * ExactScalar.from_rat(p, k**c.kpow)
        if c.chi is not None:
            val = val * c.chi.on_unit(u)
        out.append(ball(c.center + u * pk, val, k + d, c.b))
    return out


def _resolve_cells_at_zero(f: CellFn, depth: int) -> CellFn:
    """Rewrite f so each cell is (a) centered at 0, (b) a far segment at a
    nonzero center with range <= v(center) - depth (acts like center 0), or
    (c) has constant v(x) and constant unit(x) mod p^depth on its support."""
    p = f.p
    work = list(f.normalize().cells)
    done: list[Cell] = []
    guard = 0
    while work:
        guard += 1
        if guard > 500000:
            raise RuntimeError("cell resolution did not terminate")
        c = work.pop()
        vc = val_of_frac(c.center, p)
        if c.is_ball and vc is not None and vc >= c.m:
            c = replace(c, center=Fraction(0))
            vc = None
        if vc is None:
            done.append(c)
            continue
        if c.is_ball:
            if c.m >= vc + depth + 1:
                done.append(c)  # v(x) = vc, unit const mod p^depth
            else:
                work.extend(_split_ball(c, p))
            continue
        lo, hi = c.kmin, c.kmax
        cut = vc - depth
        if lo is None:
            # canonicalize() should have recentered; do it now
            work.extend(_canonicalize(c, p, f.psi))
            continue
        if lo <= cut:
            far_hi = cut if hi is None else min(cut, hi)
            done.append(replace(c, kmax=far_hi))
            if hi is None or hi > cut:
                work.append(replace(c, kmin=cut + 1))
            continue
        if lo >= vc + 1:
            # v(x) = vc on the whole support; unit const if lo - vc >= depth
            if lo - vc >= depth:
                done.append(c)
            else:
                seg_hi = min(hi, vc + depth) if hi is not None else vc + depth
                for k in range(lo, seg_hi + 1):
                    for piece in _split_annulus(replace(c, kmin=k, kmax=k), p):
                        work.append(piece)
                if hi is None or hi > seg_hi:
                    work.append(replace(c, kmin=seg_hi + 1))
            continue
        # middle shells cut < k <= vc: split annuli into balls
        seg_hi = min(hi, vc) if hi is not None else vc
        for k in range(lo, seg_hi + 1):
            for piece in _split_annulus(replace(c, kmin=k, kmax=k), p):
                work.append(piece)
        if hi is None or hi > seg_hi:
            work.append(replace(c, kmin=seg_hi + 1))
    return CellFn(f.psi, done, f.window)


def _classify_resolved(c: Cell, p: int, depth: int) -> str:
    vc = val_of_frac(c.center, p)
    if vc is None:
        return "zero"
    if not c.is_ball and c.kmax is not None and c.kmax <= vc - depth:
        return "far"
    return "const"


def multiply_norm_power(f: CellFn, half_exp: int) -> CellFn:
    """Multiply by |x|^(half_exp / 2); half-integers ride the sqrt(q) carrier."""
    p = f.p
    g = _resolve_cells_at_zero(f, 1)
    out: list[Cell] = []
    scale_beta = _qpow_half(p, -half_exp)
    for c in g.cells:
        kind = _classify_resolved(c, p, 1)
        if kind in ("zero", "far"):
            if c.is_ball:
                out.append(law(0, c.s, c.m, None, scale_beta, None, c.b))
            else:
                out.append(replace(c, beta=c.beta * scale_beta))
        else:
            vc = val_of_frac(c.center, p)
            out.append(replace(c, s=c.s * _qpow_half(p, -half_exp * vc)))
    return CellFn(f.psi, out, f.window).normalize()


def multiply_char(f: CellFn, chi: MultChar) -> CellFn:
    """Multiply by the global character chi(x) = z^v(x) chi_u(unit(x))."""
    if chi.is_trivial():
        return f
    p = f.p
    d = max(chi.c, 1)
    g = _resolve_cells_at_zero(f, d)
    out: list[Cell] = []
    for c in g.cells:
        kind = _classify_resolved(c, p, d)
        if kind in ("zero", "far"):
            if c.is_ball:
                out.append(law(0, c.s, c.m, None, chi.z, chi, c.b))
            else:
                nchi = chi if c.chi is None else c.chi * chi
                out.append(
                    replace(c, beta=c.beta * chi.z,
                            chi=None if nchi.is_unit_trivial() else nchi)
                )
        else:
            vc = val_of_frac(c.center, p)
            u = unit_of_frac(c.center, p, d)
            out.append(replace(c, s=c.s * pow_scalar(chi.z, vc) * chi.on_unit(u)))
    return CellFn(f.psi, out, f.window).normalize()


# ---------------------------------------------------------------------
# pointwise product
# ---------------------------------------------------------------------

def multiply(f: CellFn, g: CellFn) -> CellFn:
    p = f.p
    fn = f.normalize()
    gn = g.normalize()
    out: list[Cell] = []
    for c1 in fn.cells:
        for c2 in gn.cells:
            out.extend(_cell_product(c1, c2, p))
    return CellFn(f.psi, out, _join_windows(f.window, g.window)).normalize()


def _as_law(c: Cell, p: int) -> Cell:
    if not c.is_ball:
        return c
    return law(c.center, c.s, c.m, None, ExactScalar.one(p), None, c.b)


def _mul_chis(a: MultChar | None, b: MultChar | None, p: int) -> MultChar | None:
    if a is None and b is None:
        return None
    prod = (a or MultChar.trivial(p)) * (b or MultChar.trivial(p))
    return None if prod.is_unit_trivial() else prod


def _cell_product(c1: Cell, c2: Cell, p: int) -> list[Cell]:
    # fast path: ball x ball is a single containment test
    if c1.is_ball and c2.is_ball:
        if c2.m < c1.m:
            c1, c2 = c2, c1
        dv = val_of_frac(c1.center - c2.center, p)
        if dv is not None and dv < c1.m:
            return []
        return [ball(c2.center, c1.s * c2.s, c2.m, c1.b + c2.b)]
    # fast path: a ball strictly inside one annulus of a law cell
    if c1.is_ball != c2.is_ball:
        bl, lw = (c1, c2) if c1.is_ball else (c2, c1)
        dv = val_of_frac(bl.center - lw.center, p)
        if dv is not None and bl.m > dv + max(lw.chi_depth(), 0):
            if (lw.kmin is not None and dv < lw.kmin) or (
                lw.kmax is not None and dv > lw.kmax
            ):
                return []
            val = _law_value_at(lw, bl.center, p)
            if val is None:
                return []
            return [ball(bl.center, bl.s * val, bl.m, bl.b + lw.b)]
    a1, a2 = _as_law(c1, p), _as_law(c2, p)
    if a1.center == a2.center:
        lo = _max_opt(a1.kmin, a2.kmin)
        hi = _min_opt(a1.kmax, a2.kmax)
        if lo is not None and hi is not None and lo > hi:
            return []
        kp = a1.kpow + a2.kpow
        if kp > 1:
            raise RuntimeError("kpow overflow in cell product")
        return [law(a1.center, a1.s * a2.s, lo, hi, a1.beta * a2.beta,
                    _mul_chis(a1.chi, a2.chi, p), a1.b + a2.b, kpow=kp)]
    diff = a1.center - a2.center
    dv = val_of_frac(diff, p)
    d1, d2 = max(a1.chi_depth(), 1), max(a2.chi_depth(), 1)
    dd = max(d1, d2)
    b_out = a1.b + a2.b
    out: list[Cell] = []
    # Exact regions (disjoint by the ultrametric trichotomy on
    # (k1, k2) = (v(x-c1), v(x-c2))):
    #   A: k1 >= dv + d2  (then k2 = dv, a2-factor constant)
    #   B: k2 >= dv + d1  (symmetric)
    #   C: k1 = k2 = k <= dv - dd (unit parts agree mod p^dd)
    lo_a = _max_opt(a1.kmin, dv + d2)
    hi_a = a1.kmax
    if (hi_a is None or lo_a <= hi_a) and _range_allows(a2, dv):
        fac = a2.s * pow_scalar(a2.beta, dv)
        if a2.kpow:
            fac = fac * ExactScalar.from_rat(p, dv**a2.kpow)
        if a2.chi is not None:
            fac = fac * a2.chi.on_unit(unit_of_frac(diff, p, d2))
        out.append(law(a1.center, a1.s * fac, lo_a, hi_a, a1.beta, a1.chi, b_out,
                       kpow=a1.kpow))
    lo_b = _max_opt(a2.kmin, dv + d1)
    hi_b = a2.kmax
    if (hi_b is None or lo_b <= hi_b) and _range_allows(a1, dv):
        fac = a1.s * pow_scalar(a1.beta, dv)
        if a1.kpow:
            fac = fac * ExactScalar.from_rat(p, dv**a1.kpow)
        if a1.chi is not None:
            fac = fac * a1.chi.on_unit(unit_of_frac(-diff, p, d1))
        out.append(law(a2.center, a2.s * fac, lo_b, hi_b, a2.beta, a2.chi, b_out,
                       kpow=a2.kpow))
    hi_c = _min_opt(_min_opt(a1.kmax, a2.kmax), dv - dd)
    lo_c = _max_opt(a1.kmin, a2.kmin)
    if hi_c is not None and (lo_c is None or lo_c <= hi_c):
        kp = a1.kpow + a2.kpow
        if kp > 1:
            raise RuntimeError("kpow overflow in cell product")
        out.append(law(a1.center, a1.s * a2.s, lo_c, hi_c, a1.beta * a2.beta,
                       _mul_chis(a1.chi, a2.chi, p), b_out, kpow=kp))
    # Middle band: dv-dd < k1 < dv+d2 around c1 minus the part B covers;
    # recursive ball refinement until both factors are constant.
    work: list[tuple[Fraction, int]] = []
    for k1 in range(dv - dd + 1, dv + d2):
        pk = Fraction(p) ** k1
        for u in range(1, p):
            work.append((a1.center + u * pk, k1 + 1))
    guard = 0
    while work:
        guard += 1
        if guard > 2000000:
            raise RuntimeError("cell product refinement did not terminate")
        x0, m = work.pop()
        v1 = val_of_frac(x0 - a1.center, p)
        v2 = val_of_frac(x0 - a2.center, p)
        # skip balls fully inside exact regions (containment needs only the
        # ball radius to reach the region threshold)
        if (v1 is None or v1 >= dv + d2) and m >= dv + d2:
            continue  # region A
        if (v2 is None or v2 >= dv + d1) and m >= dv + d1:
            continue  # region B
        if v1 is None or v2 is None or m <= max(v1, v2):
            # ball still meets a center or straddles an annulus: refine
            for d in range(p):
                work.append((x0 + d * Fraction(p) ** m, m + 1))
            continue
        if v1 == v2 and v1 <= dv - dd:
            continue  # region C
        if m < v1 + d1 or m < v2 + d2:
            for d in range(p):
                work.append((x0 + d * Fraction(p) ** m, m + 1))
            continue
        val1 = _law_value_at(a1, x0, p)
        val2 = _law_value_at(a2, x0, p)
        if val1 is None or val2 is None:
            continue
        out.append(ball(x0, val1 * val2, m, b_out))
    return out


def _law_value_at(c: Cell, x0: Fraction, p: int) -> ExactScalar | None:
    """Value of the law cell at x0 ignoring additive twist; None if outside."""
    diff = x0 - c.center
    v = val_of_frac(diff, p)
    if v is None:
        return None
    if (c.kmin is not None and v < c.kmin) or (c.kmax is not None and v > c.kmax):
        return None
    val = c.s * pow_scalar(c.beta, v)
    if c.kpow:
        val = val * ExactScalar.from_rat(p, v**c.kpow)
    if c.chi is not None:
        val = val * c.chi.on_unit(unit_of_frac(diff, p, c.chi.c))
    return val


def _range_allows(c: Cell, k: int) -> bool:
    return (c.kmin is None or k >= c.kmin) and (c.kmax is None or k <= c.kmax)


def _max_opt(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return max(a, b)


def _min_opt(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


# ---------------------------------------------------------------------
# additive convolution
# ---------------------------------------------------------------------

def convolve_add(f: CellFn, g: CellFn) -> CellFn:
    """f *_+ g = F_(psi^-1)(F_psi(f) . F_psi(g))."""
    return fourier(multiply(fourier(f, 1), fourier(g, 1)), -1)


def integrate_product(f: CellFn, g: CellFn) -> ExactScalar:
    """integral of f g dx without materializing the normalized product."""
    p = f.p
    fn = f.normalize()
    gn = g.normalize()
    acc = ExactScalar.zero(p)
    for c1 in fn.cells:
        for c2 in gn.cells:
            for c in _cell_product(c1, c2, p):
                for cc in _canonicalize(c, p, fn.psi):
                    acc = acc + _integrate_cell(cc, fn.psi, p)
    return acc


# ---------------------------------------------------------------------
# zero test / equality
# ---------------------------------------------------------------------

def is_zero(f: CellFn) -> bool:
    """Exact global zero test.

    Infinite tails grouped by (center, b, beta, chi) must cancel (the groups
    are linearly independent on deep annuli); the remainder is compactly
    supported at finite resolution and is checked on a complete coset grid.
    """
    p = f.p
    g = f.normalize()
    if not g.cells:
        return True
    finite: list[Cell] = []
    groups: dict[tuple, list[Cell]] = {}
    for c in g.cells:
        if c.is_ball or (c.kmin is not None and c.kmax is not None):
            finite.append(c)
            continue
        chi_key = c.chi.key() if c.chi is not None else None
        key = (c.center, c.b, c.beta, chi_key, c.kmax is None)
        groups.setdefault(key, []).append(c)
    for key, cells in groups.items():
        total = ExactScalar.zero(p)
        for c in cells:
            total = total + c.s
        if not total.is_zero():
            return False
        # replace the cancelled group by its finite residual band
        inward = key[4]
        if inward:
            kk = max(c.kmin for c in cells)
            for c in cells:
                if c.kmin < kk:
                    finite.append(replace(c, kmax=kk - 1))
        else:
            kk = min(c.kmax for c in cells)
            for c in cells:
                if c.kmax > kk:
                    finite.append(replace(c, kmin=kk + 1))
    h = CellFn(g.psi, finite).normalize()
    if not h.cells:
        return True
    h = CellFn(g.psi, _disjointify_balls(_expand_laws(h.cells, p), p)).normalize()
    if not h.cells:
        return True
    return _finite_zero_check(h)


def _expand_laws(cells: list[Cell], p: int, cap: int = 4000) -> list[Cell]:
    """Expand bounded law cells into balls (so decompositions align)."""
    n_annuli = 0
    for c in cells:
        if not c.is_ball:
            n_annuli += (c.kmax - c.kmin + 1) * max(p ** c.chi_depth(), p)
    if n_annuli > cap:
        return cells
    out = []
    for c in cells:
        if c.is_ball:
            out.append(c)
        else:
            for k in range(c.kmin, c.kmax + 1):
                out.extend(_split_annulus(replace(c, kmin=k, kmax=k), p))
    return out


def _disjointify_balls(cells: list[Cell], p: int) -> list[Cell]:
    """Split nested ball cells (per twist bucket) until disjoint or equal.

    Equal balls merge scalars immediately, which collapses one function
    built through two different ball decompositions.
    """
    rest = [c for c in cells if not c.is_ball]
    buckets: dict[Fraction, list[Cell]] = {}
    for c in cells:
        if c.is_ball:
            buckets.setdefault(c.b, []).append(c)
    out: list[Cell] = []
    guard = 0
    for b_twist, balls in buckets.items():
        kept: list[Cell] = []
        for c in sorted(balls, key=lambda c: c.m):
            queue = [c]
            while queue:
                guard += 1
                if guard > 200000:
                    raise RuntimeError("ball disjointification blow-up")
                b2 = queue.pop()
                clash = None
                for i, b1 in enumerate(kept):
                    mm = min(b1.m, b2.m)
                    if _val_at_least(b2.center - b1.center, p, mm):
                        clash = (i, b1)
                        break
                if clash is None:
                    kept.append(b2)
                    continue
                i, b1 = clash
                if b1.m == b2.m:
                    kept[i] = replace(b1, s=b1.s + b2.s)
                elif b1.m < b2.m:
                    del kept[i]
                    queue.extend(_split_ball(b1, p))
                    queue.append(b2)
                else:
                    queue.extend(_split_ball(b2, p))
        out.extend(cc for cc in kept if not cc.s.is_zero())
    return out + rest


def _val_at_least(r: Fraction, p: int, m: int) -> bool:
    v = val_of_frac(r, p)
    return v is None or v >= m


def _finite_zero_check(h: CellFn) -> bool:
    """Zero test for a CellFn whose cells all have bounded ranges."""
    p = h.p
    centers = sorted({c.center for c in h.cells} | {Fraction(0)})
    # annulus bands per center
    for c0 in centers:
        ks = set()
        for c in h.cells:
            vrel = val_of_frac(c.center - c0, p)
            lo = c.m if c.is_ball else c.kmin
            hi = c.m if c.is_ball else c.kmax
            if vrel is None:
                ks.update(range(lo - 1, hi + 2))
                ks.add(hi + c.chi_depth() + 2)
            else:
                ks.update(range(min(lo - 1, vrel - 1), min(hi, vrel) + 2))
        for k in sorted(ks):
            if not _zero_on_annulus(h, c0, k):
                return False
    return True


def _zero_on_annulus(h: CellFn, c0: Fraction, k: int) -> bool:
    p = h.p
    depth = 1
    for c in h.cells:
        vrel = val_of_frac(c.center - c0, p)
        vb = val_of_frac(c.b, p)
        d_cell = max(c.chi_depth(), 1)
        if vrel is None or vrel > k:
            depth = max(depth, d_cell + (0 if c.is_ball else 0))
            if c.is_ball:
                depth = max(depth, c.m - k)
            else:
                depth = max(depth, d_cell)
        else:
            depth = max(depth, d_cell - (k - vrel) + 1, 1)
        if vb is not None:
            depth = max(depth, -vb - k + 1)
    depth = max(depth, 1)
    if depth > 9:
        raise RuntimeError(f"zero test needs depth {depth} at p={p}; refusing blowup")
    pk = Fraction(p) ** k
    for u in range(1, p**depth):
        if u % p == 0:
            continue
        x = c0 + u * pk
        try:
            if not h.evaluate(x).is_zero():
                return False
        except SingularPoint:
            continue
    return True


def equal(f: CellFn, g: CellFn) -> bool:
    return is_zero(f - g)


def restrict_to_ball(f: CellFn, outer: int) -> CellFn:
    """f restricted to {v(x) >= outer} (multiplication by the indicator)."""
    return multiply(f, CellFn.indicator_ball(f.psi, 0, outer))


def equal_on_window(f: CellFn, g: CellFn, outer: int) -> bool:
    return is_zero(restrict_to_ball(f - g, outer))


# ---------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------

def brute_force_fourier_values(
    f: CellFn, sign: int, n_out: int, m_res: int, points: list[Fraction]
) -> list[ExactScalar]:
    """Direct coset-sum Fourier transform for Schwartz-Bruhat f.

    Assumes supp(f) inside p^(-n_out) o and f constant on cosets of p^m_res o;
    sums f(x0) psi(+- x0 y) vol(coset) over coset representatives.  Fully
    independent of the closed-form transform path.
    """
    p = f.p
    psi = f.psi
    # sampling must also resolve psi(x y) for every requested point
    for y in points:
        vy = val_of_frac(Fraction(y), p)
        if vy is not None:
            m_res = max(m_res, -vy)
    vol = ExactScalar.from_rat(p, Fraction(1, p**m_res))
    reps = [Fraction(a, p**n_out) for a in range(p ** (m_res + n_out))]
    vals = []
    for x0 in reps:
        try:
            vals.append(f.evaluate(x0))
        except SingularPoint:
            vals.append(f.evaluate(x0 + Fraction(p) ** (m_res + 4)))
    out = []
    for y in points:
        # bucket by the fractional part of x0 y before summing: each bucket
        # sums at its own (small) conductor, the big-conductor combination
        # happens once per bucket
        buckets: dict[tuple[int, int], ExactScalar] = {}
        for x0, v in zip(reps, vals):
            if v.is_zero():
                continue
            arg = Fraction(sign) * x0 * y
            vv = val_of_frac(arg, p)
            if vv is None or vv >= 0:
                key = (0, 0)
            else:
                k = -vv
                key = (unit_of_frac(arg, p, k) % p**k, k)
            if key in buckets:
                buckets[key] = buckets[key] + v
            else:
                buckets[key] = v
        acc = ExactScalar.zero(p)
        for (a, k), v in buckets.items():
            acc = acc + v * psi.value_at_frac(a, k)
        out.append(acc * vol)
    return out
