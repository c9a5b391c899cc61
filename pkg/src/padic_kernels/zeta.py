"""Tate zeta integrals, gamma factors and Weil constants.

The symbolic Mellin transform of a cell function is a rational function in
Z = q^(-s); the gamma factor is pinned by the functional equation
gamma(s, chi, psi) Z(s, phi, chi) = Z(1-s, F_psi phi, chi^(-1)) rather than
by an external epsilon-factor table, so the package's conventions cannot
drift from its own Fourier transform.
"""

from __future__ import annotations

from fractions import Fraction

from .cellfn import (
    Cell,
    CellFn,
    _resolve_cells_at_zero,
    _classify_resolved,
    fourier,
    unit_of_frac,
    val_of_frac,
)
from .chars import MultChar, gauss_sum, pow_scalar
from .errors import NonGeometricTail, UnramifiedInput
from .local import AddChar
from .ratfn import RatFnQs
from .scalars import ExactScalar


def mellin_dx(f: CellFn, chi: MultChar) -> RatFnQs:
    """integral of f(x) chi(x) |x|^(-s) dx as a rational function in Z.

    Z^(-k) bookkeeping per annulus; geometric tails close into rational
    functions (this IS the regularized Mellin transform: at parameters of
    absolute convergence it equals the literal sum, elsewhere it is the
    unique rational continuation).
    """
    p = f.p
    psi = f.psi
    d = max(chi.c, 1)
    g = _resolve_cells_at_zero(f, d)
    total = RatFnQs.zero(p)
    for c in g.cells:
        total = total + _mellin_cell(c, chi, psi, d)
    return total


def mellin_mult(f: CellFn, chi: MultChar) -> RatFnQs:
    """integral of f(x) chi(x) |x|^s d^x x (multiplicative measure).

    Equals mellin_dx with chi |.|^(s+1) ... implemented via the dx version:
    d^x x = |x|^(-1) dx, so this is mellin_dx against chi with s -> -s - 1;
    we just flip the exponent bookkeeping.
    """
    p = f.p
    psi = f.psi
    d = max(chi.c, 1)
    g = _resolve_cells_at_zero(f, d)
    total = RatFnQs.zero(p)
    for c in g.cells:
        # |x|^s d^x x over v(x) = k contributes Z^k q^k * (unit integral)
        total = total + _mellin_cell(c, chi, psi, d, mult=True)
    return total


def _mellin_cell(c: Cell, chi: MultChar, psi: AddChar, d: int, mult=False) -> RatFnQs:
    p = psi.p
    q = p
    zero = RatFnQs.zero(p)
    one = ExactScalar.one(p)
    kind = _classify_resolved(c, p, d)
    if kind == "const":
        # v(x) and unit(x) constant on the support: scalar times cell mass
        vc = val_of_frac(c.center, p)
        u = unit_of_frac(c.center, p, d)
        from .cellfn import _integrate_cell

        mass = _integrate_cell(c, psi, p)
        fac = pow_scalar(chi.z, vc) * chi.on_unit(u)
        if mult:
            mass = mass * ExactScalar.from_rat(p, Fraction(q) ** vc)
            return RatFnQs.monomial(p, mass * fac, vc)
        return RatFnQs.monomial(p, mass * fac, -vc)

    # center-0-like: per-annulus unit integrals with symbolic Z^(+-k)
    vb = val_of_frac(c.b, p)
    if not c.is_ball and c.kpow:
        raise NonGeometricTail("Mellin of k-linear laws is not needed or supported")
    if c.is_ball:
        lo, hi, beta, cell_chi = c.m, None, one, None
    else:
        lo, hi, beta, cell_chi = c.kmin, c.kmax, c.beta, c.chi
    tot_chi = chi if cell_chi is None else cell_chi * chi
    j = tot_chi.c
    acc = zero

    def annulus_unit_integral(k: int) -> ExactScalar:
        """integral over v(x)=k of (unit chars)(u(x)) psi(b x) dx, without
        the beta^k / z^k factors (handled by the caller); b != 0 here."""
        i = -(vb + k)
        if j == 0:
            if i == 1:
                return ExactScalar.from_rat(p, -Fraction(q) ** (-k - 1))
            return ExactScalar.zero(p)
        if i != j:
            return ExactScalar.zero(p)
        g = gauss_sum(tot_chi, psi)
        ub = unit_of_frac(c.b, p, j)
        return (
            ExactScalar.from_rat(p, Fraction(q) ** (-k - j))
            * tot_chi.inv().on_unit(ub)
            * g
        )

    # which annuli contribute nontrivially?
    if c.b == 0:
        if j >= 1:
            return zero  # unit-character orthogonality on every annulus
        # geometric: sum over k in range of (beta z)^k q^-k Z^(-k) (1 - 1/q)
        return _geom_rat(p, beta * chi.z, lo, hi, mult).scale(c.s)
    # twisted: only finitely many annuli contribute
    if j == 0:
        k_hits = [-vb - 1]
        # plus the untwisted geometric part for k >= -vb
        lo2 = max(lo, -vb) if lo is not None else -vb
        if hi is None or lo2 <= hi:
            acc = acc + _geom_rat(p, beta * chi.z, lo2, hi, mult).scale(c.s)
    else:
        k_hits = [-vb - j]
    for k in k_hits:
        if (lo is not None and k < lo) or (hi is not None and k > hi):
            continue
        val = (
            c.s
            * annulus_unit_integral(k)
            * pow_scalar(beta, k)
            * pow_scalar(chi.z, k)
        )
        if mult:
            val = val * ExactScalar.from_rat(p, Fraction(q) ** k)
            acc = acc + RatFnQs.monomial(p, val, k)
        else:
            acc = acc + RatFnQs.monomial(p, val, -k)
    return acc


def _geom_rat(p: int, r_coef: ExactScalar, lo, hi, mult: bool) -> RatFnQs:
    """sum over lo <= k <= hi of (r_coef)^k q^(-k) (1-1/q) * Z^(-+k).

    In the dx convention each annulus contributes Z^(-k); with mult=True the
    d^x measure drops the q^(-k) and contributes Z^(+k).
    """
    one_minus = ExactScalar.from_rat(p, Fraction(p - 1, p))
    if mult:
        term = lambda k: RatFnQs.monomial(p, pow_scalar(r_coef, k) * one_minus, k)
        ratio = RatFnQs.monomial(p, r_coef, 1)
    else:
        qinv = ExactScalar.from_rat(p, Fraction(1, p))
        term = lambda k: RatFnQs.monomial(
            p, pow_scalar(r_coef, k) * pow_scalar(qinv, k) * one_minus, -k
        )
        ratio = RatFnQs.monomial(p, r_coef * qinv, -1)
    if lo is not None and hi is not None:
        acc = RatFnQs.zero(p)
        for k in range(lo, hi + 1):
            acc = acc + term(k)
        return acc
    onef = RatFnQs.const(p, 1)
    if lo is not None:
        # sum_{k >= lo} = term(lo) / (1 - ratio)
        return term(lo) / (onef - ratio)
    if hi is not None:
        # sum_{k <= hi} = term(hi) / (1 - ratio^-1)
        return term(hi) / (onef - RatFnQs.const(p, 1) / ratio)
    raise NonGeometricTail("two-sided infinite law in Mellin transform")


def zeta_integral(f: CellFn, chi: MultChar) -> RatFnQs:
    """Tate integral Z(s, f, chi) = integral f(x) chi(x) |x|^s d^x x."""
    return mellin_mult(f, chi)


def tate_gamma(chi: MultChar, psi: AddChar) -> RatFnQs:
    """gamma(s, chi, psi) pinned by the functional equation on a test phi."""
    p = psi.p
    if chi.c == 0:
        phi = CellFn.indicator_ball(psi, 0, 0)
    else:
        phi = CellFn.indicator_ball(psi, 1, chi.c)
    num = zeta_integral(fourier(phi, 1), chi.inv()).subst_one_minus_s()
    den = zeta_integral(phi, chi)
    return num / den


def l_factor(chi: MultChar) -> RatFnQs:
    """L(s, chi) = 1/(1 - chi(pi) Z) unramified, 1 otherwise."""
    p = chi.p
    if chi.c == 0:
        return RatFnQs.const(p, 1) / (
            RatFnQs.const(p, 1) - RatFnQs.monomial(p, chi.z, 1)
        )
    return RatFnQs.const(p, 1)


def epsilon_factor(chi: MultChar, psi: AddChar) -> RatFnQs:
    """epsilon(s, chi, psi) = gamma(s, chi, psi) L(s, chi) / L(1-s, chi^(-1))."""
    g = tate_gamma(chi, psi)
    return g * l_factor(chi) / l_factor(chi.inv()).subst_one_minus_s()


def weil_constant(psi: AddChar, eta: MultChar) -> ExactScalar:
    """lambda_(E/F) = epsilon(1/2, eta_E, psi) for the quadratic character."""
    p = psi.p
    if eta.is_trivial():
        return ExactScalar.one(p)
    eps = epsilon_factor(eta, psi)
    return eps.eval_at_s_half()
