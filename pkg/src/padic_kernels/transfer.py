"""Gelfand-Graev transforms, stable characters, Langlands transfer, the
Lafforgue transform and its section, elliptic pairings, Bernstein-summand
sections and the inversion map.

Everything is an exact operator on cell functions; the two character routes
(operator composition vs s-regularized continuation) are kept fully
independent so they can oracle each other.
"""

from __future__ import annotations

from dataclasses import replace
from fractions import Fraction

from .cellfn import (
    Cell,
    CellFn,
    ball,
    fourier,
    integrate,
    integrate_product,
    is_zero,
    law,
    multiply,
    multiply_char,
    multiply_norm_power,
    val_of_frac,
)
from .chars import MultChar, legendre_char, pow_scalar
from .errors import (
    CompatibilityViolation,
    NonvanishingAtZero,
    NotStabilized,
    NotTauInvariant,
    SplitInput,
)
from .local import AddChar
from .ratfn import RatFnQs
from .scalars import ExactScalar, Magnitude
from .tori import (
    LABELS,
    NormOneQuotient,
    QuadAlg,
    SplitTorusFn,
    TorusChar,
    TorusFn,
    descend_split_to_trace,
    descend_to_trace,
    elliptic_label,
    pullback_from_trace,
    quadratic_torus_char,
    restrict_to_split_trace,
)
from .zeta import mellin_dx, weil_constant

# ---------------------------------------------------------------------
# translations and scalings of the trace variable
# ---------------------------------------------------------------------

def translate(f: CellFn, a: Fraction) -> CellFn:
    """g(x) = f(x + a)."""
    a = Fraction(a)
    out = []
    for c in f.cells:
        s = c.s
        if c.b != 0:
            s = s * f.psi(c.b * a)
        out.append(replace(c, center=c.center - a, s=s))
    return CellFn(f.psi, out, f.window)


def reflect(f: CellFn) -> CellFn:
    """g(x) = f(-x)."""
    p = f.p
    out = []
    for c in f.cells:
        chi = c.chi
        s = c.s
        if chi is not None:
            s = s * chi.on_unit(p - 1)
        out.append(replace(c, center=-c.center, b=-c.b, s=s, chi=chi))
    return CellFn(f.psi, out, f.window)


def scale_variable(f: CellFn, z: Fraction) -> CellFn:
    """g(x) = f(z x)."""
    p = f.p
    z = Fraction(z)
    vz = val_of_frac(z, p)
    out = []
    for c in f.cells:
        s = c.s
        if c.is_ball:
            out.append(ball(c.center / z, s, c.m - vz, c.b * z))
            continue
        chi = c.chi
        if chi is not None:
            s = s * chi.on_unit(unit_of_frac_safe(z, p, chi.c))
        if c.beta is not None:
            s = s * pow_scalar(c.beta, vz)
        lo = None if c.kmin is None else c.kmin - vz
        hi = None if c.kmax is None else c.kmax - vz
        out.append(law(c.center / z, s, lo, hi, c.beta, chi, c.b * z))
    return CellFn(f.psi, out, f.window)


def unit_of_frac_safe(z: Fraction, p: int, depth: int):
    from .cellfn import unit_of_frac

    return unit_of_frac(z, p, max(depth, 1))


# ---------------------------------------------------------------------
# zero-neighborhood excision
# ---------------------------------------------------------------------

def smoothness_radius(f: CellFn) -> int:
    """R such that every cell of f is constant on p^R o.

    For each cell the ball p^R o must be contained in, or disjoint from,
    every membership region, and all twists must be constant on it; the
    bound below enforces this cell by cell, so the value of f near 0 is a
    plain sum of constants.
    """
    p = f.p
    r = 1
    for c in f.normalize().cells:
        vc = val_of_frac(c.center, p)
        vb = val_of_frac(c.b, p)
        if vb is not None:
            r = max(r, -vb + 1)
        if c.is_ball:
            if vc is None or vc >= c.m:
                r = max(r, c.m)  # 0 inside: need p^R o inside the ball
            else:
                r = max(r, vc + 1)  # 0 outside: need disjointness
            continue
        d = max(c.chi_depth(), 1)
        if vc is None:
            if c.kmax is None:
                raise NonvanishingAtZero(
                    "function has an infinite inward tail at 0"
                )
            r = max(r, c.kmax + d + 1)
        else:
            # near 0 the cell sees v(x - center) = v(center): constancy of
            # the unit part needs R >= v(center) + depth
            r = max(r, vc + d)
    return r


def excise_zero(f: CellFn, radius: int | None = None) -> tuple[CellFn, int]:
    """Rewrite f with no cell mass inside p^R o; returns (g, R).

    f must be constant on p^R o; g agrees with f outside and vanishes
    structurally inside, so norm-power multiplication cannot create
    uncancelled divergent tails.
    """
    p = f.p
    g = f.normalize()
    R = smoothness_radius(g) if radius is None else radius
    one = ExactScalar.one(p)
    out: list[Cell] = []
    work = list(g.cells)
    guard = 0
    while work:
        guard += 1
        if guard > 200000:
            raise RuntimeError("excision did not terminate")
        c = work.pop()
        vc = val_of_frac(c.center, p)
        if c.is_ball:
            if vc is None or vc >= c.m:
                # ball at 0: keep annuli below R only
                m_eff = c.m
                for k in range(m_eff, R):
                    out.append(law(0, c.s, k, k, one, None, c.b))
            else:
                out.append(c)
            continue
        if vc is None:
            hi = c.kmax if c.kmax is not None else R - 1
            hi = min(hi, R - 1)
            if c.kmin is None or c.kmin <= hi:
                out.append(replace(c, kmax=hi))
            continue
        # nonzero center: only the shell k = v(center) reaches near 0
        if c.kmax is not None and c.kmax < vc:
            out.append(c)
            continue
        lo, hi = c.kmin, c.kmax
        if lo is not None and lo > vc:
            out.append(c)
            continue
        # split out the shell at vc
        if lo is None or lo <= vc - 1:
            out.append(replace(c, kmax=min(vc - 1, hi) if hi is not None else vc - 1))
        if hi is None or hi >= vc + 1:
            out.append(replace(c, kmin=vc + 1))
        # shell {v(x - c) = vc}: split into {v(x) = vc} part (kept) and the
        # near-zero ball (recursed)
        d = max(c.chi_depth(), 1)
        pk = Fraction(p) ** vc
        for u in range(1, p**d):
            if u % p == 0:
                continue
            x0 = c.center + u * pk
            vx = val_of_frac(x0, p)
            val = c.s * pow_scalar(c.beta, vc)
            if c.chi is not None:
                val = val * c.chi.on_unit(u)
            if vx is not None and vx == vc:
                sub = ball(x0, val, vc + d, c.b)
                out.append(sub)
            else:
                # this coset heads toward 0: recurse on the ball as a ball
                work.append(ball(x0, val, vc + d, c.b))
    return CellFn(f.psi, out, f.window).normalize(), R


def value_near_zero(f: CellFn) -> ExactScalar:
    """The constant value of f on its smoothness ball at 0.

    smoothness_radius guarantees cell-wise constancy on p^R o; a couple of
    probe evaluations assert it cheaply.
    """
    p = f.p
    R = smoothness_radius(f.normalize())
    probe = Fraction(p) ** (R + 3)
    v0 = f.evaluate(probe)
    for u in (1 + p, 2):
        check = f.evaluate(u * Fraction(p) ** R)
        if not (check - v0).is_zero():
            raise NonvanishingAtZero("function is not constant near zero")
    return v0


# ---------------------------------------------------------------------
# Gelfand-Graev transform and stable characters
# ---------------------------------------------------------------------

_MEMO: dict = {}


def _memo(name: str, psi: AddChar, *extra, build=None):
    key = (name, psi.p, psi.unit) + extra
    hit = _MEMO.get(key)
    if hit is None:
        hit = build()
        _MEMO[key] = hit
    return hit


def weil_lambda(psi: AddChar, alg: QuadAlg) -> ExactScalar:
    return _memo(
        "lambda", psi, alg.label,
        build=lambda: weil_constant(psi, alg.quad_char()),
    )


def gelfand_graev(psi: AddChar, alg: QuadAlg, f: CellFn) -> CellFn:
    """GG_alpha(f) = lambda_alpha F_(psi^-1)(eta_alpha . F_psi(f))."""
    if alg.is_split:
        return f
    eta = alg.quad_char()
    lam = weil_lambda(psi, alg)
    return fourier(multiply_char(fourier(f, 1), eta), -1).scale(lam)


def stable_transfer_op(psi: AddChar, alg: QuadAlg, f: CellFn) -> CellFn:
    """The trace-line kernel of T_alpha: lambda F_psi(eta F_(psi^-1)(f))."""
    if alg.is_split:
        return f
    eta = alg.quad_char()
    lam = weil_lambda(psi, alg)
    return fourier(multiply_char(fourier(f, -1), eta), 1).scale(lam)


def phi_chi(psi: AddChar, alg: QuadAlg, chi: TorusChar) -> CellFn:
    """phi_chi = (chi + chi^iota)/Delta on tr(E^1), as an exact CellFn."""
    quot = chi.quot
    table = TorusFn(quot, {e: chi(e) + chi(quot.inv(e)) for e in quot.elements})
    return descend_to_trace(psi, alg, table, weight=1)


def stable_char_dihedral(psi: AddChar, alg: QuadAlg, chi: TorusChar) -> CellFn:
    """theta^st_chi = GG_alpha(phi_chi) (operator route)."""
    if alg.is_split:
        raise SplitInput("dihedral characters need a nonsplit torus")
    return gelfand_graev(psi, alg, phi_chi(psi, alg, chi))


def stable_char_regularized(
    psi: AddChar, alg: QuadAlg, chi: TorusChar, c: Fraction
) -> ExactScalar:
    """theta^st_chi(c) by the s-family route.

    (2/vol) * [continuation to s=1 of integral over E^1 of
    eta(c - tr e)|c - tr e|^(-s) chi(e) de], computed via the measure
    relation as a Mellin transform of u -> phi_chi(c - u) and evaluated
    exactly at Z = 1/q.
    """
    p = psi.p
    c = Fraction(c)
    if elliptic_label(p, c) is None:
        from .errors import SingularPoint

        raise SingularPoint("regularized character needs a regular point")
    phi = phi_chi(psi, alg, chi)
    # g(u) = phi(c - u); I(s) = integral g(u) eta(u) |u|^(-s) du
    g = translate(reflect(phi), -c)
    eta = alg.quad_char()
    rat = mellin_dx(g, eta)
    val = rat.eval_at_s_one()
    vol = alg.vol_e1()
    return val * (vol.inv() * Magnitude.from_rat(p, 2)).to_scalar()


def stable_char_cached(psi: AddChar, alg: QuadAlg, chi: TorusChar) -> CellFn:
    return _memo(
        "theta_st", psi, alg.label, chi.quot.depth, chi.idx,
        build=lambda: gelfand_graev(psi, alg, phi_chi(psi, alg, chi)),
    )


def stable_transfer(
    psi: AddChar, alg: QuadAlg, f: CellFn, depth: int, certify: bool = True
):
    """T_alpha(f): TorusFn at the given depth, or SplitTorusFn for alpha=0.

    Nonsplit slots use the adjoint characterization <T(f), chi> = <f,
    theta^st_chi> (finitely many exact pairings), which is immune to the
    principal-value subtleties of the operator route; with certify=True the
    next depth's fresh characters are checked to pair to zero.
    """
    if alg.is_split:
        lo, hi = _split_range(f)
        return restrict_to_split_trace(psi, f, depth, max(abs(lo), abs(hi), depth) + 1)
    quot = NormOneQuotient(alg, depth)
    vol_inv = alg.vol_e1().inv().to_scalar()
    coeffs = {}
    for chi in quot.characters():
        theta = stable_char_cached(psi, alg, chi)
        coeffs[chi.idx] = pair_trace_line(f, theta)
    values = {}
    for e in quot.elements:
        acc = ExactScalar.zero(psi.p)
        for chi in quot.characters():
            acc = acc + coeffs[chi.idx] * chi.inv()(e)
        values[e] = acc * vol_inv
    out = TorusFn(quot, values)
    if certify:
        deeper = NormOneQuotient(alg, depth + 1)
        seen = set()
        for chi in deeper.characters():
            # characters that factor through the depth-M quotient pair the
            # same; fresh ones must pair to zero for the depth to suffice
            if _factors_through(chi, quot):
                continue
            theta = stable_char_cached(psi, alg, chi)
            if not pair_trace_line(f, theta).is_zero():
                raise NotStabilized(
                    f"transfer to {alg.label} has depth > {depth}; deepen"
                )
    return out


def _factors_through(chi: TorusChar, quot: NormOneQuotient) -> bool:
    """Does the deeper character factor through the shallower quotient?"""
    deeper = chi.quot
    # chi factors iff it is trivial on the kernel of deeper -> quot
    for e in deeper.elements:
        if quot.reduce((e[0] % quot._mod, e[1] % quot._mod)) == quot.identity():
            if not (chi(e) - ExactScalar.one(chi.quot.alg.p)).is_zero():
                return False
    return True


def _split_range(f: CellFn) -> tuple[int, int]:
    """Valuation range of t needed to see supp(f) among c = t + 1/t."""
    p = f.p
    lo, hi = 0, 0
    for c in f.cells:
        vc = val_of_frac(c.center, p)
        k = None
        if c.is_ball:
            k = min(vc if vc is not None else c.m, c.m)
        else:
            if c.kmin is None:
                k = -12  # outward tail: cap the scan
            else:
                k = min(c.kmin, vc if vc is not None else c.kmin)
        lo = min(lo, k)
    return lo, -lo


# ---------------------------------------------------------------------
# Lafforgue transform and section
# ---------------------------------------------------------------------

def lafforgue(psi: AddChar, z: CellFn) -> CellFn:
    """Laf(z) = F_psi(|.| F_(psi^-1)(z))."""
    p = psi.p
    zhat = fourier(z, -1)
    v0 = value_near_zero(zhat)
    g, R = excise_zero(zhat)
    scaled = multiply_norm_power(g, 2)
    if not v0.is_zero():
        # |.| times the constant near 0: an inward law with beta = q^(-1)
        scaled = scaled + CellFn(
            psi, [law(0, v0, R, None, ExactScalar.sqrtq_pow(p, -2))]
        )
    return fourier(scaled, 1)


def lafforgue_section(psi: AddChar, z: CellFn) -> CellFn:
    """LafSec(z) = F_psi(|.|^(-1) F_(psi^-1)(z)); needs F^(-1)(z)(0) = 0."""
    zhat = fourier(z, -1)
    v0 = value_near_zero(zhat)
    if not v0.is_zero():
        raise NonvanishingAtZero(
            "Fourier inversion does not vanish at zero; Laf section undefined"
        )
    g, _ = excise_zero(zhat)
    return fourier(multiply_norm_power(g, -2), 1)


# ---------------------------------------------------------------------
# Steinberg character and friends
# ---------------------------------------------------------------------

def split_const_table(p: int, value, depth: int = 1) -> SplitTorusFn:
    vals = {}
    for u in range(1, p**depth):
        if u % p == 0:
            continue
        vals[(0, u)] = value
    return SplitTorusFn(p, depth, vals)


def indicator_label(psi: AddChar, alg: QuadAlg) -> CellFn:
    """Indicator of the label-alpha locus on the trace line (alpha != 0)."""
    def build():
        quot = NormOneQuotient(alg, 1)
        table = TorusFn(quot, {e: 1 for e in quot.elements})
        return descend_to_trace(psi, alg, table, weight=0)
    return _memo("ind_label", psi, alg.label, build=build)


def indicator_elliptic(psi: AddChar) -> CellFn:
    def build():
        p = psi.p
        out = CellFn.zero(psi)
        for lbl in ("1", "+1/2", "-1/2"):
            out = out + indicator_label(psi, QuadAlg(p, lbl))
        return out.normalize()
    return _memo("ind_ell", psi, build=build)


def v_delta_ell(psi: AddChar) -> CellFn:
    """The function v(c) Delta(c) 1_ell(c) (exact cells)."""
    def build():
        p = psi.p
        out = CellFn.zero(psi)
        for lbl in ("1", "+1/2", "-1/2"):
            alg = QuadAlg(p, lbl)
            quot = NormOneQuotient(alg, 1)
            table = TorusFn(quot, {e: 1 for e in quot.elements})
            piece = descend_to_trace(psi, alg, table, weight=-1)
            out = out + piece.scale(alg.vol_e1().inv())
        return out.normalize()
    return _memo("v_delta_ell", psi, build=build)


def phi_delta_half(psi: AddChar, kmax: int = 12) -> CellFn:
    """phi_(delta_B^(1/2))(c) = (|t| + |t|^(-1)) / Delta(c) on the split locus.

    The |v(t)| >= 1 part is the closed-form outward law (value q^(-2k) + 1 at
    v(c) = -k); the unit part comes from the split descent builder.
    """
    p = psi.p
    one = ExactScalar.one(p)
    def build():
        # v(c) = -k < 0: value (q^k + q^-k)/q^k = 1 + q^(-2k) = 1 + q^(2 v(c))
        tail_one = law(0, one, None, -1, one)
        tail_sq = law(0, one, None, -1, ExactScalar.from_rat(p, p * p))
        unit_part = descend_split_to_trace(psi, split_const_table(p, 2), weight=1)
        return (CellFn(psi, [tail_one, tail_sq]) + unit_part).normalize()
    return _memo("phi_delta_half", psi, build=build)


def steinberg_character(psi: AddChar) -> CellFn:
    """Theta_St = phi_(delta^1/2) - 1 on the split locus, -1 elsewhere."""
    p = psi.p
    one = ExactScalar.one(p)

    def build():
        # split, v(c) < 0: phi - 1 = q^(2 v(c))
        tail = law(0, one, None, -1, ExactScalar.from_rat(p, p * p))
        # split, v(c) >= 0: (2/Delta - 1) on the split classes of o
        unit_phi = descend_split_to_trace(psi, split_const_table(p, 2), weight=1)
        unit_one = descend_split_to_trace(psi, split_const_table(p, -1), weight=0)
        # elliptic: -1
        ell = indicator_elliptic(psi).scale(-1)
        return (CellFn(psi, [tail]) + unit_phi + unit_one + ell).normalize()

    return _memo("steinberg", psi, build=build)


# ---------------------------------------------------------------------
# Delta / v multipliers and the elliptic pairing
# ---------------------------------------------------------------------

def multiply_abs_power_at(f: CellFn, center: Fraction, half_exp: int) -> CellFn:
    """Multiply by |x - center|^(half_exp/2)."""
    return translate(
        multiply_norm_power(translate(f, Fraction(center)), half_exp),
        -Fraction(center),
    )


def multiply_delta_power(f: CellFn, half_exp: int) -> CellFn:
    """Multiply by Delta(c)^(half_exp) = |c-2|^(h/2)|c+2|^(h/2)."""
    return multiply_abs_power_at(
        multiply_abs_power_at(f, Fraction(2), half_exp), Fraction(-2), half_exp
    )


def elliptic_pairing(psi: AddChar, f: CellFn, g: CellFn) -> ExactScalar:
    """(f, g)_ell = integral over the elliptic locus of f conj(g) Delta v dx."""
    weighted = multiply(g.conj(), v_delta_ell(psi))
    return integrate_product(f, weighted)


def elliptic_pairing_weighted(psi: AddChar, f: CellFn, g_weighted: CellFn) -> ExactScalar:
    """(f, .)_ell against a precomputed conj(g) v Delta 1_ell weight."""
    return integrate_product(f, g_weighted)


def elliptic_weight(psi: AddChar, g: CellFn) -> CellFn:
    return multiply(g.conj(), v_delta_ell(psi))


def pair_trace_line(f: CellFn, g: CellFn) -> ExactScalar:
    """<f, g> = integral of f g dx on the trace line (no conjugation)."""
    return integrate_product(f, g)


# ---------------------------------------------------------------------
# descent data and the total-transfer compatibility check
# ---------------------------------------------------------------------

class DescentData:
    """Quadruple (J_alpha), split slot a SplitTorusFn, others TorusFns."""

    def __init__(self, slots: dict):
        self.slots = slots
        for lbl in LABELS:
            if lbl not in slots:
                raise CompatibilityViolation(f"missing slot {lbl}")

    def __getitem__(self, lbl: str):
        return self.slots[lbl]


def total_transfer(psi: AddChar, f: CellFn, depth: int) -> DescentData:
    p = psi.p
    slots = {}
    for lbl in LABELS:
        slots[lbl] = stable_transfer(psi, QuadAlg(p, lbl), f, depth)
    return DescentData(slots)


def compat_check(psi: AddChar, data: DescentData) -> dict:
    """Theorem-level compatibility of a descent quadruple.

    (a) <q_0, eta_alpha> = <q_alpha, 1> for nonsplit alpha;
    (b) <q_alpha, chi^qd> agree across the three nonsplit slots.
    Returns per-condition exact residuals.
    """
    p = psi.p
    q0: SplitTorusFn = data["0"]
    report = {}
    for lbl in ("1", "+1/2", "-1/2"):
        alg = QuadAlg(p, lbl)
        lhs = q0.mellin(alg.quad_char())
        rhs = data[lbl].pair_char(_trivial_char(data[lbl].quot))
        report[f"a:{lbl}"] = lhs - rhs
    qd_vals = {}
    for lbl in ("1", "+1/2", "-1/2"):
        qd = quadratic_torus_char(data[lbl].quot)
        qd_vals[lbl] = data[lbl].pair_char(qd)
    report["b:1=+1/2"] = qd_vals["1"] - qd_vals["+1/2"]
    report["b:1=-1/2"] = qd_vals["1"] - qd_vals["-1/2"]
    return report


def compat_ok(report: dict) -> bool:
    return all(v.is_zero() for v in report.values())


def _trivial_char(quot: NormOneQuotient) -> TorusChar:
    return TorusChar(quot, tuple(0 for _ in quot.generators()))


# ---------------------------------------------------------------------
# projections and sections
# ---------------------------------------------------------------------

def project_plus(J: TorusFn) -> TorusFn:
    """Remove the trivial-character component."""
    quot = J.quot
    vol = J.quot.alg.vol_e1().to_scalar()
    coeff = J.pair_char(_trivial_char(quot)) / vol
    ones = TorusFn(quot, {e: 1 for e in quot.elements})
    return J - ones.scale(coeff)


def project_plus_plus(J: TorusFn) -> TorusFn:
    """Remove the trivial and quadratic character components."""
    quot = J.quot
    vol = J.quot.alg.vol_e1().to_scalar()
    Jp = project_plus(J)
    qd = quadratic_torus_char(quot)
    coeff = Jp.pair_char(qd) / vol
    qd_fn = TorusFn.from_char(quot, qd)
    return Jp - qd_fn.scale(coeff)


def section_e_alpha(psi: AddChar, alg: QuadAlg, J: TorusFn) -> CellFn:
    """E_alpha(J) = 1_ell v Delta GG_alpha(nu_alpha(J) / (v Delta))."""
    if alg.is_split:
        raise SplitInput("use section_e0 for the split slot")
    if not J.is_tau_invariant():
        raise NotTauInvariant("E_alpha needs a tau-invariant slot")
    vol = alg.vol_e1()
    inner = descend_to_trace(psi, alg, J, weight=1).scale(vol)
    gg = gelfand_graev(psi, alg, inner)
    return multiply(gg, v_delta_ell(psi)).normalize()


def section_e0_from_nu(psi: AddChar, nu0: CellFn, depth: int = 2) -> CellFn:
    """E_0 given nu_0(J_0) as a cell function on the split locus."""
    p = psi.p
    out = nu0
    alg1 = QuadAlg(p, "1")
    t1 = stable_transfer(psi, alg1, nu0, depth)
    out = out - section_e_alpha(psi, alg1, t1)
    for lbl in ("+1/2", "-1/2"):
        alg = QuadAlg(p, lbl)
        t = stable_transfer(psi, alg, nu0, depth)
        out = out - section_e_alpha(psi, alg, project_plus_plus(t))
    return out.normalize()


def section_e0(psi: AddChar, J0: SplitTorusFn, depth: int = 2) -> CellFn:
    """E_0(J_0) = nu_0(J_0) - E_1(T_1(nu_0 J_0)) - sum E_alpha^++(...)."""
    return section_e0_from_nu(psi, descend_split_to_trace(psi, J0, weight=0), depth)


def section_e0_perp_st_from_nu(psi: AddChar, nu0: CellFn, depth: int = 2) -> CellFn:
    corr = pair_trace_line(nu0, one_minus_phi_delta(psi))
    return (section_e0_from_nu(psi, nu0, depth) - v_delta_ell(psi).scale(corr)).normalize()


def section_e0_perp_st(psi: AddChar, J0: SplitTorusFn, depth: int = 2) -> CellFn:
    """E_0^(perp St): subtracts v Delta 1_ell <nu_0(J_0), 1 - phi_(delta^1/2)>."""
    nu0 = descend_split_to_trace(psi, J0, weight=0)
    return section_e0_perp_st_from_nu(psi, nu0, depth)


def section_e0_perp_triv_from_nu(psi: AddChar, nu0: CellFn, depth: int = 2) -> CellFn:
    corr = integrate(nu0)
    return (section_e0_from_nu(psi, nu0, depth) - v_delta_ell(psi).scale(corr)).normalize()


def section_e0_perp_triv(psi: AddChar, J0: SplitTorusFn, depth: int = 2) -> CellFn:
    """E_0^(perp triv): subtracts v Delta 1_ell <nu_0(J_0), 1>."""
    nu0 = descend_split_to_trace(psi, J0, weight=0)
    return section_e0_perp_triv_from_nu(psi, nu0, depth)


def one_minus_phi_delta(psi: AddChar) -> CellFn:
    """1 - phi_(delta_B^(1/2)) as an integrable CellFn on supp(nu_0(J_0)).

    As a multiplier against compactly supported split functions only the
    finite window matters; the difference decays like q^(2 v(c)) at infinity
    and the pairing <nu_0(J_0), 1 - phi> is absolutely convergent.
    """
    p = psi.p
    one = ExactScalar.one(p)

    def build():
        # on v(c) = -k < 0: 1 - (1 + q^(-2k)) = -q^(2 v(c))
        tail = law(0, -one, None, -1, ExactScalar.from_rat(p, p * p))
        # on o: 1 - phi restricted to split classes, plus 1 on elliptic classes
        unit_phi = descend_split_to_trace(psi, split_const_table(p, 2), weight=1)
        ball_o = CellFn.indicator_ball(psi, 0, 0)
        return (ball_o - unit_phi + CellFn(psi, [tail])).normalize()

    return _memo("one_minus_phi_delta", psi, build=build)


def steinberg_coefficient(psi: AddChar, J: CellFn) -> ExactScalar:
    """<J, Theta_St^ell> = - integral of J over the elliptic locus."""
    ell_mass = integrate(multiply(J, indicator_elliptic(psi)))
    return ell_mass * ExactScalar.from_rat(psi.p, -1)


def invert_from_tori(psi: AddChar, data: DescentData, depth: int = 2) -> CellFn:
    """J = Laf(E_0^(perp triv)(J_0) + sum over nonsplit alpha E_alpha(J_alpha))."""
    p = psi.p
    report = compat_check(psi, data)
    if not compat_ok(report):
        bad = [k for k, v in report.items() if not v.is_zero()]
        raise CompatibilityViolation(f"descent data violates {bad}")
    assembled = section_e0_perp_triv(psi, data["0"], depth)
    for lbl in ("1", "+1/2", "-1/2"):
        assembled = assembled + section_e_alpha(psi, QuadAlg(p, lbl), data[lbl])
    return lafforgue(psi, assembled.normalize())
