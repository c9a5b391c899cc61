"""The finite-support stable Bernstein-center basis and its descent gammas.

Three families, realized as exact cell functions on the trace line:

* cuspidal(alpha, chi): the stable dihedral character GG_alpha(phi_chi);
* ramifiedPS(lambda0, n): split-supported, value lambda0(o^-1)/Delta at the
  trace of diag(pi^n o, pi^-n o^-1) (symmetrized when lambda0^2 = 1 or n=0);
* unramifiedPS(n): normalized to 1 on the elliptic locus, split values
  (1 - (q^k+q^-k)/Delta) + (I~(n+k) + I~(n-k))/Delta.

The unramified family is assembled from the raw two-piece formula, so its
compact support and vanishing integral are verified facts about the build,
not build inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .cellfn import CellFn, fourier, integrate, law, multiply_char, multiply_norm_power
from .chars import MultChar
from .errors import BadParams, NonvanishingAtZero
from .local import AddChar
from .scalars import ExactScalar
from .tori import (
    NormOneQuotient,
    QuadAlg,
    SplitTorusFn,
    TorusChar,
    descend_split_to_trace,
    pullback_from_trace,
)
from .transfer import (
    _memo,
    excise_zero,
    gelfand_graev,
    indicator_elliptic,
    lafforgue_section,
    pair_trace_line,
    phi_chi,
    split_const_table,
    stable_char_dihedral,
    stable_transfer,
    value_near_zero,
    weil_lambda,
)


@dataclass
class MoyTadicElem:
    kind: str
    params: tuple
    fn: CellFn
    # the compact (J_c,1) and noncompact (J_c,2) pieces for the vanishing
    # bookkeeping of the unramified family; None elsewhere
    piece_compact: CellFn | None = None
    piece_split: CellFn | None = None


def _tilde_i(p: int, n: int, l: int) -> Fraction:
    q = Fraction(p)
    denom = q**n + q**-n
    if l != 0:
        return q ** (-abs(l)) / denom
    return Fraction(-2) / ((q - 1) * denom)


def moy_tadic_basis(psi: AddChar, kind: str, params) -> MoyTadicElem:
    """Construct a basis element; see the module docstring for the kinds."""
    p = psi.p
    one = ExactScalar.one(p)
    if kind == "cuspidal":
        alg, chi = params
        if chi.is_trivial():
            raise BadParams("cuspidal elements need a nontrivial character")
        fn = stable_char_dihedral(psi, alg, chi)
        return MoyTadicElem(kind, (alg.label, chi.idx), fn)
    if kind == "ramifiedPS":
        lam0, n = params
        if lam0.c < 1:
            raise BadParams("ramifiedPS needs a ramified unit character")
        n = abs(int(n))
        depth = lam0.c
        vals: dict = {}
        sym = lam0.square().is_unit_trivial() or n == 0
        for u in range(1, p**depth):
            if u % p == 0:
                continue
            if sym:
                v = lam0.on_unit(u) + lam0.inv().on_unit(u)
                vals[(n, u)] = v
                if n:
                    vals[(-n, u)] = (
                        lam0.on_unit(pow(u, -1, p**depth))
                        + lam0.inv().on_unit(pow(u, -1, p**depth))
                    )
            else:
                vals[(n, u)] = lam0.inv().on_unit(u)
                vals[(-n, u)] = lam0.on_unit(u)
        table = SplitTorusFn(p, depth, vals)
        fn = descend_split_to_trace(psi, table, weight=1)
        return MoyTadicElem(kind, (lam0.c, lam0.t, n), fn)
    if kind == "unramifiedPS":
        n = int(params if isinstance(params, int) else params[0])
        if n < 0:
            raise BadParams("unramifiedPS needs n >= 0")
        q = Fraction(p)
        window = n + 4
        # compact piece: 1 on elliptic + (1 + (2 I~n - 2)/Delta) on split
        # classes of o
        compact = indicator_elliptic(psi)
        compact = compact + descend_split_to_trace(
            psi, split_const_table(p, 1), weight=0
        )
        w0 = 2 * _tilde_i(p, n, n) - 2
        compact = compact + descend_split_to_trace(
            psi, split_const_table(p, w0), weight=1
        )
        # noncompact piece: valuation v(c) = -k classes, 1 <= k <= window
        cells = []
        for k in range(1, window + 1):
            delta = q**k
            vk = (1 - (q**k + q**-k) / delta) + (
                _tilde_i(p, n, n + k) + _tilde_i(p, n, n - k)
            ) / delta
            if vk != 0:
                cells.append(law(0, ExactScalar.from_rat(p, vk), -k, -k, one))
        split_piece = CellFn(psi, cells)
        fn = (compact + split_piece).normalize()
        return MoyTadicElem(
            kind, (n,), fn, piece_compact=compact.normalize(), piece_split=split_piece
        )
    raise BadParams(f"unknown Moy-Tadic kind {kind}")


def check_vanishing_at_zero(elem: MoyTadicElem) -> ExactScalar:
    """The exact total integral of the element (expected 0)."""
    return integrate(elem.fn)


def intermediate_sums(elem: MoyTadicElem) -> tuple[ExactScalar, ExactScalar]:
    """(integral of J_c,1, integral of J_c,2) for the unramified family."""
    if elem.piece_compact is None:
        raise BadParams("intermediate sums exist for unramifiedPS only")
    return integrate(elem.piece_compact), integrate(elem.piece_split)


def check_compact_support(elem: MoyTadicElem, kmax: int | None = None) -> dict[int, ExactScalar]:
    """Values at traces of diag(pi^k o, pi^-k o^-1) for k beyond the

    stated support; exact zeros certify the paper's cancellation."""
    if elem.kind != "unramifiedPS":
        raise BadParams("support check applies to unramifiedPS")
    (n,) = elem.params
    p = elem.fn.p
    out = {}
    top = kmax if kmax is not None else n + 3
    for k in range(1, top + 1):
        c = Fraction(p) ** k + Fraction(p) ** (-k)
        out[k] = elem.fn.evaluate(c)
    return out


# ---------------------------------------------------------------------
# descent gammas (the two routes)
# ---------------------------------------------------------------------

def descent_kernel(psi: AddChar, z: CellFn, alg: QuadAlg) -> CellFn:
    """F_psi(F_(psi^-1)(J_c) eta / |.|) on the trace line."""
    zhat = fourier(z, -1)
    v0 = value_near_zero(zhat)
    if not v0.is_zero():
        raise NonvanishingAtZero("descent needs the Fourier inversion to vanish at 0")
    g, _ = excise_zero(zhat)
    g = multiply_norm_power(g, -2)
    if not alg.is_split:
        g = multiply_char(g, alg.quad_char())
    return fourier(g, 1)


def descent_gamma(
    psi: AddChar, z: CellFn, alg: QuadAlg, chi: TorusChar | MultChar, depth: int = 1
) -> ExactScalar:
    """gamma(z, W(chi)) = lambda int over E^1 of the descent kernel at tr(e)
    against chi; split slot via the Mellin transform of the restriction."""
    w = descent_kernel(psi, z, alg)
    if alg.is_split:
        slot = stable_transfer(psi, alg, w, depth)
        return slot.mellin(chi)
    lam = weil_lambda(psi, alg)
    quot = chi.quot if isinstance(chi, TorusChar) else NormOneQuotient(alg, depth)
    table = pullback_from_trace(quot, w)
    return table.pair_char(chi) * lam


def descent_gamma_via_pairing(
    psi: AddChar, z: CellFn, alg: QuadAlg, chi: TorusChar
) -> ExactScalar:
    """gamma(z, W(chi)) = <LafSec(z), theta^st_chi> (Corollary route)."""
    laf_sec = lafforgue_section(psi, z)
    theta = stable_char_dihedral(psi, alg, chi)
    return pair_trace_line(laf_sec, theta)
