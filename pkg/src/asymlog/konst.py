"""Exact symbolic constants: the coefficient field.

A ``Konst`` is an exact real constant built from rationals, pi, exp and log
of constants, rational powers, and real algebraic numbers (``KAlg``).
Construction goes through the constructor functions (``kadd``, ``kmul``,
``kpow``, ``kexp``, ``klog``, ...) which maintain a canonical normal form:

* sums are flattened, like monomials collected, rationals folded;
* products are flattened with exponents collected per base, and all
  exponential factors merged into a single ``KExp``;
* ``exp(log(c)) = c`` and ``log(exp(c)) = c``, logs of rationals split
  over prime factors, rational perfect powers extracted, integer powers
  of sums expanded.

Equal rationals always compare structurally equal.  Sign queries use the
normal form first and fall back to adaptive interval evaluation, doubling
precision up to a cap; a value that still straddles zero raises
``UndecidedZeroTest`` instead of guessing.

Complex constants are exact real pairs (``CKonst``).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from mpmath import iv
from mpmath.libmp import to_rational

from .errors import DomainError, PrecisionExhausted, UndecidedZeroTest

RatLike = Union[int, Fraction]

DEFAULT_SIGN_CAP = 4096


class Konst:
    """Base class for exact real constants."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class KRat(Konst):
    """An exact rational."""

    q: Fraction


@dataclass(frozen=True, slots=True)
class KPi(Konst):
    """The constant pi."""


@dataclass(frozen=True, slots=True)
class KExp(Konst):
    """exp(arg); Euler's e is KExp(1)."""

    arg: Konst


@dataclass(frozen=True, slots=True)
class KLog(Konst):
    """log(arg) with arg certified positive at construction."""

    arg: Konst


@dataclass(frozen=True, slots=True)
class KAlg(Konst):
    """The unique root of ``poly`` (low-to-high Konst coeffs) in (lo, hi).

    The isolating interval never contains 0; refinement preserves the
    root's identity.  Equality and hashing use the construction data.
    """

    poly: tuple[Konst, ...]
    lo: Fraction
    hi: Fraction


@dataclass(frozen=True, slots=True)
class KSum(Konst):
    """const + sum(coeff * mono); monomials carry no rational coefficient."""

    const: Fraction
    terms: tuple[tuple[Konst, Fraction], ...]


@dataclass(frozen=True, slots=True)
class KProd(Konst):
    """coef * prod(base ** expo) with rational coef and exponents."""

    coef: Fraction
    powers: tuple[tuple[Konst, Fraction], ...]


K_ZERO = KRat(Fraction(0))
K_ONE = KRat(Fraction(1))
K_PI = KPi()
K_E = KExp(K_ONE)


def krat(p: RatLike, q: RatLike = 1) -> KRat:
    return KRat(Fraction(p, q) if q != 1 else Fraction(p))


def is_zero(k: Konst) -> bool:
    """Structural zero test (normal forms make rational zeros structural)."""
    return isinstance(k, KRat) and k.q == 0


def is_one(k: Konst) -> bool:
    return isinstance(k, KRat) and k.q == 1


def as_fraction(k: Konst) -> Fraction | None:
    return k.q if isinstance(k, KRat) else None


def is_integer_konst(k: Konst) -> bool:
    return isinstance(k, KRat) and k.q.denominator == 1


# ---------------------------------------------------------------------------
# canonical ordering

def konst_key(k: Konst):
    """Total-order sort key; rationals rank before transcendentals."""
    if isinstance(k, KRat):
        return (0, k.q.numerator, k.q.denominator)
    if isinstance(k, KPi):
        return (1,)
    if isinstance(k, KExp):
        return (2, konst_key(k.arg))
    if isinstance(k, KLog):
        return (3, konst_key(k.arg))
    if isinstance(k, KAlg):
        return (4, tuple(konst_key(c) for c in k.poly),
                (k.lo.numerator, k.lo.denominator),
                (k.hi.numerator, k.hi.denominator))
    if isinstance(k, KProd):
        return (5, tuple((konst_key(b), e.numerator, e.denominator)
                         for b, e in k.powers),
                (k.coef.numerator, k.coef.denominator))
    if isinstance(k, KSum):
        return (6, tuple((konst_key(t), c.numerator, c.denominator)
                         for t, c in k.terms),
                (k.const.numerator, k.const.denominator))
    raise TypeError(f"not a Konst: {k!r}")


# ---------------------------------------------------------------------------
# sums

def _as_terms(k: Konst) -> tuple[Fraction, list[tuple[Konst, Fraction]]]:
    """Decompose into (rational const, [(monomial, coeff)])."""
    if isinstance(k, KRat):
        return k.q, []
    if isinstance(k, KSum):
        return k.const, list(k.terms)
    if isinstance(k, KProd):
        return Fraction(0), [(_monic(k.powers), k.coef)]
    return Fraction(0), [(k, Fraction(1))]


def _monic(powers: tuple[tuple[Konst, Fraction], ...]) -> Konst:
    if len(powers) == 1 and powers[0][1] == 1:
        return powers[0][0]
    return KProd(Fraction(1), powers)


def _term_konst(mono: Konst, coeff: Fraction) -> Konst:
    if coeff == 1:
        return mono
    if isinstance(mono, KProd):
        return KProd(mono.coef * coeff, mono.powers)
    return KProd(coeff, ((mono, Fraction(1)),))


def _monom_pairs(mono: Konst) -> tuple[tuple[Konst, Fraction], ...]:
    if isinstance(mono, KProd):
        return mono.powers
    return ((mono, Fraction(1)),)


def _mview(mono: Konst) -> tuple[dict[Konst, Fraction], Konst]:
    """(plain pairs, exponential argument) view of a monomial.

    Exponentials fold exponents into their argument (e * e is exp(2), not
    a pair), so divisibility and common factors must be read off the
    summed argument, not off atom identity.
    """
    pairs: dict[Konst, Fraction] = {}
    earg: Konst = K_ZERO
    for b, e in _monom_pairs(mono):
        if isinstance(b, KExp):
            earg = kadd(earg, _rat_scale(b.arg, e))
        else:
            pairs[b] = pairs.get(b, Fraction(0)) + e
    return pairs, earg


def _mbuild(pairs: dict[Konst, Fraction],
            earg: Konst) -> tuple[Fraction, tuple[tuple[Konst, Fraction], ...]]:
    """Rebuild (coefficient, power pairs) from a monomial view, folding
    rational bases at whole exponents and rebuilding the exponential."""
    coef = Fraction(1)
    out: dict[Konst, Fraction] = {}
    for b, e in pairs.items():
        if e == 0:
            continue
        if isinstance(b, KRat) and e.denominator == 1:
            coef *= b.q ** e.numerator
            continue
        out[b] = out.get(b, Fraction(0)) + e
    if not is_zero(earg):
        c, terms = _as_terms(kexp(earg))
        if terms:
            m, q = terms[0]
            coef *= q
            for b, e in _monom_pairs(m):
                e2 = out.get(b, Fraction(0)) + e
                if e2 == 0:
                    out.pop(b, None)
                else:
                    out[b] = e2
        else:
            coef *= c
    final = sorted(((b, e) for b, e in out.items() if e != 0),
                   key=lambda be: konst_key(be[0]))
    return coef, tuple(final)


def kadd(*ks: Konst) -> Konst:
    const = Fraction(0)
    acc: dict[Konst, Fraction] = {}
    for k in ks:
        c, terms = _as_terms(k)
        const += c
        for mono, coeff in terms:
            acc[mono] = acc.get(mono, Fraction(0)) + coeff
    acc = {m: c for m, c in acc.items() if c != 0}
    # a quotient monomial anywhere forces the whole sum onto one common
    # denominator; otherwise different routes to a sum of fractions
    # reassociate differently and numerators never cancel:
    # pi/(1+pi) + 1/(1+pi) -> 1
    need: dict[Konst, Fraction] = {}
    for mono in acc:
        for b, e in _monom_pairs(mono):
            if e < 0 and isinstance(b, KSum):
                need[b] = max(need.get(b, Fraction(0)), -e)
    if need and (const != 0 or len(acc) > 1):
        bases = sorted(need, key=konst_key)
        # the denominator stays an unexpanded power product here: expanding
        # (1+pi)^2 into a fresh sum would never cancel against the terms'
        # negative exponents and the regrouping would not converge
        den = KProd(Fraction(1), tuple((b, need[b]) for b in bases))
        dinv = KProd(Fraction(1), tuple((b, -need[b]) for b in bases))
        parts = [kmul(_term_konst(m, c), den) for m, c in acc.items()]
        if const:
            parts.append(kmul(KRat(const), den))
        return kmul(kadd(*parts), dinv)
    terms = tuple(sorted(acc.items(), key=lambda mc: konst_key(mc[0])))
    if not terms:
        return KRat(const)
    if const == 0 and len(terms) == 1:
        return _term_konst(*terms[0])
    return KSum(const, terms)


def ksub(a: Konst, b: Konst) -> Konst:
    return kadd(a, kneg(b))


def kneg(k: Konst) -> Konst:
    return kmul(KRat(Fraction(-1)), k)


# ---------------------------------------------------------------------------
# products

def kmul(*ks: Konst) -> Konst:
    """Product with full normalization (exponent collection, expansion)."""
    coef = Fraction(1)
    expo_map: dict[Konst, Fraction] = {}
    order: list[Konst] = []
    exp_args: list[Konst] = []

    def put(base: Konst, expo: Fraction) -> None:
        if isinstance(base, KExp):
            exp_args.append(_rat_scale(base.arg, expo))
            return
        if isinstance(base, KSum):
            # normalize any sum entering a slot: shed common monomial
            # content and the unit so equal quotients actually collide
            content, u, prim = _ksum_shed(base, expo)
            for b, a in content:
                put(b, a * expo)
            if u != 1:
                put(KRat(u), expo)
            base = prim
        if base not in expo_map:
            expo_map[base] = Fraction(0)
            order.append(base)
        expo_map[base] += expo

    for k in ks:
        if isinstance(k, KRat):
            coef *= k.q
        elif isinstance(k, KProd):
            coef *= k.coef
            for b, e in k.powers:
                put(b, e)
        else:
            put(k, Fraction(1))
    if coef == 0:
        return K_ZERO

    # fold the merged exponential; log extraction may emit rational powers
    if exp_args:
        folded = kexp(kadd(*exp_args))
        if isinstance(folded, KProd):
            coef *= folded.coef
            for b, e in folded.powers:
                if isinstance(b, KExp):
                    expo_map[b] = expo_map.get(b, Fraction(0)) + e
                    if b not in order:
                        order.append(b)
                else:
                    put(b, e)
        elif isinstance(folded, KRat):
            coef *= folded.q
        elif not is_one(folded):
            expo_map[folded] = expo_map.get(folded, Fraction(0)) + 1
            if folded not in order:
                order.append(folded)
    if coef == 0:
        return K_ZERO

    # rebuild each base canonically; sums with positive integer exponents
    # are queued for expansion
    pairs: dict[Konst, Fraction] = {}
    pair_order: list[Konst] = []
    sums: list[Konst] = []

    def put_final(base: Konst, expo: Fraction) -> None:
        if expo == 0:
            return
        if base not in pairs:
            pairs[base] = Fraction(0)
            pair_order.append(base)
        pairs[base] += expo

    for base in order:
        expo = expo_map[base]
        if expo == 0:
            continue
        if isinstance(base, KSum) and expo.denominator == 1 and expo > 0:
            sums.extend([base] * expo.numerator)
            continue
        piece = kpow_pair(base, expo)
        if isinstance(piece, KRat):
            coef *= piece.q
        elif isinstance(piece, KProd):
            coef *= piece.coef
            for b, e in piece.powers:
                put_final(b, e)
        else:
            put_final(piece, Fraction(1))
    if coef == 0:
        return K_ZERO

    # exponents merged across canonicalization may need one more reduction
    # (e.g. 2^(1/2) * 2^(1/2) -> 2^1 -> fold into coef)
    final: list[tuple[Konst, Fraction]] = []
    for base in pair_order:
        expo = pairs[base]
        if expo == 0:
            continue
        if isinstance(base, KRat) or (
                isinstance(base, KSum) and expo.denominator == 1 and expo > 0):
            piece = kpow_pair(base, expo) if isinstance(base, KRat) else None
            if piece is None:
                sums.extend([base] * expo.numerator)
                continue
            if isinstance(piece, KRat):
                coef *= piece.q
                continue
            assert isinstance(piece, KProd)
            coef *= piece.coef
            final.extend(piece.powers)
        else:
            final.append((base, expo))
    if coef == 0:
        return K_ZERO
    # parallel sum denominators merge into the single expanded one that
    # 1/((a)*(b)) builds; pi^2/((a)*(b)) and pi^2/(a)/(b) must collide.
    # with a numerator sum pending, division runs first: the factor a
    # common-denominator pass duplicated must cancel before it is melted
    # into the other denominators beyond division's reach
    if not sums:
        piece = _merge_dens(coef, final)
        if piece is not None:
            return piece
    # with a sum-typed denominator present, keep the rational-function form
    # (numerator sums unexpanded) so division does not loop through kadd
    if sums and any(isinstance(b, KSum) and e < 0 for b, e in final):
        if any(b in set(sums) for b, _ in final):
            # a cancelling pair surfaced late (say a square expanded into a
            # base already dividing the product); rerun the reduction
            parts: list[Konst] = [KRat(coef)]
            parts += [KProd(Fraction(1), ((b, e),)) for b, e in final]
            parts += sums
            return kmul(*parts)
        # everything above the fraction bar collapses into one expanded
        # numerator so both routes to a quotient agree; only sum-typed
        # denominators stay out (plain reciprocals distribute, exactly as
        # they would were no sum dividing the product)
        dens = [(b, e) for b, e in final
                if e < 0 and isinstance(b, KSum)]
        rest = [(b, e) for b, e in final
                if not (e < 0 and isinstance(b, KSum))]
        num: Konst = _build_prod(Fraction(1), rest)
        for s in sums:
            num = _distribute(num, s)
        pairs = list(dens)
        den_keys = {b for b, _ in dens}
        if isinstance(num, KRat):
            coef *= num.q
        elif isinstance(num, KProd):
            coef *= num.coef
            if any(b in den_keys for b, _ in num.powers):
                return kmul(KRat(coef), KProd(Fraction(1), tuple(dens)),
                            KProd(Fraction(1), num.powers))
            pairs.extend(num.powers)
        elif isinstance(num, KSum):
            content, u, prim = _ksum_shed(num, Fraction(1))
            coef *= u
            if prim in den_keys or any(b in den_keys for b, _ in content):
                return kmul(KRat(coef), KProd(Fraction(1), tuple(dens)),
                            KProd(Fraction(1),
                                  content + ((prim, Fraction(1)),)))
            red = _cancel_dens(prim, dens)
            if red is not None:
                parts = [KRat(coef)]
                parts += [KProd(Fraction(1), ((b, e),)) for b, e in content]
                parts += red
                return kmul(*parts)
            pairs.extend(content)
            pairs.append((prim, Fraction(1)))
        else:
            pairs.append((num, Fraction(1)))
        if coef == 0:
            return K_ZERO
        piece = _merge_dens(coef, pairs)
        if piece is not None:
            return piece
        pairs.sort(key=lambda be: konst_key(be[0]))
        return _build_prod(coef, pairs)
    final.sort(key=lambda be: konst_key(be[0]))
    core = _build_prod(coef, final)
    for s in sums:
        core = _distribute(core, s)
    return core


def _merge_dens(coef: Fraction,
                pairs: list[tuple[Konst, Fraction]]) -> Konst | None:
    dens = [(b, e) for b, e in pairs
            if isinstance(b, KSum) and e < 0 and e.denominator == 1]
    if len(dens) < 2:
        return None
    keep = [(b, e) for b, e in pairs if (b, e) not in dens]
    parts = [KRat(coef)]
    parts += [KProd(Fraction(1), ((b, e),)) for b, e in keep]
    merged = kmul(*[kpow(b, -e) for b, e in dens])
    parts.append(kpow(merged, Fraction(-1)))
    return kmul(*parts)


def _build_prod(coef: Fraction, powers: list[tuple[Konst, Fraction]]) -> Konst:
    if not powers:
        return KRat(coef)
    if coef == 1 and len(powers) == 1 and powers[0][1] == 1:
        return powers[0][0]
    return KProd(coef, tuple(powers))


def _distribute(a: Konst, s: Konst) -> Konst:
    """a * s with s a KSum, expanding the sum."""
    c, terms = _as_terms(s)
    parts: list[Konst] = []
    if c:
        parts.append(kmul(a, KRat(c)))
    parts += [kmul(a, _term_konst(m, q)) for m, q in terms]
    return kadd(*parts) if parts else K_ZERO


def _rat_scale(k: Konst, q: Fraction) -> Konst:
    return kmul(KRat(q), k)


def _mvec(mono: Konst) -> dict[tuple, Fraction]:
    """Exponent vector of a monomial in a multiplicative order.

    Division needs a term order compatible with products (largest term of
    a product = product of largest terms); the structural sort is not.
    Exponential arguments decompose linearly, so every dimension carries
    an exact Fraction and vectors add under monomial multiplication.
    """
    pairs, earg = _mview(mono)
    vec: dict[tuple, Fraction] = {
        ("b", konst_key(b)): e for b, e in pairs.items()}
    ec, eterms = _as_terms(earg)
    if ec:
        vec[("e",)] = ec
    for m, c in eterms:
        vec[("r", konst_key(m))] = c
    return vec


def _vgt(a: dict[tuple, Fraction], b: dict[tuple, Fraction]) -> bool:
    """Strictly greater in the lex order over exponent vectors."""
    for d in sorted(set(a) | set(b), reverse=True):
        ea, eb = a.get(d, Fraction(0)), b.get(d, Fraction(0))
        if ea != eb:
            return ea > eb
    return False


def _lead(terms) -> tuple[Konst, Fraction, dict[tuple, Fraction]]:
    """Largest (monomial, coeff, vector) under the division order."""
    lm, lc = terms[0]
    lv = _mvec(lm)
    for m, c in terms[1:]:
        v = _mvec(m)
        if _vgt(v, lv):
            lm, lc, lv = m, c, v
    return lm, lc, lv


def _mono_div(a: Konst, b: Konst) -> \
        tuple[dict[Konst, Fraction], Konst] | None:
    """Quotient view of two monic monomials, or None whenever any plain
    base of b would be driven below zero (classic divisibility).
    Exponential parts subtract on the argument and never block."""
    out, ea = _mview(a)
    bp, eb = _mview(b)
    for base, e in bp.items():
        e2 = out.get(base, Fraction(0)) - e
        if e2 < 0:
            return None
        if e2 == 0:
            out.pop(base, None)
        else:
            out[base] = e2
    return out, kadd(ea, kneg(eb))


def _mono_mul(m: tuple[dict[Konst, Fraction], Konst], other: Konst) -> \
        tuple[Fraction, tuple[tuple[Konst, Fraction], ...]] | None:
    """m * other at the exponent level, never expanding.

    Rational bases reaching a whole exponent fold into the coefficient.
    A sum base reaching a positive whole exponent bails out: kmul would
    expand it there, and a division remainder holding the unexpanded
    monomial could never collide with the expansion.
    """
    mp, me = m
    out = dict(mp)
    op, oe = _mview(other)
    for base, e in op.items():
        out[base] = out.get(base, Fraction(0)) + e
    coef, pairs = _mbuild(out, kadd(me, oe))
    for base, e in pairs:
        if isinstance(base, KSum) and e.denominator == 1 and e > 0:
            return None
    return coef, pairs


def _try_div(a: Konst, b: KSum) -> Konst | None:
    """Exact quotient a / b over monomial sums, or None.

    Leading-term long division, self-checking: a quotient comes back only
    when the remainder lands on exactly zero, so an unlucky term order can
    miss a cancellation but never fabricate one.
    """
    bc, bt = _as_terms(b)
    lb, cb, bv = _lead(bt)
    out: list[Konst] = []
    r: Konst = a
    last = None
    for _ in range(60):
        rc, rt = _as_terms(r)
        if not rt:
            if rc == 0 and out:
                return kadd(*out)
            return None
        lr, cr, rv = _lead(rt)
        if last is not None and not _vgt(last, rv):
            return None  # leading term survived; order quirk, give up
        last = rv
        m = _mono_div(lr, lb)
        if m is None:
            return None
        q = cr / cb
        mk, mpairs = _mbuild(*m)
        subs: list[Konst] = []
        for tm, tc in bt:
            prod = _mono_mul(m, tm)
            if prod is None:
                return None
            k, pairs = prod
            c = -q * tc * k
            subs.append(_term_konst(_monic(pairs), c) if pairs else KRat(c))
        if bc:
            c = -q * bc * mk
            subs.append(_term_konst(_monic(mpairs), c) if mpairs else KRat(c))
        r = kadd(r, *subs)
        out.append(_term_konst(_monic(mpairs), q * mk)
                   if mpairs else KRat(q * mk))
    return None


def _cancel_dens(prim: Konst,
                 dens: list[tuple[Konst, Fraction]]) -> list[Konst] | None:
    """Cancel an expanded numerator sum against sum denominators.

    Returns replacement factors for prim * dens once an exact division
    fires, None otherwise.  (1/4 + pi + pi^2) over (1/2 + pi) must fall
    back to 1/2 + pi: expansion erased the factored form, division
    recovers it.
    """
    if not isinstance(prim, KSum):
        return None
    for i, (db, de) in enumerate(dens):
        if de.denominator != 1 or not isinstance(db, KSum):
            continue
        rest = [KProd(Fraction(1), ((b, e),))
                for j, (b, e) in enumerate(dens) if j != i]
        q = _try_div(prim, db)
        if q is not None:
            if de != -1:
                rest.append(KProd(Fraction(1), ((db, de + 1),)))
            return [q] + rest
        q = _try_div(db, prim)
        if q is not None and isinstance(q, KSum):
            rest.append(kpow(prim, de + 1))
            rest.append(kpow(q, de))
            return rest
    return None




def kinv(k: Konst) -> Konst:
    return kpow(k, Fraction(-1))


def kdiv(a: Konst, b: Konst) -> Konst:
    return kmul(a, kinv(b))


# ---------------------------------------------------------------------------
# powers

def _int_nth_root(n: int, r: int) -> int | None:
    """Exact r-th root of n >= 1, or None."""
    if n == 1:
        return 1
    lo, hi = 1, 1 << (n.bit_length() // r + 1)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if mid ** r <= n:
            lo = mid
        else:
            hi = mid - 1
    return lo if lo ** r == n else None


def _perfect_power(n: int) -> tuple[int, int]:
    """Largest k with n = b**k for n >= 2; returns (b, k)."""
    for k in range(n.bit_length(), 1, -1):
        b = _int_nth_root(n, k)
        if b is not None:
            return (b, k)
    return (n, 1)


def kpow(k: Konst, expo: RatLike) -> Konst:
    """k ** expo with exact rational exponent.

    Fractional exponents require a positive base; a base certified
    negative raises DomainError (complex results live in CKonst).
    """
    q = Fraction(expo)
    if q == 0:
        return K_ONE
    if q == 1:
        return k
    if isinstance(k, KSum) and q.denominator == 1 and q > 0:
        out: Konst = K_ONE
        for _ in range(q.numerator):
            out = kmul(out, k)
        return out
    if isinstance(k, KProd):
        return _kpow_prod(k, q)
    return kpow_pair(k, q)


def kpow_pair(base: Konst, q: Fraction) -> Konst:
    """Canonical power base**q without distributing over sums."""
    if q == 0:
        return K_ONE
    if isinstance(base, KRat):
        return _kpow_rat(base.q, q)
    if isinstance(base, KExp):
        return kexp(_rat_scale(base.arg, q))
    if isinstance(base, KProd):
        return _kpow_prod(base, q)
    if q.denominator > 1 and konst_sign(base) < 0:
        raise DomainError("fractional power of negative constant")
    if q == 1:
        return base
    if isinstance(base, KSum):
        content, u, prim = _ksum_shed(base, q)
        if content or u != 1:
            parts = [_kpow_rat(u, q)]
            parts += [kpow_pair(b, a * q) for b, a in content]
            parts.append(kpow_pair(prim, q))
            return kmul(*parts)
        if q.denominator == 1 and q < -1:
            # sum denominators stay at exponent -1 with the base expanded,
            # so both routes to a quotient cancel identically
            return kpow(kpow(base, -q), Fraction(-1))
    return KProd(Fraction(1), ((base, q),))


def _ksum_unit(s: KSum, q: Fraction) -> Fraction:
    """Rational scale a sum sheds when it becomes a product base.

    This keeps 2*(pi+1) and (2*pi+2) from producing distinct quotient
    forms.  Fractional exponents shed only the positive magnitude.
    """
    u = s.terms[-1][1]
    if q.denominator > 1 and u < 0:
        return -u
    return u


def _scale_ksum(s: KSum, c: Fraction) -> Konst:
    # structural scaling; must not route through kmul, which normalizes
    # sum bases and would recurse back here
    return kadd(KRat(s.const * c),
                *[_term_konst(m, co * c) for m, co in s.terms])


def _ksum_shed(s: KSum, q: Fraction) -> tuple[
        tuple[tuple[Konst, Fraction], ...], Fraction, Konst]:
    """Split a sum headed for a product slot into content, unit, primitive.

    Content is the common monomial factor: positive exponents shared by
    every term, and any negative exponent cleared outright, so 1 + pi^(-2)
    enters a slot as pi^(-2) * (pi^2 + 1).  The unit is the coefficient of
    the structurally largest remaining term.  e/2 + pi*e must reach the
    same slot as e*(1/2 + pi), or the two can never cancel against a
    shared denominator.  Under a fractional exponent only provably
    positive factors may move out.
    """
    content: tuple[tuple[Konst, Fraction], ...] = ()
    prim: Konst = s
    parts: list[tuple[dict[Konst, Fraction], Konst, Fraction]] = [
        (*_mview(mono), co) for mono, co in s.terms]
    if s.const != 0:
        parts.append(({}, K_ZERO, s.const))
    # the exponential factor is minned on the rational part of its
    # argument; anything beyond that stays inside the terms
    erats = [_as_terms(earg)[0] for _, earg, _ in parts]
    bases = {b for pairs, _, _ in parts for b in pairs}
    mins = {b: min(pairs.get(b, Fraction(0)) for pairs, _, _ in parts)
            for b in bases}
    mins = {b: e for b, e in mins.items()
            if e != 0 and (q.denominator == 1 or _struct_sign(b) == 1)}
    emin = min(erats)
    if mins or emin != 0:
        rebuilt: list[Konst] = []
        for pairs, earg, co in parts:
            left = {b: (e - mins[b] if b in mins else e)
                    for b, e in pairs.items()}
            for b, e in mins.items():
                if b not in pairs:
                    left[b] = -e
            ea = kadd(earg, KRat(-emin)) if emin else earg
            k, built = _mbuild(left, ea)
            rebuilt.append(_term_konst(_monic(built), co * k) if built
                           else KRat(co * k))
        prim2 = kadd(*rebuilt)
        if isinstance(prim2, KSum):
            content = tuple(sorted(mins.items(),
                                   key=lambda be: konst_key(be[0])))
            if emin:
                content += ((KExp(K_ONE), emin),)
            prim = prim2
    u = Fraction(1)
    if isinstance(prim, KSum):
        u = _ksum_unit(prim, q)
        if u != 1:
            p2 = _scale_ksum(prim, 1 / u)
            if isinstance(p2, KSum):
                prim = p2
            else:
                u = Fraction(1)
    return content, u, prim


def _kpow_rat(r: Fraction, q: Fraction) -> Konst:
    """Canonical r**q: split over prime factors, extract whole powers.

    sqrt(12) and 2*sqrt(3) land on the same normal form this way.
    """
    if r == 0:
        if q < 0:
            raise DomainError("0 ** negative exponent")
        return K_ZERO
    if q.denominator == 1:
        return KRat(r ** q.numerator)
    if r < 0:
        raise DomainError("fractional power of negative rational")
    coef = Fraction(1)
    pairs: list[tuple[Konst, Fraction]] = []
    for p, a in _factor_int(r.numerator):
        whole, rem = divmod(a * q.numerator, q.denominator)
        coef *= Fraction(p) ** whole
        if rem:
            pairs.append((krat(p), Fraction(rem, q.denominator)))
    for p, a in _factor_int(r.denominator):
        whole, rem = divmod(-a * q.numerator, q.denominator)
        coef *= Fraction(p) ** whole
        if rem:
            pairs.append((krat(p), Fraction(rem, q.denominator)))
    pairs.sort(key=lambda be: konst_key(be[0]))
    return _build_prod(coef, pairs)


def _kpow_prod(k: KProd, q: Fraction) -> Konst:
    if q.denominator == 1:
        parts: list[Konst] = [_kpow_rat(k.coef, q)]
        parts += [kpow_pair(b, e * q) for b, e in k.powers]
        return kmul(*parts)
    # fractional exponent: every factor must be made positive
    sgn = 1 if k.coef > 0 else -1
    parts = [_kpow_rat(abs(k.coef), q)]
    for b, e in k.powers:
        if e.denominator > 1:
            parts.append(kpow_pair(b, e * q))  # positive by invariant
            continue
        s = konst_sign(b)
        if s == 0:
            raise DomainError("power of zero factor")
        if s < 0:
            sgn *= -1 if e.numerator % 2 else 1
            b = kneg(b)
        parts.append(kpow_pair(b, e * q))
    if sgn < 0:
        raise DomainError("fractional power of negative constant")
    return kmul(*parts)


# ---------------------------------------------------------------------------
# exp and log

def kexp(a: Konst) -> Konst:
    if is_zero(a):
        return K_ONE
    if isinstance(a, KLog):
        return a.arg
    if isinstance(a, KSum):
        power_parts: list[Konst] = []
        rest_terms: list[tuple[Konst, Fraction]] = []
        for mono, coeff in a.terms:
            if isinstance(mono, KLog):
                power_parts.append(kpow_pair(mono.arg, coeff))
            else:
                rest_terms.append((mono, coeff))
        if power_parts:
            rest: Konst = KRat(a.const)
            for m, c in rest_terms:
                rest = kadd(rest, _term_konst(m, c))
            return kmul(kexp(rest), *power_parts)
        return KExp(a)
    if isinstance(a, KProd):
        if len(a.powers) == 1 and a.powers[0][1] == 1 \
                and isinstance(a.powers[0][0], KLog):
            return kpow_pair(a.powers[0][0].arg, a.coef)
        return KExp(a)
    return KExp(a)


def _factor_int(n: int) -> list[tuple[int, int]]:
    """Prime-power factorization by trial division; big cofactors kept whole
    (after perfect-power extraction), which is canonical enough for logs."""
    out: list[tuple[int, int]] = []
    p = 2
    while p * p <= n and p < 100_000:
        e = 0
        while n % p == 0:
            n //= p
            e += 1
        if e:
            out.append((p, e))
        p += 1 if p == 2 else 2
    if n > 1:
        b, k = _perfect_power(n)
        out.append((b, k))
    return out


def klog(a: Konst) -> Konst:
    """log(a); requires a certified positive."""
    if isinstance(a, KRat):
        if a.q <= 0:
            raise DomainError("log of a nonpositive rational")
        if a.q == 1:
            return K_ZERO
        parts: list[Konst] = []
        for p, e in _factor_int(a.q.numerator):
            parts.append(_rat_scale(KLog(krat(p)), Fraction(e)))
        for p, e in _factor_int(a.q.denominator):
            parts.append(_rat_scale(KLog(krat(p)), Fraction(-e)))
        return kadd(*parts)
    if isinstance(a, KExp):
        return a.arg
    if isinstance(a, KProd):
        sgn = 1 if a.coef > 0 else -1
        fixed: list[tuple[Konst, Fraction]] = []
        for b, e in a.powers:
            if e.denominator > 1:
                fixed.append((b, e))  # positive base by invariant
                continue
            s = konst_sign(b)
            if s == 0:
                raise DomainError("log of zero factor")
            if s < 0:
                sgn *= -1 if e.numerator % 2 else 1
                b = kneg(b)
            fixed.append((b, e))
        if sgn < 0:
            raise DomainError("log of a negative constant")
        parts = [] if abs(a.coef) == 1 else [klog(KRat(abs(a.coef)))]
        parts += [_rat_scale(klog(b), e) for b, e in fixed]
        return kadd(*parts)
    if konst_sign(a) <= 0:
        raise DomainError("log of a nonpositive constant")
    return KLog(a)


def ksqrt(a: Konst) -> Konst:
    return kpow(a, Fraction(1, 2))


# ---------------------------------------------------------------------------
# algebraic numbers

_KALG_REFINED: dict[KAlg, tuple[Fraction, Fraction]] = {}


def _kp_eval_konst(poly: tuple[Konst, ...], x: Fraction) -> Konst:
    acc: Konst = K_ZERO
    for c in reversed(poly):
        acc = kadd(kmul(acc, KRat(x)), c)
    return acc


def _rational_coeffs(poly: tuple[Konst, ...]) -> tuple[Fraction, ...] | None:
    out = []
    for c in poly:
        f = as_fraction(c)
        if f is None:
            return None
        out.append(f)
    return tuple(out)


def _poly_sign_at(poly: tuple[Konst, ...], x: Fraction,
                  rational: tuple[Fraction, ...] | None) -> int:
    if rational is not None:
        acc = Fraction(0)
        for c in reversed(rational):
            acc = acc * x + c
        return (acc > 0) - (acc < 0)
    return konst_sign(_kp_eval_konst(poly, x))


def kalg(poly: tuple[Konst, ...], lo: Fraction, hi: Fraction) -> Konst:
    """Algebraic constant: the single root of poly inside [lo, hi].

    The poly must change sign over the interval.  Bisects until the
    interval excludes zero; a midpoint that happens to hit the root
    exactly returns the rational root itself.
    """
    while len(poly) > 1 and is_zero(poly[-1]):
        poly = poly[:-1]
    if len(poly) == 2:
        return kneg(kdiv(poly[0], poly[1]))
    rat = _rational_coeffs(poly)
    slo = _poly_sign_at(poly, lo, rat)
    shi = _poly_sign_at(poly, hi, rat)
    if slo == 0:
        return KRat(lo)
    if shi == 0:
        return KRat(hi)
    if slo == shi:
        raise ValueError("isolating interval endpoints have equal signs")
    while lo < 0 < hi:
        mid = (lo + hi) / 2
        sm = _poly_sign_at(poly, mid, rat)
        if sm == 0:
            return KRat(mid)
        if sm == slo:
            lo = mid
        else:
            hi = mid
    return KAlg(poly, lo, hi)


def _kalg_refine(k: KAlg, width: Fraction) -> tuple[Fraction, Fraction]:
    lo, hi = _KALG_REFINED.get(k, (k.lo, k.hi))
    if hi - lo <= width:
        return lo, hi
    rat = _rational_coeffs(k.poly)
    slo = _poly_sign_at(k.poly, lo, rat)
    while hi - lo > width:
        mid = (lo + hi) / 2
        sm = _poly_sign_at(k.poly, mid, rat)
        if sm == 0:
            lo = hi = mid
            break
        if sm == slo:
            lo = mid
        else:
            hi = mid
    _KALG_REFINED[k] = (lo, hi)
    return lo, hi


# ---------------------------------------------------------------------------
# interval evaluation and signs

class _NeedMorePrec(Exception):
    pass


_EXP_ARG_CAP = 10 ** 100


def _frac_iv(f: Fraction):
    return iv.mpf(f.numerator) / iv.mpf(f.denominator)


def _keval(k: Konst):
    if isinstance(k, KRat):
        return _frac_iv(k.q)
    if isinstance(k, KPi):
        return +iv.pi
    if isinstance(k, KExp):
        v = _keval(k.arg)
        if abs(v.a) > _EXP_ARG_CAP or abs(v.b) > _EXP_ARG_CAP:
            raise PrecisionExhausted("exp argument too large to evaluate")
        return iv.exp(v)
    if isinstance(k, KLog):
        v = _keval(k.arg)
        if v.a <= 0:
            raise _NeedMorePrec
        return iv.log(v)
    if isinstance(k, KSum):
        acc = _frac_iv(k.const)
        for mono, coeff in k.terms:
            acc += _frac_iv(coeff) * _keval(mono)
        return acc
    if isinstance(k, KProd):
        acc = _frac_iv(k.coef)
        for base, expo in k.powers:
            b = _keval(base)
            if expo.denominator == 1:
                e = expo.numerator
                if e < 0 and b.a <= 0 <= b.b:
                    raise _NeedMorePrec
                acc *= b ** e
            else:
                if b.a <= 0:
                    raise _NeedMorePrec
                acc *= iv.exp(_frac_iv(expo) * iv.log(b))
        return acc
    if isinstance(k, KAlg):
        width = Fraction(1, 2 ** (iv.prec + 4))
        scale = max(abs(k.lo), abs(k.hi), Fraction(1))
        lo, hi = _kalg_refine(k, width * scale)
        a = _frac_iv(lo)
        b = _frac_iv(hi)
        return iv.mpf([a.a, b.b])
    raise TypeError(f"not a Konst: {k!r}")


def konst_eval(k: Konst, prec: int):
    """Interval enclosure of k at >= prec bits (an mpmath iv number)."""
    saved = iv.prec
    try:
        wp = max(prec, 8) + 16
        for _ in range(8):
            iv.prec = wp
            try:
                return _keval(k)
            except _NeedMorePrec:
                wp *= 2
        raise PrecisionExhausted(
            f"cannot evaluate {konst_str(k)} at {prec} bits")
    finally:
        iv.prec = saved


def _struct_sign(k: Konst) -> int | None:
    if isinstance(k, KRat):
        return (k.q > 0) - (k.q < 0)
    if isinstance(k, (KPi, KExp)):
        return 1
    if isinstance(k, KLog):
        f = as_fraction(k.arg)
        if f is not None:
            return 1 if f > 1 else -1  # f == 1 already collapsed
        return None
    if isinstance(k, KAlg):
        return 1 if k.lo >= 0 else -1
    if isinstance(k, KProd):
        s = 1 if k.coef > 0 else -1
        for base, expo in k.powers:
            if expo.denominator > 1:
                continue  # positive base by invariant
            sb = _struct_sign(base)
            if sb is None:
                return None
            if sb == 0:
                return 0
            if expo.numerator % 2:
                s *= sb
        return s
    if isinstance(k, KSum):
        signs = set()
        if k.const:
            signs.add(1 if k.const > 0 else -1)
        for mono, coeff in k.terms:
            sm = _struct_sign(mono)
            if sm is None or sm == 0:
                return None
            signs.add(sm * (1 if coeff > 0 else -1))
        return signs.pop() if len(signs) == 1 else None
    return None


def konst_sign(k: Konst, precision_cap: int = DEFAULT_SIGN_CAP) -> int:
    """Sign of a real constant: -1, 0, +1.

    Returns 0 only when normalization proves exact zero; otherwise the
    interval loop separates the value from zero or raises
    UndecidedZeroTest at the precision cap.
    """
    if isinstance(k, KRat):
        return (k.q > 0) - (k.q < 0)
    s = _struct_sign(k)
    if s is not None:
        return s
    prec = 64
    while prec <= precision_cap:
        v = konst_eval(k, prec)
        if v.a > 0:
            return 1
        if v.b < 0:
            return -1
        prec *= 2
    raise UndecidedZeroTest(
        f"sign of {konst_str(k)} undecided at {precision_cap} bits")


def konst_compare(a: Konst, b: Konst,
                  precision_cap: int = DEFAULT_SIGN_CAP) -> int:
    """-1, 0, +1 ordering consistent with konst_sign(a - b)."""
    if a == b:
        return 0
    return konst_sign(ksub(a, b), precision_cap)


def kmin(*ks: Konst) -> Konst:
    best = ks[0]
    for k in ks[1:]:
        if konst_compare(k, best) < 0:
            best = k
    return best


def kmax(*ks: Konst) -> Konst:
    best = ks[0]
    for k in ks[1:]:
        if konst_compare(k, best) > 0:
            best = k
    return best


# ---------------------------------------------------------------------------
# printing

def _fr_str(f: Fraction) -> str:
    return str(f.numerator) if f.denominator == 1 else \
        f"{f.numerator}/{f.denominator}"


def _atom_str(k: Konst) -> str:
    s = konst_str(k)
    if isinstance(k, (KSum, KProd)) or s.startswith("-") or "/" in s:
        return f"({s})"
    return s


def konst_str(k: Konst) -> str:
    """Grammar-compatible rendering (KAlg uses a non-grammar 'alg' form)."""
    if isinstance(k, KRat):
        return _fr_str(k.q)
    if isinstance(k, KPi):
        return "pi"
    if isinstance(k, KExp):
        if is_one(k.arg):
            return "e"
        return f"exp({konst_str(k.arg)})"
    if isinstance(k, KLog):
        return f"log({konst_str(k.arg)})"
    if isinstance(k, KAlg):
        coeffs = ",".join(konst_str(c) for c in k.poly)
        return f"alg({coeffs};{_fr_str(k.lo)},{_fr_str(k.hi)})"
    if isinstance(k, KProd):
        parts = []
        for base, expo in k.powers:
            if expo == 1:
                parts.append(_atom_str(base))
            elif expo == Fraction(1, 2) and not isinstance(base, (KSum, KProd)):
                parts.append(f"sqrt({konst_str(base)})")
            else:
                parts.append(f"{_atom_str(base)}^({_fr_str(expo)})")
        body = "*".join(parts)
        if k.coef == 1:
            return body
        if k.coef == -1:
            return f"-{body}"
        c = k.coef
        if c.denominator == 1:
            return f"{c.numerator}*{body}"
        if c.numerator == 1:
            return f"{body}/{c.denominator}"
        if c.numerator == -1:
            return f"-{body}/{c.denominator}"
        return f"{c.numerator}*{body}/{c.denominator}"
    if isinstance(k, KSum):
        parts: list[str] = []
        for mono, coeff in k.terms:
            t = konst_str(_term_konst(mono, abs(coeff)))
            if not parts:
                parts.append(t if coeff > 0 else f"-{t}")
            else:
                parts.append(f" + {t}" if coeff > 0 else f" - {t}")
        if k.const:
            c = _fr_str(abs(k.const))
            parts.append(f" + {c}" if k.const > 0 else f" - {c}")
        return "".join(parts)
    raise TypeError(f"not a Konst: {k!r}")


# ---------------------------------------------------------------------------
# complex constants

@dataclass(frozen=True, slots=True)
class CKonst:
    """Complex constant as an exact (re, im) pair."""

    re: Konst
    im: Konst


C_ZERO = CKonst(K_ZERO, K_ZERO)
C_ONE = CKonst(K_ONE, K_ZERO)
C_I = CKonst(K_ZERO, K_ONE)


def ck(re: Konst | RatLike, im: Konst | RatLike = 0) -> CKonst:
    if not isinstance(re, Konst):
        re = krat(re)
    if not isinstance(im, Konst):
        im = krat(im)
    return CKonst(re, im)


def ck_is_real(c: CKonst) -> bool:
    return is_zero(c.im)


def ck_is_zero(c: CKonst) -> bool:
    """Structural zero after normalization; raises if undecidable."""
    return not _nonzero_or_raise(c.re) and not _nonzero_or_raise(c.im)


def _nonzero_or_raise(k: Konst) -> bool:
    if is_zero(k):
        return False
    konst_sign(k)  # raises UndecidedZeroTest when it cannot separate
    return True


def ck_add(a: CKonst, b: CKonst) -> CKonst:
    return CKonst(kadd(a.re, b.re), kadd(a.im, b.im))


def ck_sub(a: CKonst, b: CKonst) -> CKonst:
    return CKonst(ksub(a.re, b.re), ksub(a.im, b.im))


def ck_neg(a: CKonst) -> CKonst:
    return CKonst(kneg(a.re), kneg(a.im))


def ck_mul(a: CKonst, b: CKonst) -> CKonst:
    return CKonst(ksub(kmul(a.re, b.re), kmul(a.im, b.im)),
                  kadd(kmul(a.re, b.im), kmul(a.im, b.re)))


def ck_div(a: CKonst, b: CKonst) -> CKonst:
    if is_zero(b.im):
        return CKonst(kdiv(a.re, b.re), kdiv(a.im, b.re))
    den = kadd(kmul(b.re, b.re), kmul(b.im, b.im))
    return CKonst(kdiv(kadd(kmul(a.re, b.re), kmul(a.im, b.im)), den),
                  kdiv(ksub(kmul(a.im, b.re), kmul(a.re, b.im)), den))


def ck_sqrt(c: CKonst) -> CKonst:
    """Principal square root, exact in nested radicals."""
    if is_zero(c.im):
        s = 0 if is_zero(c.re) else konst_sign(c.re)
        if s >= 0:
            return CKonst(ksqrt(c.re), K_ZERO)
        return CKonst(K_ZERO, ksqrt(kneg(c.re)))
    mod = ksqrt(kadd(kmul(c.re, c.re), kmul(c.im, c.im)))
    u = ksqrt(kdiv(kadd(mod, c.re), krat(2)))
    v = ksqrt(kdiv(ksub(mod, c.re), krat(2)))
    if konst_sign(c.im) < 0:
        v = kneg(v)
    return CKonst(u, v)


def ck_eval(c: CKonst, prec: int):
    """Pair of interval enclosures (re, im)."""
    return konst_eval(c.re, prec), konst_eval(c.im, prec)


def ck_str(c: CKonst) -> str:
    if is_zero(c.im):
        return konst_str(c.re)
    im = c.im
    if is_one(im):
        ipart = "I"
    elif isinstance(im, KRat) and im.q == -1:
        ipart = "-I"
    elif konst_str(im).startswith("-"):
        ipart = f"-I*{_atom_str(kneg(im))}"
    else:
        ipart = f"I*{_atom_str(im)}"
    if is_zero(c.re):
        return ipart
    re_s = konst_str(c.re)
    if ipart.startswith("-"):
        return f"{re_s} - {ipart[1:]}"
    return f"{re_s} + {ipart}"


def frac_to_iv(f: Fraction):
    """Exact Fraction -> interval at the current iv precision."""
    return _frac_iv(f)


def mpf_to_fraction(x) -> Fraction:
    """Exact mpf (or iv endpoint) -> Fraction."""
    mpf_tuple = x._mpi_[0] if hasattr(x, "_mpi_") else x._mpf_
    p, q = to_rational(mpf_tuple)
    return Fraction(p, q)
