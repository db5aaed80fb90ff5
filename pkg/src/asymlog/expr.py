"""Exp-log expression trees in one variable x, over the exact constant field.

Every expression denotes a germ at x -> +infinity: it is either the literal
zero or a function eventually defined and nonvanishing.  Construction through
the smart constructors (eadd, emul, epow, eexp, elog) keeps trees in a
canonical form so that equal rational skeletons compare equal structurally.
Rewrites applied here are sound for germs at +infinity; deciding whether a
structurally nonzero tree is the zero germ is deliberately out of scope and
belongs to the limit machinery.

Canonical form invariants:
  - sums are flat: ESum(const, ((monomial, coeff), ...)) with coefficient-free
    monomials sorted by a fixed total order, no zero coeffs, at least two
    parts overall;
  - products are flat: EProd(coef, ((base, expo), ...)) with sorted bases,
    at most one exponential factor (exponent folded into its argument),
    nonzero Konst exponents;
  - a scaled single monomial lives as EProd(coef, ...), never as a one-term
    sum, mirroring the constant field's convention.

Powers of powers merge only when sound without branch analysis: an even
integer exponent under a non-integer one is kept nested, so for example
(x^2)^(1/2) does not become x.  This keeps functions that agree near
+infinity but differ as expressions (the classic exp(log(x^2)/2) vs x)
structurally distinct; their equality as germs is a zero-test question.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import DomainError, UndecidedZeroTest
from .konst import (
    CKonst,
    K_ONE,
    K_ZERO,
    Konst,
    KRat,
    as_fraction,
    ck,
    is_one,
    is_zero,
    kadd,
    kexp,
    kinv,
    klog,
    kmul,
    kneg,
    konst_key,
    konst_sign,
    kpow,
    krat,
)


class Expr:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class ENum(Expr):
    """Constant leaf."""

    k: Konst


@dataclass(frozen=True, slots=True)
class EX(Expr):
    """The variable x."""


@dataclass(frozen=True, slots=True)
class ESum(Expr):
    const: Konst
    terms: tuple  # ((mono: Expr, coeff: Konst), ...)


@dataclass(frozen=True, slots=True)
class EProd(Expr):
    coef: Konst
    powers: tuple  # ((base: Expr, expo: Konst), ...)


@dataclass(frozen=True, slots=True)
class EExp(Expr):
    arg: Expr


@dataclass(frozen=True, slots=True)
class ELog(Expr):
    arg: Expr


X = EX()
E_ZERO = ENum(K_ZERO)
E_ONE = ENum(K_ONE)


def enum(v) -> ENum:
    if isinstance(v, Konst):
        return ENum(v)
    return ENum(krat(v))


def is_zero_expr(f: Expr) -> bool:
    return isinstance(f, ENum) and is_zero(f.k)


def is_one_expr(f: Expr) -> bool:
    return isinstance(f, ENum) and is_one(f.k)


def expr_key(f: Expr):
    """Total order on canonical trees; drives sorting in sums and products."""
    if isinstance(f, ENum):
        return (0, konst_key(f.k))
    if isinstance(f, EX):
        return (1,)
    if isinstance(f, EExp):
        return (2, expr_key(f.arg))
    if isinstance(f, ELog):
        return (3, expr_key(f.arg))
    if isinstance(f, EProd):
        return (4, konst_key(f.coef),
                tuple((expr_key(b), konst_key(e)) for b, e in f.powers))
    if isinstance(f, ESum):
        return (5, konst_key(f.const),
                tuple((expr_key(m), konst_key(c)) for m, c in f.terms))
    raise TypeError(f"not an Expr: {f!r}")


def _as_int(c: Konst) -> int | None:
    q = as_fraction(c)
    if q is not None and q.denominator == 1:
        return q.numerator
    return None


def _sign_or_none(c: Konst) -> int | None:
    try:
        return konst_sign(c)
    except UndecidedZeroTest:
        return None


# ---------------------------------------------------------------------------
# sums

def sum_parts(f: Expr) -> tuple[Konst, tuple]:
    """View any expression as (const, ((monomial, coeff), ...))."""
    if isinstance(f, ENum):
        return f.k, ()
    if isinstance(f, ESum):
        return f.const, f.terms
    if isinstance(f, EProd):
        return K_ZERO, ((_monic(f.powers), f.coef),)
    return K_ZERO, ((f, K_ONE),)


def _monic(powers: tuple) -> Expr:
    if len(powers) == 1 and is_one(powers[0][1]):
        return powers[0][0]
    return EProd(K_ONE, powers)


def _term(mono: Expr, coeff: Konst) -> Expr:
    if is_one(coeff):
        return mono
    if isinstance(mono, EProd):
        return EProd(kmul(mono.coef, coeff), mono.powers)
    return EProd(coeff, ((mono, K_ONE),))


def _emonom_pairs(mono: Expr) -> tuple[tuple[Expr, Konst], ...]:
    if isinstance(mono, EProd):
        return mono.powers
    return ((mono, K_ONE),)


def eadd(*fs: Expr) -> Expr:
    const = K_ZERO
    acc: dict[Expr, Konst] = {}
    for f in fs:
        c, terms = sum_parts(f)
        const = kadd(const, c)
        for mono, coeff in terms:
            if mono in acc:
                acc[mono] = kadd(acc[mono], coeff)
            else:
                acc[mono] = coeff
    acc = {m: c for m, c in acc.items() if not is_zero(c)}

    # a quotient monomial anywhere forces the whole sum onto one common
    # denominator; otherwise different routes to a sum of fractions
    # reassociate differently and numerators never cancel:
    # x/(1+x) + 1/(1+x) -> 1
    need: dict[Expr, Fraction] = {}
    for mono in acc:
        for b, e in _emonom_pairs(mono):
            q = as_fraction(e)
            if q is not None and q < 0 and isinstance(b, ESum):
                need[b] = max(need.get(b, Fraction(0)), -q)
    if need and (not is_zero(const) or len(acc) > 1):
        bases = sorted(need, key=expr_key)
        # the denominator stays an unexpanded power product here: expanding
        # (x+1)^2 into a fresh sum would never cancel against the terms'
        # negative exponents and the regrouping would not converge
        den = EProd(K_ONE, tuple((b, krat(need[b])) for b in bases))
        dinv = EProd(K_ONE, tuple((b, krat(-need[b])) for b in bases))
        parts = [emul(_term(m, c), den) for m, c in acc.items()]
        if not is_zero(const):
            parts.append(emul(ENum(const), den))
        return emul(eadd(*parts), dinv)

    terms = tuple(sorted(acc.items(), key=lambda mc: expr_key(mc[0])))
    if not terms:
        return ENum(const)
    if is_zero(const) and len(terms) == 1:
        return _term(*terms[0])
    return ESum(const, terms)


def esub(a: Expr, b: Expr) -> Expr:
    return eadd(a, eneg(b))


def eneg(f: Expr) -> Expr:
    return escale(f, krat(-1))


def escale(f: Expr, c: Konst) -> Expr:
    return emul(ENum(c), f)


# ---------------------------------------------------------------------------
# products

def prod_parts(f: Expr) -> tuple[Konst, tuple]:
    """View any expression as (coef, ((base, expo), ...))."""
    if isinstance(f, ENum):
        return f.k, ()
    if isinstance(f, EProd):
        return f.coef, f.powers
    return K_ONE, ((f, K_ONE),)


def emul(*fs: Expr) -> Expr:
    coef: Konst = K_ONE
    expo_map: dict[Expr, Konst] = {}
    order: list[Expr] = []
    exp_args: list[Expr] = []

    def put(base: Expr, expo: Konst) -> None:
        nonlocal coef
        if isinstance(base, EExp):
            exp_args.append(escale(base.arg, expo))
            return
        if isinstance(base, ENum):
            coef = kmul(coef, _const_pow(base.k, expo))
            return
        if isinstance(base, ESum):
            # normalize any sum entering a slot: shed common monomial
            # content and the unit so equal quotients actually collide
            content, u, prim = _esum_shed(base, expo)
            for b, a in content:
                put(b, kmul(a, expo))
            if not is_one(u):
                coef = kmul(coef, _kpow_any(u, expo))
            base = prim
        if base not in expo_map:
            expo_map[base] = K_ZERO
            order.append(base)
        expo_map[base] = kadd(expo_map[base], expo)

    for f in fs:
        if isinstance(f, ENum):
            coef = kmul(coef, f.k)
        elif isinstance(f, EProd):
            coef = kmul(coef, f.coef)
            for b, e in f.powers:
                put(b, e)
        else:
            put(f, K_ONE)
    if is_zero(coef):
        return E_ZERO

    # merge all exponential factors into one; log extraction inside eexp may
    # hand back powers, which then join the regular pairs
    if exp_args:
        folded = eexp(eadd(*exp_args))
        if isinstance(folded, EProd):
            coef = kmul(coef, folded.coef)
            for b, e in folded.powers:
                if isinstance(b, EExp):
                    if b not in expo_map:
                        expo_map[b] = K_ZERO
                        order.append(b)
                    expo_map[b] = kadd(expo_map[b], e)
                else:
                    put(b, e)
        elif isinstance(folded, ENum):
            coef = kmul(coef, folded.k)
        elif isinstance(folded, EExp):
            if folded not in expo_map:
                expo_map[folded] = K_ZERO
                order.append(folded)
            expo_map[folded] = kadd(expo_map[folded], K_ONE)
        else:
            put(folded, K_ONE)
    if is_zero(coef):
        return E_ZERO

    pairs: dict[Expr, Konst] = {}
    pair_order: list[Expr] = []
    sums: list[Expr] = []

    def put_final(base: Expr, expo: Konst) -> None:
        if is_zero(expo):
            return
        if base not in pairs:
            pairs[base] = K_ZERO
            pair_order.append(base)
        pairs[base] = kadd(pairs[base], expo)

    for base in order:
        expo = expo_map[base]
        if is_zero(expo):
            continue
        n = _as_int(expo)
        if isinstance(base, ESum) and n is not None and n > 0:
            sums.extend([base] * n)
            continue
        piece = epow_pair(base, expo)
        if isinstance(piece, ENum):
            coef = kmul(coef, piece.k)
        elif isinstance(piece, EProd):
            coef = kmul(coef, piece.coef)
            for b, e in piece.powers:
                put_final(b, e)
        else:
            put_final(piece, K_ONE)
    if is_zero(coef):
        return E_ZERO

    # a second pass: exponents merged above may have become integral on a
    # sum base, or collapsed a nested power back into a plain one
    final: list[tuple[Expr, Konst]] = []
    for base in pair_order:
        expo = pairs[base]
        if is_zero(expo):
            continue
        n = _as_int(expo)
        if isinstance(base, ESum) and n is not None and n > 0:
            sums.extend([base] * n)
            continue
        piece = epow_pair(base, expo)
        if isinstance(piece, ENum):
            coef = kmul(coef, piece.k)
        elif isinstance(piece, EProd) and (piece.coef, piece.powers) != (
                K_ONE, ((base, expo),)):
            coef = kmul(coef, piece.coef)
            final.extend(piece.powers)
        elif isinstance(piece, EProd):
            final.extend(piece.powers)
        else:
            final.append((piece, K_ONE))
    if is_zero(coef):
        return E_ZERO

    # re-reduction can rewrite a base (say (x^2)^(1/2) squared turning into
    # x^2) so it collides with another pair; merge and run again
    seen: dict[Expr, Konst] = {}
    collided = False
    for b, e in final:
        if b in seen:
            seen[b] = kadd(seen[b], e)
            collided = True
        else:
            seen[b] = e
    if collided:
        parts = [ENum(coef)]
        parts += [epow_pair(b, e) for b, e in seen.items() if not is_zero(e)]
        parts += sums
        return emul(*parts)

    # with a sum-typed denominator present, stay in rational-function form so
    # addition's recombining does not loop against expansion here
    def _sum_den(b: Expr, e: Konst) -> bool:
        q = as_fraction(e)
        return q is not None and q < 0 and isinstance(b, ESum)

    if sums and any(_sum_den(b, e) for b, e in final):
        if any(b in set(sums) for b, _ in final):
            # a cancelling pair surfaced late (say a square expanded into a
            # base already dividing the product); rerun the reduction
            parts = [ENum(coef)]
            parts += [EProd(K_ONE, ((b, e),)) for b, e in final]
            parts += sums
            return emul(*parts)
        # everything above the fraction bar collapses into one expanded
        # numerator; x^3*(x+7)/(x+1) and (x^4+7*x^3)/(x+1) must agree, and
        # plain reciprocals distribute exactly as they would were no sum
        # dividing the product
        dens = [(b, e) for b, e in final if _sum_den(b, e)]
        rest = [(b, e) for b, e in final if not _sum_den(b, e)]
        num: Expr = _build_prod(K_ONE, rest)
        for s in sums:
            num = _distribute(num, s)
        pairs = list(dens)
        den_keys = {b for b, _ in dens}
        if isinstance(num, ENum):
            coef = kmul(coef, num.k)
        elif isinstance(num, EProd):
            coef = kmul(coef, num.coef)
            if any(b in den_keys for b, _ in num.powers):
                return emul(ENum(coef), EProd(K_ONE, tuple(dens)),
                            EProd(K_ONE, num.powers))
            pairs.extend(num.powers)
        elif isinstance(num, ESum):
            content, u, prim = _esum_shed(num, K_ONE)
            coef = kmul(coef, u)
            if prim in den_keys or any(b in den_keys for b, _ in content):
                return emul(ENum(coef), EProd(K_ONE, tuple(dens)),
                            EProd(K_ONE, content + ((prim, K_ONE),)))
            red = _ecancel_dens(prim, dens)
            if red is not None:
                parts = [ENum(coef)]
                parts += [EProd(K_ONE, ((b, e),)) for b, e in content]
                parts += red
                return emul(*parts)
            pairs.extend(content)
            pairs.append((prim, K_ONE))
        else:
            pairs.append((num, K_ONE))
        if is_zero(coef):
            return E_ZERO
        pairs.sort(key=lambda be: expr_key(be[0]))
        return _build_prod(coef, pairs)
    final.sort(key=lambda be: expr_key(be[0]))
    core = _build_prod(coef, final)
    for s in sums:
        core = _distribute(core, s)
    return core


def _build_prod(coef: Konst, powers: list[tuple[Expr, Konst]]) -> Expr:
    if not powers:
        return ENum(coef)
    if is_one(coef) and len(powers) == 1 and is_one(powers[0][1]):
        return powers[0][0]
    return EProd(coef, tuple(powers))


def _distribute(a: Expr, s: Expr) -> Expr:
    c, terms = sum_parts(s)
    parts: list[Expr] = []
    if not is_zero(c):
        parts.append(emul(a, ENum(c)))
    parts += [emul(a, _term(m, q)) for m, q in terms]
    return eadd(*parts) if parts else E_ZERO


def _emono_div(a: Expr, b: Expr) -> dict[Expr, Konst] | None:
    """Exponent-wise quotient of two monic monomials; None when a base of b
    is missing from a, driven below zero, or not rationally comparable."""
    out = dict(_emonom_pairs(a))
    for base, e in _emonom_pairs(b):
        if base not in out:
            return None
        r = kadd(out[base], kneg(e))
        if is_zero(r):
            out.pop(base)
            continue
        q = as_fraction(r)
        if q is None or q < 0:
            return None
        out[base] = r
    return out


def _emono_mul(m: dict[Expr, Konst], other: Expr) -> \
        tuple[tuple[Expr, Konst], ...] | None:
    """m * other at the exponent level, never expanding.

    Bails out whenever the product would leave canonical monomial shape
    (a sum base at a positive whole power, or exponential factors that
    emul would fold into one): a remainder holding such a monomial could
    never collide with what the collection pass builds.
    """
    out = dict(m)
    for base, e in _emonom_pairs(other):
        r = kadd(out.get(base, K_ZERO), e)
        if is_zero(r):
            out.pop(base, None)
        else:
            out[base] = r
    pairs: list[tuple[Expr, Konst]] = []
    exps = 0
    for base, e in out.items():
        n = _as_int(e)
        if isinstance(base, ESum) and n is not None and n > 0:
            return None
        if isinstance(base, EExp):
            exps += 1
            if exps > 1 or not is_one(e):
                return None
        pairs.append((base, e))
    pairs.sort(key=lambda be: expr_key(be[0]))
    return tuple(pairs)


def _etry_div(a: Expr, b: ESum) -> Expr | None:
    """Exact quotient a / b over monomial sums, or None.

    Leading-term long division, self-checking: a quotient comes back only
    when the remainder lands on exactly zero, so an unlucky term order can
    miss a cancellation but never fabricate one.
    """
    lb, cb = b.terms[-1]
    cbi = kinv(cb)
    out: list[Expr] = []
    r: Expr = a
    for _ in range(60):
        rc, rt = sum_parts(r)
        if not rt:
            if is_zero(rc) and out:
                return eadd(*out)
            return None
        lr, cr = rt[-1]
        m = _emono_div(lr, lb)
        if m is None:
            return None
        q = kmul(cr, cbi)
        subs: list[Expr] = []
        for tm, tc in b.terms:
            pairs = _emono_mul(m, tm)
            if pairs is None:
                return None
            c = kneg(kmul(q, tc))
            subs.append(_term(_monic(pairs), c) if pairs else ENum(c))
        mp = tuple(sorted(m.items(), key=lambda be: expr_key(be[0])))
        if not is_zero(b.const):
            c = kneg(kmul(q, b.const))
            subs.append(_term(_monic(mp), c) if mp else ENum(c))
        r = eadd(r, *subs)
        rt2 = sum_parts(r)[1]
        if rt2 and expr_key(rt2[-1][0]) >= expr_key(lr):
            return None  # leading term survived; order quirk, give up
        out.append(_term(_monic(mp), q) if mp else ENum(q))
    return None


def _ecancel_dens(prim: Expr,
                  dens: list[tuple[Expr, Konst]]) -> list[Expr] | None:
    """Cancel an expanded numerator sum against sum denominators.

    Returns replacement factors for prim * dens once an exact division
    fires, None otherwise.  (x^2 + 2*x + 1) over (x + 1) must fall back
    to x + 1: expansion erased the factored form, division recovers it.
    """
    if not isinstance(prim, ESum):
        return None
    for i, (db, de) in enumerate(dens):
        n = _as_int(de)
        if n is None or not isinstance(db, ESum):
            continue
        rest = [EProd(K_ONE, ((b, e),))
                for j, (b, e) in enumerate(dens) if j != i]
        q = _etry_div(prim, db)
        if q is not None:
            if n != -1:
                rest.append(EProd(K_ONE, ((db, krat(n + 1)),)))
            return [q] + rest
        q = _etry_div(db, prim)
        if q is not None and isinstance(q, ESum):
            rest.append(epow(prim, krat(n + 1)))
            rest.append(epow(q, krat(n)))
            return rest
    return None


def ediv(a: Expr, b: Expr) -> Expr:
    return emul(a, epow(b, krat(-1)))


# ---------------------------------------------------------------------------
# powers

def _const_pow(k: Konst, c: Konst) -> Konst:
    """k ** c for constants; non-rational exponents go through exp(c*log k)."""
    q = as_fraction(c)
    if q is not None:
        return kpow(k, q)
    if is_zero(k):
        raise DomainError("0 ** irrational exponent")
    return kexp(kmul(c, klog(k)))


def _merge_ok(inner: Konst, outer: Konst, base: Expr) -> bool:
    """May (base**inner)**outer rewrite to base**(inner*outer)?

    Always sound for integer outer.  Otherwise sound when the inner power
    cannot have flipped sign: non-integer inner forces an eventually positive
    base wherever defined, an odd integer needs the base certified positive,
    and an even integer is refused (that is the (x^2)^(1/2) != x case).
    """
    if _as_int(outer) is not None:
        return True
    n = _as_int(inner)
    if n is None:
        return True
    if n % 2 == 0:
        return False
    return germ_pos(base)


def epow(f: Expr, c) -> Expr:
    if not isinstance(c, Konst):
        c = krat(c)
    if is_zero(c):
        return E_ONE
    if isinstance(f, ESum):
        n = _as_int(c)
        if n is not None and n > 0:
            out: Expr = E_ONE
            for _ in range(n):
                out = emul(out, f)
            return out
    return epow_pair(f, c)


def epow_pair(base: Expr, expo: Konst) -> Expr:
    """Canonical base**expo without distributing over sums."""
    if is_zero(expo):
        return E_ONE
    if isinstance(base, ENum):
        return ENum(_const_pow(base.k, expo))
    if isinstance(base, EExp):
        return eexp(escale(base.arg, expo))
    if isinstance(base, EProd):
        return _epow_prod(base, expo)
    if is_one(expo):
        return base
    if isinstance(base, ESum):
        content, u, prim = _esum_shed(base, expo)
        if content or not is_one(u):
            parts = [ENum(_kpow_any(u, expo))]
            parts += [epow_pair(b, kmul(a, expo)) for b, a in content]
            parts.append(epow_pair(prim, expo))
            return emul(*parts)
        n = _as_int(expo)
        if n is not None and n < -1:
            # sum denominators stay at exponent -1 with the base expanded,
            # matching what 1/(s*s) builds; otherwise the two routes to the
            # same quotient would never cancel against each other
            return epow(epow(base, krat(-n)), krat(-1))
    return EProd(K_ONE, ((base, expo),))


def _sum_unit(s: ESum, expo: Konst) -> tuple[Konst, Expr]:
    """Unit (constant scale) a sum sheds when it becomes a product base.

    Normalizing here keeps c*(x+1) and (c*x+c) from producing distinct
    quotient forms.  Fractional exponents may only shed a factor of known
    sign; the sign itself stays in the base when it cannot move soundly.
    """
    u = s.terms[-1][1]
    if is_one(u):
        return K_ONE, s
    su = _sign_or_none(u)
    integral = _as_int(expo) is not None
    if su == 1 or (su == -1 and integral):
        return u, _scale_sum(s, kinv(u))
    if su == -1 and not is_one(kneg(u)):
        w = kneg(u)
        return w, _scale_sum(s, kinv(w))
    return K_ONE, s


def _scale_sum(s: ESum, c: Konst) -> Expr:
    # structural scaling; must not route through emul, which normalizes
    # sum bases and would recurse back here
    return eadd(ENum(kmul(s.const, c)),
                *[_term(m, kmul(co, c)) for m, co in s.terms])


def _kpow_any(u: Konst, expo: Konst) -> Konst:
    q = as_fraction(expo)
    if q is not None:
        return kpow(u, q)
    return kexp(kmul(expo, klog(u)))


def _esum_shed(s: ESum, expo: Konst) -> tuple[
        tuple[tuple[Expr, Konst], ...], Konst, Expr]:
    """Content, unit and primitive of a sum entering a product slot.

    The common monomial factor moves out: positive exponents shared by
    every term, negative exponents cleared outright (1 + 1/x enters a
    slot as x^(-1) * (x + 1)).  Then the coefficient of the structurally
    largest remaining term sheds.  x^4 + 7*x^3 must reach the same slot
    as x^3*(x + 7), or quotients built along the two routes never
    cancel.  Under a non-integral exponent only factors whose germ is
    provably positive (x itself and exponentials) may leave.
    """
    integral = _as_int(expo) is not None
    content: tuple[tuple[Expr, Konst], ...] = ()
    prim: Expr = s
    parts: list[tuple[tuple[tuple[Expr, Konst], ...], Konst]] = [
        (_emonom_pairs(mono), co) for mono, co in s.terms]
    if not is_zero(s.const):
        parts.append(((), s.const))
    rat: list[dict[Expr, Fraction]] = []
    for pairs, _ in parts:
        rat.append({b: q for b, e in pairs
                    if (q := as_fraction(e)) is not None})
    bases = {b for d in rat for b in d}
    mins = {b: min(d.get(b, Fraction(0)) for d in rat) for b in bases}
    mins = {b: q for b, q in mins.items()
            if q != 0 and (integral or isinstance(b, (EX, EExp)))}
    if mins:
        rebuilt: list[Expr] = []
        for pairs, co in parts:
            left = []
            for b, e in pairs:
                r = kadd(e, krat(-mins[b])) if b in mins else e
                if not is_zero(r):
                    left.append((b, r))
            seen = {b for b, _ in pairs}
            left += [(b, krat(-q)) for b, q in mins.items() if b not in seen]
            left.sort(key=lambda be: expr_key(be[0]))
            rebuilt.append(_term(_monic(tuple(left)), co) if left
                           else ENum(co))
        prim2 = eadd(*rebuilt)
        if isinstance(prim2, ESum):
            content = tuple(sorted(
                ((b, krat(q)) for b, q in mins.items()),
                key=lambda be: expr_key(be[0])))
            prim = prim2
    u: Konst = K_ONE
    if isinstance(prim, ESum):
        u2, p2 = _sum_unit(prim, expo)
        if not is_one(u2) and isinstance(p2, ESum):
            u, prim = u2, p2
    return content, u, prim


def _epow_prod(p: EProd, c: Konst) -> Expr:
    if _as_int(c) is not None:
        parts: list[Expr] = [ENum(_const_pow(p.coef, c))]
        parts += [epow_pair(b, kmul(e, c)) for b, e in p.powers]
        return emul(*parts)
    # non-integer exponent: factors that cannot be certified sign-stable stay
    # together under one nested power
    merged: list[Expr] = []
    blocked: list[tuple[Expr, Konst]] = []
    coef = p.coef
    if not is_one(coef) and _sign_or_none(coef) == 1:
        merged.append(ENum(_const_pow(coef, c)))
        coef = K_ONE
    for b, e in p.powers:
        if _merge_ok(e, c, b):
            merged.append(epow_pair(b, kmul(e, c)))
        else:
            blocked.append((b, e))
    if is_one(coef) and not blocked:
        return emul(*merged)
    if not blocked:
        raise DomainError("fractional power of a negative product")
    if len(blocked) == 1 and is_one(blocked[0][1]):
        # a lone first-power factor is what a reparse of the printed form
        # would see bare, so it must not stay wrapped in a product shell;
        # a constant in front folds in the same way the reparse folds it
        rb = blocked[0][0]
        if is_one(coef):
            piece = epow_pair(rb, c)
            return emul(*merged, piece) if merged else piece
        if isinstance(rb, ESum):
            piece = epow_pair(_scale_sum(rb, coef), c)
            return emul(*merged, piece) if merged else piece
    blocked.sort(key=lambda be: expr_key(be[0]))
    residue = EProd(coef, tuple(blocked))
    if not merged:
        # nothing extracted, so rebuilding through emul would cycle
        return EProd(K_ONE, ((residue, c),))
    merged.append(EProd(K_ONE, ((residue, c),)))
    return emul(*merged)


# ---------------------------------------------------------------------------
# exp and log

def eexp(u: Expr) -> Expr:
    if isinstance(u, ENum):
        return ENum(kexp(u.k))
    if isinstance(u, ELog):
        return u.arg
    if isinstance(u, ESum):
        power_parts: list[Expr] = []
        rest_terms: list[tuple[Expr, Konst]] = []
        for mono, coeff in u.terms:
            if isinstance(mono, ELog):
                power_parts.append(epow_pair(mono.arg, coeff))
            else:
                rest_terms.append((mono, coeff))
        if power_parts:
            rest: Expr = ENum(u.const)
            for m, c in rest_terms:
                rest = eadd(rest, _term(m, c))
            return emul(eexp(rest), *power_parts)
        return EExp(u)
    if isinstance(u, EProd):
        if len(u.powers) == 1 and is_one(u.powers[0][1]) \
                and isinstance(u.powers[0][0], ELog):
            return epow_pair(u.powers[0][0].arg, u.coef)
        return EExp(u)
    return EExp(u)


def elog(f: Expr) -> Expr:
    """log f.  Splits off certified-positive constant and exponential factors
    only; products and powers otherwise stay under the log unopened, since
    opening them needs sign information this layer does not have."""
    if isinstance(f, ENum):
        return ENum(klog(f.k))
    if isinstance(f, EExp):
        return f.arg
    if isinstance(f, EProd):
        parts: list[Expr] = []
        rest: list[tuple[Expr, Konst]] = []
        coef = f.coef
        for b, e in f.powers:
            if isinstance(b, EExp):
                parts.append(escale(b.arg, e))
            else:
                rest.append((b, e))
        if _sign_or_none(coef) == 1 and (parts or not is_one(coef)):
            parts.append(ENum(klog(coef)))
            coef = K_ONE
        if not parts:
            return ELog(f)
        if rest:
            parts.append(ELog(_build_prod(coef, rest)))
        elif not is_one(coef):
            # bare constant left over: same domain check a fresh log(k)
            # would get, so a negative residue raises here, not on reparse
            parts.append(ENum(klog(coef)))
        return eadd(*parts)
    return ELog(f)


def esqrt(f: Expr) -> Expr:
    return epow(f, Fraction(1, 2))


# ---------------------------------------------------------------------------
# structural germ sign (certification only; False means unknown, not negative)

def germ_pos(f: Expr) -> bool:
    """True when f is structurally certain to be positive near +infinity."""
    if isinstance(f, ENum):
        return _sign_or_none(f.k) == 1
    if isinstance(f, EX):
        return True
    if isinstance(f, EExp):
        return True
    if isinstance(f, ELog):
        return isinstance(f.arg, EX)
    if isinstance(f, EProd):
        if _sign_or_none(f.coef) != 1:
            return False
        for b, e in f.powers:
            n = _as_int(e)
            if n is not None and n % 2 == 0:
                continue
            if not germ_pos(b):
                return False
        return True
    if isinstance(f, ESum):
        if not is_zero(f.const) and _sign_or_none(f.const) != 1:
            return False
        return all(_sign_or_none(c) == 1 and germ_pos(m)
                   for m, c in f.terms)
    return False


def germ_unbounded(f: Expr) -> bool:
    """True when f is structurally certain to tend to +infinity."""
    if isinstance(f, EX):
        return True
    if isinstance(f, ELog):
        return germ_unbounded(f.arg)
    if isinstance(f, EExp):
        return germ_unbounded(f.arg)
    if isinstance(f, EProd):
        if _sign_or_none(f.coef) != 1:
            return False
        hit = False
        for b, e in f.powers:
            if not germ_pos(b) and not germ_unbounded(b):
                return False
            s = _sign_or_none(e)
            if s == 1 and germ_unbounded(b):
                hit = True
            elif s != 1 and germ_unbounded(b):
                return False
        return hit
    if isinstance(f, ESum):
        # every term pushes up and at least one is unbounded; a negative
        # constant offset cannot fight an unbounded term
        if not all(_sign_or_none(c) == 1 and
                   (germ_pos(m) or germ_unbounded(m)) for m, c in f.terms):
            return False
        return any(germ_unbounded(m) for m, _ in f.terms)
    return False


# ---------------------------------------------------------------------------
# normalize / size / substitution / differentiation

def normalize(f: Expr) -> Expr:
    """Rebuild f bottom-up through the smart constructors."""
    if isinstance(f, ENum):
        return ENum(f.k)
    if isinstance(f, EX):
        return X
    if isinstance(f, ESum):
        return eadd(ENum(f.const),
                    *[_term(normalize(m), c) for m, c in f.terms])
    if isinstance(f, EProd):
        parts = [epow_pair(normalize(b), e) for b, e in f.powers]
        return emul(ENum(f.coef), *parts)
    if isinstance(f, EExp):
        return eexp(normalize(f.arg))
    if isinstance(f, ELog):
        return elog(normalize(f.arg))
    raise TypeError(f"not an Expr: {f!r}")


def _collect_s(f: Expr, acc: set) -> None:
    if isinstance(f, ENum):
        return
    if isinstance(f, EX):
        acc.add(f)
        return
    if isinstance(f, ESum):
        for m, _ in f.terms:
            _collect_s(m, acc)
        return
    if isinstance(f, EProd):
        for b, _ in f.powers:
            _collect_s(b, acc)
        return
    if isinstance(f, (EExp, ELog)):
        acc.add(f)
        _collect_s(f.arg, acc)
        return
    raise TypeError(f"not an Expr: {f!r}")


def size(f: Expr) -> int:
    """Number of distinct x-bearing nodes: x itself plus every exp and log
    subexpression; exponents and constants do not count."""
    acc: set = set()
    _collect_s(f, acc)
    return len(acc)


def subst_x(f: Expr, repl: Expr, memo: dict | None = None) -> Expr:
    """f with x replaced by repl, renormalized."""
    if memo is None:
        memo = {}
    got = memo.get(f)
    if got is not None:
        return got
    if isinstance(f, ENum):
        out: Expr = f
    elif isinstance(f, EX):
        out = repl
    elif isinstance(f, ESum):
        out = eadd(ENum(f.const),
                   *[escale(subst_x(m, repl, memo), c) for m, c in f.terms])
    elif isinstance(f, EProd):
        out = emul(ENum(f.coef),
                   *[epow_pair(subst_x(b, repl, memo), e) for b, e in f.powers])
    elif isinstance(f, EExp):
        out = eexp(subst_x(f.arg, repl, memo))
    elif isinstance(f, ELog):
        out = elog(subst_x(f.arg, repl, memo))
    else:
        raise TypeError(f"not an Expr: {f!r}")
    memo[f] = out
    return out


def shift_up(f: Expr, k: int) -> Expr:
    """f with x replaced by exp^k(x)."""
    if k < 0:
        raise ValueError("shift count must be nonnegative")
    if k == 0:
        return f
    repl: Expr = X
    for _ in range(k):
        repl = eexp(repl)
    return subst_x(f, repl)


def shift_down(f: Expr, k: int) -> Expr:
    """f with x replaced by log^k(x)."""
    if k < 0:
        raise ValueError("shift count must be nonnegative")
    if k == 0:
        return f
    repl: Expr = X
    for _ in range(k):
        repl = elog(repl)
    return subst_x(f, repl)


def differentiate(f: Expr) -> Expr:
    if isinstance(f, ENum):
        return E_ZERO
    if isinstance(f, EX):
        return E_ONE
    if isinstance(f, ESum):
        return eadd(*[escale(differentiate(m), c) for m, c in f.terms])
    if isinstance(f, EProd):
        parts = []
        for b, e in f.powers:
            db = differentiate(b)
            if is_zero_expr(db):
                continue
            parts.append(emul(f, ENum(e), db, epow_pair(b, krat(-1))))
        return eadd(*parts) if parts else E_ZERO
    if isinstance(f, EExp):
        return emul(differentiate(f.arg), f)
    if isinstance(f, ELog):
        return emul(differentiate(f.arg), epow_pair(f.arg, krat(-1)))
    raise TypeError(f"not an Expr: {f!r}")


# ---------------------------------------------------------------------------
# complex pairs

@dataclass(frozen=True, slots=True)
class CExpr:
    re: Expr
    im: Expr


C_EZERO = CExpr(E_ZERO, E_ZERO)
C_EONE = CExpr(E_ONE, E_ZERO)


def cx(re: Expr | Konst | int, im: Expr | Konst | int = 0) -> CExpr:
    def lift(v) -> Expr:
        if isinstance(v, Expr):
            return v
        return enum(v)
    return CExpr(lift(re), lift(im))


def cx_from_ck(c: CKonst) -> CExpr:
    return CExpr(ENum(c.re), ENum(c.im))


def cx_is_zero(c: CExpr) -> bool:
    return is_zero_expr(c.re) and is_zero_expr(c.im)


def cx_is_real(c: CExpr) -> bool:
    return is_zero_expr(c.im)


def cx_add(a: CExpr, b: CExpr) -> CExpr:
    return CExpr(eadd(a.re, b.re), eadd(a.im, b.im))


def cx_sub(a: CExpr, b: CExpr) -> CExpr:
    return CExpr(esub(a.re, b.re), esub(a.im, b.im))


def cx_neg(a: CExpr) -> CExpr:
    return CExpr(eneg(a.re), eneg(a.im))


def cx_mul(a: CExpr, b: CExpr) -> CExpr:
    if cx_is_real(a) and cx_is_real(b):
        return CExpr(emul(a.re, b.re), E_ZERO)
    return CExpr(esub(emul(a.re, b.re), emul(a.im, b.im)),
                 eadd(emul(a.re, b.im), emul(a.im, b.re)))


def cx_scale(a: CExpr, s: Expr) -> CExpr:
    return CExpr(emul(a.re, s), emul(a.im, s))


def cx_div(a: CExpr, b: CExpr) -> CExpr:
    if cx_is_real(b):
        inv = epow(b.re, krat(-1))
        return CExpr(emul(a.re, inv), emul(a.im, inv))
    den = eadd(emul(b.re, b.re), emul(b.im, b.im))
    inv = epow(den, krat(-1))
    return CExpr(emul(eadd(emul(a.re, b.re), emul(a.im, b.im)), inv),
                 emul(esub(emul(a.im, b.re), emul(a.re, b.im)), inv))


def cx_size(c: CExpr) -> int:
    return size(c.re) + size(c.im)


def cx_subst_x(c: CExpr, repl: Expr, memo: dict | None = None) -> CExpr:
    if memo is None:
        memo = {}
    return CExpr(subst_x(c.re, repl, memo), subst_x(c.im, repl, memo))


def cx_shift_up(c: CExpr, k: int) -> CExpr:
    return CExpr(shift_up(c.re, k), shift_up(c.im, k))


def cx_shift_down(c: CExpr, k: int) -> CExpr:
    return CExpr(shift_down(c.re, k), shift_down(c.im, k))


# ---------------------------------------------------------------------------
# polynomials in y

@dataclass(frozen=True)
class PolyY:
    """Polynomial in y with complex exp-log coefficients, index i -> a_i."""

    coeffs: tuple  # (CExpr, ...), leading coefficient structurally nonzero

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1


def poly_y(coeffs) -> PolyY:
    cs = list(coeffs)
    while len(cs) > 1 and cx_is_zero(cs[-1]):
        cs.pop()
    if not cs:
        cs = [C_EZERO]
    return PolyY(tuple(cs))


def _binomials(n: int) -> list[list[int]]:
    rows = [[1]]
    for i in range(1, n + 1):
        prev = rows[-1]
        rows.append([1] + [prev[j - 1] + prev[j]
                           for j in range(1, i)] + [1])
    return rows


def poly_substitute(P: PolyY, r: CExpr, scale: Expr,
                    zero_test=None) -> tuple[PolyY, int]:
    """Coefficients of P(x, r + scale*y) plus the least nonzero index.

    zero_test decides whether a coefficient is the zero germ; the default is
    the structural test, callers with limit machinery pass a stronger one.
    """
    n = P.degree
    if zero_test is None:
        zero_test = cx_is_zero
    binom = _binomials(n)
    r_pows: list[CExpr] = [C_EONE]
    for _ in range(n):
        r_pows.append(cx_mul(r_pows[-1], r))
    scale_pows: list[Expr] = [E_ONE]
    for _ in range(n):
        scale_pows.append(emul(scale_pows[-1], scale))
    out: list[CExpr] = []
    for j in range(n + 1):
        acc = C_EZERO
        for i in range(j, n + 1):
            if cx_is_zero(P.coeffs[i]):
                continue
            term = cx_mul(P.coeffs[i], r_pows[i - j])
            term = cx_scale(term, enum(binom[i][j]))
            acc = cx_add(acc, term)
        out.append(cx_scale(acc, scale_pows[j]))
    lam = 0
    while lam <= n and zero_test(out[lam]):
        lam += 1
    if lam > n:
        raise UndecidedZeroTest("all substituted coefficients test zero")
    return PolyY(tuple(out)), lam
