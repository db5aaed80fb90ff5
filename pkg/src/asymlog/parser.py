"""Text grammar for polynomials in y over exp-log coefficients in x.

Grammar (EBNF), also shipped in the docs and tested verbatim:

    poly  := expr
    expr  := term (("+"|"-") term)*
    term  := unary (("*"|"/") unary)*
    unary := "-"? power
    power := atom ("^" unary)?
    atom  := NUMBER | "x" | "y" | "pi" | "e" | "I"
           | func "(" expr ")" | "(" expr ")"
    func  := "exp" | "log" | "sqrt"

NUMBER is an unsigned integer or decimal literal, read exactly.  Implicit
multiplication is rejected.  "^" binds tighter than unary minus, which binds
tighter than "*" and "/", which bind tighter than "+" and "-"; "^" is
right-associative since its right operand is itself a unary.

Values during parsing are polynomials in y whose coefficients are complex
exp-log expressions; anything that would take the input outside that class
(y in an exponent or denominator, a complex exponent, exp of a complex
quantity) raises DegreeError or DomainError at the offending span.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import DegreeError, DomainError, ParseError, SourceSpan
from .konst import (
    CKonst,
    K_E,
    K_PI,
    Konst,
    KRat,
    KSum,
    as_fraction,
    ck,
    ck_is_real,
    ck_mul,
    ck_sqrt,
    is_one,
    is_zero,
    kneg,
    konst_str,
    kpow,
    krat,
)
from .expr import (
    CExpr,
    C_EONE,
    ELog,
    ENum,
    EProd,
    ESum,
    EExp,
    EX,
    Expr,
    PolyY,
    X,
    cx,
    cx_add,
    cx_from_ck,
    cx_is_real,
    cx_is_zero,
    cx_mul,
    cx_neg,
    eexp,
    elog,
    emul,
    enum,
    epow,
    is_one_expr,
    is_zero_expr,
    poly_y,
)

GRAMMAR_EBNF = (
    'poly := expr ; expr := term (("+"|"-") term)* ; '
    'term := unary (("*"|"/") unary)* ; unary := "-"? power ; '
    'power := atom ("^" unary)? ; '
    'atom := NUMBER | "x" | "y" | "pi" | "e" | "I" | '
    'func "(" expr ")" | "(" expr ")" ; func := "exp" | "log" | "sqrt"'
)

_FUNCS = ("exp", "log", "sqrt")
_KEYWORDS = ("x", "y", "pi", "e", "I") + _FUNCS


@dataclass(frozen=True, slots=True)
class _Tok:
    kind: str  # NUMBER NAME OP END
    text: str
    start: int
    end: int

    @property
    def span(self) -> SourceSpan:
        return SourceSpan(self.start, self.end)


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit():
            j = i + 1
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] == "." and j + 1 < n and text[j + 1].isdigit():
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            toks.append(_Tok("NUMBER", text[i:j], i, j))
            i = j
            continue
        if c.isalpha():
            j = i + 1
            while j < n and text[j].isalpha():
                j += 1
            toks.append(_Tok("NAME", text[i:j], i, j))
            i = j
            continue
        if c in "+-*/^()":
            toks.append(_Tok("OP", c, i, i + 1))
            i += 1
            continue
        raise ParseError(f"unexpected character {c!r}", SourceSpan(i, i + 1),
                         text)
    toks.append(_Tok("END", "", n, n))
    return toks


# a parse-time value: polynomial in y, coefficient list indexed by power
_PV = list  # list[CExpr]


def _pv_const(c: CExpr) -> _PV:
    return [c]


def _pv_add(a: _PV, b: _PV) -> _PV:
    out = list(a) + [cx(0)] * max(0, len(b) - len(a))
    for i, v in enumerate(b):
        out[i] = cx_add(out[i], v)
    return out


def _pv_neg(a: _PV) -> _PV:
    return [cx_neg(v) for v in a]


def _pv_mul(a: _PV, b: _PV) -> _PV:
    out = [cx(0)] * (len(a) + len(b) - 1)
    for i, u in enumerate(a):
        if cx_is_zero(u):
            continue
        for j, v in enumerate(b):
            if cx_is_zero(v):
                continue
            out[i + j] = cx_add(out[i + j], cx_mul(u, v))
    return out


def _pv_trim(a: _PV) -> _PV:
    while len(a) > 1 and cx_is_zero(a[-1]):
        a.pop()
    return a


def _const_of(a: _PV) -> CExpr | None:
    return a[0] if len(_pv_trim(list(a))) == 1 else None


def _as_ckonst(c: CExpr) -> CKonst | None:
    if isinstance(c.re, ENum) and isinstance(c.im, ENum):
        return CKonst(c.re.k, c.im.k)
    return None


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def take(self) -> _Tok:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def fail(self, msg: str, tok: _Tok):
        raise ParseError(msg, tok.span, self.text)

    # expr := term (("+"|"-") term)*
    def expr(self) -> _PV:
        v = self.term()
        while self.peek().kind == "OP" and self.peek().text in "+-":
            op = self.take()
            rhs = self.term()
            v = _pv_add(v, rhs if op.text == "+" else _pv_neg(rhs))
        return v

    # term := unary (("*"|"/") unary)*
    def term(self) -> _PV:
        v = self.unary()
        while self.peek().kind == "OP" and self.peek().text in "*/":
            op = self.take()
            rhs = self.unary()
            if op.text == "*":
                v = _pv_mul(v, rhs)
            else:
                v = self._divide(v, rhs, op)
        return v

    def _divide(self, a: _PV, b: _PV, op: _Tok) -> _PV:
        den = _const_of(b)
        if den is None:
            raise DegreeError("division by a polynomial in y",
                              op.span, self.text)
        if cx_is_zero(den):
            raise DomainError("division by zero")
        inv = self._cx_pow(den, krat(-1), op)
        return [cx_mul(v, inv) for v in a]

    # unary := "-"? power
    def unary(self) -> _PV:
        if self.peek().kind == "OP" and self.peek().text == "-":
            self.take()
            return _pv_neg(self.power())
        return self.power()

    # power := atom ("^" unary)?
    def power(self) -> _PV:
        base = self.atom()
        if self.peek().kind == "OP" and self.peek().text == "^":
            op = self.take()
            expo = self.unary()
            return self._pow(base, expo, op)
        return base

    def _pow(self, base: _PV, expo: _PV, op: _Tok) -> _PV:
        e = _const_of(expo)
        if e is None:
            raise DegreeError("y may not appear in an exponent",
                              op.span, self.text)
        if not cx_is_real(e):
            raise DomainError("exponent must be real")
        ek = _as_ckonst(e)
        if ek is None:
            # x-dependent exponent: g^u rewrites to exp(u*log(g))
            b = _const_of(_pv_trim(list(base)))
            if b is None:
                raise DegreeError("y requires a constant exponent",
                                  op.span, self.text)
            if not cx_is_real(b):
                raise DomainError("fractional power of a complex quantity")
            return _pv_const(cx(eexp(emul(e.re, elog(b.re)))))
        k = ek.re
        base = _pv_trim(list(base))
        if len(base) > 1:
            q = as_fraction(k)
            if q is None or q.denominator != 1 or q < 0:
                raise DegreeError(
                    "y requires a nonnegative integer exponent",
                    op.span, self.text)
            out: _PV = [C_EONE]
            for _ in range(q.numerator):
                out = _pv_mul(out, base)
            return out
        return [self._cx_pow(base[0], k, op)]

    def _cx_pow(self, c: CExpr, k: Konst, op: _Tok) -> CExpr:
        q = as_fraction(k)
        if cx_is_real(c):
            const = _as_ckonst(c)
            if (const is not None and q is not None
                    and q.denominator in (1, 2)):
                # route through the complex field so sqrt(-1) works
                return cx_from_ck(_ck_pow_frac(const, q))
            return cx(epow(c.re, k))
        if q is not None and q.denominator == 1:
            return _cx_int_pow(c, q.numerator)
        if q is not None and q.denominator == 2:
            const = _as_ckonst(c)
            if const is not None:
                return cx_from_ck(_ck_pow_frac(const, q))
        raise DomainError("fractional power of a complex quantity")

    # atom := NUMBER | names | func "(" expr ")" | "(" expr ")"
    def atom(self) -> _PV:
        t = self.take()
        if t.kind == "NUMBER":
            return _pv_const(cx(enum(Fraction(t.text))))
        if t.kind == "NAME":
            if t.text == "x":
                return _pv_const(cx(X))
            if t.text == "y":
                return [cx(0), C_EONE]
            if t.text == "pi":
                return _pv_const(cx(enum(K_PI)))
            if t.text == "e":
                return _pv_const(cx(enum(K_E)))
            if t.text == "I":
                return _pv_const(cx(0, 1))
            if t.text in _FUNCS:
                return self._call(t)
            self.fail(f"unknown name {t.text!r}", t)
        if t.kind == "OP" and t.text == "(":
            v = self.expr()
            closing = self.take()
            if closing.kind != "OP" or closing.text != ")":
                self.fail("expected ')'", closing)
            return v
        self.fail("expected a value", t)

    def _call(self, name: _Tok) -> _PV:
        opener = self.take()
        if opener.kind != "OP" or opener.text != "(":
            self.fail(f"{name.text} requires parentheses", opener)
        v = self.expr()
        closing = self.take()
        if closing.kind != "OP" or closing.text != ")":
            self.fail("expected ')'", closing)
        arg = _const_of(v)
        if arg is None:
            raise DegreeError(f"y may not appear under {name.text}",
                              name.span, self.text)
        if name.text == "sqrt":
            return [self._cx_pow(arg, krat(1, 2), name)]
        if not cx_is_real(arg):
            raise DomainError(f"{name.text} of a complex quantity")
        if name.text == "exp":
            return _pv_const(cx(eexp(arg.re)))
        return _pv_const(cx(elog(arg.re)))

    def parse_poly(self) -> PolyY:
        v = self.expr()
        tail = self.peek()
        if tail.kind != "END":
            self.fail("unexpected trailing input", tail)
        return poly_y(_pv_trim(v))


def _ck_pow_frac(c: CKonst, q: Fraction) -> CKonst:
    if ck_is_real(c):
        # real base: one whole power keeps sum bases in a single slot
        # (sqrt then squaring would expand them step by step)
        try:
            return ck(kpow(c.re, q))
        except DomainError:
            pass  # certified negative under a half exponent: go complex
    if q.denominator == 2:
        return _ck_int_pow(ck_sqrt(c), q.numerator)
    return _ck_int_pow(c, q.numerator)


def _ck_int_pow(c: CKonst, n: int) -> CKonst:
    if n < 0:
        from .konst import ck_div
        return ck_div(ck(1), _ck_int_pow(c, -n))
    out = ck(1)
    for _ in range(n):
        out = ck_mul(out, c)
    return out


def _cx_int_pow(c: CExpr, n: int) -> CExpr:
    if n < 0:
        from .expr import cx_div
        return cx_div(cx(1), _cx_int_pow(c, -n))
    out = C_EONE
    for _ in range(n):
        out = cx_mul(out, c)
    return out


def parse_poly(text: str) -> PolyY:
    """Parse a polynomial in y with exp-log coefficients."""
    return _Parser(text).parse_poly()


def parse_expr(text: str) -> CExpr:
    """Parse a y-free expression."""
    P = parse_poly(text)
    if P.degree > 0:
        raise DegreeError("expected an expression without y")
    return P.coeffs[0]


# ---------------------------------------------------------------------------
# printing (inverse of parsing up to normalization)

# grammar levels, loosest to tightest: expr < term < unary < power < atom
_SUM, _TERM, _UNARY, _POW, _ATOM = 0, 1, 2, 3, 4


def _wrap(s: str, level: int, need: int) -> str:
    return f"({s})" if level < need else s


def _konst_level(k: Konst, s: str) -> int:
    if isinstance(k, KSum):
        return _SUM
    if s.startswith("-"):
        return _UNARY
    if "*" in s or "/" in s:
        return _TERM
    if "^" in s:
        return _POW
    return _ATOM


def _expo_str(e: Konst) -> str:
    s = konst_str(e)
    q = as_fraction(e)
    if q is not None and q.denominator == 1 and q >= 0:
        return s
    if s in ("pi", "e"):
        return s
    return f"({s})"


def _factor_str(base: Expr, expo: Konst) -> tuple[str, bool, int]:
    """Render base^|expo|; the flag marks denominator placement (expo < 0)."""
    q = as_fraction(expo)
    neg = q is not None and q < 0
    if neg:
        expo = krat(-q)
    s, lvl = _estr(base)
    if q is not None and abs(q) == 1:
        return s, neg, lvl
    s = _wrap(s, lvl, _ATOM)
    return f"{s}^{_expo_str(expo)}", neg, _POW


def _estr(f: Expr) -> tuple[str, int]:
    """Render a real expression with its grammar level."""
    if isinstance(f, ENum):
        s = konst_str(f.k)
        return s, _konst_level(f.k, s)
    if isinstance(f, EX):
        return "x", _ATOM
    if isinstance(f, EExp):
        return f"exp({_estr(f.arg)[0]})", _ATOM
    if isinstance(f, ELog):
        return f"log({_estr(f.arg)[0]})", _ATOM
    if isinstance(f, EProd):
        numer: list[tuple[str, int]] = []
        denom: list[tuple[str, int]] = []
        for b, e in f.powers:
            s, under, lvl = _factor_str(b, e)
            (denom if under else numer).append((s, lvl))
        coef = f.coef
        sign = ""
        if konst_str(coef).startswith("-"):
            coef = kneg(coef)
            sign = "-"
        if not is_one(coef) or not numer:
            cs = konst_str(coef)
            numer.insert(0, (cs, _konst_level(coef, cs)))
        # "*" and "/" operands must be unary or tighter
        body = "*".join(_wrap(s, lvl, _UNARY) for s, lvl in numer)
        for s, lvl in denom:
            body += f"/{_wrap(s, lvl, _UNARY)}"
        if sign:
            return sign + body, _UNARY
        if len(numer) == 1 and not denom:
            return body, numer[0][1]
        return body, _TERM
    if isinstance(f, ESum):
        parts: list[str] = []
        for mono, coeff in f.terms:
            negative = konst_str(coeff).startswith("-")
            t = _term_str(mono, kneg(coeff) if negative else coeff)
            if not parts:
                parts.append(f"-{t}" if negative else t)
            else:
                parts.append(f" - {t}" if negative else f" + {t}")
        if not is_zero(f.const):
            cs = konst_str(f.const)
            if isinstance(f.const, KSum):
                parts.append(f" + ({cs})")
            elif cs.startswith("-"):
                parts.append(f" - {cs[1:]}")
            else:
                parts.append(f" + {cs}")
        return "".join(parts), _SUM
    raise TypeError(f"not an Expr: {f!r}")


def _term_str(mono: Expr, coeff: Konst) -> str:
    if is_one(coeff):
        s, lvl = _estr(mono)
        return _wrap(s, lvl, _TERM)
    if isinstance(mono, EProd):
        s, lvl = _estr(EProd(coeff, mono.powers))
        return _wrap(s, lvl, _TERM)
    s, lvl = _estr(EProd(coeff, ((mono, KRat(Fraction(1))),)))
    return _wrap(s, lvl, _TERM)


def print_real(f: Expr) -> str:
    return _estr(f)[0]


def _imag_str(im: Expr) -> tuple[str, int]:
    """Render I*im; minus is pulled out only when it scales the whole part."""
    if is_one_expr(im):
        return "I", _ATOM
    s, lvl = _estr(im)
    if s.startswith("-") and lvl == _UNARY:
        mag = s[1:]
        if mag == "1":
            return "-I", _UNARY
        return f"-I*{mag}", _UNARY
    return f"I*{_wrap(s, lvl, _UNARY)}", _TERM


def print_expr(f: CExpr) -> str:
    """Grammar-compatible rendering; parse(print_expr(f)) normalizes to f."""
    if is_zero_expr(f.im):
        return _estr(f.re)[0]
    istr, _ = _imag_str(f.im)
    if is_zero_expr(f.re):
        return istr
    res = _estr(f.re)[0]
    if istr.startswith("-"):
        return f"{res} - {istr[1:]}"
    return f"{res} + {istr}"


def _cx_level(c: CExpr) -> int:
    if is_zero_expr(c.im):
        return _estr(c.re)[1]
    if is_zero_expr(c.re):
        return _imag_str(c.im)[1]
    return _SUM


def print_poly(P: PolyY) -> str:
    """Render a polynomial in y, highest power first."""
    parts: list[str] = []
    for i in range(P.degree, -1, -1):
        c = P.coeffs[i]
        if cx_is_zero(c) and P.degree > 0:
            continue
        if i == 0:
            piece = print_expr(c)
        else:
            ypow = "y" if i == 1 else f"y^{i}"
            if c == C_EONE:
                piece = ypow
            elif c == cx(-1):
                piece = f"-{ypow}"
            else:
                piece = f"{_wrap(print_expr(c), _cx_level(c), _TERM)}*{ypow}"
        if not parts:
            parts.append(piece)
        elif piece.startswith("-"):
            # a piece is a whole expr, so its leading "- term" unit can
            # merge into the enclosing sum unchanged
            parts.append(f" - {piece[1:]}")
        else:
            parts.append(f" + {piece}")
    return "".join(parts)
