"""Grammar tests: parsing, error taxonomy, printing, and round trips."""

import random
from fractions import Fraction

import pytest

from asymlog.errors import DegreeError, DomainError, ParseError
from asymlog.expr import (
    C_EONE,
    CExpr,
    X,
    cx,
    ediv,
    eexp,
    elog,
    emul,
    eneg,
    enum,
    epow,
    escale,
)
from asymlog.konst import K_PI, krat
from asymlog.parser import (
    parse_expr,
    parse_poly,
    print_expr,
    print_poly,
    print_real,
)


class TestParsePoly:
    def test_quintic(self):
        P = parse_poly("y^5 - exp(x)*y - log(x)")
        assert P.degree == 5
        assert P.coeffs[5] == C_EONE
        assert P.coeffs[4] == cx(0)
        assert P.coeffs[1] == cx(eneg(eexp(X)))
        assert P.coeffs[0] == cx(eneg(elog(X)))

    def test_mixed_growth_quintic(self):
        P = parse_poly("y^5 - exp(x)*y^4 + x*exp(pi*x)*y^3 + log(x)*y - x^2")
        assert P.degree == 5
        assert P.coeffs[5] == C_EONE
        assert P.coeffs[4] == cx(eneg(eexp(X)))
        assert P.coeffs[3] == cx(emul(X, eexp(escale(X, K_PI))))
        assert P.coeffs[2] == cx(0)
        assert P.coeffs[1] == cx(elog(X))
        assert P.coeffs[0] == cx(eneg(epow(X, 2)))

    def test_constant(self):
        P = parse_poly("3")
        assert P.degree == 0
        assert P.coeffs[0] == cx(3)

    def test_y_arithmetic(self):
        assert parse_poly("y^2*y^3") == parse_poly("y^5")
        assert parse_poly("(y+1)^2") == parse_poly("y^2 + 2*y + 1")
        assert parse_poly("(y - x)*(y + x)") == parse_poly("y^2 - x^2")
        assert parse_poly("y^5/2") == parse_poly("(1/2)*y^5")

    def test_top_degree_cancellation(self):
        P = parse_poly("y^2 - y^2 + y")
        assert P.degree == 1


class TestPrecedence:
    def test_unary_minus_binds_looser_than_power(self):
        assert parse_expr("-x^2") == cx(eneg(epow(X, 2)))

    def test_power_right_assoc(self):
        assert parse_expr("x^2^3") == parse_expr("x^8")

    def test_negative_exponent_literal(self):
        assert parse_expr("x^-1") == parse_expr("1/x")

    def test_mul_before_add(self):
        assert parse_expr("1 + 2*3") == cx(7)

    def test_division_left_assoc(self):
        assert parse_expr("x/2/2") == cx(escale(X, krat(1, 4)))

    def test_double_minus_rejected(self):
        with pytest.raises(ParseError):
            parse_expr("--x")

    def test_implicit_multiplication_rejected(self):
        with pytest.raises(ParseError):
            parse_poly("2x")


class TestConstants:
    def test_decimal_is_exact(self):
        assert parse_expr("2.5") == cx(enum(Fraction(5, 2)))
        assert parse_expr("0.125") == cx(enum(Fraction(1, 8)))

    def test_named_constants(self):
        assert parse_expr("pi") == cx(enum(K_PI))
        assert parse_expr("e^x") == cx(eexp(X))
        assert parse_expr("log(e)") == cx(1)

    def test_complex_arithmetic(self):
        assert parse_expr("I^2") == cx(-1)
        assert parse_expr("(1+I)^2") == cx(0, 2)
        assert parse_expr("(1+I)/(1-I)") == cx(0, 1)
        assert parse_expr("sqrt(-4)") == cx(0, 2)
        assert parse_expr("sqrt(2*I)") == cx(1, 1)

    def test_growing_exponent_rewrites(self):
        assert parse_expr("2^x") == cx(eexp(emul(elog(enum(2)), X)))
        assert parse_expr("x^x") == cx(eexp(emul(X, elog(X))))


class TestErrors:
    @pytest.mark.parametrize("text", [
        "1/y", "x^y", "exp(y)", "log(y)", "sqrt(y)", "y^(1/2)", "y^-1",
        "y^pi", "(y+1)/(y-1)",
    ])
    def test_degree_errors(self, text):
        with pytest.raises(DegreeError):
            parse_poly(text)

    @pytest.mark.parametrize("text", [
        "exp(I)", "log(I)", "x^I", "log(-1)", "log(0)", "1/0", "0^-1",
        "x^(1/3+I)", "sqrt(x+I)", "(-1)^(1/3)", "(I*x)^(1/2)",
    ])
    def test_domain_errors(self, text):
        with pytest.raises(DomainError):
            parse_poly(text)

    @pytest.mark.parametrize("text", [
        "2x", "foo(x)", "x +", "", "(x", "x)", "x ** 2", "exp x", "1..2",
        "y y", "$", "exp()",
    ])
    def test_parse_errors(self, text):
        with pytest.raises(ParseError):
            parse_poly(text)

    def test_error_spans_mark_source(self):
        with pytest.raises(ParseError) as ei:
            parse_poly("x + foo(x)")
        err = ei.value
        assert err.span is not None
        assert (err.span.start, err.span.end) == (4, 7)
        assert "foo" in str(err)

    def test_unexpected_character_span(self):
        with pytest.raises(ParseError) as ei:
            parse_poly("x + $")
        assert (ei.value.span.start, ei.value.span.end) == (4, 5)


class TestPrint:
    def test_examples(self):
        f = cx(eneg(emul(eexp(eneg(X)), elog(X))))
        assert print_expr(f) == "-exp(-x)*log(x)"
        assert print_expr(cx(epow(X, krat(1, 3)))) == "x^(1/3)"

    def test_complex_coefficient_round_trips(self):
        s = "((-1-I*sqrt(3))/2)*x^(1/3)"
        v = parse_expr(s)
        assert parse_expr(print_expr(v)) == v

    def test_pure_imaginary(self):
        assert print_expr(cx(0, 1)) == "I"
        assert print_expr(cx(0, -1)) == "-I"
        assert print_expr(cx(0, eneg(X))) == "-I*x"
        assert parse_expr(print_expr(cx(0, 2))) == cx(0, 2)

    def test_negative_exponents_use_division(self):
        assert print_expr(cx(epow(X, krat(-1)))) == "1/x"
        f = cx(emul(eexp(X), epow(elog(X), krat(-2))))
        assert print_expr(f) == "exp(x)/log(x)^2"

    def test_quotient_sums(self):
        f = cx(ediv(X, eadd_helper()))
        s = print_expr(f)
        assert parse_expr(s) == f

    def test_poly_render(self):
        P = parse_poly("y^5 - exp(x)*y^4 + x*exp(pi*x)*y^3 + log(x)*y - x^2")
        s = print_poly(P)
        assert s == "y^5 - exp(x)*y^4 + x*exp(pi*x)*y^3 + log(x)*y - x^2"
        assert parse_poly(s) == P

    def test_zero_poly(self):
        assert print_poly(parse_poly("0")) == "0"
        assert print_poly(parse_poly("x - x")) == "0"


def eadd_helper():
    from asymlog.expr import eadd
    return eadd(X, enum(1))


# ---------------------------------------------------------------------------
# fuzzed round trips: parse(print(parse(s))) == parse(s)

_POSITIVE = ["x", "2", "3", "5", "pi", "e", "exp(x)", "log(x)", "(x + 1)",
             "(x + 7)", "sqrt(x)", "exp(-x)", "exp(x^2)", "x^3"]
_FRACS = ["(1/2)", "(1/3)", "(-1/2)", "(3/2)", "pi", "(-2)", "2", "3"]


def _gen_real(rng: random.Random, depth: int) -> str:
    if depth <= 0:
        return rng.choice(_POSITIVE + ["1", "4", "10"])
    a = _gen_real(rng, depth - 1)
    b = _gen_real(rng, depth - 1)
    pick = rng.randrange(9)
    if pick == 0:
        return f"({a} + {b})"
    if pick == 1:
        return f"({a} - {b})"
    if pick == 2:
        return f"({a}*{b})"
    if pick == 3:
        return f"({a}/{rng.choice(_POSITIVE)})"
    if pick == 4:
        return f"-{rng.choice(_POSITIVE)}"
    if pick == 5:
        return f"exp({rng.choice(['x', '-x', 'x^2', 'log(x)'])})"
    if pick == 6:
        return f"log({rng.choice(_POSITIVE)})"
    if pick == 7:
        return f"{rng.choice(_POSITIVE)}^{rng.choice(_FRACS)}"
    return f"sqrt({rng.choice(_POSITIVE)})"


def _gen_complex(rng: random.Random, depth: int) -> str:
    re = _gen_real(rng, depth - 1)
    im = _gen_real(rng, depth - 1)
    pick = rng.randrange(4)
    if pick == 0:
        return f"({re} + I*{im})"
    if pick == 1:
        return f"({re} - I*{im})"
    if pick == 2:
        return f"(I*{im})"
    return f"(({re} + I*{im})*({im} - I))"


def _gen_poly(rng: random.Random) -> str:
    k = rng.randrange(1, 4)
    parts = []
    for _ in range(k):
        deg = rng.randrange(4)
        coeff = (_gen_complex(rng, rng.randrange(1, 3))
                 if rng.random() < 0.2 else
                 _gen_real(rng, rng.randrange(0, 3)))
        mono = "" if deg == 0 else ("*y" if deg == 1 else f"*y^{deg}")
        parts.append(f"({coeff}){mono}")
    return " + ".join(parts)


class TestRoundTrip:
    def test_fuzz_expressions(self):
        rng = random.Random(20260814)
        for i in range(8000):
            s = _gen_real(rng, rng.randrange(0, 3))
            v = parse_expr(s)
            assert parse_expr(print_expr(v)) == v, s

    def test_fuzz_polynomials(self):
        rng = random.Random(97)
        for i in range(2000):
            s = _gen_poly(rng)
            P = parse_poly(s)
            assert parse_poly(print_poly(P)) == P, s
