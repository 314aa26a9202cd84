import numpy as np
import pytest

from stochavg import parse_field_expr, ParseError
from stochavg.errors import NonPolynomialError
from stochavg.poly import Polynomial, from_expr


def rand_points(rng, count, n):
    return rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n))


def test_parse_basic_arithmetic():
    e = parse_field_expr("i*v1*abs2(v2)", 2)
    assert e.evaluate(np.array([1 + 0j, 2 + 0j])) == pytest.approx(4j)

    e = parse_field_expr("v1 + cv1", 1)
    assert e.evaluate(np.array([3 + 4j])) == pytest.approx(6.0)


def test_parse_index_out_of_range():
    with pytest.raises(ParseError):
        parse_field_expr("v3", 2)


def test_parse_syntax_error_carries_position():
    with pytest.raises(ParseError) as err:
        parse_field_expr("v1 + * v2", 2)
    assert err.value.position == 5


def test_parse_unknown_identifier():
    with pytest.raises(ParseError):
        parse_field_expr("v1 + foo", 2)


def test_parse_powers_and_parens():
    e = parse_field_expr("(v1 + cv2)^2", 2)
    v = np.array([1 + 1j, 2 - 1j])
    expected = (v[0] + np.conj(v[1])) ** 2
    assert e.evaluate(v) == pytest.approx(expected)


def test_parse_unary_minus_and_numbers():
    e = parse_field_expr("-v1*2.5 + 1e-2", 1)
    v = np.array([2 + 0j])
    assert e.evaluate(v) == pytest.approx(-5.0 + 0.01)


@pytest.mark.parametrize("text,n", [
    ("i*v1*abs2(v2)", 2),
    ("v1 + cv1", 1),
    ("(v1+cv2)^2 - 3*v2^3*cv1", 2),
    ("-(-v1) - -v2", 2),
    ("abs2(v1)*abs2(v2) + 0.25*i*v1*v2*cv1*cv2", 2),
    ("1.5e-3*v1^4 + cv3^2*v2", 3),
])
def test_print_reparse_roundtrip(text, n):
    # printing then re-parsing must reproduce the evaluation exactly
    rng = np.random.default_rng(42)
    e1 = parse_field_expr(text, n)
    e2 = parse_field_expr(str(e1), n)
    pts = rand_points(rng, 64, n)
    a, b = e1.evaluate(pts), e2.evaluate(pts)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


def test_to_polynomial_abs2_times_var():
    p = from_expr(parse_field_expr("abs2(v1)*v1", 1), 1)
    assert p.terms == {((2,), (1,)): 1.0 + 0j}


def test_to_polynomial_cancellation():
    p = from_expr(parse_field_expr("v1 - v1", 1), 1)
    assert p.terms == {}


def test_to_polynomial_square_expansion():
    # (v1 + cv2)^2 = v1^2 + 2 v1 cv2 + cv2^2, checked against direct evaluation
    e = parse_field_expr("(v1 + cv2)^2", 2)
    p = from_expr(e, 2)
    assert len(p.terms) == 3
    assert p.terms[((2, 0), (0, 0))] == pytest.approx(1.0)
    assert p.terms[((1, 0), (0, 1))] == pytest.approx(2.0)
    assert p.terms[((0, 0), (0, 2))] == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    pts = rand_points(rng, 64, 2)
    np.testing.assert_allclose(p.evaluate(pts), e.evaluate(pts), rtol=1e-10)


@pytest.mark.parametrize("text,n", [
    ("i*v1*abs2(v2) - 2*cv1^2", 2),
    ("(v1 - cv1)^3", 1),
    ("abs2(v2)^2*v3 + v1*v2*v3", 3),
])
def test_to_polynomial_matches_ast_at_random_points(text, n):
    e = parse_field_expr(text, n)
    p = from_expr(e, n)
    rng = np.random.default_rng(7)
    pts = rand_points(rng, 64, n)
    pa = p.evaluate(pts)
    ea = e.evaluate(pts)
    np.testing.assert_allclose(pa, ea, rtol=1e-10, atol=1e-12)


def test_nonpolynomial_rejected():
    class Weird:
        pass

    with pytest.raises(NonPolynomialError):
        from_expr(Weird(), 1)


def test_polynomial_wirtinger_derivatives():
    # d/dconj(v1) of (v1 cv1)^2 = 2 v1^2 cv1
    p = from_expr(parse_field_expr("(v1*cv1)^2", 1), 1)
    d = p.dvbar(1)
    assert d.terms == {((2,), (1,)): 2.0 + 0j}
    # d/dv1 of same is 2 v1 cv1^2
    d2 = p.dv(1)
    assert d2.terms == {((1,), (2,)): 2.0 + 0j}


def test_polynomial_conj_swaps_exponents():
    p = from_expr(parse_field_expr("i*v1^2*cv2", 2), 2)
    q = p.conj()
    rng = np.random.default_rng(3)
    pts = rand_points(rng, 16, 2)
    np.testing.assert_allclose(q.evaluate(pts), np.conj(p.evaluate(pts)), rtol=1e-12)


def test_poly_to_expr_roundtrip():
    rng = np.random.default_rng(11)
    p = from_expr(parse_field_expr("(v1+2*cv2)^3 - i*v2*abs2(v1)", 2), 2)
    e = p.to_expr()
    pts = rand_points(rng, 32, 2)
    np.testing.assert_allclose(e.evaluate(pts), p.evaluate(pts), rtol=1e-10, atol=1e-12)
