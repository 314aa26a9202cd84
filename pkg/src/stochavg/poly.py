"""Canonical polynomial form for expressions in (v_1..v_n, cv_1..cv_n).

A polynomial is a finite sum of monomials ``c * prod_j v_j^alpha_j *
prod_j conj(v_j)^beta_j`` keyed by the exponent pair ``(alpha, beta)``.
This form makes torus averaging exact: rotating ``v_j -> e^{-i w_j} v_j``
multiplies a monomial by ``e^{i (beta - alpha) . w}``, so averaging against
a phase ``e^{i d . w}`` keeps exactly the monomials with ``alpha - beta = d``.
"""

from __future__ import annotations

import numpy as np

from . import expr as ex
from .errors import NonPolynomialError


class Polynomial:
    """Immutable-by-convention polynomial over n complex variables."""

    __slots__ = ("n", "terms")

    def __init__(self, n, terms=None):
        self.n = int(n)
        self.terms = dict(terms) if terms else {}

    # -- constructors -------------------------------------------------
    @classmethod
    def zero(cls, n):
        return cls(n)

    @classmethod
    def const(cls, value, n):
        value = complex(value)
        if value == 0:
            return cls(n)
        zero = (0,) * n
        return cls(n, {(zero, zero): value})

    @classmethod
    def var(cls, k, n):
        alpha = tuple(1 if j == k - 1 else 0 for j in range(n))
        return cls(n, {(alpha, (0,) * n): 1.0 + 0j})

    @classmethod
    def conjvar(cls, k, n):
        beta = tuple(1 if j == k - 1 else 0 for j in range(n))
        return cls(n, {((0,) * n, beta): 1.0 + 0j})

    @classmethod
    def abs2(cls, k, n):
        e = tuple(1 if j == k - 1 else 0 for j in range(n))
        return cls(n, {(e, e): 1.0 + 0j})

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for key, c in other.terms.items():
            s = out.get(key, 0j) + c
            if s == 0:
                out.pop(key, None)
            else:
                out[key] = s
        return Polynomial(self.n, out)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __neg__(self):
        return Polynomial(self.n, {k: -c for k, c in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, float, complex)):
            if other == 0:
                return Polynomial.zero(self.n)
            return Polynomial(self.n, {k: c * other for k, c in self.terms.items()})
        other = self._coerce(other)
        out = {}
        for (a1, b1), c1 in self.terms.items():
            for (a2, b2), c2 in other.terms.items():
                key = (
                    tuple(x + y for x, y in zip(a1, a2)),
                    tuple(x + y for x, y in zip(b1, b2)),
                )
                s = out.get(key, 0j) + c1 * c2
                if s == 0:
                    out.pop(key, None)
                else:
                    out[key] = s
        return Polynomial(self.n, out)

    __rmul__ = __mul__

    def __pow__(self, k):
        if k < 0:
            raise ValueError("negative powers are not polynomial")
        out = Polynomial.const(1.0, self.n)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base if k > 1 else base
            k >>= 1
        return out

    def conj(self):
        """Complex conjugate: swaps alpha and beta, conjugates coefficients."""
        return Polynomial(
            self.n, {(b, a): np.conj(c) for (a, b), c in self.terms.items()}
        )

    def _coerce(self, other):
        if isinstance(other, Polynomial):
            if other.n != self.n:
                raise ValueError("mixing polynomials over different state dimensions")
            return other
        return Polynomial.const(other, self.n)

    # -- calculus ------------------------------------------------------
    def dvbar(self, k):
        """Wirtinger derivative with respect to conj(v_k); lowers beta_k."""
        out = {}
        j = k - 1
        for (a, b), c in self.terms.items():
            if b[j] == 0:
                continue
            nb = list(b)
            nb[j] -= 1
            key = (a, tuple(nb))
            out[key] = out.get(key, 0j) + c * b[j]
        return Polynomial(self.n, out)

    def dv(self, k):
        """Wirtinger derivative with respect to v_k; lowers alpha_k."""
        out = {}
        j = k - 1
        for (a, b), c in self.terms.items():
            if a[j] == 0:
                continue
            na = list(a)
            na[j] -= 1
            key = (tuple(na), b)
            out[key] = out.get(key, 0j) + c * a[j]
        return Polynomial(self.n, out)

    # -- structure -----------------------------------------------------
    def degree(self):
        if not self.terms:
            return 0
        return max(sum(a) + sum(b) for a, b in self.terms)

    def is_constant(self):
        zero = (0,) * self.n
        return all(key == (zero, zero) for key in self.terms)

    def constant_value(self):
        if not self.is_constant():
            raise ValueError("polynomial is not constant")
        zero = (0,) * self.n
        return self.terms.get((zero, zero), 0j)

    def keep_resonant(self, shift):
        """Keep monomials with alpha - beta equal to the integer vector ``shift``.

        These are exactly the monomials surviving torus averaging against the
        phase factor ``e^{i shift . w}``.
        """
        shift = tuple(int(s) for s in shift)
        out = {
            (a, b): c
            for (a, b), c in self.terms.items()
            if tuple(x - y for x, y in zip(a, b)) == shift
        }
        return Polynomial(self.n, out)

    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda kv: kv[0])

    # -- evaluation ------------------------------------------------------
    def evaluate(self, v):
        """Evaluate at ``v`` of shape (..., n); broadcasts over leading axes."""
        v = np.asarray(v, dtype=complex)
        out = np.zeros(v.shape[:-1], dtype=complex)
        cache = {}

        def power(j, e, conjugate):
            key = (j, e, conjugate)
            got = cache.get(key)
            if got is not None:
                return got
            if e == 1:
                val = np.conj(v[..., j]) if conjugate else v[..., j]
            else:
                val = power(j, e - 1, conjugate) * power(j, 1, conjugate)
            cache[key] = val
            return val

        for (a, b), c in self.terms.items():
            t = None
            for j, e in enumerate(a):
                if e:
                    p = power(j, e, False)
                    t = p if t is None else t * p
            for j, e in enumerate(b):
                if e:
                    p = power(j, e, True)
                    t = p if t is None else t * p
            out = out + (c if t is None else c * t)
        return out

    def to_expr(self):
        """Rebuild a FieldExpr whose evaluation matches this polynomial."""
        node = None
        for (a, b), c in self.sorted_terms():
            factors = []
            for j, e in enumerate(a):
                if e == 1:
                    factors.append(ex.Var(j + 1))
                elif e > 1:
                    factors.append(ex.Pow(ex.Var(j + 1), e))
            for j, e in enumerate(b):
                if e == 1:
                    factors.append(ex.ConjVar(j + 1))
                elif e > 1:
                    factors.append(ex.Pow(ex.ConjVar(j + 1), e))
            term = ex.constant(c)
            if factors and c == 1:
                term = factors[0]
                factors = factors[1:]
            for f in factors:
                term = ex.Mul(term, f)
            node = term if node is None else ex.Add(node, term)
        return node if node is not None else ex.Num(0.0)

    def __eq__(self, other):
        return isinstance(other, Polynomial) and self.n == other.n and self.terms == other.terms

    def __hash__(self):
        return hash((self.n, tuple(self.sorted_terms())))

    def __repr__(self):
        if not self.terms:
            return "Polynomial(0)"
        bits = []
        for (a, b), c in self.sorted_terms():
            mono = "".join(
                [f"v{j+1}^{e}" if e > 1 else f"v{j+1}" for j, e in enumerate(a) if e]
                + [f"cv{j+1}^{e}" if e > 1 else f"cv{j+1}" for j, e in enumerate(b) if e]
            )
            bits.append(f"({c:g}){mono}" if mono else f"({c:g})")
        return "Polynomial(" + " + ".join(bits) + ")"


def from_expr(expr, n: int) -> Polynomial:
    """Convert an expression AST to canonical polynomial form.

    Raises NonPolynomialError for AST nodes outside the polynomial grammar
    (cannot happen for parsed text, only for hand-built ASTs).
    """
    if isinstance(expr, Polynomial):
        if expr.n != n:
            raise ValueError("polynomial has wrong state dimension")
        return expr
    if isinstance(expr, ex.Var):
        return Polynomial.var(expr.k, n)
    if isinstance(expr, ex.ConjVar):
        return Polynomial.conjvar(expr.k, n)
    if isinstance(expr, ex.Abs2):
        return Polynomial.abs2(expr.k, n)
    if isinstance(expr, ex.Num):
        return Polynomial.const(expr.value, n)
    if isinstance(expr, ex.Imag):
        return Polynomial.const(1j, n)
    if isinstance(expr, ex.Add):
        return from_expr(expr.left, n) + from_expr(expr.right, n)
    if isinstance(expr, ex.Sub):
        return from_expr(expr.left, n) - from_expr(expr.right, n)
    if isinstance(expr, ex.Mul):
        return from_expr(expr.left, n) * from_expr(expr.right, n)
    if isinstance(expr, ex.Neg):
        return -from_expr(expr.operand, n)
    if isinstance(expr, ex.Pow):
        return from_expr(expr.base, n) ** expr.exponent
    raise NonPolynomialError(f"unsupported expression node {type(expr).__name__}")


def as_poly(field, n: int) -> Polynomial:
    """Accept a FieldExpr, Polynomial, or numeric constant."""
    if isinstance(field, Polynomial):
        return field
    if isinstance(field, (int, float, complex)):
        return Polynomial.const(field, n)
    return from_expr(field, n)
