"""Exact Wirtinger-calculus oracle for polynomial Levi forms (tests only).

A real polynomial in (x1, y1, ..., xn, yn) is rewritten over C[z, zbar]
with exact rational complex coefficients via x_j = (z_j + zbar_j)/2 and
y_j = -i (z_j - zbar_j)/2; the mixed derivatives d^2/dz_j dzbar_k are then
formal, so the resulting Levi matrix is independent of the jet evaluator
it cross-checks.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np


class CFrac:
    """Complex number with exact rational real/imaginary parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = Fraction(re)
        self.im = Fraction(im)

    def __add__(self, other):
        return CFrac(self.re + other.re, self.im + other.im)

    def __mul__(self, other):
        return CFrac(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )

    def scale(self, k: int):
        return CFrac(self.re * k, self.im * k)

    def to_complex(self) -> complex:
        return float(self.re) + 1j * float(self.im)

    def __repr__(self):
        return f"CFrac({self.re}, {self.im})"


class ZPolynomial:
    """Polynomial over C[z_1..z_n, zbar_1..zbar_n] with CFrac coefficients."""

    def __init__(self, n: int, terms=None):
        self.n = n
        self.terms = dict(terms or {})  # (z_exps, zbar_exps) -> CFrac

    @classmethod
    def constant(cls, n, value):
        zero = (0,) * n
        return cls(n, {(zero, zero): CFrac(value)})

    def __add__(self, other):
        out = dict(self.terms)
        for key, c in other.terms.items():
            out[key] = out.get(key, CFrac()) + c
        return ZPolynomial(self.n, out)

    def __mul__(self, other):
        out = {}
        for (za, zba), ca in self.terms.items():
            for (zb, zbb), cb in other.terms.items():
                key = (
                    tuple(a + b for a, b in zip(za, zb)),
                    tuple(a + b for a, b in zip(zba, zbb)),
                )
                prod = ca * cb
                if key in out:
                    out[key] = out[key] + prod
                else:
                    out[key] = prod
        return ZPolynomial(self.n, out)

    def d_z(self, j):
        out = {}
        for (ze, zbe), c in self.terms.items():
            if ze[j] == 0:
                continue
            nze = list(ze)
            k = nze[j]
            nze[j] -= 1
            out[(tuple(nze), zbe)] = c.scale(k)
        return ZPolynomial(self.n, out)

    def d_zbar(self, j):
        out = {}
        for (ze, zbe), c in self.terms.items():
            if zbe[j] == 0:
                continue
            nzbe = list(zbe)
            k = nzbe[j]
            nzbe[j] -= 1
            out[(ze, tuple(nzbe))] = c.scale(k)
        return ZPolynomial(self.n, out)

    def eval(self, z: np.ndarray) -> complex:
        total = 0j
        zbar = np.conj(z)
        for (ze, zbe), c in self.terms.items():
            mono = c.to_complex()
            for j, e in enumerate(ze):
                mono *= z[j] ** e
            for j, e in enumerate(zbe):
                mono *= zbar[j] ** e
            total += mono
        return total


def real_monomials_to_zpoly(n: int, terms) -> ZPolynomial:
    """terms: list of (int coeff, exps over (x1, y1, ..., xn, yn))."""
    half = CFrac(Fraction(1, 2))
    neg_half_i = CFrac(0, Fraction(-1, 2))
    pos_half_i = CFrac(0, Fraction(1, 2))
    zero = (0,) * n

    def x_poly(j):
        ze = [0] * n
        ze[j] = 1
        return ZPolynomial(
            n, {(tuple(ze), zero): half, (zero, tuple(ze)): half}
        )

    def y_poly(j):
        ze = [0] * n
        ze[j] = 1
        return ZPolynomial(
            n, {(tuple(ze), zero): neg_half_i, (zero, tuple(ze)): pos_half_i}
        )

    total = ZPolynomial(n)
    for coeff, exps in terms:
        term = ZPolynomial.constant(n, coeff)
        for idx, e in enumerate(exps):
            j, is_y = divmod(idx, 2)[0], idx % 2
            factor = y_poly(j) if is_y else x_poly(j)
            for _ in range(e):
                term = term * factor
        total = total + term
    return total


def wirtinger_levi_matrix(n: int, terms, point: np.ndarray) -> np.ndarray:
    """Exact complex Hessian d^2 rho / dz_j dzbar_k evaluated at a real point."""
    poly = real_monomials_to_zpoly(n, terms)
    z = point[0::2] + 1j * point[1::2]
    H = np.zeros((n, n), dtype=complex)
    for j in range(n):
        dj = poly.d_z(j)
        for k in range(n):
            H[j, k] = dj.d_zbar(k).eval(z)
    return H


def wirtinger_levi_value(n, terms, point, N) -> float:
    """Levi form on Z = N - iJ(N) via the exact complex Hessian."""
    H = wirtinger_levi_matrix(n, terms, np.asarray(point, dtype=float))
    N = np.asarray(N, dtype=float)
    X = N[0::2] + 1j * N[1::2]
    value = X @ H @ np.conj(X)
    assert abs(value.imag) < 1e-9
    return float(value.real)
