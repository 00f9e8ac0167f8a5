"""Exact arithmetic in cyclotomic fields Q(zeta_n) for n in {3, 4, 5, 8}.

Values are stored as an integer coefficient vector in the power basis
1, z, ..., z^(phi(n)-1) together with a positive common denominator, kept in
lowest terms so that equality is plain tuple comparison.
"""
from __future__ import annotations

import cmath
from dataclasses import dataclass
from math import gcd

# monic cyclotomic polynomials, low degree first
_PHI = {
    3: (1, 1, 1),
    4: (1, 0, 1),
    5: (1, 1, 1, 1, 1),
    8: (1, 0, 0, 0, 1),
}


def _reduce(poly, n):
    phi = _PHI[n]
    deg = len(phi) - 1
    p = list(poly)
    for i in range(len(p) - 1, deg - 1, -1):
        c = p[i]
        if c:
            # subtract c * z^(i-deg) * phi
            for j in range(deg + 1):
                p[i - deg + j] -= c * phi[j]
    p = p[:deg] + [0] * max(0, deg - len(p))
    return p


@dataclass(frozen=True, slots=True)
class ExactPoint:
    """Element of Q(zeta_n), used both for plane points and for affine map coefficients."""

    n: int
    coeffs: tuple
    den: int = 1

    @staticmethod
    def make(n, coeffs, den=1):
        deg = len(_PHI[n]) - 1
        c = _reduce(list(coeffs) + [0] * max(0, deg - len(coeffs)), n)
        if den < 0:
            c = [-x for x in c]
            den = -den
        g = den
        for x in c:
            g = gcd(g, x)
        if g > 1:
            c = [x // g for x in c]
            den //= g
        return ExactPoint(n, tuple(c), den)

    @staticmethod
    def root(n, k=1):
        """zeta_n ** k."""
        k %= n
        return ExactPoint.make(n, [0] * k + [1])

    @staticmethod
    def integer(n, v, den=1):
        return ExactPoint.make(n, [v], den)

    def __add__(self, other):
        d = self.den * other.den // gcd(self.den, other.den)
        a, b = d // self.den, d // other.den
        return ExactPoint.make(self.n, [a * x + b * y for x, y in zip(self.coeffs, other.coeffs)], d)

    def __neg__(self):
        return ExactPoint(self.n, tuple(-x for x in self.coeffs), self.den)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, int):
            return ExactPoint.make(self.n, [x * other for x in self.coeffs], self.den)
        prod = [0] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, x in enumerate(self.coeffs):
            if x:
                for j, y in enumerate(other.coeffs):
                    prod[i + j] += x * y
        return ExactPoint.make(self.n, prod, self.den * other.den)

    __rmul__ = __mul__

    def scale(self, num, den=1):
        """Multiply by the rational num/den."""
        return ExactPoint.make(self.n, [x * num for x in self.coeffs], self.den * den)

    def conjugate(self):
        """Complex conjugate, z -> z^(n-1) on the generator."""
        poly = [0] * self.n
        for i, c in enumerate(self.coeffs):
            poly[(-i) % self.n] += c
        return ExactPoint.make(self.n, poly, self.den)

    def is_zero(self):
        return not any(self.coeffs)

    def to_complex(self):
        z = cmath.exp(2j * cmath.pi / self.n)
        return sum(c * z**i for i, c in enumerate(self.coeffs)) / self.den

    def project(self):
        """Real-plane coordinates (x, y)."""
        w = self.to_complex()
        return (w.real, w.imag)
