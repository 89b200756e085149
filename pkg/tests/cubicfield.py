"""Exact arithmetic in Q(t) for t the real root of t^3 + t^2 + t = 1.

The period-one point of the cyclic branch has lengths (t, t^2, t^3),
which sum to exactly 1 in this field; running the induction on it with
exact field arithmetic certifies unbounded survival, something no
rational point can do (rational numerators strictly decrease).
"""

from __future__ import annotations

from fractions import Fraction


def _minpoly(x: Fraction) -> Fraction:
    return x**3 + x**2 + x - 1


class Cubic:
    """u + v t + w t^2 with Fraction coefficients."""

    __slots__ = ("u", "v", "w")

    def __init__(self, u=0, v=0, w=0):
        self.u = Fraction(u)
        self.v = Fraction(v)
        self.w = Fraction(w)

    @staticmethod
    def _coerce(x) -> "Cubic":
        if isinstance(x, Cubic):
            return x
        return Cubic(Fraction(x))

    def __add__(self, other):
        o = self._coerce(other)
        return Cubic(self.u + o.u, self.v + o.v, self.w + o.w)

    __radd__ = __add__

    def __neg__(self):
        return Cubic(-self.u, -self.v, -self.w)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        o = self._coerce(other)
        c0 = self.u * o.u
        c1 = self.u * o.v + self.v * o.u
        c2 = self.u * o.w + self.v * o.v + self.w * o.u
        c3 = self.v * o.w + self.w * o.v
        c4 = self.w * o.w
        # t^3 = 1 - t - t^2,  t^4 = 2t - 1
        return Cubic(c0 + c3 - c4, c1 - c3 + 2 * c4, c2 - c3)

    __rmul__ = __mul__

    def inverse(self) -> "Cubic":
        # multiplication by self is linear on coefficients; invert it
        u, v, w = self.u, self.v, self.w
        m = [
            [u, w, v - w],
            [v, u - w, 2 * w - v],
            [w, v - w, u - v - w],
        ]
        rhs = [Fraction(1), Fraction(0), Fraction(0)]
        # Gaussian elimination with exact pivots
        for col in range(3):
            piv = next(r for r in range(col, 3) if m[r][col] != 0)
            m[col], m[piv] = m[piv], m[col]
            rhs[col], rhs[piv] = rhs[piv], rhs[col]
            inv = 1 / m[col][col]
            m[col] = [x * inv for x in m[col]]
            rhs[col] *= inv
            for r in range(3):
                if r != col and m[r][col]:
                    f = m[r][col]
                    m[r] = [a - f * b for a, b in zip(m[r], m[col])]
                    rhs[r] -= f * rhs[col]
        return Cubic(*rhs)

    def __truediv__(self, other):
        return self * self._coerce(other).inverse()

    def __rtruediv__(self, other):
        return self._coerce(other) * self.inverse()

    def is_zero(self) -> bool:
        return self.u == 0 and self.v == 0 and self.w == 0

    def sign(self) -> int:
        """Exact sign via interval refinement of t (the minimal polynomial
        is irreducible over Q, so a nonzero element never vanishes at t)."""
        if self.is_zero():
            return 0
        lo, hi = Fraction(1, 2), Fraction(3, 5)
        lip = abs(self.v) + 2 * abs(self.w)
        while True:
            mid = (lo + hi) / 2
            val = self.u + self.v * mid + self.w * mid * mid
            if abs(val) > lip * (hi - lo):
                return 1 if val > 0 else -1
            if _minpoly(mid) < 0:
                lo = mid
            else:
                hi = mid

    def __eq__(self, other):
        return (self - self._coerce(other)).is_zero()

    def __lt__(self, other):
        return (self - self._coerce(other)).sign() < 0

    def __le__(self, other):
        return (self - self._coerce(other)).sign() <= 0

    def __gt__(self, other):
        return (self - self._coerce(other)).sign() > 0

    def __ge__(self, other):
        return (self - self._coerce(other)).sign() >= 0

    def __hash__(self):
        return hash((self.u, self.v, self.w))

    def __float__(self):
        t = 0.5436890126920764
        return float(self.u) + float(self.v) * t + float(self.w) * t * t

    def __repr__(self):
        return f"Cubic({self.u}, {self.v}, {self.w})"


T = Cubic(0, 1, 0)


def perron_lengths() -> tuple[Cubic, Cubic, Cubic]:
    """(t, t^2, t^3): the exact fixed lengths of the cyclic branch."""
    return T, T * T, Cubic(1, -1, -1)
