"""Second-order forward-mode jets.

A ``Taylor2`` carries a value together with its gradient and Hessian with
respect to ``m`` seed variables.  Values may be numpy arrays of any batch
shape ``S``; the gradient then has shape ``S + (m,)`` and the Hessian
``S + (m, m)``.  Arithmetic propagates the truncated Taylor expansion
exactly, so Hessians built from seeded variables are exactly symmetric.
"""

from __future__ import annotations

import numpy as np


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


class Taylor2:
    __slots__ = ("value", "grad", "hess")

    # keep numpy from hijacking reflected operators
    __array_ufunc__ = None

    def __init__(self, value, grad, hess):
        self.value = np.asarray(value, dtype=float)
        self.grad = np.asarray(grad, dtype=float)
        self.hess = np.asarray(hess, dtype=float)

    @property
    def dim(self):
        return self.grad.shape[-1]

    @classmethod
    def variables(cls, x):
        """Seed one jet per coordinate of ``x`` (shape ``S + (m,)``)."""
        x = np.asarray(x, dtype=float)
        m = x.shape[-1]
        batch = x.shape[:-1]
        out = []
        for k in range(m):
            grad = np.zeros(batch + (m,))
            grad[..., k] = 1.0
            out.append(cls(x[..., k], grad, np.zeros(batch + (m, m))))
        return out

    @classmethod
    def constant(cls, c, m, batch=()):
        value = np.broadcast_to(np.asarray(c, dtype=float), batch).copy()
        return cls(value, np.zeros(value.shape + (m,)), np.zeros(value.shape + (m, m)))

    def _lift(self, other):
        if isinstance(other, Taylor2):
            return other
        return Taylor2.constant(other, self.dim, np.broadcast_shapes(np.shape(other), self.value.shape))

    def chain(self, f0, f1, f2):
        """Compose a scalar function with value/first/second derivative at ``self.value``."""
        f1 = np.asarray(f1, dtype=float)
        f2 = np.asarray(f2, dtype=float)
        grad = f1[..., None] * self.grad
        hess = f1[..., None, None] * self.hess + f2[..., None, None] * _outer(self.grad, self.grad)
        return Taylor2(f0, grad, hess)

    def __neg__(self):
        return Taylor2(-self.value, -self.grad, -self.hess)

    def __pos__(self):
        return self

    def __add__(self, other):
        if not isinstance(other, Taylor2):
            return Taylor2(self.value + other, self.grad, self.hess)
        return Taylor2(self.value + other.value, self.grad + other.grad, self.hess + other.hess)

    __radd__ = __add__

    def __sub__(self, other):
        if not isinstance(other, Taylor2):
            return Taylor2(self.value - other, self.grad, self.hess)
        return Taylor2(self.value - other.value, self.grad - other.grad, self.hess - other.hess)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Taylor2):
            c = np.asarray(other, dtype=float)
            return Taylor2(self.value * c, self.grad * c[..., None], self.hess * c[..., None, None])
        a, b = self, other
        value = a.value * b.value
        grad = a.value[..., None] * b.grad + b.value[..., None] * a.grad
        hess = (
            a.value[..., None, None] * b.hess
            + b.value[..., None, None] * a.hess
            + _outer(a.grad, b.grad)
            + _outer(b.grad, a.grad)
        )
        return Taylor2(value, grad, hess)

    __rmul__ = __mul__

    def reciprocal(self):
        v = self.value
        return self.chain(1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __truediv__(self, other):
        if not isinstance(other, Taylor2):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Taylor2):
            return (p * self.log()).exp()
        p = float(p)
        v = self.value
        if p == 0.0:
            return Taylor2.constant(1.0, self.dim, v.shape)
        if p == 1.0:
            return self
        if p.is_integer() and p >= 2:
            k = int(p)
            return self.chain(v**k, k * v ** (k - 1), k * (k - 1) * v ** (k - 2))
        return self.chain(v**p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))

    def __rpow__(self, base):
        return (self * np.log(base)).exp()

    def exp(self):
        e = np.exp(self.value)
        return self.chain(e, e, e)

    def log(self):
        v = self.value
        return self.chain(np.log(v), 1.0 / v, -1.0 / v**2)

    def sqrt(self):
        s = np.sqrt(self.value)
        return self.chain(s, 0.5 / s, -0.25 / (s * self.value))

    def sinh(self):
        s, c = np.sinh(self.value), np.cosh(self.value)
        return self.chain(s, c, s)

    def cosh(self):
        s, c = np.sinh(self.value), np.cosh(self.value)
        return self.chain(c, s, c)

    def tanh(self):
        t = np.tanh(self.value)
        s2 = 1.0 - t * t
        return self.chain(t, s2, -2.0 * t * s2)

    def sech(self):
        s = 1.0 / np.cosh(self.value)
        t = np.tanh(self.value)
        return self.chain(s, -s * t, s * (t * t - s * s))

    def __repr__(self):
        return f"Taylor2(value={self.value!r}, grad={self.grad!r}, hess={self.hess!r})"
