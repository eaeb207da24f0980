"""Vectorized forward-mode automatic differentiation.

The optimizer needs exact first and second derivatives of the model equations
with respect to a small, fixed set of inputs (the states and controls at one
collocation point). Model code is written against plain numpy ufuncs, so a
batch of evaluation points can be pushed through it either as float arrays
(values only) or as Dual numbers carrying derivative payloads.

A Dual holds
    val   (B,)      values at B evaluation points
    jac   (B, d)    first derivatives against d seed directions
    hess  (B, d, d) optional second derivatives (symmetric in the last axes)

Seeding the d inputs with unit directions makes jac the exact Jacobian row
block and hess the exact Hessian block of every downstream quantity.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Dual", "seed", "value", "where"]


def _as_val(x):
    """Value payload of x, whether Dual or plain array/scalar."""
    return x.val if isinstance(x, Dual) else x


def value(x):
    """Plain float array for x, whether Dual or already an array."""
    return x.val if isinstance(x, Dual) else np.asarray(x, dtype=float)


class Dual(object):
    """Batch of truncated Taylor coefficients in d seed directions."""

    __slots__ = ("val", "jac", "hess")

    def __init__(self, val, jac, hess=None):
        self.val = val
        self.jac = jac
        self.hess = hess

    # ------------------------------------------------------------------
    # construction helpers

    @classmethod
    def constant(cls, val, d, second_order=False):
        val = np.asarray(val, dtype=float)
        b = val.shape[0]
        jac = np.zeros((b, d))
        hess = np.zeros((b, d, d)) if second_order else None
        return cls(val, jac, hess)

    def _lift(self, other):
        """Coerce other to (val, jac, hess) treating non-Duals as constants."""
        if isinstance(other, Dual):
            return other.val, other.jac, other.hess
        return np.asarray(other, dtype=float), None, None

    # ------------------------------------------------------------------
    # arithmetic

    def __add__(self, other):
        ov, oj, oh = self._lift(other)
        jac = self.jac if oj is None else self.jac + oj
        hess = self.hess
        if hess is not None and oh is not None:
            hess = hess + oh
        return Dual(self.val + ov, jac, hess)

    __radd__ = __add__

    def __sub__(self, other):
        ov, oj, oh = self._lift(other)
        jac = self.jac if oj is None else self.jac - oj
        hess = self.hess
        if hess is not None and oh is not None:
            hess = hess - oh
        return Dual(self.val - ov, jac, hess)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        ov, oj, oh = self._lift(other)
        val = self.val * ov
        if oj is None:
            jac = self.jac * ov[..., None]
            hess = None if self.hess is None else self.hess * ov[..., None, None]
            return Dual(val, jac, hess)
        jac = self.jac * ov[..., None] + oj * self.val[..., None]
        hess = None
        if self.hess is not None:
            cross = self.jac[:, :, None] * oj[:, None, :]
            hess = (self.hess * ov[..., None, None]
                    + oh * self.val[..., None, None]
                    + cross + np.swapaxes(cross, 1, 2))
        return Dual(val, jac, hess)

    __rmul__ = __mul__

    def _reciprocal(self):
        inv = 1.0 / self.val
        jac = -self.jac * (inv * inv)[..., None]
        hess = None
        if self.hess is not None:
            outer = self.jac[:, :, None] * self.jac[:, None, :]
            hess = (-self.hess * (inv * inv)[..., None, None]
                    + 2.0 * outer * (inv ** 3)[..., None, None])
        return Dual(1.0 / self.val, jac, hess)

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return self * other._reciprocal()
        ov = np.asarray(other, dtype=float)
        return self * (1.0 / ov)

    def __rtruediv__(self, other):
        return self._reciprocal() * other

    def __pow__(self, n):
        if isinstance(n, Dual):
            raise TypeError("dual exponents unsupported; rewrite as exp(n*log(x))")
        n = float(n)
        v = self.val
        return self._unary(v ** n, n * v ** (n - 1.0), n * (n - 1.0) * v ** (n - 2.0))

    def __neg__(self):
        hess = None if self.hess is None else -self.hess
        return Dual(-self.val, -self.jac, hess)

    def __pos__(self):
        return self

    # comparisons act on values; handy for masks and sanity checks
    def __lt__(self, other):
        return self.val < _as_val(other)

    def __le__(self, other):
        return self.val <= _as_val(other)

    def __gt__(self, other):
        return self.val > _as_val(other)

    def __ge__(self, other):
        return self.val >= _as_val(other)

    # ------------------------------------------------------------------
    # chain rule for elementwise functions

    def _unary(self, f, fp, fpp):
        jac = fp[..., None] * self.jac
        hess = None
        if self.hess is not None:
            outer = self.jac[:, :, None] * self.jac[:, None, :]
            hess = fp[..., None, None] * self.hess + fpp[..., None, None] * outer
        return Dual(f, jac, hess)

    # ------------------------------------------------------------------
    # numpy ufunc dispatch so model code can call np.sin(x) on Duals

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs:
            return NotImplemented
        if ufunc is np.add:
            a, b = inputs
            return a.__add__(b) if isinstance(a, Dual) else b.__radd__(a)
        if ufunc is np.subtract:
            a, b = inputs
            return a.__sub__(b) if isinstance(a, Dual) else b.__rsub__(a)
        if ufunc is np.multiply:
            a, b = inputs
            return a.__mul__(b) if isinstance(a, Dual) else b.__rmul__(a)
        if ufunc is np.true_divide:
            a, b = inputs
            return a.__truediv__(b) if isinstance(a, Dual) else b.__rtruediv__(a)
        if ufunc is np.power:
            a, b = inputs
            if isinstance(b, Dual):
                return NotImplemented
            return a.__pow__(b)
        if ufunc is np.negative:
            return inputs[0].__neg__()
        if ufunc is np.positive:
            return inputs[0]
        x = inputs[0]
        v = x.val
        if ufunc is np.sin:
            return x._unary(np.sin(v), np.cos(v), -np.sin(v))
        if ufunc is np.cos:
            return x._unary(np.cos(v), -np.sin(v), -np.cos(v))
        if ufunc is np.tan:
            t = np.tan(v)
            sec2 = 1.0 + t * t
            return x._unary(t, sec2, 2.0 * t * sec2)
        if ufunc is np.arctan:
            den = 1.0 + v * v
            return x._unary(np.arctan(v), 1.0 / den, -2.0 * v / (den * den))
        if ufunc is np.tanh:
            t = np.tanh(v)
            sech2 = 1.0 - t * t
            return x._unary(t, sech2, -2.0 * t * sech2)
        if ufunc is np.sqrt:
            r = np.sqrt(v)
            return x._unary(r, 0.5 / r, -0.25 / (r * v))
        if ufunc is np.exp:
            e = np.exp(v)
            return x._unary(e, e, e)
        if ufunc is np.log:
            return x._unary(np.log(v), 1.0 / v, -1.0 / (v * v))
        if ufunc is np.square:
            return x._unary(v * v, 2.0 * v, np.full_like(v, 2.0))
        if ufunc is np.reciprocal:
            return x._reciprocal()
        return NotImplemented


def seed(columns, second_order=False):
    """Lift d input arrays to Duals seeded with unit directions.

    columns is a sequence of d equally sized (B,) float arrays. Returns a
    list of d Duals whose jac columns form the identity, so derivatives of
    any downstream expression come out against these inputs directly.
    """
    cols = [np.asarray(c, dtype=float) for c in columns]
    d = len(cols)
    b = cols[0].shape[0]
    out = []
    for i, c in enumerate(cols):
        if c.shape != (b,):
            raise ValueError("seed columns must share one batch shape")
        jac = np.zeros((b, d))
        jac[:, i] = 1.0
        hess = np.zeros((b, d, d)) if second_order else None
        out.append(Dual(c.copy(), jac, hess))
    return out


def where(mask, a, b):
    """Rowwise select between two Duals (or constants) by a boolean mask.

    Both branches must be evaluable everywhere; this merely merges their
    payloads, exactly like np.where on plain arrays.
    """
    if not isinstance(a, Dual) and not isinstance(b, Dual):
        return np.where(mask, a, b)
    d = a.jac.shape[1] if isinstance(a, Dual) else b.jac.shape[1]
    so = (a.hess is not None) if isinstance(a, Dual) else (b.hess is not None)
    if not isinstance(a, Dual):
        a = Dual.constant(np.broadcast_to(a, b.val.shape), d, so)
    if not isinstance(b, Dual):
        b = Dual.constant(np.broadcast_to(b, a.val.shape), d, so)
    val = np.where(mask, a.val, b.val)
    jac = np.where(mask[:, None], a.jac, b.jac)
    hess = None
    if a.hess is not None and b.hess is not None:
        hess = np.where(mask[:, None, None], a.hess, b.hess)
    return Dual(val, jac, hess)
