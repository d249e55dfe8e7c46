"""Forward-mode automatic differentiation with dual numbers.

``Dual`` carries a value and one tangent per seeded direction; ``Dual2``
carries the extra mixed second-order part needed for Hessians.  Both let
their parts be numpy arrays: the tangent arrays hold one leading axis for
the seeded directions (or direction pairs) in front of the value's own
shape, so a single evaluation of a function vectorised over measurement
orders yields every column of a Jacobian at once.

Functions to differentiate take a sequence of ``n`` scalars and are written
with plain arithmetic; the radial forward map qualifies.
"""

import numpy as np

from .errors import InvalidInputError, NumericalFailure

DEFAULT_FD_STEP = 1e-6


class Dual:
    """Value plus tangents: ``value + sum_k tangent[k] eps_k`` with ``eps_k eps_l = 0``."""

    __slots__ = ("value", "tangent")
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, value, tangent=0.0):
        self.value = value
        self.tangent = tangent

    def __repr__(self):
        return f"Dual({self.value!r}, {self.tangent!r})"

    def __neg__(self):
        return Dual(-self.value, -self.tangent)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.tangent + other.tangent)
        return Dual(self.value + other, self.tangent)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value - other.value, self.tangent - other.tangent)
        return Dual(self.value - other, self.tangent)

    def __rsub__(self, other):
        return Dual(other - self.value, -self.tangent)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.value * other.value,
                self.value * other.tangent + self.tangent * other.value,
            )
        return Dual(self.value * other, self.tangent * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            q = self.value / other.value
            return Dual(q, (self.tangent - q * other.tangent) / other.value)
        return Dual(self.value / other, self.tangent / other)

    def __rtruediv__(self, other):
        q = other / self.value
        return Dual(q, -q * self.tangent / self.value)

    def __pow__(self, p):
        if isinstance(p, Dual):
            raise TypeError("dual exponents are not supported")
        return Dual(self.value**p, p * self.value ** (p - 1) * self.tangent)

    def sum(self, axis=-1):
        return Dual(np.sum(self.value, axis=axis), np.sum(self.tangent, axis=axis))

    def log(self):
        return Dual(np.log(self.value), self.tangent / self.value)

    def exp(self):
        e = np.exp(self.value)
        return Dual(e, e * self.tangent)

    def sqrt(self):
        s = np.sqrt(self.value)
        return Dual(s, self.tangent / (2.0 * s))


class Dual2:
    """Second-order dual number along two seeded directions ``u`` and ``w``.

    ``first`` is the pair (derivative along u, derivative along w) and
    ``second`` the mixed derivative ``d^2/du dw``.  With ``w = 0`` the first
    component behaves exactly like :class:`Dual`.
    """

    __slots__ = ("value", "d1", "d2", "d12")
    __array_ufunc__ = None

    def __init__(self, value, first=(0.0, 0.0), second=0.0):
        self.value = value
        self.d1, self.d2 = first
        self.d12 = second

    @property
    def first(self):
        return (self.d1, self.d2)

    @property
    def second(self):
        return self.d12

    def __repr__(self):
        return f"Dual2({self.value!r}, ({self.d1!r}, {self.d2!r}), {self.d12!r})"

    def _chain(self, f0, f1, f2):
        # f0, f1, f2: value, first and second derivative of a scalar map at self.value
        return Dual2(f0, (f1 * self.d1, f1 * self.d2), f2 * self.d1 * self.d2 + f1 * self.d12)

    def __neg__(self):
        return Dual2(-self.value, (-self.d1, -self.d2), -self.d12)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Dual2):
            return Dual2(
                self.value + other.value,
                (self.d1 + other.d1, self.d2 + other.d2),
                self.d12 + other.d12,
            )
        return Dual2(self.value + other, (self.d1, self.d2), self.d12)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual2):
            return Dual2(
                self.value - other.value,
                (self.d1 - other.d1, self.d2 - other.d2),
                self.d12 - other.d12,
            )
        return Dual2(self.value - other, (self.d1, self.d2), self.d12)

    def __rsub__(self, other):
        return Dual2(other - self.value, (-self.d1, -self.d2), -self.d12)

    def __mul__(self, other):
        if isinstance(other, Dual2):
            u, v = self, other
            return Dual2(
                u.value * v.value,
                (u.value * v.d1 + u.d1 * v.value, u.value * v.d2 + u.d2 * v.value),
                u.value * v.d12 + u.d1 * v.d2 + u.d2 * v.d1 + u.d12 * v.value,
            )
        return Dual2(self.value * other, (self.d1 * other, self.d2 * other), self.d12 * other)

    __rmul__ = __mul__

    def reciprocal(self):
        r = 1.0 / self.value
        return self._chain(r, -r * r, 2.0 * r * r * r)

    def __truediv__(self, other):
        if isinstance(other, Dual2):
            return self * other.reciprocal()
        return Dual2(self.value / other, (self.d1 / other, self.d2 / other), self.d12 / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Dual2):
            raise TypeError("dual exponents are not supported")
        v = self.value
        return self._chain(v**p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))

    def sum(self, axis=-1):
        return Dual2(
            np.sum(self.value, axis=axis),
            (np.sum(self.d1, axis=axis), np.sum(self.d2, axis=axis)),
            np.sum(self.d12, axis=axis),
        )

    def log(self):
        return self._chain(np.log(self.value), 1.0 / self.value, -1.0 / self.value**2)

    def exp(self):
        e = np.exp(self.value)
        return self._chain(e, e, e)

    def sqrt(self):
        s = np.sqrt(self.value)
        return self._chain(s, 0.5 / s, -0.25 / (s * self.value))


def _point(at):
    x = np.asarray(at, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise InvalidInputError(f"evaluation point must be a non-empty vector, got shape {x.shape}")
    return x


def _check_finite(mat, what):
    bad = ~np.isfinite(mat)
    if bad.any():
        raise NumericalFailure(f"non-finite entries in {what}", indices=np.argwhere(bad))
    return mat


def jacobian(f, at):
    """Jacobian ``(m, n)`` of ``f: R^n -> R^m`` by forward-mode seeding of each unit vector.

    All ``n`` directions travel together in the leading tangent axis, so ``f``
    is evaluated once.  A scalar-valued ``f`` yields a ``(1, n)`` matrix.
    """
    x = _point(at)
    n = x.size
    eye = np.eye(n)
    out = f([Dual(x[i], eye[:, i, None]) for i in range(n)])
    if not isinstance(out, Dual):
        # output independent of the input
        return np.zeros((np.size(out), n))
    tangent = np.asarray(out.tangent, dtype=float)
    if np.ndim(out.value):
        tangent = np.broadcast_to(tangent, (n,) + np.shape(out.value))
    else:
        # a reduced scalar carries one tangent per direction, (n,) or (n, 1)
        tangent = np.broadcast_to(tangent.reshape(-1, 1) if tangent.ndim else tangent, (n, 1))
    jac = np.array(tangent).reshape(n, -1).T
    return _check_finite(jac, "jacobian")


def gradient(f, at):
    """Gradient of a scalar function."""
    return jacobian(f, at)[0]


def _pair_seeds(x, pairs):
    ia = np.array([p[0] for p in pairs])
    ib = np.array([p[1] for p in pairs])
    return [
        Dual2(x[i], ((ia == i).astype(float)[:, None], (ib == i).astype(float)[:, None]), 0.0)
        for i in range(x.size)
    ]


def _second_order(f, x, pairs):
    out = f(_pair_seeds(x, pairs))
    npairs = len(pairs)
    if not isinstance(out, Dual2):
        shape = np.shape(out)
        zeros = np.zeros((npairs,) + shape)
        return np.asarray(out, dtype=float), zeros, zeros
    vshape = np.shape(out.value)

    def expand(part):
        arr = np.asarray(part, dtype=float)
        if not vshape:
            # scalar output: tangents are (npairs,), (npairs, 1) or a bare 0.0
            full = (npairs, 1) if arr.ndim == 2 else (npairs,)
            return np.array(np.broadcast_to(arr, full)).reshape(npairs)
        return np.array(np.broadcast_to(arr, (npairs,) + vshape))

    return np.asarray(out.value, dtype=float), expand(out.d1), expand(out.d12)


def _upper_pairs(n):
    return [(a, b) for a in range(n) for b in range(a, n)]


def hessian(f, at, raw=False):
    """Hessian of a scalar function from ``n^2`` mixed second-order seeds.

    Every ordered pair ``(a, b)`` is seeded; the result is symmetrised by
    averaging with its transpose unless ``raw=True``, which exposes the
    rounding asymmetry of the two evaluation orders.
    """
    x = _point(at)
    n = x.size
    pairs = [(a, b) for a in range(n) for b in range(n)]
    value, _, d12 = _second_order(f, x, pairs)
    if np.ndim(value) != 0:
        raise InvalidInputError("hessian expects a scalar-valued function; use vector_hessian")
    h = np.asarray(d12, dtype=float).reshape(n, n)
    if not raw:
        h = 0.5 * (h + h.T)
    return _check_finite(h, "hessian")


def taylor2(f, at):
    """Value, Jacobian ``(m, n)`` and Hessian stack ``(m, n, n)`` of a vector function in one pass."""
    x = _point(at)
    n = x.size
    pairs = _upper_pairs(n)
    value, d1, d12 = _second_order(f, x, pairs)
    value = np.atleast_1d(value)
    d1 = d1.reshape(len(pairs), -1)
    d12 = d12.reshape(len(pairs), -1)
    m = value.size
    jac = np.zeros((m, n))
    hess = np.zeros((m, n, n))
    for k, (a, b) in enumerate(pairs):
        if a == b:
            jac[:, a] = d1[k]
        hess[:, a, b] = d12[k]
        hess[:, b, a] = d12[k]
    _check_finite(jac, "jacobian")
    _check_finite(hess, "hessian")
    return value, jac, hess


def vector_hessian(f, at):
    """Stack of Hessians ``(m, n, n)``, one per output component."""
    return taylor2(f, at)[2]


def finite_difference_jacobian(f, at, step=DEFAULT_FD_STEP):
    """Central-difference Jacobian ``(m, n)``; ``f`` maps float vectors to float vectors."""
    if not step > 0:
        raise InvalidInputError("finite-difference step must be positive")
    x = _point(at)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        hi = np.atleast_1d(np.asarray(f(x + e), dtype=float))
        lo = np.atleast_1d(np.asarray(f(x - e), dtype=float))
        cols.append((hi - lo) / (2.0 * step))
    return np.column_stack(cols)


def derivative(f, x0):
    """Derivative of a scalar function of one variable."""
    out = f(Dual(float(x0), 1.0))
    return float(out.tangent) if isinstance(out, Dual) else 0.0
