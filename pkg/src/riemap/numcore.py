"""Numerical core: second-order dual numbers, finite-difference oracles,
Gram-Schmidt under a general inner product, fixed-step RK4 and stencils.

Every array-valued routine accepts an optional leading batch shape, so a
whole curve's worth of points can be pushed through one call.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import EvaluationError, IntegrationBlowup, NotPositiveDefiniteError

FD_STEP_FIRST = 1e-5
FD_STEP_SECOND = 1e-4
RANK_TOL = 1e-8


class Dual2:
    """Value, gradient and Hessian carried together through arithmetic.

    ``val`` has the batch shape ``B``; ``grad`` is ``B + (k,)`` and ``hess``
    is ``B + (k, k)`` where ``k`` is the number of active inputs.
    """

    __slots__ = ("val", "grad", "hess")
    # keep numpy from broadcasting over Dual2 operands
    __array_ufunc__ = None

    def __init__(self, val, grad, hess=None):
        val = np.asarray(val, dtype=float)
        grad = np.asarray(grad, dtype=float)
        if grad.ndim == 0:
            grad = grad.reshape(1)
        k = grad.shape[-1]
        if hess is None:
            hess = np.zeros(grad.shape + (k,))
        hess = np.asarray(hess, dtype=float)
        if hess.shape[-2:] != (k, k):
            raise ValueError(f"hess trailing shape {hess.shape[-2:]} != ({k}, {k})")
        if not np.array_equal(hess, np.swapaxes(hess, -1, -2)):
            raise ValueError("hess must be symmetric")
        self.val, self.grad, self.hess = val, grad, hess

    @classmethod
    def _raw(cls, val, grad, hess):
        out = object.__new__(cls)
        out.val, out.grad, out.hess = val, grad, hess
        return out

    @classmethod
    def variable(cls, value, index, nvars):
        """Seed input ``index`` of ``nvars`` at ``value`` (scalar or batch array)."""
        value = np.asarray(value, dtype=float)
        grad = np.zeros(value.shape + (nvars,))
        grad[..., index] = 1.0
        return cls._raw(value, grad, np.zeros(value.shape + (nvars, nvars)))

    def __repr__(self):
        return f"Dual2(val={self.val!r}, grad={self.grad!r})"

    @property
    def nvars(self):
        return self.grad.shape[-1]

    def _chain(self, f, f1, f2):
        g = self.grad
        f1 = np.asarray(f1)[..., None]
        f2 = np.asarray(f2)[..., None, None]
        return Dual2._raw(
            np.asarray(f, dtype=float),
            f1 * g,
            f1[..., None] * self.hess + f2 * (g[..., :, None] * g[..., None, :]),
        )

    def __neg__(self):
        return Dual2._raw(-self.val, -self.grad, -self.hess)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Dual2):
            return Dual2._raw(self.val + other.val, self.grad + other.grad, self.hess + other.hess)
        return Dual2._raw(self.val + other, self.grad, self.hess)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual2):
            return Dual2._raw(self.val - other.val, self.grad - other.grad, self.hess - other.hess)
        return Dual2._raw(self.val - other, self.grad, self.hess)

    def __rsub__(self, other):
        return Dual2._raw(other - self.val, -self.grad, -self.hess)

    def __mul__(self, other):
        if isinstance(other, Dual2):
            a, b = self, other
            av = a.val[..., None]
            bv = b.val[..., None]
            cross = a.grad[..., :, None] * b.grad[..., None, :]
            return Dual2._raw(
                a.val * b.val,
                a.grad * bv + b.grad * av,
                a.hess * bv[..., None] + b.hess * av[..., None] + (cross + np.swapaxes(cross, -1, -2)),
            )
        c = np.asarray(other, dtype=float)
        return Dual2._raw(self.val * c, self.grad * c[..., None], self.hess * c[..., None, None])

    __rmul__ = __mul__

    def reciprocal(self):
        v = self.val
        if np.any(v == 0.0):
            raise EvaluationError("division", "division by zero")
        inv = 1.0 / v
        return self._chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __truediv__(self, other):
        if isinstance(other, Dual2):
            return self * other.reciprocal()
        c = np.asarray(other, dtype=float)
        if np.any(c == 0.0):
            raise EvaluationError("division", "division by zero")
        return self * (1.0 / c)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, n):
        if isinstance(n, Dual2) or int(n) != n:
            raise EvaluationError("pow", "only integer exponents are supported")
        n = int(n)
        v = self.val
        if n == 0:
            return Dual2._raw(np.ones_like(v), np.zeros_like(self.grad), np.zeros_like(self.hess))
        if n == 1:
            return self
        if n < 0:
            if np.any(v == 0.0):
                raise EvaluationError("pow", "zero raised to a negative power")
            return self.reciprocal() ** (-n)
        return self._chain(v**n, n * v ** (n - 1), n * (n - 1) * v ** (n - 2))

    def sin(self):
        s, c = np.sin(self.val), np.cos(self.val)
        return self._chain(s, c, -s)

    def cos(self):
        s, c = np.sin(self.val), np.cos(self.val)
        return self._chain(c, -s, -c)

    def exp(self):
        e = np.exp(self.val)
        return self._chain(e, e, e)

    def sqrt(self):
        v = self.val
        if np.any(v <= 0.0):
            raise EvaluationError("sqrt", "argument must be positive for a differentiable sqrt")
        r = np.sqrt(v)
        return self._chain(r, 0.5 / r, -0.25 / (r * v))

    def log(self):
        v = self.val
        if np.any(v <= 0.0):
            raise EvaluationError("log", "argument must be positive")
        return self._chain(np.log(v), 1.0 / v, -1.0 / (v * v))


def _real_check(name, x, ok):
    if not np.all(ok):
        raise EvaluationError(name, f"argument out of domain: {x!r}")


def _is_dual(x):
    return isinstance(x, (Dual2, Dual1))


def sin(x):
    return x.sin() if _is_dual(x) else np.sin(x)


def cos(x):
    return x.cos() if _is_dual(x) else np.cos(x)


def exp(x):
    return x.exp() if _is_dual(x) else np.exp(x)


def sqrt(x):
    if _is_dual(x):
        return x.sqrt()
    _real_check("sqrt", x, np.asarray(x) >= 0.0)
    return np.sqrt(x)


def log(x):
    if _is_dual(x):
        return x.log()
    _real_check("log", x, np.asarray(x) > 0.0)
    return np.log(x)


def divide(a, b):
    """a / b raising EvaluationError on a zero divisor for reals too."""
    if _is_dual(a) or _is_dual(b):
        return a / b
    if np.any(np.asarray(b) == 0.0):
        raise EvaluationError("division", "division by zero")
    return np.true_divide(a, b)


def power(a, n):
    if _is_dual(a):
        return a**n
    a = np.asarray(a, dtype=float)
    if n < 0 and np.any(a == 0.0):
        raise EvaluationError("pow", "zero raised to a negative power")
    return a ** float(n) if n < 0 else a**n


class Dual1:
    """First-order counterpart of :class:`Dual2` (value and gradient only).

    Used where only first derivatives are needed, e.g. metric derivatives
    inside Christoffel symbols evaluated at every integrator stage.
    """

    __slots__ = ("val", "grad")
    __array_ufunc__ = None

    def __init__(self, val, grad):
        self.val = val
        self.grad = grad

    def _chain(self, f, f1):
        return Dual1(f, np.asarray(f1)[..., None] * self.grad)

    def __neg__(self):
        return Dual1(-self.val, -self.grad)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Dual1):
            return Dual1(self.val + other.val, self.grad + other.grad)
        return Dual1(self.val + other, self.grad)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual1):
            return Dual1(self.val - other.val, self.grad - other.grad)
        return Dual1(self.val - other, self.grad)

    def __rsub__(self, other):
        return Dual1(other - self.val, -self.grad)

    def __mul__(self, other):
        if isinstance(other, Dual1):
            return Dual1(
                self.val * other.val,
                self.grad * np.asarray(other.val)[..., None] + other.grad * np.asarray(self.val)[..., None],
            )
        c = np.asarray(other, dtype=float)
        return Dual1(self.val * c, self.grad * c[..., None])

    __rmul__ = __mul__

    def reciprocal(self):
        if np.any(self.val == 0.0):
            raise EvaluationError("division", "division by zero")
        inv = 1.0 / self.val
        return self._chain(inv, -inv * inv)

    def __truediv__(self, other):
        if isinstance(other, Dual1):
            return self * other.reciprocal()
        c = np.asarray(other, dtype=float)
        if np.any(c == 0.0):
            raise EvaluationError("division", "division by zero")
        return self * (1.0 / c)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, n):
        if isinstance(n, Dual1) or int(n) != n:
            raise EvaluationError("pow", "only integer exponents are supported")
        n = int(n)
        if n == 0:
            return Dual1(np.ones_like(self.val), np.zeros_like(self.grad))
        if n == 1:
            return self
        if n < 0:
            if np.any(self.val == 0.0):
                raise EvaluationError("pow", "zero raised to a negative power")
            return self.reciprocal() ** (-n)
        return self._chain(self.val**n, n * self.val ** (n - 1))

    def sin(self):
        return self._chain(np.sin(self.val), np.cos(self.val))

    def cos(self):
        return self._chain(np.cos(self.val), -np.sin(self.val))

    def exp(self):
        e = np.exp(self.val)
        return self._chain(e, e)

    def sqrt(self):
        if np.any(self.val <= 0.0):
            raise EvaluationError("sqrt", "argument must be positive for a differentiable sqrt")
        r = np.sqrt(self.val)
        return self._chain(r, 0.5 / r)

    def log(self):
        if np.any(self.val <= 0.0):
            raise EvaluationError("log", "argument must be positive")
        return self._chain(np.log(self.val), 1.0 / self.val)


VectorFunction = Callable[[Sequence], Sequence]


def _stack(outputs, batch_shape, nvars):
    n = len(outputs)
    val = np.empty(batch_shape + (n,))
    jac = np.zeros(batch_shape + (n, nvars))
    hess = np.zeros(batch_shape + (n, nvars, nvars))
    for a, out in enumerate(outputs):
        if isinstance(out, Dual2):
            val[..., a] = out.val
            jac[..., a, :] = out.grad
            hess[..., a, :, :] = out.hess
        else:
            val[..., a] = out
    return val, jac, hess


def evaluate_jet(f: VectorFunction, x):
    """Value, Jacobian (..., n, m) and second-derivative tensor (..., n, m, m) of f at x."""
    x = np.asarray(x, dtype=float)
    m = x.shape[-1]
    args = [Dual2.variable(x[..., i], i, m) for i in range(m)]
    return _stack(list(f(args)), x.shape[:-1], m)


def evaluate_first(f: VectorFunction, x):
    """Value and Jacobian only, via :class:`Dual1`."""
    x = np.asarray(x, dtype=float)
    m = x.shape[-1]
    batch = x.shape[:-1]
    args = []
    for i in range(m):
        grad = np.zeros(batch + (m,))
        grad[..., i] = 1.0
        args.append(Dual1(x[..., i], grad))
    outputs = list(f(args))
    n = len(outputs)
    val = np.empty(batch + (n,))
    jac = np.zeros(batch + (n, m))
    for a, out in enumerate(outputs):
        if isinstance(out, Dual1):
            val[..., a] = out.val
            jac[..., a, :] = out.grad
        else:
            val[..., a] = out
    return val, jac


def jacobian(f: VectorFunction, x) -> np.ndarray:
    return evaluate_jet(f, x)[1]


def hessian_tensor(f: VectorFunction, x) -> np.ndarray:
    return evaluate_jet(f, x)[2]


def evaluate_real(f: VectorFunction, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = f([x[..., i] for i in range(x.shape[-1])])
    return np.stack([np.broadcast_to(np.asarray(o, dtype=float), x.shape[:-1]) for o in out], axis=-1)


def fd_jacobian(f: VectorFunction, x, h=FD_STEP_FIRST) -> np.ndarray:
    """Central finite-difference Jacobian; the independent oracle for :func:`jacobian`."""
    x = np.asarray(x, dtype=float)
    m = x.shape[-1]
    cols = []
    for i in range(m):
        e = np.zeros(m)
        e[i] = h
        cols.append((evaluate_real(f, x + e) - evaluate_real(f, x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def fd_hessian(f: VectorFunction, x, h=FD_STEP_SECOND) -> np.ndarray:
    """Central finite-difference second derivatives, shape (..., n, m, m)."""
    x = np.asarray(x, dtype=float)
    m = x.shape[-1]
    f0 = evaluate_real(f, x)
    out = np.zeros(f0.shape + (m, m))
    eye = np.eye(m) * h
    for i in range(m):
        fp = evaluate_real(f, x + eye[i])
        fm = evaluate_real(f, x - eye[i])
        out[..., i, i] = (fp - 2 * f0 + fm) / (h * h)
        for j in range(i + 1, m):
            d = (
                evaluate_real(f, x + eye[i] + eye[j])
                - evaluate_real(f, x + eye[i] - eye[j])
                - evaluate_real(f, x - eye[i] + eye[j])
                + evaluate_real(f, x - eye[i] - eye[j])
            ) / (4 * h * h)
            out[..., i, j] = d
            out[..., j, i] = d
    return out


def _as_inner(inner):
    if inner is None:
        return lambda a, b: float(np.dot(a, b))
    if callable(inner):
        return inner
    G = np.asarray(inner, dtype=float)
    return lambda a, b: float(a @ G @ b)


def orthonormalize(vectors, inner=None, rank_tol=RANK_TOL):
    """Gram-Schmidt under ``inner`` (callable, Gram matrix, or None for Euclidean).

    Vectors whose residual norm after projection falls below
    ``rank_tol * max input norm`` are dropped. Each vector is projected twice
    so the result is orthonormal to round-off.
    """
    ip = _as_inner(inner)
    vecs = [np.asarray(v, dtype=float) for v in vectors]
    if not vecs:
        return []
    norms2 = [ip(v, v) for v in vecs]
    if min(norms2) < 0:
        raise NotPositiveDefiniteError("inner product returned a negative squared norm")
    threshold = rank_tol * np.sqrt(max(norms2))
    basis = []
    for v in vecs:
        w = v.copy()
        for _ in range(2):
            for b in basis:
                w = w - ip(b, w) * b
        n2 = ip(w, w)
        if n2 < 0:
            raise NotPositiveDefiniteError("inner product returned a negative squared norm")
        n = np.sqrt(n2)
        if n <= threshold or n == 0.0:
            continue
        basis.append(w / n)
    return basis


@dataclass(frozen=True)
class OdeState:
    y: np.ndarray
    s: float


def rk4_array(field, y0, step, n_steps, s0=0.0):
    """Classical RK4; returns (s grid, states) with states shape (n_steps + 1,) + y0.shape."""
    if step <= 0:
        raise ValueError("step must be positive")
    y = np.array(y0, dtype=float)
    out = np.empty((n_steps + 1,) + y.shape)
    out[0] = y
    s_grid = s0 + step * np.arange(n_steps + 1)
    half = 0.5 * step
    for i in range(n_steps):
        s = s_grid[i]
        k1 = field(s, y)
        k2 = field(s + half, y + half * k1)
        k3 = field(s + half, y + half * k2)
        k4 = field(s + step, y + step * k3)
        y = y + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise IntegrationBlowup(float(s))
        out[i + 1] = y
    return s_grid, out


def rk4_integrate(field, y0: OdeState, step, n_steps):
    """Fixed-step RK4 from ``y0``; returns ``n_steps + 1`` states including ``y0``."""
    if not isinstance(y0, OdeState):
        y0 = OdeState(np.asarray(y0, dtype=float), 0.0)
    s, ys = rk4_array(field, y0.y, step, n_steps, s0=y0.s)
    return [OdeState(ys[i], float(s[i])) for i in range(len(s))]


_C1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_E0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_E1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def diff4(values, h, axis=0):
    """First derivative along ``axis`` with 4th-order stencils.

    Central five-point stencil in the interior; one-sided 4th-order stencils
    on the two samples at each end.
    """
    f = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    n = f.shape[0]
    if n < 5:
        raise ValueError("need at least 5 samples for a 4th-order stencil")
    d = np.empty_like(f)
    d[2:-2] = (_C1[0] * f[:-4] + _C1[1] * f[1:-3] + _C1[3] * f[3:-1] + _C1[4] * f[4:])
    head = f[:5]
    tail = f[-5:][::-1]
    d[0] = np.tensordot(_E0, head, axes=1)
    d[1] = np.tensordot(_E1, head, axes=1)
    d[-1] = -np.tensordot(_E0, tail, axes=1)
    d[-2] = -np.tensordot(_E1, tail, axes=1)
    return np.moveaxis(d / h, 0, axis)
