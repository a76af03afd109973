"""Single-chart Riemannian manifolds, covariant derivatives along sampled
curves, and Frenet curves (circles and helices) with constant curvature and
torsion.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import exprlang, numcore
from .errors import ChartExitError, GeometryError, NotPositiveDefiniteError

SPD_FLOOR = 1e-10
KAPPA_FLOOR = 1e-8
SPHERE_MARGIN = 0.05
EDGE = 5  # samples dropped at each end of sup residuals and spreads (one-sided stencils)


@dataclass(frozen=True, eq=False)
class ChartManifold:
    """An open coordinate box with a metric tensor field g(u).

    ``metric_fn`` maps a list of ``dim`` scalar-likes (floats, arrays or
    Dual2) to a ``dim x dim`` nested list of scalar-likes.
    """

    name: str
    dim: int
    lower: tuple
    upper: tuple
    metric_fn: Callable = field(repr=False)
    flat: bool = False
    exprs: tuple | None = field(default=None, repr=False)

    @property
    def key(self):
        if self.exprs is None:
            return (self.name, self.dim, self.lower, self.upper)
        return (self.name, self.dim, self.lower, self.upper, tuple(str(e) for e in self.exprs))

    def __eq__(self, other):
        return isinstance(other, ChartManifold) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def contains(self, u, closed=False):
        u = np.asarray(u, dtype=float)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        if closed:
            ok = (u >= lo) & (u <= hi)
        else:
            ok = (u > lo) & (u < hi)
        return np.all(ok, axis=-1)

    def clip(self, u):
        """Clamp into the box; used to keep metric evaluation finite for discarded trials."""
        return np.clip(u, self.lower, self.upper)

    def metric(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.flat:
            return np.broadcast_to(np.eye(self.dim), u.shape[:-1] + (self.dim, self.dim)).copy()
        entries = self.metric_fn([u[..., i] for i in range(self.dim)])
        g = np.empty(u.shape[:-1] + (self.dim, self.dim))
        for i in range(self.dim):
            for j in range(self.dim):
                g[..., i, j] = entries[i][j]
        return g

    def metric_jet(self, u):
        """Metric and its first derivatives; ``dg[..., i, j, l] = d g_ij / d u^l``."""
        u = np.asarray(u, dtype=float)
        m = self.dim
        if self.flat:
            g = self.metric(u)
            return g, np.zeros(g.shape + (m,))

        def flat_entries(xs):
            rows = self.metric_fn(xs)
            return [rows[i][j] for i in range(m) for j in range(m)]

        val, jac = numcore.evaluate_first(flat_entries, u)
        batch = u.shape[:-1]
        return val.reshape(batch + (m, m)), jac.reshape(batch + (m, m, m))

    def check_spd(self, g):
        lam = np.linalg.eigvalsh(g)
        if np.any(lam[..., 0] <= SPD_FLOOR):
            raise NotPositiveDefiniteError(
                f"metric of {self.name} not positive definite (smallest eigenvalue {lam[..., 0].min():.3e})"
            )

    def inner(self, u, a, b):
        g = self.metric(u)
        return np.einsum("...ij,...i,...j->...", g, a, b)

    def norm(self, u, a):
        return np.sqrt(self.inner(u, a, a))


def christoffel(M: ChartManifold, u, check=True) -> np.ndarray:
    """Levi-Civita symbols ``G[..., k, i, j]``, symmetric in (i, j)."""
    u = np.asarray(u, dtype=float)
    m = M.dim
    if M.flat:
        return np.zeros(u.shape[:-1] + (m, m, m))
    g, dg = M.metric_jet(u)
    if check:
        M.check_spd(g)
    # lowered[..., l, i, j] = d_i g_jl + d_j g_il - d_l g_ij
    d_i_gjl = np.moveaxis(dg, -3, -1)
    lowered = d_i_gjl + np.swapaxes(d_i_gjl, -1, -2) - np.moveaxis(dg, -1, -3)
    lowered = 0.5 * (lowered + np.swapaxes(lowered, -1, -2))
    gamma = np.linalg.solve(g, lowered.reshape(u.shape[:-1] + (m, m * m)))
    return 0.5 * gamma.reshape(u.shape[:-1] + (m, m, m))


def fd_christoffel(M: ChartManifold, u, h=numcore.FD_STEP_FIRST) -> np.ndarray:
    """Christoffel symbols from central differences of the metric (test oracle)."""
    u = np.asarray(u, dtype=float)
    m = M.dim
    dg = np.zeros((m, m, m))
    for l in range(m):
        e = np.zeros(m)
        e[l] = h
        dg[:, :, l] = (M.metric(u + e) - M.metric(u - e)) / (2 * h)
    ginv = np.linalg.inv(M.metric(u))
    out = np.zeros((m, m, m))
    for k in range(m):
        for i in range(m):
            for j in range(m):
                out[k, i, j] = 0.5 * sum(
                    ginv[k, l] * (dg[j, l, i] + dg[i, l, j] - dg[i, j, l]) for l in range(m)
                )
    return out


# ---------------------------------------------------------------- registry

def euclidean(n: int) -> ChartManifold:
    eye = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    return ChartManifold(
        f"euclidean{{{n}}}", n, (-math.inf,) * n, (math.inf,) * n, lambda xs: eye, flat=True
    )


def _fmt(x):
    return repr(float(x)).rstrip("0").rstrip(".") if float(x) != int(x) else str(int(x))


def sphere(r: float = 1.0, n: int = 2) -> ChartManifold:
    """Round n-sphere of radius r in hyperspherical coordinates (theta_1..theta_{n-1}, phi).

    Metric diag(r^2, r^2 sin^2 theta_1, ..., r^2 prod sin^2 theta_i).
    """
    if r <= 0 or n < 1:
        raise ValueError("sphere needs r > 0 and n >= 1")
    r2 = float(r) ** 2

    def metric_fn(xs):
        diag = [r2]
        w = r2
        for k in range(n - 1):
            s = numcore.sin(xs[k])
            w = w * s * s
            diag.append(w)
        return [[diag[i] if i == j else 0.0 for j in range(n)] for i in range(n)]

    lower = (SPHERE_MARGIN,) * (n - 1) + (0.0,)
    upper = (math.pi - SPHERE_MARGIN,) * (n - 1) + (2 * math.pi,)
    name = f"sphere{{{_fmt(r)}}}" if n == 2 else f"sphere{{{_fmt(r)},{n}}}"
    return ChartManifold(name, n, lower, upper, metric_fn)


def custom(metric_exprs, dim=None, lower=None, upper=None, name="custom") -> ChartManifold:
    """Manifold whose metric entries are exprlang expressions.

    ``metric_exprs`` is a dim x dim nested list of Expr or source strings;
    symmetry is enforced by reading the upper triangle.
    """
    dim = dim or len(metric_exprs)
    rows = [
        [e if isinstance(e, exprlang.Expr) else exprlang.parse(str(e), dim) for e in row]
        for row in metric_exprs
    ]
    if len(rows) != dim or any(len(r) != dim for r in rows):
        raise ValueError(f"metric must be {dim}x{dim}")
    for i in range(dim):
        for j in range(i):
            rows[i][j] = rows[j][i]

    def metric_fn(xs):
        upper_vals = {(i, j): exprlang.evaluate(rows[i][j], xs) for i in range(dim) for j in range(i, dim)}
        return [[upper_vals[min(i, j), max(i, j)] for j in range(dim)] for i in range(dim)]

    lower = tuple(float(v) for v in lower) if lower is not None else (-math.inf,) * dim
    upper = tuple(float(v) for v in upper) if upper is not None else (math.inf,) * dim
    flat_exprs = tuple(rows[i][j] for i in range(dim) for j in range(dim))
    return ChartManifold(name, dim, lower, upper, metric_fn, exprs=flat_exprs)


_NAME = re.compile(r"^\s*([a-z_]+)\s*(?:\{([^}]*)\})?\s*$")


def parse_registry_name(text):
    m = _NAME.match(text)
    if not m:
        raise ValueError(f"malformed registry name {text!r}")
    params = []
    if m.group(2) is not None and m.group(2).strip():
        for part in m.group(2).split(","):
            params.append(exprlang.evaluate(exprlang.parse(part, 0), []))
    return m.group(1), [float(p) for p in params]


def manifold_from_name(text: str) -> ChartManifold:
    kind, params = parse_registry_name(text)
    if kind == "euclidean":
        if len(params) != 1 or not float(params[0]).is_integer():
            raise ValueError("euclidean{n} needs one integer parameter")
        return euclidean(int(params[0]))
    if kind == "sphere":
        if len(params) == 1:
            return sphere(params[0])
        if len(params) == 2 and float(params[1]).is_integer():
            return sphere(params[0], int(params[1]))
        raise ValueError("sphere{r} or sphere{r,n}")
    raise ValueError(f"unknown manifold {text!r}")


MANIFOLD_REGISTRY = ("euclidean{n}", "sphere{r}", "sphere{r,n}", "custom")


# ---------------------------------------------------------------- curves

@dataclass(frozen=True)
class SampledPath:
    """Positions on a uniform arc-length grid, optionally with velocities."""

    s: np.ndarray
    positions: np.ndarray
    velocity: np.ndarray | None = None

    @property
    def step(self):
        return float(self.s[1] - self.s[0])


@dataclass(frozen=True)
class FrenetCurve:
    manifold: ChartManifold
    s: np.ndarray
    u: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    V3: np.ndarray
    kappa: np.ndarray
    tau: np.ndarray
    step: float

    @property
    def positions(self):
        return self.u

    @property
    def velocity(self):
        return self.V1

    @property
    def K2(self):
        return self.kappa**2 + self.tau**2

    def __len__(self):
        return len(self.s)

    def samples(self):
        for i in range(len(self.s)):
            yield {
                "s": float(self.s[i]),
                "u": self.u[i],
                "V1": self.V1[i],
                "V2": self.V2[i],
                "V3": self.V3[i],
                "kappa": float(self.kappa[i]),
                "tau": float(self.tau[i]),
            }

    def frame_deviation(self):
        """Max over samples of |g(V_a, V_b) - delta_ab| for the frame vectors in use."""
        g = self.manifold.metric(self.u)
        frame = np.stack([self.V1, self.V2, self.V3], axis=1)
        used = 3 if self.manifold.dim >= 3 else 2
        frame = frame[:, :used]
        gram = np.einsum("nai,nij,nbj->nab", frame, g, frame)
        return float(np.max(np.abs(gram - np.eye(used))))


def _grid_step(curve):
    s = np.asarray(curve.s, dtype=float)
    if len(s) < 5:
        raise GeometryError("need at least 5 samples along the curve")
    h = s[1] - s[0]
    if h <= 0 or np.max(np.abs(np.diff(s) - h)) > 1e-9 * max(1.0, abs(h)):
        raise GeometryError("curve samples must lie on a uniform increasing grid")
    return float(h)


def _velocity(curve, h):
    v = getattr(curve, "velocity", None)
    if v is None:
        v = numcore.diff4(curve.positions, h)
    return np.asarray(v, dtype=float)


def covariant_derivative_along(M: ChartManifold, curve, field_values, velocity=None) -> np.ndarray:
    """(D W / ds)^k = dW^k/ds + Gamma^k_ij u'^i W^j on the curve's grid."""
    h = _grid_step(curve)
    W = np.asarray(field_values, dtype=float)
    if W.shape[0] != len(curve.s):
        raise GeometryError(f"field has {W.shape[0]} samples, curve has {len(curve.s)}")
    du = _velocity(curve, h) if velocity is None else np.asarray(velocity, dtype=float)
    dW = numcore.diff4(W, h)
    if M.flat:
        return dW
    gamma = christoffel(M, curve.positions)
    return dW + np.einsum("nkij,ni,nj->nk", gamma, du, W)


def _frenet_field(M, kappa, tau):
    m = M.dim

    def field(s, Y):
        u = Y[:, :m]
        V1, V2, V3 = Y[:, m : 2 * m], Y[:, 2 * m : 3 * m], Y[:, 3 * m :]
        k = kappa[:, None]
        t = tau[:, None]
        d1 = k * V2
        d2 = -k * V1 + t * V3
        d3 = -t * V2
        if not M.flat:
            gamma = christoffel(M, M.clip(u), check=False)
            # G(V1, .) once, then applied to V1, V2, V3 together
            A = np.einsum("bkij,bi->bkj", gamma, V1)
            corr = A @ np.stack([V1, V2, V3], axis=2)
            d1 = d1 - corr[:, :, 0]
            d2 = d2 - corr[:, :, 1]
            d3 = d3 - corr[:, :, 2]
        return np.concatenate([V1, d1, d2, d3], axis=1)

    return field


def integrate_frenet(M: ChartManifold, points, frames, kappa, tau, step, n_steps):
    """Integrate a batch of Frenet curves with constant curvature/torsion.

    ``points`` (B, m), ``frames`` (B, 3, m), ``kappa``/``tau`` (B,). Returns
    (s, U (B, N, m), V (B, N, 3, m), exit_s (B,) with NaN where the curve
    stayed inside the chart).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    frames = np.asarray(frames, dtype=float).reshape(points.shape[0], 3, M.dim)
    B = points.shape[0]
    kappa = np.broadcast_to(np.asarray(kappa, dtype=float), (B,))
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (B,))
    y0 = np.concatenate([points, frames.reshape(B, 3 * M.dim)], axis=1)
    s, Y = numcore.rk4_array(_frenet_field(M, kappa, tau), y0, step, n_steps)
    m = M.dim
    if not M.flat:
        M.check_spd(M.metric(M.clip(Y[:, :, :m])))
    U = np.transpose(Y[:, :, :m], (1, 0, 2))
    V = np.transpose(Y[:, :, m:].reshape(len(s), B, 3, m), (1, 0, 2, 3))
    inside = M.contains(U)
    exit_s = np.full(B, np.nan)
    for b in range(B):
        bad = np.flatnonzero(~inside[b])
        if bad.size:
            exit_s[b] = s[bad[0]]
    return s, U, V, exit_s


def check_frame(M: ChartManifold, p, frame, tol=1e-10):
    p = np.asarray(p, dtype=float)
    frame = np.asarray(frame, dtype=float)
    g = M.metric(p)
    used = 3 if M.dim >= 3 else 2
    gram = frame[:used] @ g @ frame[:used].T
    dev = float(np.max(np.abs(gram - np.eye(used))))
    if dev > tol:
        raise GeometryError(f"frame not g-orthonormal at p (deviation {dev:.3e})")
    if M.dim < 3 and np.any(frame[2] != 0):
        raise GeometryError("V3 must be zero on a 2-dimensional manifold")


def _steps_for(s_max, step):
    if step <= 0:
        raise ValueError("step must be positive")
    n = int(round(s_max / step))
    if n < 4:
        raise ValueError("s_max must cover at least 4 steps")
    return n


def generate_frenet_curve(M: ChartManifold, p, frame0, kappa, tau, s_max, step) -> FrenetCurve:
    """Integrate u' = V1 and the Frenet-Serret system along the Levi-Civita connection."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if step > 1e-2:
        raise ValueError("step must be <= 1e-2")
    frame0 = np.asarray(frame0, dtype=float)
    if frame0.shape[0] == 2:
        frame0 = np.vstack([frame0, np.zeros(M.dim)])
    if M.dim < 3 and tau != 0:
        raise GeometryError(f"torsion needs dimension >= 3; {M.name} has dimension {M.dim}")
    if not M.contains(p):
        raise ChartExitError(0.0, "start point outside the chart domain")
    check_frame(M, p, frame0)
    n = _steps_for(s_max, step)
    s, U, V, exit_s = integrate_frenet(M, [p], [frame0], [kappa], [tau], step, n)
    if not np.isnan(exit_s[0]):
        raise ChartExitError(float(exit_s[0]))
    N = len(s)
    return FrenetCurve(
        M, s, U[0], V[0, :, 0], V[0, :, 1], V[0, :, 2],
        np.full(N, float(kappa)), np.full(N, float(tau)), float(step),
    )


@dataclass(frozen=True)
class FrenetApparatus:
    kappa: np.ndarray
    tau: np.ndarray  # NaN where kappa <= KAPPA_FLOOR
    V1: np.ndarray
    V2: np.ndarray
    V3: np.ndarray
    speed: np.ndarray


def _complete_frame(g, V1, V2, B, m, kappa_ok):
    """Third frame vector: oriented cross product in dimension 3, else normalized B."""
    N = V1.shape[0]
    V3 = np.zeros_like(V1)
    if m < 3:
        return V3
    if m == 3:
        # V3^k = g^{kl} eps_{lij} V1^i V2^j / sqrt(det g)
        cross = np.cross(V1, V2)
        ginv = np.linalg.inv(g)
        V3 = np.einsum("nkl,nl->nk", ginv, cross) * np.sqrt(np.linalg.det(g))[:, None]
    else:
        nb = np.sqrt(np.maximum(np.einsum("ni,nij,nj->n", B, g, B), 0.0))
        good = nb > KAPPA_FLOOR
        V3[good] = B[good] / nb[good, None]
        for i in np.flatnonzero(~good):
            basis = numcore.orthonormalize([V1[i], V2[i]] + list(np.eye(m)), g[i])
            V3[i] = basis[2]
    V3[~kappa_ok] = 0.0
    return V3


def frenet_apparatus(M: ChartManifold, curve, reparametrize=False, speed_tol=1e-4) -> FrenetApparatus:
    """Estimate kappa, tau and the frame from a sampled path.

    Derivatives along the path are divided by the speed, which is the same
    as re-parametrizing by arc length; without ``reparametrize`` the path
    must already be unit speed within ``speed_tol``.
    """
    h = _grid_step(curve)
    if len(curve.s) < 9:
        raise GeometryError("frenet_apparatus needs at least 9 samples")
    u = np.asarray(curve.positions, dtype=float)
    v = _velocity(curve, h)
    g = M.metric(u)
    speed = np.sqrt(np.einsum("ni,nij,nj->n", v, g, v))
    if not reparametrize and np.max(np.abs(speed - 1.0)) > speed_tol:
        raise GeometryError(f"path is not unit speed (max deviation {np.max(np.abs(speed - 1.0)):.3e})")
    V1 = v / speed[:, None]
    A = covariant_derivative_along(M, curve, V1, velocity=v) / speed[:, None]
    kappa = np.sqrt(np.einsum("ni,nij,nj->n", A, g, A))
    ok = kappa > KAPPA_FLOOR
    V2 = np.zeros_like(V1)
    V2[ok] = A[ok] / kappa[ok, None]
    kappa = np.where(ok, kappa, 0.0)
    B = covariant_derivative_along(M, curve, V2, velocity=v) / speed[:, None] + kappa[:, None] * V1
    V3 = _complete_frame(g, V1, V2, B, M.dim, ok)
    tau = np.einsum("ni,nij,nj->n", B, g, V3)
    if M.dim < 3:
        tau = np.zeros_like(kappa)
    tau = np.where(ok, tau, np.nan)
    return FrenetApparatus(kappa, tau, V1, V2, V3, speed)


def helix_residual(M: ChartManifold, curve: FrenetCurve, K2=None, edge=EDGE) -> float:
    """sup_s |D^3 V1 + K^2 D V1|_g over interior samples (zero for an exact helix)."""
    if K2 is None:
        K2 = float(np.mean(curve.K2))
    d1 = covariant_derivative_along(M, curve, curve.V1)
    d2 = covariant_derivative_along(M, curve, d1)
    d3 = covariant_derivative_along(M, curve, d2)
    r = d3 + K2 * d1
    res = np.sqrt(M.inner(curve.u, r, r))
    return float(np.max(res[edge:len(res) - edge]))
