"""Smooth maps between chart manifolds and the extrinsic geometry of a
Riemannian map: horizontal/vertical and range/normal splits, second
fundamental form, shape operator, adjoint, normal connection and the
covariant derivatives of the second fundamental form and shape operator.

Vectors are coordinate component arrays: source vectors have length m, target
vectors length n. Anything evaluated along a curve carries a leading sample
axis.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from . import exprlang, numcore
from .errors import ChartExitError, DegenerateJetError, GeometryError
from .manifold import (
    ChartManifold,
    christoffel,
    covariant_derivative_along,
    custom as custom_manifold,
    euclidean,
    parse_registry_name,
    sphere,
    _fmt,
    _grid_step,
)

RIEMANNIAN_TOL = 1e-8
NORMAL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class SmoothMap:
    """Coordinate expression of T: source -> target.

    ``fn`` takes a list of m scalar-likes and returns n scalar-likes.
    """

    name: str
    source: ChartManifold
    target: ChartManifold
    fn: Callable = field(repr=False)
    exprs: tuple | None = field(default=None, repr=False)

    def __call__(self, x):
        return numcore.evaluate_real(self.fn, x)

    @property
    def m(self):
        return self.source.dim

    @property
    def n(self):
        return self.target.dim


def custom_map(source: ChartManifold, target: ChartManifold, components, name="custom") -> SmoothMap:
    exprs = tuple(
        c if isinstance(c, exprlang.Expr) else exprlang.parse(str(c), source.dim) for c in components
    )
    if len(exprs) != target.dim:
        raise ValueError(f"map has {len(exprs)} components but target dimension is {target.dim}")
    for e in exprs:
        if e.arity != source.dim:
            raise ValueError(f"component arity {e.arity} does not match source dimension {source.dim}")
    return SmoothMap(name, source, target, lambda xs: [exprlang.evaluate(e, xs) for e in exprs], exprs)


def identity_map(n: int) -> SmoothMap:
    E = euclidean(n)
    return SmoothMap(f"identity{{{n}}}", E, E, lambda xs: list(xs))


def sphere_immersion(r: float = 1.0, n: int = 2) -> SmoothMap:
    """Round n-sphere of radius r into R^{n+1}; the chart metric is the pullback."""
    S = sphere(r, n)

    def fn(xs):
        thetas, phi = xs[:-1], xs[-1]
        # prefix[k] = r * sin(theta_1) ... sin(theta_k)
        prefix = [float(r)]
        for t in thetas:
            prefix.append(prefix[-1] * numcore.sin(t))
        out = [prefix[-1] * numcore.cos(phi), prefix[-1] * numcore.sin(phi)]
        for k in range(len(thetas) - 1, -1, -1):
            out.append(prefix[k] * numcore.cos(thetas[k]))
        return out

    name = f"sphere_immersion{{{_fmt(r)}}}" if n == 2 else f"sphere_immersion{{{_fmt(r)},{n}}}"
    return SmoothMap(name, S, euclidean(n + 1), fn)


def paper_example() -> SmoothMap:
    """R^4 -> R^3, x -> ((x1 - x2)^2 / 2 - x3^2, sqrt(2) (x1 - x2) x3, 0)."""
    return custom_map(
        euclidean(4),
        euclidean(3),
        ["(x1 - x2)^2 / 2 - x3^2", "sqrt(2) * (x1 - x2) * x3", "0"],
        name="paper_example",
    )


def paper_example_factors():
    """(submersion R^4 -> R^2, immersion R^2 -> R^3) whose composite is paper_example."""
    phi = custom_map(euclidean(4), euclidean(2), ["(x1 - x2) / sqrt(2)", "x3"], name="paper_submersion")
    psi = custom_map(euclidean(2), euclidean(3), ["x1^2 - x2^2", "2 * x1 * x2", "0"], name="paper_immersion")
    return phi, psi


def projection(m: int, n: int) -> SmoothMap:
    if not 0 < n <= m:
        raise ValueError("projection{m,n} needs 0 < n <= m")
    return SmoothMap(f"projection{{{m},{n}}}", euclidean(m), euclidean(n), lambda xs: list(xs[:n]))


def scaling(c: float, n: int = 2) -> SmoothMap:
    E = euclidean(n)
    name = f"scaling{{{_fmt(c)}}}" if n == 2 else f"scaling{{{_fmt(c)},{n}}}"
    return SmoothMap(name, E, E, lambda xs: [c * x for x in xs])


def quadric(a: float = 1.0, b: float = 0.0) -> SmoothMap:
    """Graph (x1, x2) -> (x1, x2, a x1^2 + b x2^2) with the pullback metric on the source.

    a != b gives distinct principal curvatures at the origin.
    """
    A, Bc = f"({float(a)!r})", f"({float(b)!r})"
    src = custom_manifold(
        [
            [f"1 + 4 * {A}^2 * x1^2", f"4 * {A} * {Bc} * x1 * x2"],
            [f"4 * {A} * {Bc} * x1 * x2", f"1 + 4 * {Bc}^2 * x2^2"],
        ],
        name=f"quadric_source{{{_fmt(a)},{_fmt(b)}}}",
    )
    T = custom_map(src, euclidean(3), ["x1", "x2", f"{A} * x1^2 + {Bc} * x2^2"])
    return SmoothMap(f"quadric{{{_fmt(a)},{_fmt(b)}}}", src, T.target, T.fn, T.exprs)


MAP_REGISTRY = (
    "identity{n}",
    "sphere_immersion{r}",
    "sphere_immersion{r,n}",
    "paper_example",
    "projection{m,n}",
    "scaling{c}",
    "scaling{c,n}",
    "quadric{a,b}",
    "custom",
)


def _int(p, what):
    if not float(p).is_integer():
        raise ValueError(f"{what} must be an integer")
    return int(p)


def map_from_name(text: str) -> SmoothMap:
    kind, params = parse_registry_name(text)
    if kind == "identity" and len(params) == 1:
        return identity_map(_int(params[0], "n"))
    if kind == "sphere_immersion" and len(params) in (1, 2):
        return sphere_immersion(params[0], _int(params[1], "n") if len(params) == 2 else 2)
    if kind == "paper_example" and not params:
        return paper_example()
    if kind == "projection" and len(params) == 2:
        return projection(_int(params[0], "m"), _int(params[1], "n"))
    if kind == "scaling" and len(params) in (1, 2):
        return scaling(params[0], _int(params[1], "n") if len(params) == 2 else 2)
    if kind == "quadric" and len(params) in (0, 1, 2):
        return quadric(*params)
    raise ValueError(f"unknown map {text!r}; known: {', '.join(MAP_REGISTRY)}")


# ------------------------------------------------------------------ jets

@dataclass(frozen=True, eq=False)
class MapJet:
    """First- and second-order data of T at p (or at a batch of points).

    Bases are stored as column matrices: ``horiz_basis[..., :, a]`` is the
    a-th horizontal vector.
    """

    p: np.ndarray
    q: np.ndarray
    J: np.ndarray
    H: np.ndarray
    ker_basis: np.ndarray
    horiz_basis: np.ndarray
    range_basis: np.ndarray
    normal_basis: np.ndarray
    rank: int
    g_source: np.ndarray
    g_target: np.ndarray
    gamma_source: np.ndarray
    gamma_target: np.ndarray
    singular_values: np.ndarray

    @cached_property
    def sff_tensor(self):
        """sigma[..., a, i, j]: second fundamental form in coordinates."""
        t = self.H - np.einsum("...kij,...ak->...aij", self.gamma_source, self.J)
        t = t + np.einsum("...abc,...bi,...cj->...aij", self.gamma_target, self.J, self.J)
        return t

    def sff(self, X, Y):
        return np.einsum("...aij,...i,...j->...a", self.sff_tensor, X, Y)

    def push(self, X):
        return np.einsum("...ai,...i->...a", self.J, X)

    def inner_source(self, a, b):
        return np.einsum("...ij,...i,...j->...", self.g_source, a, b)

    def inner_target(self, a, b):
        return np.einsum("...ij,...i,...j->...", self.g_target, a, b)

    def range_projector(self):
        """P with P w = sum_a g2(r_a, w) r_a."""
        R = self.range_basis
        return np.einsum("...ia,...ja,...jk->...ik", R, R, self.g_target)

    def normal_projector(self):
        eye = np.eye(self.q.shape[-1])
        return eye - self.range_projector()

    def kernel_projector(self):
        K = self.ker_basis
        return np.einsum("...ia,...ja,...jk->...ik", K, K, self.g_source)

    def horizontal_projector(self):
        return np.eye(self.p.shape[-1]) - self.kernel_projector()


def jet(T: SmoothMap, p, closed=True) -> MapJet:
    """Differential, second derivatives and orthonormal splits of T at p.

    The rank is read off the singular values of J taken between the two
    inner-product spaces; values below RANK_TOL times the largest count as
    zero. ``p`` may carry a leading batch axis; the rank must then agree at
    every point.
    """
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != T.m:
        raise GeometryError(f"point has {p.shape[-1]} coordinates, source dimension is {T.m}")
    if not np.all(T.source.contains(p, closed=closed)):
        raise ChartExitError(0.0, f"point outside the domain of {T.source.name}")
    q, J, H = numcore.evaluate_jet(T.fn, p)
    if not np.all(T.target.contains(q, closed=closed)):
        raise ChartExitError(0.0, f"image point outside the domain of {T.target.name}")
    g1 = T.source.metric(p)
    g2 = T.target.metric(q)
    T.source.check_spd(g1)
    T.target.check_spd(g2)
    L1 = np.linalg.cholesky(g1)
    L2 = np.linalg.cholesky(g2)
    L1inv_T = np.swapaxes(np.linalg.inv(L1), -1, -2)
    L2inv_T = np.swapaxes(np.linalg.inv(L2), -1, -2)
    Jhat = np.swapaxes(L2, -1, -2) @ J @ L1inv_T
    U, S, Vt = np.linalg.svd(Jhat)
    smax = S[..., :1] if S.shape[-1] else np.zeros(S.shape[:-1] + (1,))
    ranks = np.sum(S > numcore.RANK_TOL * np.maximum(smax, 1e-300), axis=-1)
    ranks = np.where(smax[..., 0] > 0, ranks, 0)
    rank_values = np.unique(ranks)
    if rank_values.size != 1:
        raise GeometryError(f"rank not locally constant across queried points: {rank_values.tolist()}")
    r = int(rank_values[0])
    if r == 0:
        raise DegenerateJetError(f"{T.name} has rank 0 at p (locally constant)")
    V = np.swapaxes(Vt, -1, -2)
    horiz = L1inv_T @ V[..., :, :r]
    ker = L1inv_T @ V[..., :, r:]
    rng = L2inv_T @ U[..., :, :r]
    nrm = L2inv_T @ U[..., :, r:]
    return MapJet(
        p=p, q=q, J=J, H=H,
        ker_basis=ker, horiz_basis=horiz, range_basis=rng, normal_basis=nrm, rank=r,
        g_source=g1, g_target=g2,
        gamma_source=christoffel(T.source, p),
        gamma_target=christoffel(T.target, q),
        singular_values=S,
    )


def _as_jet(T, p):
    return p if isinstance(p, MapJet) else jet(T, p)


def is_riemannian_at(T: SmoothMap, p, tol=RIEMANNIAN_TOL):
    """(isometry_residual, verdict): max |g2(J h_i, J h_j) - delta_ij| over the horizontal basis."""
    j = _as_jet(T, p)
    Jh = np.einsum("...ai,...ib->...ab", j.J, j.horiz_basis)
    gram = np.einsum("...ab,...ac,...cd->...bd", Jh, j.g_target, Jh)
    residual = float(np.max(np.abs(gram - np.eye(j.rank))))
    return residual, residual <= tol


def second_fundamental_form(T: SmoothMap, p, X, Y) -> np.ndarray:
    """(nabla T_*)(X, Y) at T(p) from second derivatives and both connections."""
    return _as_jet(T, p).sff(np.asarray(X, dtype=float), np.asarray(Y, dtype=float))


def _random_horizontal(j, rng, count):
    coeffs = rng.standard_normal((count, j.rank))
    vecs = coeffs @ j.horiz_basis.T
    norms = np.sqrt(np.einsum("ni,ij,nj->n", vecs, j.g_source, vecs))
    return vecs / norms[:, None]


def check_normal_valued(T: SmoothMap, p, trials=50, seed=0) -> float:
    """Max |g2(sigma(X1, X2), J X3)| over seeded random horizontal triples."""
    j = _as_jet(T, p)
    residual, ok = is_riemannian_at(T, j)
    if not ok:
        warnings.warn(
            f"{T.name} is not Riemannian at p (isometry residual {residual:.3e}); normal-valuedness is not expected",
            stacklevel=2,
        )
    rng = np.random.default_rng(seed)
    X = _random_horizontal(j, rng, 3 * trials).reshape(trials, 3, -1)
    worst = 0.0
    for X1, X2, X3 in X:
        worst = max(worst, abs(float(j.inner_target(j.sff(X1, X2), j.push(X3)))))
    return worst


def normal_residual(j: MapJet, U) -> np.ndarray:
    """g2-norm of the range component of U."""
    PU = np.einsum("...ik,...k->...i", j.range_projector(), U)
    return np.sqrt(np.maximum(j.inner_target(PU, PU), 0.0))


def _require_normal(j, U, tol=NORMAL_TOL):
    U = np.asarray(U, dtype=float)
    if j.normal_basis.shape[-1] == 0 and np.any(U):
        raise GeometryError("map has no normal directions at p; U cannot be normal")
    if j.normal_basis.shape[-1] == 0:
        raise GeometryError("map has no normal directions at p")
    scale = np.maximum(1.0, np.sqrt(np.maximum(j.inner_target(U, U), 0.0)))
    res = normal_residual(j, U) / scale
    if np.any(res > tol):
        raise GeometryError(f"U is not normal to range T_* (residual {float(np.max(res)):.3e})")
    return U


def _shape_apply(j: MapJet, U, X):
    """S_U T_* X: the range vector sum_k c_k J h_k with Gram c = g2(U, sigma(X, h_j))."""
    Jh = np.einsum("...ai,...ib->...ab", j.J, j.horiz_basis)
    gram = np.einsum("...ab,...ac,...cd->...bd", Jh, j.g_target, Jh)
    sig = np.einsum("...aij,...i,...jb->...ab", j.sff_tensor, X, j.horiz_basis)
    b = np.einsum("...ab,...ac,...c->...b", sig, j.g_target, U)
    c = np.linalg.solve(gram, b[..., None])[..., 0]
    return np.einsum("...ab,...b->...a", Jh, c)


def shape_operator(T: SmoothMap, p, U, X) -> np.ndarray:
    """S_U T_* X defined by g2(S_U T_* X, T_* Y) = g2(U, sigma(X, Y)) for horizontal Y."""
    j = _as_jet(T, p)
    U = _require_normal(j, U)
    return _shape_apply(j, U, np.asarray(X, dtype=float))


def adjoint_pushforward(T: SmoothMap, p, w) -> np.ndarray:
    """Horizontal v with g1(v, h) = g2(w, J h) for every horizontal h."""
    j = _as_jet(T, p)
    w = np.asarray(w, dtype=float)
    Jh = np.einsum("...ai,...ib->...ab", j.J, j.horiz_basis)
    coeff = np.einsum("...ab,...ac,...c->...b", Jh, j.g_target, w)
    return np.einsum("...ib,...b->...i", j.horiz_basis, coeff)


# ------------------------------------------------------- fields along curves

@dataclass(frozen=True)
class NormalField:
    """Per-sample target vectors lying in (range T_*)^perp along a curve."""

    values: np.ndarray

    @classmethod
    def checked(cls, j: MapJet, values, tol=NORMAL_TOL):
        values = np.asarray(values, dtype=float)
        res = normal_residual(j, values)
        if np.any(res > tol * np.maximum(1.0, np.sqrt(j.inner_target(values, values)))):
            raise GeometryError(f"field is not normal (residual {float(np.max(res)):.3e})")
        return cls(values)


def _values(U):
    return U.values if isinstance(U, NormalField) else np.asarray(U, dtype=float)


def curve_jet(T: SmoothMap, curve) -> MapJet:
    """Batched jet at every sample of ``curve``."""
    return jet(T, curve.positions, closed=True)


def _check_grid(curve, arr, what):
    if arr.shape[0] != len(curve.s):
        raise GeometryError(f"{what} has {arr.shape[0]} samples, curve has {len(curve.s)}")


def image_velocity(j: MapJet, curve):
    return j.push(np.asarray(curve.velocity, dtype=float))


def pullback_derivative(T: SmoothMap, curve, W, j: MapJet | None = None) -> np.ndarray:
    """D W / ds for a field W along T o curve: dW/ds + Gamma2(T(u)) (J u') W."""
    j = j or curve_jet(T, curve)
    W = np.asarray(W, dtype=float)
    _check_grid(curve, W, "field")
    h = _grid_step(curve)
    dW = numcore.diff4(W, h)
    if T.target.flat:
        return dW
    ydot = image_velocity(j, curve)
    return dW + np.einsum("nabc,nb,nc->na", j.gamma_target, ydot, W)


def normal_connection_along(T: SmoothMap, curve, U, j: MapJet | None = None) -> NormalField:
    """Normal component of the pullback derivative of a normal field U."""
    j = j or curve_jet(T, curve)
    D = pullback_derivative(T, curve, _values(U), j)
    return NormalField(np.einsum("nik,nk->ni", j.normal_projector(), D))


def source_derivative(T: SmoothMap, curve, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    _check_grid(curve, X, "field")
    return covariant_derivative_along(T.source, curve, X)


def nabla_sff(T: SmoothMap, curve, X2, X3, j: MapJet | None = None) -> np.ndarray:
    """(D_{X1} nabla T_*)(X2, X3) with X1 the curve tangent:
    normal derivative of sigma(X2, X3) minus sigma(D X2, X3) and sigma(X2, D X3).
    """
    j = j or curve_jet(T, curve)
    X2 = np.asarray(X2, dtype=float)
    X3 = np.asarray(X3, dtype=float)
    _check_grid(curve, X2, "X2")
    _check_grid(curve, X3, "X3")
    sigma = j.sff(X2, X3)
    first = normal_connection_along(T, curve, sigma, j).values
    return first - j.sff(source_derivative(T, curve, X2), X3) - j.sff(X2, source_derivative(T, curve, X3))


def nabla_shape(T: SmoothMap, curve, U, X2, j: MapJet | None = None) -> np.ndarray:
    """(D_{X1} S)_U T_*(X2) =
    T_*(D (adjoint of S_U T_* X2)) - S_{normal derivative of U} T_* X2 - S_U (range part of D T_* X2).
    """
    j = j or curve_jet(T, curve)
    U = _values(U)
    X2 = np.asarray(X2, dtype=float)
    _check_grid(curve, U, "U")
    SX2 = _shape_apply(j, U, X2)
    A = adjoint_pushforward(T, j, SX2)
    term1 = j.push(source_derivative(T, curve, A))
    dU = normal_connection_along(T, curve, U, j).values
    term2 = _shape_apply(j, dU, X2)
    D = pullback_derivative(T, curve, j.push(X2), j)
    PD = np.einsum("nik,nk->ni", j.range_projector(), D)
    term3 = _shape_apply(j, U, adjoint_pushforward(T, j, PD))
    return term1 - term2 - term3


def lemma21_sides(T: SmoothMap, curve, X2, X3, U, j: MapJet | None = None):
    """Per-sample left and right sides of the derivative identity pairing
    <(D nabla T_*)(X2, X3), U> with <(D S)_U T_* X2, T_* X3>.
    """
    j = j or curve_jet(T, curve)
    Uv = _values(U)
    left = j.inner_target(nabla_sff(T, curve, X2, X3, j), Uv)
    right = j.inner_target(nabla_shape(T, curve, Uv, X2, j), j.push(np.asarray(X3, dtype=float)))
    return left, right


def lemma21_residual(T: SmoothMap, curve, X2, X3, U, j: MapJet | None = None) -> float:
    left, right = lemma21_sides(T, curve, X2, X3, U, j)
    return float(np.max(np.abs(left - right)))
