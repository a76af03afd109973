"""Isotropy and umbilicity diagnostics for Riemannian maps.

lambda(X) = |sigma(X, X)| / |T_* X|^2 on unit horizontal X; a map is
h-isotropic at p when lambda does not depend on X. The criterion
g(sigma(X, X), sigma(X, Y)) = 0 for orthonormal horizontal X, Y gives a
second, independent test.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import exprlang, numcore
from .errors import GeometryError
from .rmap import MapJet, SmoothMap, _as_jet, _shape_apply, custom_map, jet

ISOTROPY_TOL = 1e-6
UNIT_TOL = 1e-8

ISOTROPIC = "isotropic-at-tol"
NOT_ISOTROPIC = "not-isotropic"
DEGENERATE = "degenerate"


def _target_norm(j, v):
    return np.sqrt(np.maximum(j.inner_target(v, v), 0.0))


def lambda_of(T: SmoothMap, p, X) -> float:
    j = _as_jet(T, p)
    X = np.asarray(X, dtype=float)
    nx = float(np.sqrt(j.inner_source(X, X)))
    if abs(nx - 1.0) > UNIT_TOL:
        raise GeometryError(f"X must be unit length (|X| = {nx:.12g})")
    KX = j.kernel_projector() @ X
    if float(np.sqrt(max(j.inner_source(KX, KX), 0.0))) > UNIT_TOL:
        raise GeometryError("X must be horizontal")
    JX = j.push(X)
    return float(_target_norm(j, j.sff(X, X)) / j.inner_target(JX, JX))


@dataclass(frozen=True)
class IsotropyReport:
    point: tuple
    lambda_mean: float
    lambda_min: float
    lambda_max: float
    lemma_residual: float
    sample_count: int
    seed: int
    verdict: str

    @property
    def spread(self):
        return self.lambda_max - self.lambda_min

    def to_dict(self):
        return {
            "point": list(self.point),
            "lambda_mean": self.lambda_mean,
            "lambda_min": self.lambda_min,
            "lambda_max": self.lambda_max,
            "lemma_residual": self.lemma_residual,
            "sample_count": self.sample_count,
            "seed": self.seed,
            "verdict": self.verdict,
        }


def _unit_horizontal(j, coeffs):
    """Vectors with the given coefficients in the horizontal basis, g-normalized."""
    vecs = coeffs @ j.horiz_basis.T
    norms = np.sqrt(np.einsum("ni,ij,nj->n", vecs, j.g_source, vecs))
    return vecs / norms[:, None]


def _orthonormal_partner(j, X, coeffs):
    """For each row X, a unit horizontal Y with g(X, Y) = 0."""
    Y = coeffs @ j.horiz_basis.T
    Y = Y - np.einsum("ni,ij,nj->n", Y, j.g_source, X)[:, None] * X
    norms = np.sqrt(np.einsum("ni,ij,nj->n", Y, j.g_source, Y))
    return Y / norms[:, None]


def isotropy_test(T: SmoothMap, p, samples: int = 100, seed: int = 0, tol: float = ISOTROPY_TOL) -> IsotropyReport:
    """Seeded test of h-isotropy at p by direct sampling and by the pairing criterion."""
    if samples < 10:
        raise ValueError("isotropy_test needs at least 10 samples")
    j = _as_jet(T, p)
    point = tuple(float(v) for v in np.asarray(j.p).ravel())
    rng = np.random.default_rng(seed)
    X = _unit_horizontal(j, rng.standard_normal((samples, j.rank)))
    JX = X @ j.J.T
    sXX = np.einsum("aij,ni,nj->na", j.sff_tensor, X, X)
    num = np.sqrt(np.maximum(np.einsum("na,ab,nb->n", sXX, j.g_target, sXX), 0.0))
    lam = num / np.einsum("na,ab,nb->n", JX, j.g_target, JX)
    if j.rank < 2:
        return IsotropyReport(
            point, float(lam.mean()), float(lam.min()), float(lam.max()),
            float("nan"), samples, seed, DEGENERATE,
        )
    Y = _orthonormal_partner(j, X, rng.standard_normal((samples, j.rank)))
    sXY = np.einsum("aij,ni,nj->na", j.sff_tensor, X, Y)
    lemma = float(np.max(np.abs(np.einsum("na,ab,nb->n", sXX, j.g_target, sXY))))
    lo, hi = float(lam.min()), float(lam.max())
    ok = (hi - lo) <= tol and lemma <= tol
    return IsotropyReport(point, float(lam.mean()), lo, hi, lemma, samples, seed, ISOTROPIC if ok else NOT_ISOTROPIC)


def mean_curvature_jet(j: MapJet) -> np.ndarray:
    """Normal-projected average of sigma(h_i, h_i); works on batched jets."""
    H = np.einsum("...aij,...ik,...jk->...a", j.sff_tensor, j.horiz_basis, j.horiz_basis) / j.rank
    return np.einsum("...ab,...b->...a", j.normal_projector(), H)


def mean_curvature(T: SmoothMap, p) -> np.ndarray:
    return mean_curvature_jet(_as_jet(T, p))


def umbilic_residual_jet(j: MapJet) -> np.ndarray:
    """max over normal basis U and horizontal basis pairs of
    |g(S_U J h_i, J h_j) - g(H2, U) delta_ij|, per point.
    """
    batch = j.p.shape[:-1]
    nu = j.normal_basis.shape[-1]
    if nu == 0:
        return np.zeros(batch)
    H2 = mean_curvature_jet(j)
    Jh = np.einsum("...ai,...ib->...ab", j.J, j.horiz_basis)
    worst = np.zeros(batch)
    eye = np.eye(j.rank)
    for a in range(nu):
        U = j.normal_basis[..., :, a]
        hU = j.inner_target(H2, U)
        for i in range(j.rank):
            S = _shape_apply(j, U, j.horiz_basis[..., :, i])
            row = np.einsum("...a,...ab,...bk->...k", S, j.g_target, Jh)
            dev = np.abs(row - hU[..., None] * eye[i])
            worst = np.maximum(worst, dev.max(axis=-1))
    return worst


@dataclass(frozen=True)
class UmbilicityReport:
    H2: np.ndarray
    residual: float
    offdiag: float

    def to_dict(self):
        return {"H2": [float(v) for v in self.H2], "residual": self.residual, "offdiag": self.offdiag}


def umbilicity_test(T: SmoothMap, p, seed: int = 0, pairs: int = 20) -> UmbilicityReport:
    """Umbilicity residual at p; ``offdiag`` also covers seeded random orthonormal pairs."""
    j = _as_jet(T, p)
    if j.rank < 2:
        raise GeometryError(f"umbilicity needs rank >= 2 (rank {j.rank})")
    H2 = mean_curvature_jet(j)
    residual = float(umbilic_residual_jet(j))
    off = 0.0
    for a in range(j.rank):
        for b in range(a + 1, j.rank):
            s = j.sff(j.horiz_basis[:, a], j.horiz_basis[:, b])
            off = max(off, float(_target_norm(j, s)))
    rng = np.random.default_rng(seed)
    X = _unit_horizontal(j, rng.standard_normal((pairs, j.rank)))
    Y = _orthonormal_partner(j, X, rng.standard_normal((pairs, j.rank)))
    s = np.einsum("aij,ni,nj->na", j.sff_tensor, X, Y)
    off = max(off, float(np.max(np.sqrt(np.maximum(np.einsum("na,ab,nb->n", s, j.g_target, s), 0.0)))))
    return UmbilicityReport(H2, residual, off)


# -------------------------------------------------------------- composition

def compose(phi: SmoothMap, psi: SmoothMap) -> SmoothMap:
    """psi o phi; expression maps are composed by substitution."""
    if phi.target != psi.source:
        raise GeometryError(f"chart mismatch: {phi.name} lands in {phi.target.name}, {psi.name} starts on {psi.source.name}")
    name = f"{psi.name}o{phi.name}"
    if phi.exprs is not None and psi.exprs is not None:
        comps = [exprlang.substitute(e, list(phi.exprs)) for e in psi.exprs]
        return custom_map(phi.source, psi.target, comps, name=name)
    return SmoothMap(name, phi.source, psi.target, lambda xs: psi.fn(list(phi.fn(xs))))


def composition_residual(phi: SmoothMap, psi: SmoothMap, p, X, Y, composite: SmoothMap | None = None) -> float:
    """|sigma_{psi o phi}(X, Y) - psi_* sigma_phi(X, Y) - sigma_psi(phi_* X, phi_* Y)| in the target metric."""
    composite = composite or compose(phi, psi)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    jc = jet(composite, p)
    jphi = jet(phi, p)
    jpsi = jet(psi, jphi.q)
    lhs = jc.sff(X, Y)
    rhs = jpsi.push(jphi.sff(X, Y)) + jpsi.sff(jphi.push(X), jphi.push(Y))
    return float(_target_norm(jc, lhs - rhs))


def fd_lambda(T: SmoothMap, p, X, h=numcore.FD_STEP_SECOND) -> float:
    """lambda(X) from finite differences along the line p + tX (test oracle).

    Valid for a flat source and a Euclidean target, where sigma(X, X) is the
    plain second derivative of t -> T(p + tX).
    """
    p = np.asarray(p, dtype=float)
    X = np.asarray(X, dtype=float)
    f = lambda t: T(p + t * X)
    acc = (f(h) - 2 * f(0.0) + f(-h)) / h**2
    vel = (f(h) - f(-h)) / (2 * h)
    return float(np.linalg.norm(acc) / (vel @ vel))
