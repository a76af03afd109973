"""Transport of circles and helices through a Riemannian map.

A horizontal curve alpha on the source is pushed to gamma = T o alpha. Its
curvature is measured two ways: directly from the pullback connection, and
from kappa^2 + |sigma(V1, V1)|^2. The circle and helix checks compare what
happens to the image curve with pointwise conditions on T: isotropy for
circles, umbilicity plus the second normal derivative of the mean curvature
vector for helices.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import numcore
from .errors import ChartExitError, GeometryError
from .isotropy import ISOTROPIC, IsotropyReport, isotropy_test, mean_curvature_jet, umbilic_residual_jet
from .manifold import EDGE, FrenetCurve, SampledPath, frenet_apparatus, integrate_frenet, _steps_for
from .rmap import MapJet, NormalField, SmoothMap, curve_jet, is_riemannian_at, jet, normal_connection_along, pullback_derivative

DRIFT_TOL = 1e-4
SPREAD_TOL = 1e-4
CONDITION_TOL = 1e-3


def interior(values, edge=EDGE):
    values = np.asarray(values)
    if len(values) <= 2 * edge:
        raise GeometryError(f"need more than {2 * edge} samples to drop {edge} at each end")
    return values[edge:-edge]


def spread(values, edge=EDGE) -> float:
    v = interior(values, edge)
    if np.all(np.isnan(v)):
        return float("nan")
    return float(np.nanmax(v) - np.nanmin(v))


def _norm2(j, v):
    return np.sqrt(np.maximum(j.inner_target(v, v), 0.0))


# ---------------------------------------------------------------- pushforward

@dataclass(frozen=True)
class PushedCurve:
    path: SampledPath
    drift: np.ndarray  # per-sample kernel-component norm of V1
    jet: MapJet = field(repr=False)

    @property
    def horizontality_drift(self):
        return float(np.max(self.drift))


def pushforward_curve(T: SmoothMap, curve: FrenetCurve, j: MapJet | None = None) -> PushedCurve:
    q = T(curve.u)
    inside = T.target.contains(q, closed=True)
    if not np.all(inside):
        first = int(np.flatnonzero(~inside)[0])
        raise ChartExitError(float(curve.s[first]), f"image left the domain of {T.target.name}")
    j = j or curve_jet(T, curve)
    KV = np.einsum("nij,nj->ni", j.kernel_projector(), curve.V1)
    drift = np.sqrt(np.maximum(j.inner_source(KV, KV), 0.0))
    return PushedCurve(SampledPath(curve.s, j.q, j.push(curve.V1)), drift, j)


# ------------------------------------------------------------ image curvature

@dataclass(frozen=True)
class ImageCurvature:
    kappa_tilde: np.ndarray  # from the pullback connection
    kappa_formula: np.ndarray  # sqrt(kappa^2 + |sigma(V1, V1)|^2)
    eq31_residual: float


def image_curvature(T: SmoothMap, curve: FrenetCurve, j: MapJet | None = None) -> ImageCurvature:
    j = j or curve_jet(T, curve)
    pushed = pushforward_curve(T, curve, j)
    iso_res, ok = is_riemannian_at(T, j)
    if not ok:
        warnings.warn(f"{T.name} is not Riemannian along the curve (residual {iso_res:.3e})", stacklevel=2)
    if pushed.horizontality_drift > DRIFT_TOL:
        warnings.warn(f"curve is not horizontal (drift {pushed.horizontality_drift:.3e})", stacklevel=2)
    W = pushed.path.velocity
    acc = pullback_derivative(T, curve, W, j)
    direct = _norm2(j, acc)
    sig = _norm2(j, j.sff(curve.V1, curve.V1))
    formula = np.sqrt(curve.kappa**2 + sig**2)
    return ImageCurvature(direct, formula, float(np.max(interior(np.abs(direct - formula)))))


# ---------------------------------------------------------- circle transport

def random_frames(j: MapJet, count: int, seed: int, with_v3: bool = False) -> np.ndarray:
    """Seeded (count, 3, m) frames: V1, V2 horizontal and g-orthonormal at j.p.

    V3 is zero unless ``with_v3``; then it is horizontal when the rank allows,
    otherwise any unit vector orthogonal to V1 and V2.
    """
    if j.rank < 2:
        raise GeometryError(f"need rank >= 2 for horizontal frames (rank {j.rank})")
    m = j.p.shape[-1]
    rng = np.random.default_rng(seed)
    frames = np.zeros((count, 3, m))
    for t in range(count):
        coeffs = rng.standard_normal((j.rank, j.rank))
        vecs = list(coeffs @ j.horiz_basis.T)
        if with_v3:
            vecs += list(j.ker_basis.T) + list(np.eye(m))
        basis = numcore.orthonormalize(vecs, j.g_source)
        frames[t, 0], frames[t, 1] = basis[0], basis[1]
        if with_v3 and m >= 3:
            frames[t, 2] = basis[2]
    return frames


def integrate_batch(M, p, frames, kappa, tau, s_max, step):
    """Integrate Frenet curves from one point in a single batch.

    Returns (curves, exit_s): ``curves[b]`` is None when curve b left the chart.
    """
    B = len(frames)
    kappa = np.broadcast_to(np.asarray(kappa, dtype=float), (B,))
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (B,))
    s, U, V, exit_s = integrate_frenet(M, np.repeat(np.asarray(p, dtype=float)[None], B, 0), frames,
                                       kappa, tau, step, _steps_for(s_max, step))
    N = len(s)
    curves = [
        None if not np.isnan(exit_s[b]) else FrenetCurve(
            M, s, U[b], V[b, :, 0], V[b, :, 1], V[b, :, 2],
            np.full(N, kappa[b]), np.full(N, tau[b]), float(step))
        for b in range(B)
    ]
    return curves, exit_s


def circle_trials(T: SmoothMap, p, kappa, trials, seed, s_max, step, tau=0.0):
    """Integrate seeded horizontal Frenet curves from p in one batch.

    Returns (curves, skipped) where curves lists the FrenetCurve of every
    trial that stayed inside the source chart.
    """
    j = jet(T, p)
    frames = random_frames(j, trials, seed, with_v3=tau != 0)
    curves, _ = integrate_batch(T.source, j.p, frames, kappa, tau, s_max, step)
    kept = [c for c in curves if c is not None]
    return kept, trials - len(kept)


@dataclass(frozen=True)
class Theorem31Report:
    kappa: float
    trials: int
    skipped: int
    spreads: tuple
    eq31_residuals: tuple
    drifts: tuple
    max_spread: float
    isotropy: IsotropyReport
    spread_tol: float

    @property
    def constant_curvature(self):
        return bool(self.max_spread <= self.spread_tol)

    @property
    def isotropic(self):
        return self.isotropy.verdict == ISOTROPIC

    @property
    def biconditional_holds(self):
        if np.isnan(self.max_spread):
            return False
        return self.constant_curvature == self.isotropic

    def to_dict(self):
        return {
            "kappa": self.kappa,
            "trials": self.trials,
            "skipped": self.skipped,
            "spreads": list(self.spreads),
            "eq31_residuals": list(self.eq31_residuals),
            "drifts": list(self.drifts),
            "max_spread": self.max_spread,
            "isotropy": self.isotropy.to_dict(),
            "constant_curvature": self.constant_curvature,
            "isotropic": self.isotropic,
            "biconditional_holds": self.biconditional_holds,
        }


def theorem31_check(
    T: SmoothMap, p, kappa: float, trials: int = 10, seed: int = 0,
    s_max: float = 2 * np.pi, step: float = 1e-3,
    spread_tol: float = SPREAD_TOL, isotropy_tol: float = 1e-6, samples: int = 100,
) -> Theorem31Report:
    """Image-curvature spread of seeded horizontal circles, paired with the isotropy verdict at p."""
    curves, skipped = circle_trials(T, p, kappa, trials, seed, s_max, step)
    return theorem31_from_curves(T, p, kappa, curves, trials, seed, spread_tol, isotropy_tol, samples)


def theorem31_from_curves(
    T: SmoothMap, p, kappa: float, curves, trials: int, seed: int = 0,
    spread_tol: float = SPREAD_TOL, isotropy_tol: float = 1e-6, samples: int = 100,
) -> Theorem31Report:
    """The theorem31_check report for circles already integrated from p."""
    iso = isotropy_test(T, p, samples, seed, isotropy_tol)
    spreads, residuals, drifts = [], [], []
    for c in curves:
        j = curve_jet(T, c)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ic = image_curvature(T, c, j)
        spreads.append(spread(ic.kappa_tilde))
        residuals.append(ic.eq31_residual)
        drifts.append(pushforward_curve(T, c, j).horizontality_drift)
    max_spread = max(spreads) if spreads else float("nan")
    return Theorem31Report(
        float(kappa), trials, trials - len(curves), tuple(spreads), tuple(residuals), tuple(drifts),
        max_spread, iso, spread_tol,
    )


# ----------------------------------------------------------- helix transport

@dataclass(frozen=True)
class Eq41Result:
    residual: float
    K2: float
    applicable: bool


def eq41_residual(T: SmoothMap, curve: FrenetCurve, j: MapJet | None = None,
                  kappa_tilde=None, tau_tilde=None, spread_tol=SPREAD_TOL) -> Eq41Result:
    """sup |D^3 W + K^2 D W| along the image, W the unit image tangent.

    K^2 = mean(kappa~)^2 + mean(tau~)^2. ``applicable`` is False when the
    image torsion spread exceeds ``spread_tol``; the residual is still
    computed.
    """
    j = j or curve_jet(T, curve)
    pushed = pushforward_curve(T, curve, j)
    W = pushed.path.velocity
    W = W / _norm2(j, W)[:, None]
    if kappa_tilde is None or tau_tilde is None:
        app = frenet_apparatus(T.target, pushed.path, reparametrize=True)
        kappa_tilde, tau_tilde = app.kappa, app.tau
    k_in = interior(kappa_tilde)
    t_in = interior(tau_tilde)
    t_mean = float(np.mean(t_in)) if not np.all(np.isnan(t_in)) else 0.0
    K2 = float(np.mean(k_in)) ** 2 + t_mean**2
    d1 = pullback_derivative(T, curve, W, j)
    d2 = pullback_derivative(T, curve, d1, j)
    d3 = pullback_derivative(T, curve, d2, j)
    res = float(np.max(interior(_norm2(j, d3 + K2 * d1))))
    t_spread = spread(tau_tilde)
    applicable = bool(np.isnan(t_spread) or t_spread <= spread_tol)
    return Eq41Result(res, K2, applicable)


@dataclass(frozen=True)
class TransportReport:
    mode: str  # "helix" or "circle"
    source_kappa: float
    source_tau: float
    horizontality_drift: float
    image_kappa_samples: np.ndarray = field(repr=False)
    image_tau_samples: np.ndarray = field(repr=False)
    drift_samples: np.ndarray = field(repr=False)
    kappa_spread: float
    tau_spread: float
    eq31_residual: float
    umbilic_residual: float
    helix_condition_residual: float
    eq41: Eq41Result
    condition_tol: float
    spread_tol: float

    @property
    def condition_holds(self):
        return bool(self.umbilic_residual <= self.condition_tol and self.helix_condition_residual <= self.condition_tol)

    @property
    def image_is_helix(self):
        # an ordinary helix needs constant kappa~ and tau~ and must solve the helix ODE;
        # in targets of dimension > 3 constant kappa~, tau~ alone do not force the latter
        t_ok = np.isnan(self.tau_spread) or self.tau_spread <= self.spread_tol
        return bool(self.kappa_spread <= self.spread_tol and t_ok and self.eq41.residual <= self.condition_tol)

    @property
    def biconditional_holds(self):
        return self.condition_holds == self.image_is_helix

    def to_dict(self, samples=True):
        out = {
            "mode": self.mode,
            "source_kappa": self.source_kappa,
            "source_tau": self.source_tau,
            "horizontality_drift": self.horizontality_drift,
            "kappa_spread": self.kappa_spread,
            "tau_spread": self.tau_spread,
            "eq31_residual": self.eq31_residual,
            "umbilic_residual": self.umbilic_residual,
            "helix_condition_residual": self.helix_condition_residual,
            "eq41_residual": self.eq41.residual,
            "eq41_K2": self.eq41.K2,
            "eq41_applicable": self.eq41.applicable,
            "condition_holds": self.condition_holds,
            "image_is_helix": self.image_is_helix,
            "biconditional_holds": self.biconditional_holds,
        }
        if samples:
            out["image_kappa_samples"] = [float(v) for v in self.image_kappa_samples]
            out["image_tau_samples"] = [float(v) for v in self.image_tau_samples]
        return out


def helix_condition_check(
    T: SmoothMap, curve: FrenetCurve, condition_tol: float = CONDITION_TOL, spread_tol: float = SPREAD_TOL,
) -> TransportReport:
    """Both sides of the helix transport theorem along one generated curve.

    Condition side: umbilicity along the curve and (D^perp)^2 H2 = -tau^2 H2.
    Image side: constant image curvature and torsion plus the helix ODE.
    A curve with tau = 0 is reported in circle mode, where the condition
    side is the circle case (tau = 0 in the same formula).
    """
    tau = float(np.mean(curve.tau))
    j = curve_jet(T, curve)
    pushed = pushforward_curve(T, curve, j)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ic = image_curvature(T, curve, j)
    umb = float(np.max(umbilic_residual_jet(j)))
    if j.normal_basis.shape[-1] == 0:
        cond = 0.0
    else:
        H2 = NormalField(mean_curvature_jet(j))
        d1 = normal_connection_along(T, curve, H2, j)
        d2 = normal_connection_along(T, curve, d1, j)
        cond = float(np.max(interior(_norm2(j, d2.values + tau**2 * H2.values))))
    app = frenet_apparatus(T.target, pushed.path, reparametrize=True)
    tau_img = app.tau if T.target.dim >= 3 else np.zeros_like(app.kappa)
    eq41 = eq41_residual(T, curve, j, app.kappa, tau_img, spread_tol)
    return TransportReport(
        mode="helix" if tau != 0 else "circle",
        source_kappa=float(np.mean(curve.kappa)),
        source_tau=tau,
        horizontality_drift=pushed.horizontality_drift,
        image_kappa_samples=app.kappa,
        image_tau_samples=tau_img,
        drift_samples=pushed.drift,
        kappa_spread=spread(app.kappa),
        tau_spread=spread(tau_img),
        eq31_residual=ic.eq31_residual,
        umbilic_residual=umb,
        helix_condition_residual=cond,
        eq41=eq41,
        condition_tol=condition_tol,
        spread_tol=spread_tol,
    )
