"""Independent oracle values, frozen to tests/data/oracles.json.

Nothing here imports riemap. Every value comes from explicit ambient
formulas and central finite differences in plain numpy, so the package
tests compare two unrelated computations.

    python tests/oracles/make_oracles.py
"""
import json
import math
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "data" / "oracles.json"


def fd_jac(f, x, h=1e-5):
    x = np.asarray(x, float)
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.stack(cols, axis=1)


def fd_hess(f, x, h=1e-4):
    x = np.asarray(x, float)
    m = len(x)
    n = len(f(x))
    out = np.zeros((n, m, m))
    for i in range(m):
        for j in range(m):
            ei = np.zeros(m)
            ej = np.zeros(m)
            ei[i] = h
            ej[j] = h
            out[:, i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h * h)
    return out


def paper_map(x):
    return np.array([(x[0] - x[1]) ** 2 / 2 - x[2] ** 2, math.sqrt(2) * (x[0] - x[1]) * x[2], 0.0])


def curvature_torsion(X, h):
    """Euclidean curvature and torsion of a sampled curve in R^n (n >= 3) from
    the first three derivatives, by Gram-Schmidt on (x', x'', x''')."""
    d1 = np.gradient(X, h, axis=0, edge_order=2)
    d2 = np.gradient(d1, h, axis=0, edge_order=2)
    d3 = np.gradient(d2, h, axis=0, edge_order=2)
    kappa, tau = [], []
    for a, b, c in zip(d1, d2, d3):
        sp = np.linalg.norm(a)
        e1 = a / sp
        b_perp = b - (b @ e1) * e1
        e2 = b_perp / np.linalg.norm(b_perp)
        c_perp = c - (c @ e1) * e1 - (c @ e2) * e2
        kappa.append(np.linalg.norm(b_perp) / sp**2)
        tau.append(np.linalg.norm(c_perp) / (sp**3 * kappa[-1]))
    return np.array(kappa), np.array(tau)


def sphere3_helix_ambient(kappa, tau, s_max, h):
    """Unit-speed curve on S^3 in R^4 with geodesic curvature kappa and torsion tau:
    x' = T, T' = kappa N - x, N' = -kappa T + tau B, B' = -tau N (RK4)."""
    x = np.array([1.0, 0, 0, 0])
    T = np.array([0, 1.0, 0, 0])
    N = np.array([0, 0, 1.0, 0])
    B = np.array([0, 0, 0, 1.0])
    y = np.concatenate([x, T, N, B])

    def f(y):
        x, T, N, B = y[:4], y[4:8], y[8:12], y[12:]
        return np.concatenate([T, kappa * N - x, -kappa * T + tau * B, -tau * N])

    n = int(round(s_max / h))
    xs = [y[:4]]
    for _ in range(n):
        k1 = f(y)
        k2 = f(y + h / 2 * k1)
        k3 = f(y + h / 2 * k2)
        k4 = f(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        xs.append(y[:4])
    return np.array(xs)


def main():
    out = {}
    p = [math.sqrt(2), 0, 0, 0]
    out["paper_jacobian"] = fd_jac(paper_map, p).round(8).tolist()
    out["paper_hessian_c1"] = fd_hess(paper_map, p)[0].round(6).tolist()

    # lambda of the example map along unit horizontal directions in span{(e1 - e2)/sqrt2, e3}
    paper_lam = []
    for ang in np.linspace(0, math.pi, 7):
        X = math.cos(ang) * np.array([1, -1, 0, 0]) / math.sqrt(2) + math.sin(ang) * np.array([0, 0, 1.0, 0])
        h = 1e-4
        f = lambda t: paper_map(np.asarray(p) + t * X)
        acc = (f(h) - 2 * f(0) + f(-h)) / h**2
        vel = (f(h) - f(-h)) / (2 * h)
        paper_lam.append(float(np.linalg.norm(acc) / (vel @ vel)))
    out["paper_lambda"] = paper_lam

    # unit-speed great circle on a sphere of radius r in R^3: |x''| = 1/r
    lam = {}
    for r in (1.0, 2.0, 0.5):
        h = 1e-4
        c = lambda t: r * np.array([math.cos(t / r), math.sin(t / r), 0.0])
        lam[str(r)] = float(np.linalg.norm((c(h) - 2 * c(0) + c(-h)) / h**2))
    out["sphere_lambda"] = lam

    # graph of x1^2: lambda along d1 and d2 at the origin, Euclidean length of T_* d1 is 1 there
    g = lambda x: np.array([x[0], x[1], x[0] ** 2])
    H = fd_hess(g, [0.0, 0.0])
    out["quadric_lambda"] = [float(np.linalg.norm(H[:, 0, 0])), float(np.linalg.norm(H[:, 1, 1]))]

    # small circle with geodesic curvature 1 on the unit sphere: polar angle pi/4
    rho = math.atan(1.0)
    ts = np.linspace(0, 2 * math.pi, 2001)
    R = math.sin(rho)
    X = np.stack([R * np.cos(ts / R), R * np.sin(ts / R), np.full_like(ts, math.cos(rho))], axis=1)
    k, _ = curvature_torsion(np.concatenate([X, np.zeros((len(ts), 1))], axis=1), ts[1] - ts[0])
    out["sphere_small_circle_ambient_kappa"] = float(np.median(k))

    # helix on S^3, kappa = 1, tau = 1/2: image curvature and torsion in R^4
    h = 1e-3
    X = sphere3_helix_ambient(1.0, 0.5, 2 * math.pi, h)
    k, t = curvature_torsion(X, h)
    k, t = k[10:-10], t[10:-10]
    out["sphere3_helix_image"] = {
        "kappa_mean": float(k.mean()),
        "kappa_spread": float(k.max() - k.min()),
        "tau_mean": float(t.mean()),
        "tau_spread": float(t.max() - t.min()),
    }
    # mean curvature of the unit S^3 has norm 1 and is parallel, so the helix
    # condition residual is tau^2 |H| exactly
    out["sphere3_helix_condition_residual"] = 0.5**2 * 1.0

    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(json.dumps(out, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
