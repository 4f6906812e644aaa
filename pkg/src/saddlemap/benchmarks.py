"""The two benchmark problems with closed-form oracles.

* energy x1*x2*x3 constrained to the unit sphere, with the stereographic
  chart (projection from the North pole to the tangent plane at the South
  pole) and every geometric quantity in closed form;
* the Mueller-Brown potential carried on the graph of a trigonometric
  surface, with Newton oracles for its critical points.

The closed forms double as the reference implementation the learned-chart
pipeline is validated against.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .driver import ProblemDefinition
from .geometry import ChristoffelSymbols, CovariantHessian, MetricTensor

# ---------------------------------------------------------------------------
# sphere with E = x1 x2 x3
# ---------------------------------------------------------------------------


def sphere_energy(x: np.ndarray) -> float:
    return float(x[0] * x[1] * x[2])


def sphere_energy_gradient(x: np.ndarray) -> np.ndarray:
    return np.array([x[1] * x[2], x[0] * x[2], x[0] * x[1]])


def sphere_energy_hessian(x: np.ndarray) -> np.ndarray:
    return np.array([
        [0.0, x[2], x[1]],
        [x[2], 0.0, x[0]],
        [x[1], x[0], 0.0],
    ])


def sphere_project(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x / np.linalg.norm(x)


def sphere_force(x: np.ndarray) -> np.ndarray:
    """Tangential negative gradient -(I - x x^T) grad E on the unit sphere."""
    x = np.asarray(x, dtype=float)
    grad = sphere_energy_gradient(x)
    return -(grad - (x @ grad) * x)


class StereographicSphereChart:
    """Closed-form chart machinery of the sphere benchmark.

    Chart map phi(x) = (x1, x2) / (1 - x3); everything downstream of the
    parameterization (metric, connection, gradient, Hessian) in the exact
    algebraic form. Provides the same evaluation surface as the learned
    GeometryField so the driver can run in oracle mode.
    """

    chart_dim = 2

    def phi(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.array([x[0], x[1]]) / (1.0 - x[2])

    def psi(self, u: np.ndarray) -> np.ndarray:
        u1, u2 = u
        s = u1 * u1 + u2 * u2
        return np.array([2.0 * u1, 2.0 * u2, s - 1.0]) / (1.0 + s)

    def psi_jacobian(self, u: np.ndarray) -> np.ndarray:
        u1, u2 = u
        s = u1 * u1 + u2 * u2
        den = (1.0 + s) ** 2
        return np.array([
            [2.0 * (1.0 + s) - 4.0 * u1 * u1, -4.0 * u1 * u2],
            [-4.0 * u1 * u2, 2.0 * (1.0 + s) - 4.0 * u2 * u2],
            [4.0 * u1, 4.0 * u2],
        ]) / den

    def metric(self, u: np.ndarray) -> MetricTensor:
        s = float(u @ u)
        lam = 4.0 / (1.0 + s) ** 2
        return MetricTensor(g=lam * np.eye(2), g_inv=np.eye(2) / lam)

    def metric_jacobian(self, u: np.ndarray) -> np.ndarray:
        """d g_ij / d u^k for the conformal factor 4 / (1 + |u|^2)^2."""
        s = float(u @ u)
        dlam = -16.0 * np.asarray(u) / (1.0 + s) ** 3
        dg = np.zeros((2, 2, 2))
        for k in range(2):
            dg[:, :, k] = dlam[k] * np.eye(2)
        return dg

    def christoffel(self, u: np.ndarray) -> ChristoffelSymbols:
        u1, u2 = u
        c = -2.0 / (1.0 + u1 * u1 + u2 * u2)
        g111 = c * u1
        g112 = c * u2
        gamma = np.zeros((2, 2, 2))
        gamma[0, 0, 0] = g111
        gamma[0, 0, 1] = gamma[0, 1, 0] = g112
        gamma[0, 1, 1] = -g111
        gamma[1, 0, 0] = -g112
        gamma[1, 0, 1] = gamma[1, 1, 0] = g111
        gamma[1, 1, 1] = g112
        return ChristoffelSymbols(gamma=gamma)

    def potential(self, u: np.ndarray) -> float:
        u1, u2 = u
        s = u1 * u1 + u2 * u2
        return 4.0 * u1 * u2 * (s - 1.0) / (1.0 + s) ** 3

    def gradient(self, u: np.ndarray) -> np.ndarray:
        """Riemannian gradient of the chart potential (closed form)."""
        u1, u2 = u
        den = u2 ** 4 + (2.0 * u1 ** 2 + 2.0) * u2 ** 2 + u1 ** 4 + 2.0 * u1 ** 2 + 1.0
        g1 = (u2 ** 5 - 2.0 * u1 ** 2 * u2 ** 3 + (-3.0 * u1 ** 4 + 8.0 * u1 ** 2 - 1.0) * u2) / den
        g2 = -(3.0 * u1 * u2 ** 4 + (2.0 * u1 ** 3 - 8.0 * u1) * u2 ** 2 - u1 ** 5 + u1) / den
        return np.array([g1, g2])

    def force(self, u: np.ndarray) -> np.ndarray:
        return -self.gradient(u)

    def hessian_mixed(self, u: np.ndarray) -> np.ndarray:
        """(1,1) covariant Hessian components [[A, B], [B, D]]."""
        u1, u2 = u
        den = (u2 ** 2 + u1 ** 2 + 1.0) ** 3
        a = -(4.0 * u1 * u2 * (u2 ** 4 + u2 ** 2 - u1 ** 4 + 11.0 * u1 ** 2 - 6.0)) / den
        b = -(u2 ** 6 - 5.0 * u1 ** 2 * u2 ** 4 - 5.0 * u2 ** 4 - 5.0 * u1 ** 4 * u2 ** 2
              + 30.0 * u1 ** 2 * u2 ** 2 - 5.0 * u2 ** 2 + u1 ** 6 - 5.0 * u1 ** 4
              - 5.0 * u1 ** 2 + 1.0) / den
        d = (4.0 * u1 * u2 * (u2 ** 4 - 11.0 * u2 ** 2 - u1 ** 4 - u1 ** 2 + 6.0)) / den
        return np.array([[a, b], [b, d]])

    def covariant_hessian(self, u: np.ndarray, g: MetricTensor | None = None,
                          gamma: ChristoffelSymbols | None = None) -> CovariantHessian:
        if g is None:
            g = self.metric(u)
        h_mixed = self.hessian_mixed(u)
        h_lower = g.g @ h_mixed
        h_lower = 0.5 * (h_lower + h_lower.T)
        return CovariantHessian(h_lower=h_lower, h_mixed=g.g_inv @ h_lower)

    def ambient(self, u: np.ndarray) -> np.ndarray:
        return self.psi(u)


def sphere_exact_chart_eval(u: np.ndarray):
    """All Example-chart closed forms at one chart point."""
    chart = StereographicSphereChart()
    u = np.asarray(u, dtype=float)
    return (
        chart.psi(u),
        chart.metric(u),
        chart.christoffel(u),
        chart.gradient(u),
        chart.covariant_hessian(u),
    )


def sphere_problem() -> ProblemDefinition:
    return ProblemDefinition(
        ambient_dim=3,
        energy=sphere_energy,
        force=sphere_force,
        project=sphere_project,
        exact_chart=StereographicSphereChart(),
    )


# ---------------------------------------------------------------------------
# Mueller-Brown potential on a trigonometric graph surface
# ---------------------------------------------------------------------------

MB_A = np.array([-200.0, -100.0, -170.0, 15.0])
MB_a = np.array([-1.0, -1.0, -6.5, 0.7])
MB_b = np.array([0.0, 0.0, 11.0, 0.6])
MB_c = np.array([-10.0, -10.0, -6.5, 0.7])
MB_X0 = np.array([1.0, 0.0, -0.5, -1.0])
MB_Y0 = np.array([0.0, 0.5, 1.5, 1.0])

# (k1, k2, a, b) rows of the surface height function
SURFACE_COEFFS = np.array([
    [0.0, 1.0, 0.9490, 0.8838],
    [0.0, 2.0, 0.4575, 0.6564],
    [1.0, 0.0, 0.4152, 0.7449],
    [1.0, 2.0, 0.2911, 0.3619],
    [2.0, 0.0, 0.4121, 0.5469],
    [3.0, 2.0, 0.2817, 0.4719],
])


def mb_potential(p: np.ndarray) -> float:
    dx = p[0] - MB_X0
    dy = p[1] - MB_Y0
    return float(np.sum(MB_A * np.exp(MB_a * dx * dx + MB_b * dx * dy + MB_c * dy * dy)))


def mb_gradient(p: np.ndarray) -> np.ndarray:
    dx = p[0] - MB_X0
    dy = p[1] - MB_Y0
    e = MB_A * np.exp(MB_a * dx * dx + MB_b * dx * dy + MB_c * dy * dy)
    return np.array([
        np.sum(e * (2.0 * MB_a * dx + MB_b * dy)),
        np.sum(e * (MB_b * dx + 2.0 * MB_c * dy)),
    ])


def mb_hessian(p: np.ndarray) -> np.ndarray:
    dx = p[0] - MB_X0
    dy = p[1] - MB_Y0
    e = MB_A * np.exp(MB_a * dx * dx + MB_b * dx * dy + MB_c * dy * dy)
    gx = 2.0 * MB_a * dx + MB_b * dy
    gy = MB_b * dx + 2.0 * MB_c * dy
    hxx = np.sum(e * (gx * gx + 2.0 * MB_a))
    hxy = np.sum(e * (gx * gy + MB_b))
    hyy = np.sum(e * (gy * gy + 2.0 * MB_c))
    return np.array([[hxx, hxy], [hxy, hyy]])


def surface_height(p: np.ndarray) -> float:
    k1, k2, a, b = SURFACE_COEFFS.T
    return float(np.sum(a * np.cos(k1 * p[0] + k2 * p[1] + b)))


def surface_height_gradient(p: np.ndarray) -> np.ndarray:
    k1, k2, a, b = SURFACE_COEFFS.T
    s = -a * np.sin(k1 * p[0] + k2 * p[1] + b)
    return np.array([np.sum(s * k1), np.sum(s * k2)])


def surface_lift(p: np.ndarray) -> np.ndarray:
    return np.array([p[0], p[1], surface_height(p)])


def surface_eval(x1x2: np.ndarray):
    """Height, its analytic gradient, and the lifted Riemannian force."""
    p = np.asarray(x1x2, dtype=float)
    height = surface_height(p)
    grad_f = surface_height_gradient(p)
    lifted = surface_force(np.array([p[0], p[1], height]))
    return height, grad_f, lifted


def surface_project(x: np.ndarray) -> np.ndarray:
    """Vertical lift onto the graph: replace x3 by f(x1, x2)."""
    x = np.asarray(x, dtype=float)
    return np.array([x[0], x[1], surface_height(x[:2])])


def surface_energy(x: np.ndarray) -> float:
    return mb_potential(np.asarray(x, dtype=float)[:2])


def surface_force(x: np.ndarray) -> np.ndarray:
    """Ambient tangent representation of -grad_g MB, g = I + grad_f grad_f^T."""
    p = np.asarray(x, dtype=float)[:2]
    grad_f = surface_height_gradient(p)
    g = np.eye(2) + np.outer(grad_f, grad_f)
    du = -np.linalg.solve(g, mb_gradient(p))
    return np.array([du[0], du[1], grad_f @ du])


def surface_problem() -> ProblemDefinition:
    return ProblemDefinition(
        ambient_dim=3,
        energy=surface_energy,
        force=surface_force,
        project=surface_project,
        exact_chart=None,
    )


# ---------------------------------------------------------------------------
# critical-point oracles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CriticalPointReport:
    """Critical points with Morse indices and first-order residuals."""

    points: np.ndarray     # (k, n) ambient coordinates
    indices: np.ndarray    # (k,) number of negative tangential Hessian eigenvalues
    residuals: np.ndarray  # (k,) first-order condition norms

    def to_json(self) -> str:
        return json.dumps(
            {
                "points": self.points.tolist(),
                "indices": self.indices.tolist(),
                "residuals": self.residuals.tolist(),
            },
            indent=2,
        )

    def saddles(self) -> np.ndarray:
        return self.points[self.indices == 1]

    def minima(self) -> np.ndarray:
        return self.points[self.indices == 0]


def _fibonacci_sphere(n: int) -> np.ndarray:
    """Deterministic quasi-uniform seeds on the unit sphere."""
    i = np.arange(n) + 0.5
    phi_angle = np.arccos(1.0 - 2.0 * i / n)
    theta = np.pi * (1.0 + np.sqrt(5.0)) * i
    return np.column_stack([
        np.cos(theta) * np.sin(phi_angle),
        np.sin(theta) * np.sin(phi_angle),
        np.cos(phi_angle),
    ])


def sphere_critical_points(n_seeds: int = 10_000) -> CriticalPointReport:
    """Solve the Lagrange condition grad E = lambda x by seeded Newton.

    Newton runs on F(x, lambda) = (grad E - lambda x, (|x|^2 - 1) / 2);
    converged roots are deduplicated at 1e-6 and classified by the spectrum
    of the tangential Hessian P (hess E - lambda I) P.
    """
    found: list[np.ndarray] = []
    for seed in _fibonacci_sphere(n_seeds):
        z = np.append(seed, seed @ sphere_energy_gradient(seed))
        ok = True
        for _ in range(80):
            x, lam = z[:3], z[3]
            f = np.append(sphere_energy_gradient(x) - lam * x, 0.5 * (x @ x - 1.0))
            if np.linalg.norm(f) < 1e-14:
                break
            jac = np.zeros((4, 4))
            jac[:3, :3] = sphere_energy_hessian(x) - lam * np.eye(3)
            jac[:3, 3] = -x
            jac[3, :3] = x
            try:
                z = z - np.linalg.solve(jac, f)
            except np.linalg.LinAlgError:
                ok = False
                break
            if not np.all(np.isfinite(z)) or np.linalg.norm(z[:3]) > 5.0:
                ok = False
                break
        if not ok:
            continue
        x, lam = z[:3], z[3]
        residual = np.linalg.norm(sphere_energy_gradient(x) - lam * x)
        if residual > 1e-10 or abs(x @ x - 1.0) > 1e-12:
            continue
        if not any(np.linalg.norm(x - p) < 1e-6 for p in found):
            found.append(x)

    points = np.array(sorted(found, key=lambda p: (round(p[0], 9), round(p[1], 9), round(p[2], 9))))
    indices = []
    residuals = []
    for x in points:
        lam = x @ sphere_energy_gradient(x)
        proj = np.eye(3) - np.outer(x, x)
        hess_tan = proj @ (sphere_energy_hessian(x) - lam * np.eye(3)) @ proj
        w, vecs = np.linalg.eigh(hess_tan)
        # the projector contributes a spurious eigenpair along x itself
        tangential = w[np.abs(vecs.T @ x) < 0.5]
        indices.append(int(np.sum(tangential < 0.0)))
        residuals.append(float(np.linalg.norm(sphere_force(x))))
    return CriticalPointReport(
        points=points,
        indices=np.array(indices, dtype=int),
        residuals=np.array(residuals, dtype=float),
    )


def mb_surface_critical_points() -> CriticalPointReport:
    """Newton on grad MB = 0 from a grid over [-1.5, 1] x [-0.5, 2], lifted to the surface."""
    found: list[np.ndarray] = []
    for x in np.linspace(-1.5, 1.0, 32):
        for y in np.linspace(-0.5, 2.0, 32):
            p = np.array([x, y])
            ok = True
            for _ in range(80):
                g = mb_gradient(p)
                if np.linalg.norm(g) < 1e-13:
                    break
                try:
                    p = p - np.linalg.solve(mb_hessian(p), g)
                except np.linalg.LinAlgError:
                    ok = False
                    break
                if not np.all(np.isfinite(p)) or np.linalg.norm(p) > 10.0:
                    ok = False
                    break
            if not ok or np.linalg.norm(mb_gradient(p)) > 1e-10:
                continue
            if not (-1.6 <= p[0] <= 1.1 and -0.6 <= p[1] <= 2.1):
                continue
            if not any(np.linalg.norm(p - q[:2]) < 1e-6 for q in found):
                found.append(surface_lift(p))
    if not found:
        raise RuntimeError("Newton found no Mueller-Brown critical points")
    points = np.array(sorted(found, key=lambda p: (round(p[0], 9), round(p[1], 9))))
    indices = np.array([
        int(np.sum(np.linalg.eigvalsh(mb_hessian(p[:2])) < 0.0)) for p in points
    ])
    residuals = np.array([float(np.linalg.norm(mb_gradient(p[:2]))) for p in points])
    return CriticalPointReport(points=points, indices=indices, residuals=residuals)


def sphere_start_point(report: CriticalPointReport | None = None) -> np.ndarray:
    """Starting sink: the minimum nearest the (1, 1, -1)/sqrt(3) octant."""
    if report is None:
        report = sphere_critical_points()
    target = np.array([1.0, 1.0, -1.0]) / np.sqrt(3.0)
    minima = report.minima()
    return minima[np.argmin(np.linalg.norm(minima - target, axis=1))]


def mb_start_point(report: CriticalPointReport | None = None) -> np.ndarray:
    """Starting sink of the surface run: the rightmost minimum.

    This is the one whose unstable-mode path actually terminates at its
    nearest saddle; from the other minima the ascent path crosses to a
    farther saddle.
    """
    if report is None:
        report = mb_surface_critical_points()
    minima = report.minima()
    return minima[np.argmax(minima[:, 0])]
