"""Diffusion-map coordinates on a local point-cloud and chart-dimension selection.

The embedding uses the density-normalized construction (alpha = 1, the
Laplace-Beltrami limit) so geometry recovery is insensitive to nonuniform
sampling. The stored ``kernel`` is the plain Gaussian kernel *before* any
normalization: it is exactly the matrix a squared-exponential regressor on
the same inputs would assemble, so it can be reused as the regression
covariance without recomputation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg
from scipy.spatial.distance import pdist

from .errors import DegenerateChartError
from .kernels import gaussian_kernel

# Dense eigendecomposition below this size; Lanczos with a fixed start
# vector above it (determinism requires pinning v0).
_DENSE_EIG_MAX = 1500


@dataclass(frozen=True)
class PointCloud:
    """Ambient samples with the force field evaluated at each of them."""

    points: np.ndarray   # (N, n)
    forces: np.ndarray   # (N, n), forces[i] evaluated at points[i]
    base_point: np.ndarray

    def __post_init__(self):
        if self.points.ndim != 2 or self.points.shape[0] < 2:
            raise ValueError("a point-cloud needs at least two rows")
        if self.forces.shape != self.points.shape:
            raise ValueError("forces must align row-by-row with points")
        if not (np.all(np.isfinite(self.points)) and np.all(np.isfinite(self.forces))):
            raise ValueError("point-cloud contains non-finite entries")

    @property
    def size(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class DiffusionMapResult:
    """Spectral embedding of a point-cloud.

    ``eigenvalues`` are the leading Markov-operator eigenvalues in descending
    order including the trivial leading 1; ``eigenvectors`` the matching raw
    eigenvectors (column 0 is constant). ``coordinates`` drops the trivial
    column and scales each remaining eigenvector by its eigenvalue.
    """

    eigenvalues: np.ndarray    # (m + 1,)
    eigenvectors: np.ndarray   # (N, m + 1)
    coordinates: np.ndarray    # (N, m)
    bandwidth_eps: float
    kernel: np.ndarray         # (N, N) pre-normalization Gaussian kernel


def bandwidth_median_rule(points: np.ndarray) -> float:
    """Squared median of the pairwise Euclidean distances."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.shape[0] < 2:
        raise ValueError("median bandwidth needs at least two points")
    med = np.median(pdist(points))
    return float(med ** 2)


def diffusion_maps(points: np.ndarray, eps: float, n_components: int) -> DiffusionMapResult:
    """Density-normalized diffusion-map embedding.

    Pipeline: Gaussian kernel K -> alpha=1 density normalization -> Markov
    operator, eigendecomposed through its symmetric conjugate. Eigenvectors
    are scaled to ||psi||_2 = sqrt(N) (entries O(1) independent of N) with a
    permutation-covariant sign convention, and the embedding uses diffusion
    time 1: coordinate i = lambda_i * psi_i.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if eps <= 0:
        raise ValueError(f"bandwidth must be positive, got {eps}")
    if not 0 < n_components < n:
        raise ValueError(f"need 0 < n_components < N, got {n_components} of {n}")

    kernel = gaussian_kernel(points, points, eps)

    q = kernel.sum(axis=1)
    k_alpha = kernel / np.outer(q, q)
    d_alpha = k_alpha.sum(axis=1)
    d_isqrt = 1.0 / np.sqrt(d_alpha)
    sym = k_alpha * np.outer(d_isqrt, d_isqrt)
    sym = 0.5 * (sym + sym.T)

    k_eig = n_components + 1
    if n <= _DENSE_EIG_MAX:
        w, phi = scipy.linalg.eigh(sym)
        w = w[::-1][:k_eig]
        phi = phi[:, ::-1][:, :k_eig]
    else:
        v0 = np.full(n, 1.0 / np.sqrt(n))
        w, phi = scipy.sparse.linalg.eigsh(sym, k=k_eig, which="LA", v0=v0)
        order = np.argsort(w)[::-1]
        w = w[order]
        phi = phi[:, order]

    psi = phi * d_isqrt[:, None]
    # scale to ||psi||_2 = sqrt(N) and fix signs by the largest-|entry| component
    psi = psi * (np.sqrt(n) / np.linalg.norm(psi, axis=0))
    flips = np.sign(psi[np.argmax(np.abs(psi), axis=0), np.arange(k_eig)])
    psi = psi * flips

    coordinates = psi[:, 1:] * w[1:]
    return DiffusionMapResult(
        eigenvalues=w,
        eigenvectors=psi,
        coordinates=coordinates,
        bandwidth_eps=float(eps),
        kernel=kernel,
    )


def select_chart_components(
    dmap: DiffusionMapResult,
    phi_jacobians: list[np.ndarray],
    rank_tol: float = 0.2,
) -> tuple[int, list[int]]:
    """Chart dimension and a component subset that realizes it.

    The dimension estimate is the rounded average, over evaluation points, of
    the numerical rank of the full coordinate-map Jacobian. Components are
    then scanned greedily in embedding order: one is kept when stacking its
    Jacobian row raises the rank of the running subset at >= 90% of the
    evaluation points, which skips components that are functions (harmonics)
    of those already kept.
    """
    if not phi_jacobians:
        raise ValueError("need at least one Jacobian evaluation")
    jacs = [np.asarray(j, dtype=float) for j in phi_jacobians]
    m = jacs[0].shape[0]

    def num_rank(mat: np.ndarray) -> int:
        sv = np.linalg.svd(mat, compute_uv=False)
        if sv[0] == 0.0:
            return 0
        return int(np.sum(sv > rank_tol * sv[0]))

    d = int(round(float(np.mean([num_rank(j) for j in jacs]))))
    if d < 1:
        raise DegenerateChartError("estimated chart dimension is zero")

    selected: list[int] = []
    for c in range(m):
        trial = selected + [c]
        hits = np.mean([num_rank(j[trial, :]) == len(trial) for j in jacs])
        if hits >= 0.9:
            selected = trial
        if len(selected) == d:
            return d, selected
    raise DegenerateChartError(
        f"no component subset achieves rank {d} (have {m} components)"
    )
