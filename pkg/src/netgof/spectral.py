"""Centered and scaled residual matrices and their extreme spectra."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateProbability
from .graph import ArdMatrix, Graph, ProbMatrix

EPS = 1e-8
KINDS = ("undirected-sym", "directed", "ard-rect")


@dataclass(frozen=True, eq=False)
class ResidualMatrix:
    a: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown residual kind {self.kind!r}")
        a = np.array(self.a, dtype=float)
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def shape(self):
        return self.a.shape


def _check_probabilities(p: np.ndarray) -> None:
    off = ~np.eye(p.shape[0], dtype=bool)
    vals = p[off]
    bad = (vals <= EPS) | (vals >= 1.0 - EPS)
    if bad.any():
        raise DegenerateProbability(
            f"{int(bad.sum())} off-diagonal probabilities are within {EPS:g} of 0 or 1; "
            "the fitted model makes some edges (nearly) deterministic"
        )


def residual_scale(p: ProbMatrix, directed: bool) -> np.ndarray:
    """Entrywise standard deviation used to normalize residuals (diagonal 1)."""
    _check_probabilities(p.p)
    n = p.n
    var = p.p * (1.0 - p.p)
    if not directed:
        var = var * (n - 1)
    np.fill_diagonal(var, 1.0)
    return np.sqrt(var)


def residual_undirected(g: Graph, p: ProbMatrix) -> ResidualMatrix:
    """(G_ij - P_ij) / sqrt((n - 1) P_ij (1 - P_ij)) with zero diagonal."""
    if g.directed or p.directed:
        raise ValueError("residual_undirected needs an undirected graph and probability matrix")
    if g.n != p.n:
        raise ValueError("graph and probability matrix sizes differ")
    a = (g.adj - p.p) / residual_scale(p, directed=False)
    np.fill_diagonal(a, 0.0)
    return ResidualMatrix(a, "undirected-sym")


def residual_directed(g: Graph, p: ProbMatrix) -> ResidualMatrix:
    """(G_ij - P_ij) / sqrt(P_ij (1 - P_ij)) with zero diagonal."""
    if g.n != p.n:
        raise ValueError("graph and probability matrix sizes differ")
    a = (g.adj - p.p) / residual_scale(p, directed=True)
    np.fill_diagonal(a, 0.0)
    return ResidualMatrix(a, "directed")


def residual_ard(y: ArdMatrix, p_hat: float) -> ResidualMatrix:
    """(Y_ij - n_j p) / sqrt(n_j p (1 - p)); the diagonal is left as is."""
    if not (EPS < p_hat < 1.0 - EPS):
        raise DegenerateProbability(f"ARD edge probability {p_hat!r} is degenerate")
    nj = y.group_sizes.astype(float)[None, :]
    a = (y.counts - nj * p_hat) / np.sqrt(nj * p_hat * (1.0 - p_hat))
    return ResidualMatrix(a, "ard-rect")


def extreme_eigenvalues(a) -> tuple[float, float]:
    """(lambda_min, lambda_max) of a symmetric matrix."""
    m = a.a if isinstance(a, ResidualMatrix) else np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("extreme_eigenvalues needs a square matrix")
    scale = max(np.abs(m).max(initial=0.0), 1.0)
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-12 * scale):
        raise ValueError("extreme_eigenvalues needs a symmetric matrix")
    w = np.linalg.eigvalsh(m)
    return float(w[0]), float(w[-1])


def extreme_singular_values(a) -> tuple[float, float]:
    """(s_min, s_max); s_min is the smallest of the min(m, n) singular values."""
    m = a.a if isinstance(a, ResidualMatrix) else np.asarray(a, dtype=float)
    s = np.linalg.svd(m, compute_uv=False)
    return float(s[-1]), float(s[0])


def batch_extreme_eigenvalues(stack: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Extreme eigenvalues of each symmetric matrix in a (B, n, n) stack."""
    w = np.linalg.eigvalsh(stack)
    return w[:, 0], w[:, -1]


def batch_extreme_singular_values(stack: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = np.linalg.svd(stack, compute_uv=False)
    return s[:, -1], s[:, 0]


def largest_eigenvalue_lanczos(m: np.ndarray, tol: float = 1e-10) -> float:
    """Largest eigenvalue via ARPACK, for large matrices where a full solve is wasteful."""
    from scipy.sparse.linalg import eigsh

    return float(eigsh(m, k=1, which="LA", tol=tol, return_eigenvectors=False)[0])
