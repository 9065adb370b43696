"""Latent-dimension selection and community detection on fitted positions."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import gof
from .errors import NetGofError
from .graph import Graph, NodeLabeling, as_generator
from .models import LatentSpaceFit, fit_latent_space, prob_matrix


@dataclass
class DimensionStep:
    d: int
    seed: int
    report: Optional[gof.TestReport] = None
    error: Optional[str] = None
    fit: Optional[LatentSpaceFit] = field(default=None, repr=False)

    @property
    def rejected(self) -> bool:
        return self.report is None or self.report.reject

    def to_dict(self) -> dict:
        d = {"d": self.d, "seed": self.seed, "rejected": self.rejected}
        if self.report is not None:
            d["report"] = self.report.to_dict()
        if self.error is not None:
            d["error"] = self.error
        return d


@dataclass
class DimensionScan:
    d_fit: Optional[int]
    trail: list
    max_d: int
    exhausted: bool

    def to_dict(self) -> dict:
        return {
            "d_fit": self.d_fit,
            "max_d": self.max_d,
            "exhausted": self.exhausted,
            "trail": [s.to_dict() for s in self.trail],
        }


def default_max_d(n: int) -> int:
    return min(math.ceil(math.sqrt(n)), 12, n - 1)


def dimension_seeds(seed, max_d: int) -> list[int]:
    """Per-dimension test seeds, independent of how far a scan gets."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [int(s) for s in ss.generate_state(max_d)]


def test_dimension(
    g: Graph,
    d: int,
    seed: int,
    B: int = gof.DEFAULT_B,
    alpha: float = 0.05,
    pgd: Optional[dict] = None,
) -> DimensionStep:
    """Fit the latent space model at dimension ``d`` and bootstrap-test it."""
    try:
        fit = fit_latent_space(g, d, **(pgd or {}))
        p_hat = prob_matrix(fit)
        rep = gof.test_undirected_bootstrap(
            g, gof.bernoulli_sampler(p_hat), p_hat, B=B, alpha=alpha, seed=seed
        )
    except NetGofError as exc:
        return DimensionStep(d, seed, error=f"{type(exc).__name__}: {exc}")
    return DimensionStep(d, seed, report=rep, fit=fit)


test_dimension.__test__ = False


def select_dimension(
    g: Graph,
    max_d: Optional[int] = None,
    B: int = gof.DEFAULT_B,
    alpha: float = 0.05,
    seed=None,
    pgd: Optional[dict] = None,
    full_scan: bool = False,
) -> DimensionScan:
    """Smallest latent dimension whose fitted model is not rejected.

    Dimensions are tried in order 1, 2, ...; a dimension whose fit or test
    raises is recorded in the trail and counted as rejected.  With
    ``full_scan`` every dimension up to ``max_d`` is tested (for reporting).
    """
    if max_d is None:
        max_d = default_max_d(g.n)
    if not 1 <= max_d < g.n:
        raise ValueError("max_d must satisfy 1 <= max_d < n")
    seeds = dimension_seeds(seed, max_d)
    trail = []
    d_fit = None
    for d in range(1, max_d + 1):
        step = test_dimension(g, d, seeds[d - 1], B=B, alpha=alpha, pgd=pgd)
        trail.append(step)
        if d_fit is None and not step.rejected:
            d_fit = d
            if not full_scan:
                break
    return DimensionScan(d_fit, trail, max_d, exhausted=d_fit is None)


@dataclass
class KMeansResult:
    labels: NodeLabeling
    centers: np.ndarray
    inertia: float
    history: list


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers, dtype=float)


def _assign(x: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    # argmin returns the first minimum: ties go to the lowest-index center
    lab = np.argmin(d2, axis=1)
    return lab, d2[np.arange(x.shape[0]), lab]


def lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int = 300) -> KMeansResult:
    centers = centers.copy()
    k = centers.shape[0]
    lab, dist = _assign(x, centers)
    history = [float(dist.sum())]
    for _ in range(max_iter):
        for j in range(k):
            members = lab == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
        new_lab, dist = _assign(x, centers)
        history.append(float(dist.sum()))
        if np.array_equal(new_lab, lab):
            break
        lab = new_lab
    return KMeansResult(NodeLabeling(lab, k=k), centers, history[-1], history)


def kmeans(x, k: int, restarts: int = 200, seed=None, max_iter: int = 300) -> KMeansResult:
    """Lloyd's algorithm from k-means++ starts; keeps the lowest within-cluster sum of squares."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if k < 1 or k > x.shape[0]:
        raise ValueError(f"need 1 <= K <= n, got K={k} for n={x.shape[0]}")
    if restarts < 1:
        raise ValueError("restarts must be positive")
    rng = as_generator(seed)
    best = None
    for _ in range(restarts):
        res = lloyd(x, _kmeans_pp(x, k, rng), max_iter=max_iter)
        if best is None or res.inertia < best.inertia:
            best = res
    return best


def kmeans_communities(z, k: int, restarts: int = 200, seed=None) -> NodeLabeling:
    if k < 2:
        raise ValueError("community detection needs K >= 2")
    return kmeans(z, k, restarts=restarts, seed=seed).labels


@dataclass
class ClusterEval:
    assignment: NodeLabeling
    misclassification_rate: float
    permutation: dict

    def to_dict(self) -> dict:
        return {
            "misclassification_rate": self.misclassification_rate,
            "permutation": {str(k): v for k, v in self.permutation.items()},
            "assignment": self.assignment.labels.tolist(),
        }


MAX_ENUMERATED_K = 6


def misclassification(est: NodeLabeling, truth: NodeLabeling) -> ClusterEval:
    """Smallest disagreement fraction over relabelings of ``est``.

    Label maps are enumerated exhaustively for up to six labels and found by
    the Hungarian method beyond that.  ``permutation`` maps estimated labels
    to truth labels.
    """
    if est.n != truth.n:
        raise ValueError("labelings cover different numbers of nodes")
    k = max(est.k, truth.k)
    if k > 10:
        raise ValueError("misclassification supports at most 10 labels")
    conf = np.zeros((k, k), dtype=np.int64)
    np.add.at(conf, (est.labels, truth.labels), 1)
    if k <= MAX_ENUMERATED_K:
        best, best_perm = -1, None
        for perm in itertools.permutations(range(k)):
            agree = int(conf[np.arange(k), perm].sum())
            if agree > best:
                best, best_perm = agree, perm
        mapping = {i: int(best_perm[i]) for i in range(k)}
    else:
        rows, cols = linear_sum_assignment(-conf)
        best = int(conf[rows, cols].sum())
        mapping = {int(r): int(c) for r, c in zip(rows, cols)}
    rate = 1.0 - best / est.n
    return ClusterEval(est, rate, mapping)


def misclassification_hungarian(est: NodeLabeling, truth: NodeLabeling) -> float:
    k = max(est.k, truth.k)
    conf = np.zeros((k, k), dtype=np.int64)
    np.add.at(conf, (est.labels, truth.labels), 1)
    rows, cols = linear_sum_assignment(-conf)
    return 1.0 - conf[rows, cols].sum() / est.n


def repeated_misclassification(
    z, truth: NodeLabeling, k: int, restarts: int = 200, repeats: int = 1, seed=None
) -> tuple[float, list]:
    """Mean misclassification over ``repeats`` independent best-of-``restarts`` k-means runs."""
    if repeats < 1:
        raise ValueError("repeats must be positive")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rates = [
        misclassification(kmeans_communities(z, k, restarts=restarts, seed=child), truth).misclassification_rate
        for child in ss.spawn(repeats)
    ]
    return float(np.mean(rates)), rates
