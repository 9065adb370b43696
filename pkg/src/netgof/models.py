"""Parametric network models: parameters, edge probabilities and estimators."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.special import expit, logit

from .errors import DegenerateFit, MleNonexistent, NonConvergence
from .graph import ArdMatrix, Graph, NodeLabeling, ProbMatrix

log = logging.getLogger(__name__)

LINKS = ("expit", "exp")


@dataclass(frozen=True)
class ErParams:
    p: float
    directed: bool = False

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("ER probability must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class SbmParams:
    labels: NodeLabeling
    B: np.ndarray
    directed: bool = False

    def __post_init__(self):
        b = np.array(self.B, dtype=float)
        k = self.labels.k
        if b.shape != (k, k):
            raise ValueError(f"block matrix must be {k}x{k}")
        if b.min() < 0 or b.max() > 1:
            raise ValueError("block probabilities must lie in [0, 1]")
        if not self.directed and not np.allclose(b, b.T):
            raise ValueError("undirected block matrix must be symmetric")
        b.setflags(write=False)
        object.__setattr__(self, "B", b)

    @property
    def K(self) -> int:
        return self.labels.k


@dataclass(frozen=True, eq=False)
class BetaParams:
    beta: np.ndarray
    link: str = "expit"

    def __post_init__(self):
        if self.link not in LINKS:
            raise ValueError(f"link must be one of {LINKS}")
        b = np.array(self.beta, dtype=float)
        b.setflags(write=False)
        object.__setattr__(self, "beta", b)


@dataclass(frozen=True, eq=False)
class LatentSpaceParams:
    """Inner-product latent space model.

    logodds(P_ij) = alpha_i + alpha_j + beta_cov * X_ij + <z_i, z_j>
    """

    alpha: np.ndarray
    z: np.ndarray
    beta_cov: Optional[float] = None
    x: Optional[np.ndarray] = None

    def __post_init__(self):
        a = np.array(self.alpha, dtype=float)
        z = np.array(self.z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        if z.shape[0] != a.size:
            raise ValueError("need one latent position per node")
        for arr in (a, z):
            arr.setflags(write=False)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "z", z)
        if (self.beta_cov is None) != (self.x is None):
            raise ValueError("beta_cov and x must be given together")

    @property
    def d(self) -> int:
        return self.z.shape[1]

    def logodds(self) -> np.ndarray:
        th = self.alpha[:, None] + self.alpha[None, :] + self.z @ self.z.T
        if self.x is not None:
            th = th + self.beta_cov * np.asarray(self.x)
        if not np.all(np.isfinite(th)):
            raise ValueError("latent space log-odds are not finite")
        return th


@dataclass(frozen=True, eq=False)
class LatentSpaceFit:
    params: LatentSpaceParams
    objective: np.ndarray
    n_iter: int
    converged: bool


Params = Union[ErParams, SbmParams, BetaParams, LatentSpaceParams, LatentSpaceFit]


def prob_matrix(model: Params, n: Optional[int] = None) -> ProbMatrix:
    """Edge-probability matrix implied by ``model`` (``n`` is needed for ER)."""
    if isinstance(model, LatentSpaceFit):
        model = model.params
    if isinstance(model, ErParams):
        if n is None:
            raise ValueError("ER probability matrix needs the node count n")
        return ProbMatrix(np.full((n, n), model.p), directed=model.directed)
    if isinstance(model, SbmParams):
        lab = model.labels.labels
        return ProbMatrix(model.B[np.ix_(lab, lab)], directed=model.directed)
    if isinstance(model, BetaParams):
        s = model.beta[:, None] + model.beta[None, :]
        if model.link == "expit":
            return ProbMatrix(expit(s))
        np.fill_diagonal(s, -np.inf)
        if s.max() >= 0.0:
            raise ValueError("exp link gives a probability >= 1: need beta_i + beta_j < 0")
        return ProbMatrix(np.exp(s))
    if isinstance(model, LatentSpaceParams):
        return ProbMatrix(expit(model.logodds()))
    raise TypeError(f"unsupported model type {type(model).__name__}")


def fit_er(g: Graph) -> ErParams:
    if g.n < 2:
        raise DegenerateFit("need at least two nodes")
    p = g.n_edges / g.n_dyads
    if p <= 0.0 or p >= 1.0:
        raise DegenerateFit(f"ER estimate p = {p} is on the boundary")
    return ErParams(p, directed=g.directed)


def fit_sbm(g: Graph, labels: NodeLabeling) -> SbmParams:
    """Block edge densities for known community labels."""
    if labels.n != g.n:
        raise ValueError(f"labels cover {labels.n} nodes but the graph has {g.n}")
    h = labels.one_hot().astype(float)
    sizes = h.sum(axis=0)
    edges = h.T @ g.adj.astype(float) @ h
    pairs = np.outer(sizes, sizes) - np.diag(sizes)
    if np.any(pairs == 0):
        raise DegenerateFit("a block has no node pairs (singleton community)")
    return SbmParams(labels, edges / pairs, directed=g.directed)


def fit_er_ard(y: ArdMatrix) -> float:
    """Average of Y_ij / n_j over all respondents and groups."""
    if y.counts.size == 0:
        raise DegenerateFit("empty ARD matrix")
    p = float(np.mean(y.counts / y.group_sizes[None, :]))
    if p <= 0.0 or p >= 1.0:
        raise DegenerateFit(f"ARD ER estimate p = {p} is on the boundary")
    return p


def fit_beta_mle(
    g: Graph,
    link: str = "expit",
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> BetaParams:
    """beta-model MLE by the fixed-point iteration

        beta_i <- log d_i - log sum_{j != i} 1 / (exp(-beta_j) + exp(beta_i)),

    whose fixed points solve sum_{j != i} expit(beta_i + beta_j) = d_i.
    """
    if link != "expit":
        raise ValueError("only the expit link can be fitted")
    if g.directed:
        raise ValueError("beta-model fitting needs an undirected graph")
    d = g.degrees().astype(float)
    n = g.n
    if np.any(d == 0) or np.any(d == n - 1):
        raise MleNonexistent("the MLE does not exist when a node has degree 0 or n - 1")

    logd = np.log(d)
    beta = logd - 0.5 * np.log(d.sum())
    off = ~np.eye(n, dtype=bool)
    for it in range(1, max_iter + 1):
        t = 1.0 / (np.exp(-beta)[None, :] + np.exp(beta)[:, None])
        new = logd - np.log((t * off).sum(axis=1))
        if not np.all(np.isfinite(new)):
            raise NonConvergence("beta-model fixed point diverged")
        step = np.max(np.abs(new - beta))
        beta = new
        if step < tol:
            log.debug("beta-model fixed point converged in %d iterations", it)
            return BetaParams(beta, "expit")
    raise NonConvergence(f"beta-model fixed point did not converge in {max_iter} iterations")


def _logistic_terms(adj, theta):
    """Log-likelihood over pairs i < j and the fitted probabilities.

    Shares one ``exp`` between ``log(1 + e^theta)`` and ``expit(theta)``.
    """
    e = np.exp(-np.abs(theta))
    soft = np.maximum(theta, 0.0) + np.log1p(e)
    prob = np.where(theta >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    full = np.sum(adj * theta) - np.sum(soft) + np.trace(soft)
    return 0.5 * float(full), prob


def latent_space_init(g: Graph, d: int, x: Optional[np.ndarray] = None):
    """Starting values from a thresholded spectral estimate of P.

    Singular value thresholding gives P~, clipped away from 0 and 1; its
    log-odds matrix is then split into node effects and the top-d positive
    part of the doubly-centered remainder.
    """
    n = g.n
    a = g.adj.astype(float)
    dens = max(a.sum() / (n * (n - 1)), 1.0 / n)
    w, v = np.linalg.eigh(a)
    keep = np.abs(w) >= 2.01 * np.sqrt(n * dens)
    p_tilde = (v[:, keep] * w[keep]) @ v[:, keep].T
    eps = 1.0 / (2 * n)
    theta = logit(np.clip(p_tilde, eps, 1.0 - eps))
    theta = (theta + theta.T) / 2.0
    beta_cov = None
    if x is not None:
        xs = np.asarray(x, dtype=float)
        off = ~np.eye(n, dtype=bool)
        beta_cov = float(np.sum(theta[off] * xs[off]) / np.sum(xs[off] ** 2))
        theta = theta - beta_cov * xs
    row = theta.mean(axis=1)
    alpha = row - row.mean() / 2.0
    jmat = np.eye(n) - 1.0 / n
    gram = jmat @ theta @ jmat
    gw, gv = np.linalg.eigh((gram + gram.T) / 2.0)
    top = np.argsort(gw)[::-1][:d]
    z = gv[:, top] * np.sqrt(np.clip(gw[top], 0.0, None))
    return alpha, z, beta_cov


LOGIT_BOUND = 16.0


def project_latent(alpha: np.ndarray, z: np.ndarray, bound: float = LOGIT_BOUND):
    """Projection onto the bounded feasible set used by the gradient ascent.

    Rows of ``z`` are shrunk to squared norm at most ``bound / 2`` and node
    effects clipped to ``[-bound / 4, bound / 4]``, so every logit stays
    (up to the centering shift) within ``bound``; ``z`` is then
    column-centered.
    """
    z = np.array(z, dtype=float)
    r2 = np.sum(z * z, axis=1)
    cap = bound / 2.0
    big = r2 > cap
    if big.any():
        z[big] *= np.sqrt(cap / r2[big])[:, None]
    z -= z.mean(axis=0)
    return np.clip(alpha, -bound / 4.0, bound / 4.0), z


def fit_latent_space(
    g: Graph,
    d: int,
    x: Optional[np.ndarray] = None,
    max_iter: int = 500,
    tol: float = 1e-7,
    eta: float = 0.2,
    init: Optional[tuple] = None,
    bound: Optional[float] = LOGIT_BOUND,
) -> LatentSpaceFit:
    """Maximize the logistic likelihood by projected gradient ascent.

    Block step sizes are ``eta / ||Z0||_op^2`` for positions, ``eta / (2n)``
    for node effects and ``eta / (2 ||X||_F^2)`` for the covariate
    coefficient.  After every step the iterate is projected with
    :func:`project_latent` (``bound=None`` only column-centers the
    positions).  A step that lowers the objective is retried with all step
    sizes halved.

    ``init`` may supply ``(alpha, z)`` or ``(alpha, z, beta_cov)``.
    """
    if g.directed:
        raise ValueError("latent space fitting needs an undirected graph")
    n = g.n
    if d < 1 or d >= n:
        raise ValueError(f"latent dimension must satisfy 1 <= d < n, got {d}")
    if init is None:
        alpha, z, bcov = latent_space_init(g, d, x)
    else:
        alpha, z = np.array(init[0], dtype=float), np.array(init[1], dtype=float)
        bcov = init[2] if len(init) > 2 else (0.0 if x is not None else None)
    if z.ndim == 1:
        z = z[:, None]

    def project(al, zz):
        if bound is None:
            return al, zz - zz.mean(axis=0)
        return project_latent(al, zz, bound)

    alpha, z = project(alpha, z)
    xs = None if x is None else np.asarray(x, dtype=float)
    if xs is not None and bcov is None:
        bcov = 0.0

    adj = g.adj.astype(float)

    def theta_of(al, zz, bc):
        th = al[:, None] + al[None, :] + zz @ zz.T
        if xs is not None:
            th = th + bc * xs
        return th

    theta = theta_of(alpha, z, bcov)
    obj, prob = _logistic_terms(adj, theta)
    trace = [obj]

    z_norm = np.linalg.norm(z, 2) ** 2 if z.size else 0.0
    step_z = eta / max(z_norm, 1e-8)
    step_a = eta / (2.0 * n)
    step_b = eta / (2.0 * np.sum(xs**2)) if xs is not None and np.any(xs) else 0.0
    scale = 1.0

    converged = False
    it = 0
    while it < max_iter:
        it += 1
        r = adj - prob
        np.fill_diagonal(r, 0.0)
        grad_z = 2.0 * r @ z
        grad_a = 2.0 * r.sum(axis=1)
        grad_b = float(np.sum(r * xs)) if xs is not None else 0.0
        while True:
            a_new, z_new = project(alpha + scale * step_a * grad_a, z + scale * step_z * grad_z)
            b_new = bcov + scale * step_b * grad_b if xs is not None else bcov
            th_new = theta_of(a_new, z_new, b_new)
            obj_new, prob_new = _logistic_terms(adj, th_new)
            if not np.isfinite(obj_new):
                raise NonConvergence("latent space objective became non-finite")
            if obj_new >= obj:
                break
            scale /= 2.0
            if scale < 1e-12:
                break
        if obj_new < obj:
            # no ascent direction left at machine precision
            converged = True
            break
        rel = abs(obj_new - obj) / max(abs(obj), 1.0)
        z, alpha, bcov, theta, obj, prob = z_new, a_new, b_new, th_new, obj_new, prob_new
        trace.append(obj)
        if rel < tol:
            converged = True
            break

    if not converged and max_iter > 0:
        log.info("latent space PGD stopped at max_iter=%d before reaching tol", max_iter)
    params = LatentSpaceParams(alpha, z, bcov, xs)
    return LatentSpaceFit(params, np.asarray(trace), it, converged)


def params_to_dict(model: Params) -> dict:
    if isinstance(model, LatentSpaceFit):
        model = model.params
    if isinstance(model, ErParams):
        return {"family": "er", "p": model.p, "directed": model.directed}
    if isinstance(model, SbmParams):
        return {
            "family": "sbm",
            "labels": model.labels.labels.tolist(),
            "B": model.B.tolist(),
            "directed": model.directed,
        }
    if isinstance(model, BetaParams):
        return {"family": "beta", "beta": model.beta.tolist(), "link": model.link}
    if isinstance(model, LatentSpaceParams):
        d = {"family": "latent_space", "alpha": model.alpha.tolist(), "z": model.z.tolist()}
        if model.x is not None:
            d["beta_cov"] = model.beta_cov
            d["x"] = np.asarray(model.x).tolist()
        return d
    raise TypeError(f"unsupported model type {type(model).__name__}")


def params_from_dict(d: dict) -> Params:
    fam = d.get("family")
    if fam == "er":
        return ErParams(d["p"], d.get("directed", False))
    if fam == "sbm":
        return SbmParams(NodeLabeling(np.asarray(d["labels"])), np.asarray(d["B"]), d.get("directed", False))
    if fam == "beta":
        return BetaParams(np.asarray(d["beta"]), d.get("link", "expit"))
    if fam == "latent_space":
        x = d.get("x")
        return LatentSpaceParams(
            np.asarray(d["alpha"]),
            np.asarray(d["z"]),
            d.get("beta_cov"),
            None if x is None else np.asarray(x),
        )
    raise ValueError(f"unknown model family {fam!r}")
