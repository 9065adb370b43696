"""Exponential random graph models on undirected graphs.

Supported terms are ``edges``, ``triangles`` and ``kstar2`` (two-stars).
Sampling is a single-dyad-toggle Metropolis chain driven by change
statistics; estimation is maximum pseudo-likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numba
import numpy as np

from .errors import NonConvergence
from .graph import Graph, ProbMatrix, as_generator

TERMS = ("edges", "triangles", "kstar2")


@dataclass(frozen=True)
class ErgmSpec:
    terms: tuple
    theta: tuple

    def __post_init__(self):
        terms = tuple(self.terms)
        theta = tuple(float(t) for t in self.theta)
        if not terms:
            raise ValueError("an ERGM needs at least one term")
        if len(set(terms)) != len(terms):
            raise ValueError("duplicate ERGM terms")
        unknown = set(terms) - set(TERMS)
        if unknown:
            raise ValueError(f"unsupported ERGM terms: {sorted(unknown)}")
        if len(theta) != len(terms):
            raise ValueError("need one coefficient per term")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "theta", theta)

    def full_theta(self) -> np.ndarray:
        """Coefficients laid out as (edges, triangles, kstar2), zero for absent terms."""
        out = np.zeros(3)
        for t, v in zip(self.terms, self.theta):
            out[TERMS.index(t)] = v
        return out

    def to_dict(self) -> dict:
        return {"family": "ergm", "terms": list(self.terms), "theta": list(self.theta)}


def suff_stats(g) -> tuple[int, int, int]:
    """(edges, triangles, two-stars) of an undirected graph."""
    a = np.asarray(g.adj if isinstance(g, Graph) else g, dtype=np.int64)
    deg = a.sum(axis=1)
    edges = int(deg.sum() // 2)
    triangles = int(np.trace(a @ a @ a) // 6)
    kstar2 = int(np.sum(deg * (deg - 1) // 2))
    return edges, triangles, kstar2


def change_stats(a: np.ndarray, i: int, j: int) -> np.ndarray:
    """Increase in (edges, triangles, kstar2) from adding edge ij to ``a`` with ij absent."""
    a = np.asarray(a)
    common = int(np.dot(a[i], a[j]))
    di = int(a[i].sum()) - int(a[i, j])
    dj = int(a[j].sum()) - int(a[i, j])
    return np.array([1, common, di + dj], dtype=np.int64)


@numba.njit(cache=True)
def _run_chain(adj, deg, theta, pairs_i, pairs_j, uniforms, out, thin, start):
    # theta = (edges, triangles, kstar2); out receives a copy every `thin` steps after `start`
    n = adj.shape[0]
    k = 0
    for step in range(pairs_i.shape[0]):
        i = pairs_i[step]
        j = pairs_j[step]
        present = adj[i, j]
        common = 0
        for v in range(n):
            common += adj[i, v] * adj[j, v]
        di = deg[i] - present
        dj = deg[j] - present
        delta = theta[0] + theta[1] * common + theta[2] * (di + dj)
        if present == 1:
            delta = -delta
        if delta >= 0.0 or uniforms[step] < np.exp(delta):
            if present == 1:
                adj[i, j] = 0
                adj[j, i] = 0
                deg[i] -= 1
                deg[j] -= 1
            else:
                adj[i, j] = 1
                adj[j, i] = 1
                deg[i] += 1
                deg[j] += 1
        if step >= start and (step - start + 1) % thin == 0 and k < out.shape[0]:
            for u in range(n):
                for v in range(n):
                    out[k, u, v] = adj[u, v]
            k += 1
    return k


def _random_pairs(n: int, size: int, rng: np.random.Generator):
    i = rng.integers(0, n, size)
    j = rng.integers(0, n - 1, size)
    j = j + (j >= i)
    return i.astype(np.int64), j.astype(np.int64)


def default_burn_in(n: int) -> int:
    return 20 * n * (n - 1) // 2


def default_thin(n: int) -> int:
    return n * (n - 1) // 2


class ErgmChain:
    """Metropolis chain that can be advanced to yield further thinned draws."""

    def __init__(self, spec: ErgmSpec, n: int, seed=None, burn_in=None, thin=None, init=None):
        if n < 2:
            raise ValueError("ERGM sampling needs n >= 2")
        self.spec = spec
        self.n = n
        self.theta = spec.full_theta()
        self.rng = as_generator(seed)
        self.thin = default_thin(n) if thin is None else int(thin)
        burn = default_burn_in(n) if burn_in is None else int(burn_in)
        if self.thin < 1 or burn < 0:
            raise ValueError("thin must be positive and burn_in nonnegative")
        if init is None:
            self.adj = np.zeros((n, n), dtype=np.int64)
        else:
            self.adj = np.array(init.adj if isinstance(init, Graph) else init, dtype=np.int64)
        self.deg = self.adj.sum(axis=1)
        if burn:
            self._advance(burn, np.empty((0, n, n), dtype=np.int8), thin=1)

    def _advance(self, steps: int, out: np.ndarray, thin: int) -> int:
        pi, pj = _random_pairs(self.n, steps, self.rng)
        u = self.rng.random(steps)
        return _run_chain(self.adj, self.deg, self.theta, pi, pj, u, out, thin, 0)

    def draw(self, size: int) -> np.ndarray:
        """``size`` further samples, ``thin`` toggles apart, as an int8 stack."""
        out = np.empty((size, self.n, self.n), dtype=np.int8)
        got = self._advance(size * self.thin, out, self.thin)
        assert got == size
        return out


def sample_ergm(
    spec: ErgmSpec,
    n: int,
    burn_in: Optional[int] = None,
    thin: Optional[int] = None,
    seed=None,
) -> Graph:
    """One draw after ``burn_in`` toggles plus one thinning interval."""
    chain = ErgmChain(spec, n, seed=seed, burn_in=burn_in, thin=thin)
    return Graph(chain.draw(1)[0])


def ergm_sampler(spec: ErgmSpec, n: int, burn_in=None, thin=None):
    """Sampler for the bootstrap tests: a fresh burned-in chain per call."""

    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        chain = ErgmChain(spec, n, seed=rng, burn_in=burn_in, thin=thin)
        return chain.draw(size)

    return draw


def dyad_design(g: Graph, terms: Sequence[str]):
    """Change-statistic design matrix and edge indicators for all pairs i < j."""
    a = np.asarray(g.adj, dtype=np.int64)
    n = a.shape[0]
    iu, ju = np.triu_indices(n, 1)
    deg = a.sum(axis=1)
    common = (a @ a)[iu, ju]
    present = a[iu, ju]
    cols = {
        "edges": np.ones(iu.size),
        "triangles": common.astype(float),
        "kstar2": (deg[iu] + deg[ju] - 2 * present).astype(float),
    }
    x = np.column_stack([cols[t] for t in terms])
    return x, present.astype(float)


def fit_ergm_mple(
    g: Graph,
    terms: Sequence[str] = ("edges", "triangles"),
    tol: float = 1e-8,
    max_iter: int = 100,
) -> ErgmSpec:
    """Maximum pseudo-likelihood: logistic regression of dyads on change statistics."""
    if g.directed:
        raise ValueError("ERGM fitting needs an undirected graph")
    terms = tuple(terms)
    ErgmSpec(terms, (0.0,) * len(terms))
    x, y = dyad_design(g, terms)
    if y.sum() == 0 or y.sum() == y.size:
        raise NonConvergence("pseudo-likelihood is maximized at infinity (empty or complete graph)")
    if np.linalg.matrix_rank(x) < x.shape[1]:
        raise NonConvergence("change statistics are collinear; coefficients are not identified")
    beta = np.zeros(x.shape[1])
    if "edges" in terms:
        m = y.mean()
        beta[terms.index("edges")] = np.log(m / (1.0 - m))
    for _ in range(max_iter):
        mu = 1.0 / (1.0 + np.exp(-(x @ beta)))
        grad = x.T @ (y - mu)
        if np.linalg.norm(grad) < tol:
            return ErgmSpec(terms, tuple(beta))
        w = mu * (1.0 - mu)
        hess = x.T @ (x * w[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise NonConvergence("pseudo-likelihood Hessian is singular (separation)") from exc
        beta = beta + step
        if not np.all(np.isfinite(beta)) or np.max(np.abs(beta)) > 1e3:
            raise NonConvergence("pseudo-likelihood diverged (separation)")
    raise NonConvergence(f"pseudo-likelihood Newton iterations did not converge in {max_iter} steps")


def estimate_p_ergm(
    spec: ErgmSpec,
    n: int,
    B: int = 500,
    seed=None,
    burn_in: Optional[int] = None,
    thin: Optional[int] = None,
) -> ProbMatrix:
    """Average adjacency matrix over ``B`` thinned draws from one chain."""
    if B < 1:
        raise ValueError("B must be positive")
    chain = ErgmChain(spec, n, seed=seed, burn_in=burn_in, thin=thin)
    total = np.zeros((n, n))
    for start in range(0, B, 256):
        total += chain.draw(min(256, B - start)).sum(axis=0)
    return ProbMatrix(total / B)
