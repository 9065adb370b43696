"""Reference laws for the spectral statistics.

Tracy-Widom (beta = 1) is served from a tabulated CDF shipped with the
package.  The table is produced offline by :func:`build_tw1_table`, which
evaluates the Fredholm determinant representation

    F1(s) = det(I - K_s),   K_s(x, y) = Ai(s + (x + y) / 2) / 2   on L2(0, inf)

with Gauss-Legendre quadrature.  :func:`goe_edge_sample` draws independent
Monte Carlo replicates of the scaled GOE edge and is used to cross-check
the table.

The exponential-type law for the smallest singular value has survival
function ``exp(-t**2 / 2 - t)`` and is available in closed form.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal
from scipy.special import airy

from .graph import SeedLike, as_generator

TABLE_FILE = "tw1_table.csv"
DEFAULT_GRID = (-8.0, 6.0, 0.01)
DEFAULT_NODES = 60


@dataclass(frozen=True, eq=False)
class Tw1Table:
    """Tabulated TW1 distribution function on an ascending grid."""

    grid: np.ndarray
    cdf_values: np.ndarray
    mean: float
    sd: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.grid, dtype=float)
        f = np.asarray(self.cdf_values, dtype=float)
        if x.shape != f.shape or x.ndim != 1 or x.size < 2:
            raise ValueError("grid and cdf must be 1-d arrays of equal length")
        if np.any(np.diff(x) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(np.diff(f) <= 0) or f[0] < 0 or f[-1] > 1:
            raise ValueError("tabulated cdf must be strictly increasing within [0, 1]")
        for a in (x, f):
            a.setflags(write=False)
        object.__setattr__(self, "grid", x)
        object.__setattr__(self, "cdf_values", f)

    def cdf(self, x):
        """Piecewise-linear CDF; 0 below and 1 above the tabulated range."""
        return np.interp(x, self.grid, self.cdf_values, left=0.0, right=1.0)

    def pdf(self, x):
        dens = np.gradient(self.cdf_values, self.grid)
        return np.interp(x, self.grid, dens, left=0.0, right=0.0)

    def quantile(self, q):
        """Inverse of :meth:`cdf` by linear interpolation.

        Raises ``ValueError`` for ``q`` outside (0, 1) or outside the
        tabulated probability range; tails are never extrapolated.
        """
        qa = np.asarray(q, dtype=float)
        if np.any((qa <= 0) | (qa >= 1)):
            raise ValueError("quantile level must lie strictly between 0 and 1")
        lo, hi = self.cdf_values[0], self.cdf_values[-1]
        if np.any((qa < lo) | (qa > hi)):
            raise ValueError(
                f"quantile level outside the tabulated range [{lo:.3g}, {hi:.3g}]"
            )
        out = np.interp(qa, self.cdf_values, self.grid)
        return float(out) if np.ndim(out) == 0 else out

    def moments(self) -> tuple[float, float]:
        return self.mean, self.sd


def table_moments(grid: np.ndarray, cdf: np.ndarray) -> tuple[float, float]:
    """Mean and standard deviation implied by a tabulated CDF.

    Integration by parts with the tail masses placed on the grid ends:
    ``E[g(X)] = g(b) - int_a^b g'(x) F(x) dx``.
    """
    b = grid[-1]
    mean = b - np.trapezoid(cdf, grid)
    second = b * b - np.trapezoid(2.0 * grid * cdf, grid)
    var = second - mean * mean
    return float(mean), float(math.sqrt(var))


def tw1_cdf_fredholm(s: float, nodes: int = DEFAULT_NODES) -> float:
    """TW1 distribution function at ``s`` via Gauss-Legendre quadrature."""
    length = max(-2.0 * s, 0.0) + 16.0
    x, w = np.polynomial.legendre.leggauss(nodes)
    x = (x + 1.0) * (length / 2.0)
    w = w * (length / 2.0)
    ai = airy(s + (x[:, None] + x[None, :]) / 2.0)[0]
    sw = np.sqrt(w)
    k = 0.5 * sw[:, None] * ai * sw[None, :]
    return float(np.linalg.det(np.eye(nodes) - k))


def build_tw1_table(
    start: float = DEFAULT_GRID[0],
    stop: float = DEFAULT_GRID[1],
    step: float = DEFAULT_GRID[2],
    nodes: int = DEFAULT_NODES,
) -> Tw1Table:
    grid = np.round(np.arange(start, stop + step / 2, step), 10)
    cdf = np.array([tw1_cdf_fredholm(s, nodes) for s in grid])
    cdf = np.clip(cdf, 0.0, 1.0)
    mean, sd = table_moments(grid, cdf)
    meta = {
        "method": "fredholm-gauss-legendre",
        "quadrature_nodes": nodes,
        "grid_start": float(grid[0]),
        "grid_stop": float(grid[-1]),
        "grid_step": step,
        "seed": "none",
        "replicates": 0,
    }
    return Tw1Table(grid, cdf, mean, sd, meta)


def write_tw1_table(table: Tw1Table, path) -> None:
    lines = [f"# mean={table.mean!r}", f"# sd={table.sd!r}"]
    lines += [f"# {k}={v}" for k, v in table.meta.items()]
    lines.append("x,F")
    lines += [f"{x!r},{f!r}" for x, f in zip(table.grid.tolist(), table.cdf_values.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_tw1_table(path) -> Tw1Table:
    return _parse_table(Path(path).read_text())


def _parse_table(text: str) -> Tw1Table:
    meta = {}
    xs, fs = [], []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key.strip()] = val.strip()
            continue
        if line == "x,F":
            continue
        x, f = line.split(",")
        xs.append(float(x))
        fs.append(float(f))
    mean = float(meta.pop("mean"))
    sd = float(meta.pop("sd"))
    return Tw1Table(np.array(xs), np.array(fs), mean, sd, meta)


@functools.lru_cache(maxsize=1)
def default_table() -> Tw1Table:
    text = resources.files("netgof.data").joinpath(TABLE_FILE).read_text()
    return _parse_table(text)


def tw1_cdf(x):
    return default_table().cdf(x)


def tw1_quantile(q):
    return default_table().quantile(q)


def tw1_moments() -> tuple[float, float]:
    return default_table().moments()


def explaw_survival(t):
    """P(T >= t) = exp(-t^2/2 - t) for t >= 0."""
    ta = np.asarray(t, dtype=float)
    if np.any(ta < 0) or np.any(np.isnan(ta)):
        raise ValueError("exponential-law survival is defined for t >= 0")
    out = np.exp(-0.5 * ta * ta - ta)
    return float(out) if out.ndim == 0 else out


def explaw_quantile(q):
    """Closed-form inverse: t = -1 + sqrt(1 - 2 log(1 - q))."""
    qa = np.asarray(q, dtype=float)
    if np.any((qa <= 0) | (qa >= 1)) or np.any(np.isnan(qa)):
        raise ValueError("quantile level must lie strictly between 0 and 1")
    out = -1.0 + np.sqrt(1.0 - 2.0 * np.log1p(-qa))
    return float(out) if out.ndim == 0 else out


def goe_edge_sample(n: int, size: int, seed: SeedLike = None, edge: str = "max") -> np.ndarray:
    """Scaled extreme eigenvalues ``n^(2/3) (lambda / sqrt(n) - 2)`` of GOE draws.

    Uses the tridiagonal model: a GOE matrix with unit off-diagonal variance
    is orthogonally similar to a symmetric tridiagonal matrix with N(0, 2)
    diagonal and chi_{n-1}, ..., chi_1 off-diagonal, all independent.
    ``edge="min"`` returns ``n^(2/3) (-lambda_min / sqrt(n) - 2)``.
    """
    rng = as_generator(seed)
    dof = np.arange(n - 1, 0, -1)
    idx = n - 1 if edge == "max" else 0
    out = np.empty(size)
    for r in range(size):
        d = rng.normal(0.0, math.sqrt(2.0), n)
        e = np.sqrt(rng.chisquare(dof))
        lam = eigvalsh_tridiagonal(d, e, select="i", select_range=(idx, idx))[0]
        if edge != "max":
            lam = -lam
        out[r] = n ** (2.0 / 3.0) * (lam / math.sqrt(n) - 2.0)
    return out
