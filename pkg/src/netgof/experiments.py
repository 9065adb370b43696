"""Simulation studies: rejection-rate curves for the tests in :mod:`netgof.gof`.

Every study is a grid of (node count, parameter point) cells with a number
of independent replicates per cell.  Replicate ``r`` of point ``j`` at node
count index ``i`` draws all of its randomness from
``SeedSequence(seed, spawn_key=(i, j, r))``, so results do not depend on the
order in which replicates are evaluated or on the number of workers.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from . import __version__, ergm, gof, rmt
from .errors import MleNonexistent, NetGofError, NonConvergence
from .graph import Graph, NodeLabeling, ProbMatrix, extract_ard, sample_graph
from .models import BetaParams, ErParams, LatentSpaceParams, SbmParams, fit_beta_mle, fit_er, prob_matrix
from .selection import select_dimension
from .spectral import extreme_eigenvalues, largest_eigenvalue_lanczos, residual_undirected

EXPERIMENT_IDS = (
    "fig5-expit",
    "fig5-exp",
    "fig5-nonpar",
    "fig4-dims",
    "fig7-ergm-power",
    "fig6-ard",
    "fig8-directed",
    "tw-convergence",
)

ROW_FIELDS = (
    "experiment",
    "n",
    "setting",
    "value",
    "method",
    "replicates",
    "valid",
    "events",
    "rate",
    "se",
    "mean_stat",
    "redraws",
)


@dataclass(frozen=True)
class Outcome:
    """Result of one replicate for one method; ``event`` is None when it failed."""

    method: str
    event: Optional[bool]
    stat: float = math.nan
    redraws: int = 0
    error: Optional[str] = None


@dataclass(frozen=True)
class Point:
    setting: str
    value: float
    cluster: int = 0


@dataclass(frozen=True)
class Study:
    defaults: dict
    points: Callable[[dict], list]
    run: Callable[[int, Point, np.random.SeedSequence, "ExperimentConfig"], list]
    summarize: Optional[Callable] = None


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n_values: tuple = ()
    reps: int = 0
    B: int = gof.DEFAULT_B
    alpha: float = 0.05
    seed: int = 0
    params: dict = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in STUDIES:
            raise ValueError(f"unknown experiment id {self.experiment!r}; choose from {', '.join(EXPERIMENT_IDS)}")
        study = STUDIES[self.experiment]
        n_values = tuple(int(n) for n in (self.n_values or study.defaults["n_values"]))
        reps = int(self.reps or study.defaults["reps"])
        params = {**study.defaults.get("params", {}), **dict(self.params)}
        unknown = set(self.params) - set(study.defaults.get("params", {}))
        if unknown:
            raise ValueError(f"unknown parameters for {self.experiment}: {sorted(unknown)}")
        if reps < 1:
            raise ValueError("replicate count must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not n_values or min(n_values) < 2:
            raise ValueError("need at least one node count, each >= 2")
        if self.B < gof.MIN_BOOTSTRAP:
            raise ValueError(f"B must be at least {gof.MIN_BOOTSTRAP}")
        if self.workers < 1:
            raise ValueError("workers must be positive")
        object.__setattr__(self, "n_values", n_values)
        object.__setattr__(self, "reps", reps)
        object.__setattr__(self, "params", json.loads(json.dumps(params)))
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self) -> dict:
        """Everything that determines the output (the worker count does not)."""
        return {
            "experiment": self.experiment,
            "n_values": list(self.n_values),
            "reps": self.reps,
            "B": self.B,
            "alpha": self.alpha,
            "seed": self.seed,
            "params": self.params,
        }

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @classmethod
    def from_mapping(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {"experiment", "n_values", "reps", "B", "alpha", "seed", "params", "workers"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown configuration keys: {sorted(extra)}")
        if "experiment" not in d:
            raise ValueError("configuration needs an 'experiment' id")
        return cls(**d)


def task_seed(seed: int, i_n: int, i_pt: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(i_n, i_pt, rep))


def _err(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}"


# ---------------------------------------------------------------------------
# beta-model link study


def _beta_truth(setting: str, n: int, rng: np.random.Generator, params: dict) -> ProbMatrix:
    lo, hi = params["beta_range"]
    if setting in ("expit", "exp"):
        return prob_matrix(BetaParams(rng.uniform(lo, hi, n), setting))
    a, b = params["nonpar_range"]
    u = np.triu(rng.uniform(a, b, (n, n)), 1)
    return ProbMatrix(u + u.T)


def drop_isolates(g: Graph) -> Graph:
    keep = g.degrees() > 0
    if keep.all():
        return g
    return Graph(g.adj[np.ix_(keep, keep)])


def _run_beta(n: int, pt: Point, ss, cfg) -> list:
    rng = np.random.default_rng(ss)
    max_redraws = cfg.params["max_redraws"]
    for redraw in range(max_redraws + 1):
        g = sample_graph(_beta_truth(pt.setting, n, rng, cfg.params), rng)
        if cfg.params["drop_isolates"]:
            g = drop_isolates(g)
        try:
            fit = fit_beta_mle(g)
            break
        except (MleNonexistent, NonConvergence):
            continue
    else:
        return [Outcome("bootstrap", None, redraws=max_redraws, error="no graph with a finite MLE")]
    p_hat = prob_matrix(fit)
    try:
        rep = gof.test_undirected_bootstrap(
            g, gof.bernoulli_sampler(p_hat), p_hat, B=cfg.B, alpha=cfg.alpha, seed=rng
        )
    except NetGofError as exc:
        return [Outcome("bootstrap", None, redraws=redraw, error=_err(exc))]
    return [Outcome("bootstrap", rep.reject, rep.statistics["t"], redraws=redraw)]


def _beta_study(setting: str) -> Study:
    return Study(
        defaults={
            "n_values": (50, 100, 200),
            "reps": 100,
            "params": {
                "beta_range": [-2.0, 0.0],
                "nonpar_range": [0.0, 0.1],
                "drop_isolates": True,
                "max_redraws": 100,
            },
        },
        points=lambda params: [Point(setting, 0.0)],
        run=_run_beta,
    )


# ---------------------------------------------------------------------------
# latent dimension selection


def latent_truth(n: int, d: int, rng: np.random.Generator, params: dict) -> LatentSpaceParams:
    lo, hi = params["alpha_range"]
    alpha = rng.uniform(lo, hi, n) * params["alpha_scale"]
    z = rng.standard_normal((n, d))
    return LatentSpaceParams(alpha, z)


def _dims_points(params: dict) -> list:
    return [
        Point("latent-space", float(d), cluster=s)
        for d in params["d_true"]
        for s in range(params["param_sets"])
    ]


def _run_dims(n: int, pt: Point, ss, cfg) -> list:
    # the parameter set is shared by all replicates of the point
    set_ss = np.random.SeedSequence(cfg.seed, spawn_key=ss.spawn_key[:2])
    d_true = int(pt.value)
    truth = prob_matrix(latent_truth(n, d_true, np.random.default_rng(set_ss), cfg.params))
    rng = np.random.default_rng(ss)
    g = sample_graph(truth, rng)
    max_d = min(cfg.params["max_d"], n - 1)
    scan = select_dimension(
        g, max_d=max_d, B=cfg.B, alpha=cfg.alpha, seed=int(rng.integers(2**63)), pgd=cfg.params["pgd"]
    )
    d_fit = -1 if scan.d_fit is None else scan.d_fit
    return [Outcome("select-dim", scan.d_fit == d_true, float(d_fit))]


# ---------------------------------------------------------------------------
# ERGM triangle/two-star study


def _ergm_points(params: dict) -> list:
    return [Point("ergm", float(t)) for t in params["theta3"]]


def _run_ergm(n: int, pt: Point, ss, cfg) -> list:
    p = cfg.params
    rng = np.random.default_rng(ss)
    truth = ergm.ErgmSpec(("edges", "triangles", "kstar2"), (p["theta1"], p["theta2"], pt.value))
    try:
        g = ergm.sample_ergm(truth, n, seed=rng)
        fit = ergm.fit_ergm_mple(g, ("edges", "triangles"))
        p_hat = ergm.estimate_p_ergm(fit, n, B=p["B_p"], seed=rng)
        rep = gof.test_undirected_bootstrap(
            g, ergm.ergm_sampler(fit, n), p_hat, B=cfg.B, alpha=cfg.alpha, seed=rng
        )
    except NetGofError as exc:
        return [Outcome("bootstrap", None, error=_err(exc))]
    return [Outcome("bootstrap", rep.reject, rep.statistics["t"])]


# ---------------------------------------------------------------------------
# aggregated relational data


def halves(n: int) -> NodeLabeling:
    return NodeLabeling((np.arange(n) >= n // 2).astype(np.int64), k=2)


def _run_ard(n: int, pt: Point, ss, cfg) -> list:
    p = cfg.params
    rng = np.random.default_rng(ss)
    m = max(2, round(n * p["gamma_m"]))
    k = max(2, round(n * p["gamma_k"]))
    if pt.setting == "er":
        truth = prob_matrix(ErParams(p["p"]), n)
    else:
        truth = prob_matrix(SbmParams(halves(n), np.array(p["sbm_B"])))
    g = sample_graph(truth, rng)
    groups = NodeLabeling(np.arange(n) * k // n, k=k)
    respondents = np.sort(rng.choice(n, m, replace=False))
    try:
        rep = gof.test_ard_er(extract_ard(g, groups, respondents), alpha=cfg.alpha)
    except NetGofError as exc:
        return [Outcome("tw", None, error=_err(exc))]
    return [Outcome("tw", rep.reject, rep.statistics["t"])]


# ---------------------------------------------------------------------------
# directed graphs


def _run_directed(n: int, pt: Point, ss, cfg) -> list:
    p = cfg.params
    rng = np.random.default_rng(ss)
    if pt.setting == "der":
        truth = prob_matrix(ErParams(p["p"], directed=True), n)
    else:
        truth = prob_matrix(SbmParams(halves(n), np.array(p["dsbm_B"]), directed=True))
    g = sample_graph(truth, rng)
    try:
        p_hat = prob_matrix(fit_er(g), n)
    except NetGofError as exc:
        return [Outcome(m, None, error=_err(exc)) for m in ("bootstrap", "explaw", "tw")]
    out = []
    for method in ("bootstrap", "explaw", "tw"):
        try:
            if method == "bootstrap":
                rep = gof.test_directed_bootstrap(
                    g, gof.bernoulli_sampler(p_hat), p_hat, B=cfg.B, alpha=cfg.alpha, seed=rng
                )
            elif method == "explaw":
                rep = gof.test_directed_explaw(g, p_hat, alpha=cfg.alpha)
            else:
                rep = gof.test_directed_tw(g, p_hat, alpha=cfg.alpha)
            out.append(Outcome(method, rep.reject, rep.statistics["t"]))
        except NetGofError as exc:
            out.append(Outcome(method, None, error=_err(exc)))
    return out


# ---------------------------------------------------------------------------
# convergence of the scaled largest eigenvalue to TW1


def scaled_edge_statistic(g: Graph, p: ProbMatrix, lanczos_from: int = 400) -> float:
    """n^(2/3) (lambda_max(A) - 2) for the residual built from the true ``p``."""
    a = residual_undirected(g, p).a
    lam = largest_eigenvalue_lanczos(a) if g.n >= lanczos_from else extreme_eigenvalues(a)[1]
    return g.n ** (2.0 / 3.0) * (lam - 2.0)


def _run_tw(n: int, pt: Point, ss, cfg) -> list:
    rng = np.random.default_rng(ss)
    p = prob_matrix(ErParams(pt.value), n)
    g = sample_graph(p, rng)
    return [Outcome("lambda-max", None, scaled_edge_statistic(g, p, cfg.params["lanczos_from"]))]


def _summarize_tw(cfg, cells) -> tuple[list, dict]:
    rows, hist = [], []
    edges = np.linspace(*cfg.params["hist_range"], cfg.params["hist_bins"] + 1)
    tw_mass = np.diff(rmt.tw1_cdf(edges))
    for (n, pt), per_rep in cells.items():
        t = np.array([o.stat for outcomes in per_rep for o in outcomes])
        ks = stats.kstest(t, rmt.tw1_cdf).statistic
        rows.append(
            {
                "experiment": cfg.experiment,
                "n": n,
                "setting": "er",
                "value": pt.value,
                "method": "ks",
                "replicates": t.size,
                "valid": t.size,
                "events": 0,
                "rate": float(ks),
                "se": math.nan,
                "mean_stat": float(t.mean()),
                "redraws": 0,
            }
        )
        counts, _ = np.histogram(t, bins=edges)
        width = np.diff(edges)
        for lo, hi, c, w, tm in zip(edges[:-1], edges[1:], counts, width, tw_mass):
            hist.append(
                {
                    "n": n,
                    "bin_left": float(lo),
                    "bin_right": float(hi),
                    "count": int(c),
                    "density": float(c / (t.size * w)),
                    "tw1_density": float(tm / w),
                }
            )
    return rows, {"histogram": hist}


STUDIES: dict = {
    "fig5-expit": _beta_study("expit"),
    "fig5-exp": _beta_study("exp"),
    "fig5-nonpar": _beta_study("nonpar"),
    "fig4-dims": Study(
        defaults={
            "n_values": (100, 200),
            "reps": 20,
            "params": {
                "d_true": [1, 2],
                "param_sets": 25,
                "alpha_range": [-2.0, -1.0],
                "alpha_scale": 0.01,
                "max_d": 6,
                "pgd": {},
            },
        },
        points=_dims_points,
        run=_run_dims,
    ),
    "fig7-ergm-power": Study(
        defaults={
            "n_values": (50, 100),
            "reps": 100,
            "params": {
                "theta1": -2.0,
                "theta2": -0.3,
                "theta3": [-0.1, -0.05, 0.0, 0.025, 0.05, 0.075],
                "B_p": 500,
            },
        },
        points=_ergm_points,
        run=_run_ergm,
    ),
    "fig6-ard": Study(
        defaults={
            "n_values": (30, 60, 90, 120),
            "reps": 100,
            "params": {
                "p": 0.1,
                "sbm_B": [[0.15, 0.05], [0.05, 0.15]],
                "gamma_m": 1.0 / 3.0,
                "gamma_k": 0.1,
            },
        },
        points=lambda params: [Point("er", 0.0), Point("sbm", 0.0)],
        run=_run_ard,
    ),
    "fig8-directed": Study(
        defaults={
            "n_values": (25, 50, 100),
            "reps": 50,
            "params": {"p": 0.3, "dsbm_B": [[0.3, 0.2], [0.1, 0.3]]},
        },
        points=lambda params: [Point("der", 0.0), Point("dsbm", 0.0)],
        run=_run_directed,
    ),
    "tw-convergence": Study(
        defaults={
            "n_values": (50, 1000),
            "reps": 2000,
            "params": {"p": 0.15, "hist_range": [-6.0, 4.0], "hist_bins": 40, "lanczos_from": 400},
        },
        points=lambda params: [Point("er", float(params["p"]))],
        run=_run_tw,
        summarize=_summarize_tw,
    ),
}


# ---------------------------------------------------------------------------
# running and aggregation


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list
    tables: dict = field(default_factory=dict)


def _run_task(cfg: ExperimentConfig, task) -> list:
    i_n, n, i_pt, pt, rep = task
    return STUDIES[cfg.experiment].run(n, pt, task_seed(cfg.seed, i_n, i_pt, rep), cfg)


def _rate_rows(cfg, cells) -> list:
    groups: dict = {}
    for (n, pt), per_rep in cells.items():
        for outcomes in per_rep:
            for o in outcomes:
                key = (n, pt.setting, pt.value, o.method)
                groups.setdefault(key, {}).setdefault(pt.cluster, []).append(o)
    rows = []
    for (n, setting, value, method), clusters in groups.items():
        allo = [o for os in clusters.values() for o in os]
        ok = [o for o in allo if o.event is not None]
        events = sum(bool(o.event) for o in ok)
        rate = events / len(ok) if ok else math.nan
        if len(clusters) > 1:
            per = [np.mean([bool(o.event) for o in os if o.event is not None]) for os in clusters.values()]
            se = float(np.std(per, ddof=1) / math.sqrt(len(per)))
        else:
            se = math.sqrt(rate * (1 - rate) / len(ok)) if ok else math.nan
        stat = [o.stat for o in ok if math.isfinite(o.stat)]
        rows.append(
            {
                "experiment": cfg.experiment,
                "n": n,
                "setting": setting,
                "value": value,
                "method": method,
                "replicates": len(allo),
                "valid": len(ok),
                "events": events,
                "rate": rate,
                "se": se,
                "mean_stat": float(np.mean(stat)) if stat else math.nan,
                "redraws": sum(o.redraws for o in allo),
            }
        )
    return rows


def run_experiment(cfg: ExperimentConfig, progress: Optional[Callable[[int, int], None]] = None) -> ExperimentResult:
    """Run every replicate of ``cfg`` and aggregate per (n, point, method)."""
    study = STUDIES[cfg.experiment]
    points = study.points(cfg.params)
    tasks = [
        (i_n, n, i_pt, pt, rep)
        for i_n, n in enumerate(cfg.n_values)
        for i_pt, pt in enumerate(points)
        for rep in range(cfg.reps)
    ]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            results = []
            for k, res in enumerate(ex.map(_run_task, [cfg] * len(tasks), tasks, chunksize=4)):
                results.append(res)
                if progress:
                    progress(k + 1, len(tasks))
    else:
        results = []
        for k, t in enumerate(tasks):
            results.append(_run_task(cfg, t))
            if progress:
                progress(k + 1, len(tasks))

    cells: dict = {}
    for (i_n, n, i_pt, pt, rep), res in zip(tasks, results):
        cells.setdefault((n, pt), []).append(res)
    if study.summarize is not None:
        rows, tables = study.summarize(cfg, cells)
        return ExperimentResult(cfg, rows, tables)
    return ExperimentResult(cfg, _rate_rows(cfg, cells))


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else format(v, ".10g")
    return str(v)


def _csv_text(cfg: ExperimentConfig, fields, rows, table: str = "rates") -> str:
    buf = io.StringIO()
    buf.write(f"# netgof {__version__} experiment={cfg.experiment} table={table}\n")
    buf.write(f"# config_hash={cfg.config_hash()}\n")
    buf.write(f"# seed={cfg.seed}\n")
    buf.write(f"# config={json.dumps(cfg.to_dict(), sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r[f]) for f in fields])
    return buf.getvalue()


def result_csv(result: ExperimentResult) -> str:
    return _csv_text(result.config, ROW_FIELDS, result.rows)


def table_csv(result: ExperimentResult, name: str) -> str:
    rows = result.tables[name]
    fields = tuple(rows[0]) if rows else ()
    return _csv_text(result.config, fields, rows, table=name)


def read_result_csv(text: str) -> tuple[dict, list]:
    """Parse a CSV written by :func:`result_csv` into (header metadata, rows)."""
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            for tok in line[1:].strip().split(" "):
                if "=" in tok and not tok.startswith("config="):
                    k, v = tok.split("=", 1)
                    meta[k] = v
            if line.startswith("# config="):
                meta["config"] = json.loads(line[len("# config="):])
        else:
            body.append(line)
    rows = list(csv.DictReader(body))
    return meta, rows
