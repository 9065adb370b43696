"""Command-line interface.

Subcommands::

    netgof test <family> ...     fit a model to a graph (or ARD) and test it
    netgof replicate <id> ...    run a simulation study, write CSV
    netgof select-dim ...        smallest latent dimension that is not rejected
    netgof communities ...       k-means on fitted latent positions
    netgof tw-table ...          regenerate the TW1 reference table

Exit codes: 0 when the tested model is not rejected (or the command has no
decision), 2 when it is rejected, 1 on any error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, ergm, gof, rmt
from .errors import NetGofError
from .experiments import EXPERIMENT_IDS, ExperimentConfig, result_csv, run_experiment, table_csv
from .graph import load_edge_list, load_labels, read_ard_csv
from .models import fit_beta_mle, fit_er, fit_latent_space, fit_sbm, prob_matrix
from .selection import (
    kmeans_communities,
    misclassification,
    repeated_misclassification,
    select_dimension,
    test_dimension,
)

EXIT_OK, EXIT_ERROR, EXIT_REJECT = 0, 1, 2

FAMILIES = ("er", "der", "sbm", "beta-expit", "latent-space", "ergm", "ard-er")


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _graph(args, directed=None):
    if not args.graph:
        raise CliError("--graph is required for this family")
    g = load_edge_list(args.graph, n=args.n, directed=directed)
    return g


def _seeds(seed: int, k: int) -> list:
    return np.random.SeedSequence(seed).spawn(k)


def _load_config(path: str) -> dict:
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    if p.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        try:
            return tomllib.loads(raw.decode())
        except tomllib.TOMLDecodeError as exc:
            raise CliError(f"invalid TOML in {path}: {exc}") from exc
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CliError(f"invalid JSON in {path}: {exc}") from exc


def _parse_set(items) -> dict:
    """``key=value`` overrides; values are parsed as JSON when possible."""
    out = {}
    for item in items or ():
        key, sep, val = item.partition("=")
        if not sep:
            raise CliError(f"--set expects key=value, got {item!r}")
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


# ---------------------------------------------------------------------------
# test


def _undirected_test(args, g, p_hat, sampler, seed):
    if args.method == "asymptotic":
        return gof.test_undirected_asymptotic(g, p_hat, alpha=args.alpha)
    return gof.test_undirected_bootstrap(g, sampler, p_hat, B=args.B, alpha=args.alpha, seed=seed)


def cmd_test(args) -> int:
    fam = args.family
    model: dict = {"family": fam}
    if fam == "ard-er":
        if not args.ard:
            raise CliError("--ard is required for ard-er")
        y = read_ard_csv(args.ard)
        report = gof.test_ard_er(y, alpha=args.alpha)
        model.update(m=y.m, k=y.k, p_hat=report.extra["p_hat"])
    elif fam == "der":
        g = _graph(args, directed=True)
        p_hat = prob_matrix(fit_er(g), g.n)
        model.update(n=g.n, p_hat=float(p_hat.p[0, 1]))
        method = args.method or "bootstrap"
        if method == "bootstrap":
            report = gof.test_directed_bootstrap(
                g, gof.bernoulli_sampler(p_hat), p_hat, B=args.B, alpha=args.alpha, seed=args.seed
            )
        elif method == "tw":
            report = gof.test_directed_tw(g, p_hat, alpha=args.alpha)
        elif method == "explaw":
            report = gof.test_directed_explaw(g, p_hat, alpha=args.alpha)
        else:
            raise CliError(f"method {method!r} is not available for der (use bootstrap, tw or explaw)")
    else:
        g = _graph(args, directed=False)
        if g.directed:
            raise CliError(f"family {fam} needs an undirected graph")
        if args.method not in (None, "bootstrap", "asymptotic"):
            raise CliError(f"method {args.method!r} is not available for {fam} (use bootstrap or asymptotic)")
        args.method = args.method or "bootstrap"
        model["n"] = g.n
        if fam == "er":
            p_hat = prob_matrix(fit_er(g), g.n)
            model["p_hat"] = float(p_hat.p[0, 1])
            report = _undirected_test(args, g, p_hat, gof.bernoulli_sampler(p_hat), args.seed)
        elif fam == "sbm":
            if not args.labels:
                raise CliError("--labels is required for sbm")
            fit = fit_sbm(g, load_labels(args.labels, n=g.n))
            p_hat = prob_matrix(fit)
            model["B"] = fit.B.tolist()
            report = _undirected_test(args, g, p_hat, gof.bernoulli_sampler(p_hat), args.seed)
        elif fam == "beta-expit":
            fit = fit_beta_mle(g)
            p_hat = prob_matrix(fit)
            model["beta"] = fit.beta.tolist()
            report = _undirected_test(args, g, p_hat, gof.bernoulli_sampler(p_hat), args.seed)
        elif fam == "latent-space":
            if args.dim is None:
                raise CliError("--dim is required for latent-space")
            x = None
            if args.covariate:
                try:
                    x = np.loadtxt(args.covariate, delimiter=",", ndmin=2)
                except OSError as exc:
                    raise CliError(f"cannot read covariate {args.covariate}: {exc}") from exc
            fit = fit_latent_space(g, args.dim, x=x, max_iter=args.max_iter)
            p_hat = prob_matrix(fit)
            model.update(d=args.dim, pgd_iterations=fit.n_iter, pgd_converged=fit.converged,
                         objective=float(fit.objective[-1]))
            if fit.params.beta_cov is not None:
                model["beta_cov"] = float(fit.params.beta_cov)
            report = _undirected_test(args, g, p_hat, gof.bernoulli_sampler(p_hat), args.seed)
        elif fam == "ergm":
            terms = tuple(t.strip() for t in args.terms.split(",") if t.strip())
            fit = ergm.fit_ergm_mple(g, terms)
            s_p, s_boot = _seeds(args.seed, 2)
            p_hat = ergm.estimate_p_ergm(fit, g.n, B=args.B_p, seed=s_p)
            model.update(terms=list(fit.terms), theta_hat=list(fit.theta), B_p=args.B_p)
            report = _undirected_test(args, g, p_hat, ergm.ergm_sampler(fit, g.n), s_boot)
        else:  # pragma: no cover - argparse restricts choices
            raise CliError(f"unknown family {fam}")
    payload = {"model": model, "report": report.to_dict(), "seed": args.seed}
    _emit(_dump(payload), args.out)
    return EXIT_REJECT if report.reject else EXIT_OK


# ---------------------------------------------------------------------------
# replicate


def cmd_replicate(args) -> int:
    base = _load_config(args.config) if args.config else {}
    if args.experiment:
        base["experiment"] = args.experiment
    for key, val in (("n_values", args.n_values), ("reps", args.reps), ("B", args.B),
                     ("alpha", args.alpha), ("seed", args.seed), ("workers", args.workers)):
        if val is not None:
            base[key] = val
    params = dict(base.get("params", {}))
    params.update(_parse_set(args.set))
    base["params"] = params
    try:
        cfg = ExperimentConfig.from_mapping(base)
    except TypeError as exc:
        raise CliError(f"invalid configuration: {exc}") from exc

    def progress(done, total):
        if args.progress:
            print(f"\r{done}/{total}", end="" if done < total else "\n", file=sys.stderr, flush=True)

    result = run_experiment(cfg, progress=progress)
    _emit(result_csv(result), args.out)
    for name in result.tables:
        text = table_csv(result, name)
        if args.out:
            p = Path(args.out)
            Path(p.with_name(f"{p.stem}.{name}{p.suffix or '.csv'}")).write_text(text)
        else:
            sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# dimension selection and communities


def _pgd_opts(args) -> dict:
    return {"max_iter": args.max_iter}


def cmd_select_dim(args) -> int:
    g = _graph(args, directed=False)
    scan = select_dimension(
        g, max_d=args.max_d, B=args.B, alpha=args.alpha, seed=args.seed,
        pgd=_pgd_opts(args), full_scan=args.full_scan,
    )
    payload = {"seed": args.seed, **scan.to_dict()}
    _emit(_dump(payload), args.out)
    return EXIT_OK


def _dims(spec: str, n: int) -> list:
    out = []
    for part in spec.split(","):
        lo, sep, hi = part.partition("-")
        out.extend(range(int(lo), int(hi) + 1) if sep else [int(lo)])
    if not out or min(out) < 1 or max(out) >= n:
        raise CliError("dimensions must satisfy 1 <= d < n")
    return sorted(set(out))


def cmd_communities(args) -> int:
    g = _graph(args, directed=False)
    truth = load_labels(args.labels, n=g.n) if args.labels else None
    k = args.k if args.k else (truth.k if truth is not None else None)
    if k is None:
        raise CliError("give --k or --labels")
    if args.dims:
        dims = _dims(args.dims, g.n)
    elif args.dim:
        dims = [args.dim]
    else:
        scan = select_dimension(g, max_d=args.max_d, B=args.B, alpha=args.alpha, seed=args.seed,
                                pgd=_pgd_opts(args))
        if scan.d_fit is None:
            raise CliError(f"every dimension up to {scan.max_d} was rejected; pass --dim")
        dims = [scan.d_fit]

    seeds = np.random.SeedSequence(args.seed).generate_state(2 * max(dims))
    rows = []
    for d in dims:
        step = test_dimension(g, d, int(seeds[d - 1]), B=args.B, alpha=args.alpha, pgd=_pgd_opts(args))
        row = {"d": d, "t_tw": math.nan, "rejected": step.rejected, "r_mis": math.nan, "error": step.error or ""}
        if step.report is not None:
            row["t_tw"] = step.report.statistics["t"]
        fit = step.fit if step.fit is not None else fit_latent_space(g, d, **_pgd_opts(args))
        km_seed = np.random.SeedSequence(int(seeds[max(dims) + d - 1]))
        z = fit.params.z
        if truth is not None:
            row["r_mis"], _ = repeated_misclassification(z, truth, k, args.restarts, args.repeats, km_seed)
        assign = kmeans_communities(z, k, restarts=args.restarts, seed=km_seed)
        row["assignment"] = assign.labels.tolist()
        rows.append(row)

    if args.csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["d", "t_tw", "rejected", "r_mis", "error"])
        for r in rows:
            w.writerow([r["d"], format(r["t_tw"], ".10g"), int(r["rejected"]), format(r["r_mis"], ".10g"), r["error"]])
        Path(args.csv).write_text(buf.getvalue())
    payload = {
        "seed": args.seed,
        "k": k,
        "dimensions": [
            {key: (None if isinstance(v, float) and math.isnan(v) else v) for key, v in r.items()} for r in rows
        ],
    }
    if truth is not None and len(rows) == 1:
        payload["cluster_eval"] = misclassification(assign, truth).to_dict()
    _emit(_dump(payload), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# TW1 table


def cmd_tw_table(args) -> int:
    table = rmt.build_tw1_table(args.start, args.stop, args.step, nodes=args.nodes)
    rmt.write_tw1_table(table, args.out)
    print(_dump({"path": str(args.out), "mean": table.mean, "sd": table.sd, "points": int(table.grid.size)}), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common(p, bootstrap=True):
    p.add_argument("--alpha", type=float, default=0.05, help="test level (default 0.05)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--out", help="write output here instead of stdout")
    if bootstrap:
        p.add_argument("--B", type=int, default=gof.DEFAULT_B, help="bootstrap replicates (default 200)")


def _graph_args(p):
    p.add_argument("--graph", help="edge list file")
    p.add_argument("--n", type=int, help="node count (default: from header or largest index)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netgof", description="Spectral goodness-of-fit tests for network models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="fit a model and test it")
    p.add_argument("family", choices=FAMILIES)
    _graph_args(p)
    p.add_argument("--ard", help="ARD CSV file (ard-er)")
    p.add_argument("--labels", help="community labels (sbm)")
    p.add_argument("--method", help="bootstrap | asymptotic (undirected); bootstrap | tw | explaw (der)")
    p.add_argument("--dim", type=int, help="latent dimension (latent-space)")
    p.add_argument("--covariate", help="n x n covariate matrix, comma separated (latent-space)")
    p.add_argument("--max-iter", type=int, default=500, help="PGD iteration cap (latent-space)")
    p.add_argument("--terms", default="edges,triangles", help="ERGM terms for the null fit")
    p.add_argument("--B-p", type=int, default=500, help="ERGM draws used to estimate P (default 500)")
    _common(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("replicate", help="run a simulation study")
    p.add_argument("experiment", nargs="?", choices=EXPERIMENT_IDS)
    p.add_argument("--config", help="JSON or TOML configuration file")
    p.add_argument("--n-values", type=int, nargs="+")
    p.add_argument("--reps", type=int)
    p.add_argument("--B", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="worker processes (output does not depend on this)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a study parameter")
    p.add_argument("--out", help="CSV path (extra tables go next to it)")
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=cmd_replicate)

    p = sub.add_parser("select-dim", help="select the latent space dimension")
    _graph_args(p)
    p.add_argument("--max-d", type=int)
    p.add_argument("--full-scan", action="store_true", help="test every dimension up to --max-d")
    p.add_argument("--max-iter", type=int, default=500)
    _common(p)
    p.set_defaults(func=cmd_select_dim)

    p = sub.add_parser("communities", help="k-means communities from latent positions")
    _graph_args(p)
    p.add_argument("--k", type=int, help="number of communities (default: from --labels)")
    p.add_argument("--labels", help="true labels for misclassification rates")
    p.add_argument("--dim", type=int, help="latent dimension (default: selected)")
    p.add_argument("--dims", help="dimension list like 2-8 or 3,5,7 for a per-dimension table")
    p.add_argument("--max-d", type=int)
    p.add_argument("--restarts", type=int, default=200)
    p.add_argument("--repeats", type=int, default=1, help="outer k-means repetitions averaged in r_mis")
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--csv", help="write the per-dimension (d, t_tw, rejected, r_mis) table here")
    _common(p)
    p.set_defaults(func=cmd_communities)

    p = sub.add_parser("tw-table", help="regenerate the TW1 reference table")
    p.add_argument("--out", required=True)
    start, stop, step = rmt.DEFAULT_GRID
    p.add_argument("--start", type=float, default=start)
    p.add_argument("--stop", type=float, default=stop)
    p.add_argument("--step", type=float, default=step)
    p.add_argument("--nodes", type=int, default=rmt.DEFAULT_NODES)
    p.set_defaults(func=cmd_tw_table)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except NetGofError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
