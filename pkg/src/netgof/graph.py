"""Graph, probability-matrix and ARD containers plus their file formats.

All containers hold read-only numpy arrays; construct a new object instead of
mutating one.
"""

from __future__ import annotations

import csv
import json
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import GraphFormatError

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]

_HEADER_RE = re.compile(r"#\s*netgof-edgelist\s+(.*)")


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Graph:
    """Binary adjacency matrix with zero diagonal.

    Undirected graphs must have a symmetric adjacency matrix.
    """

    adj: np.ndarray
    directed: bool = False

    def __post_init__(self):
        a = np.asarray(self.adj)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise GraphFormatError(f"adjacency must be square, got shape {a.shape}")
        if not np.isin(a, (0, 1)).all():
            raise GraphFormatError("adjacency entries must be 0 or 1")
        if np.any(np.diag(a) != 0):
            raise GraphFormatError("adjacency diagonal must be zero")
        if not self.directed and not np.array_equal(a, a.T):
            raise GraphFormatError("undirected adjacency must be symmetric")
        object.__setattr__(self, "adj", _frozen(a, np.int8))
        object.__setattr__(self, "directed", bool(self.directed))

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    @property
    def n_dyads(self) -> int:
        n = self.n
        return n * (n - 1) if self.directed else n * (n - 1) // 2

    @property
    def n_edges(self) -> int:
        s = int(self.adj.sum())
        return s if self.directed else s // 2

    def degrees(self) -> np.ndarray:
        """Out-degrees (equal to degrees when undirected)."""
        return self.adj.sum(axis=1).astype(np.int64)

    def edges(self) -> np.ndarray:
        """Edge list as a (E, 2) int array; undirected edges listed once with u < v."""
        a = self.adj if self.directed else np.triu(self.adj)
        return np.argwhere(a == 1)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self.directed == other.directed and np.array_equal(self.adj, other.adj)

    def to_dict(self) -> dict:
        return {
            "type": "graph",
            "n": self.n,
            "directed": self.directed,
            "edges": self.edges().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Graph":
        return graph_from_edges(d["n"], d["edges"], directed=d["directed"])


@dataclass(frozen=True, eq=False)
class ProbMatrix:
    """Pairwise edge probabilities; the diagonal is stored as zero."""

    p: np.ndarray
    directed: bool = False

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError(f"probability matrix must be square, got shape {p.shape}")
        np.fill_diagonal(p, 0.0)
        if not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if not self.directed and not np.allclose(p, p.T, rtol=0, atol=1e-12):
            raise ValueError("undirected probability matrix must be symmetric")
        object.__setattr__(self, "p", _frozen(p, float))
        object.__setattr__(self, "directed", bool(self.directed))

    @property
    def n(self) -> int:
        return self.p.shape[0]

    def to_dict(self) -> dict:
        return {"type": "prob_matrix", "directed": self.directed, "p": self.p.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ProbMatrix":
        return cls(np.asarray(d["p"], dtype=float), directed=d["directed"])


@dataclass(frozen=True, eq=False)
class ArdMatrix:
    """Aggregated relational data: respondent-by-group tie counts.

    ``counts[i, j]`` is the number of ties respondent ``i`` reports into group
    ``j``; ``group_sizes[j]`` is the (known) size of group ``j``.
    """

    counts: np.ndarray
    group_sizes: np.ndarray
    respondent_groups: Optional[np.ndarray] = None
    n_total: Optional[int] = None
    group_names: Optional[tuple] = None

    def __post_init__(self):
        c = np.asarray(self.counts)
        sizes = np.asarray(self.group_sizes)
        if c.ndim != 2:
            raise ValueError("ARD counts must be a 2-d array")
        if not np.all(np.equal(np.mod(c, 1), 0)) or c.min(initial=0) < 0:
            raise ValueError("ARD counts must be nonnegative integers")
        if sizes.shape != (c.shape[1],):
            raise ValueError("need one group size per ARD column")
        if np.any(sizes <= 0) or not np.all(np.equal(np.mod(sizes, 1), 0)):
            raise ValueError("group sizes must be positive integers")
        if np.any(c > sizes[None, :]):
            raise ValueError("an ARD count exceeds its group size")
        if self.n_total is not None and sizes.sum() > self.n_total:
            raise ValueError("group sizes sum to more than the declared node count")
        object.__setattr__(self, "counts", _frozen(c, np.int64))
        object.__setattr__(self, "group_sizes", _frozen(sizes, np.int64))
        if self.respondent_groups is not None:
            rg = np.asarray(self.respondent_groups)
            if rg.shape != (c.shape[0],):
                raise ValueError("respondent_groups must have one entry per respondent")
            object.__setattr__(self, "respondent_groups", _frozen(rg, np.int64))
        if self.group_names is not None:
            if len(self.group_names) != c.shape[1]:
                raise ValueError("need one group name per ARD column")
            object.__setattr__(self, "group_names", tuple(str(s) for s in self.group_names))

    @property
    def m(self) -> int:
        return self.counts.shape[0]

    @property
    def k(self) -> int:
        return self.counts.shape[1]

    def to_dict(self) -> dict:
        d = {
            "type": "ard",
            "counts": self.counts.tolist(),
            "group_sizes": self.group_sizes.tolist(),
        }
        if self.respondent_groups is not None:
            d["respondent_groups"] = self.respondent_groups.tolist()
        if self.n_total is not None:
            d["n_total"] = self.n_total
        if self.group_names is not None:
            d["group_names"] = list(self.group_names)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArdMatrix":
        names = d.get("group_names")
        return cls(
            np.asarray(d["counts"]),
            np.asarray(d["group_sizes"]),
            respondent_groups=d.get("respondent_groups"),
            n_total=d.get("n_total"),
            group_names=tuple(names) if names is not None else None,
        )


@dataclass(frozen=True, eq=False)
class NodeLabeling:
    """Community assignment; labels are 0-based integers in ``range(k)``."""

    labels: np.ndarray
    k: int = field(default=0)

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 1 or lab.size == 0:
            raise ValueError("labels must be a nonempty 1-d array")
        if not np.issubdtype(lab.dtype, np.integer):
            if not np.all(np.equal(np.mod(lab, 1), 0)):
                raise ValueError("labels must be integers")
        lab = lab.astype(np.int64)
        k = int(self.k) if self.k else int(lab.max()) + 1
        if k < 1 or lab.min() < 0 or lab.max() >= k:
            raise ValueError(f"labels must lie in 0..{k - 1}")
        object.__setattr__(self, "labels", _frozen(lab, np.int64))
        object.__setattr__(self, "k", k)

    @property
    def n(self) -> int:
        return self.labels.size

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    def one_hot(self) -> np.ndarray:
        out = np.zeros((self.n, self.k))
        out[np.arange(self.n), self.labels] = 1.0
        return out

    def __eq__(self, other):
        if not isinstance(other, NodeLabeling):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.labels, other.labels)

    def to_dict(self) -> dict:
        return {"type": "labels", "k": self.k, "labels": self.labels.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NodeLabeling":
        return cls(np.asarray(d["labels"]), k=d.get("k", 0))


def graph_from_edges(n: int, edges: Iterable[Sequence[int]], directed: bool = False) -> Graph:
    adj = np.zeros((n, n), dtype=np.int8)
    e = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= n):
        raise GraphFormatError(f"edge endpoint out of range for n={n}")
    e = e[e[:, 0] != e[:, 1]]
    adj[e[:, 0], e[:, 1]] = 1
    if not directed:
        adj[e[:, 1], e[:, 0]] = 1
    return Graph(adj, directed=directed)


def load_edge_list(
    path,
    n: Optional[int] = None,
    directed: Optional[bool] = None,
    index_base: Optional[int] = None,
) -> Graph:
    """Read a ``u v`` edge list (whitespace or comma separated).

    Indexing is 0- or 1-based, detected from the smallest index unless the
    file carries a ``# netgof-edgelist`` header or ``index_base`` is given.
    ``directed`` defaults to the header's value, else undirected.
    Self-loops are dropped with a warning; duplicate lines collapse.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise GraphFormatError(f"cannot read edge list {path}: {exc}") from exc

    header = {}
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _HEADER_RE.match(line)
            if m:
                for tok in m.group(1).split():
                    key, _, val = tok.partition("=")
                    header[key] = val
            continue
        toks = [t for t in re.split(r"[\s,]+", line) if t]
        if len(toks) < 2:
            raise GraphFormatError(f"{path}:{lineno}: expected two node indices")
        try:
            pairs.append((int(toks[0]), int(toks[1])))
        except ValueError as exc:
            raise GraphFormatError(f"{path}:{lineno}: non-integer node index") from exc

    if n is None and "n" in header:
        n = int(header["n"])
    if index_base is None and "base" in header:
        index_base = int(header["base"])
    if directed is None:
        directed = header.get("directed", "0") in ("1", "true", "True")

    e = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if index_base is None:
        index_base = 0 if e.size == 0 or e.min() == 0 else 1
    e = e - index_base
    if n is None:
        n = int(e.max()) + 1 if e.size else 0
    if e.size and (e.min() < 0 or e.max() >= n):
        raise GraphFormatError(f"node index out of range for n={n} in {path}")

    loops = e[:, 0] == e[:, 1]
    if loops.any():
        warnings.warn(f"dropped {int(loops.sum())} self-loop(s) from {path}", stacklevel=2)
    return graph_from_edges(n, e[~loops], directed=directed)


def write_edge_list(g: Graph, path) -> None:
    """Write ``g`` as a 0-indexed edge list with a header that pins ``n``."""
    lines = [f"# netgof-edgelist n={g.n} base=0 directed={int(g.directed)}"]
    lines += [f"{u} {v}" for u, v in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def sample_graph(p: ProbMatrix, seed: SeedLike = None) -> Graph:
    """Draw each dyad independently as Bernoulli(p_ij)."""
    rng = as_generator(seed)
    return Graph(_bernoulli_adj(p.p, p.directed, rng), directed=p.directed)


def _bernoulli_adj(p: np.ndarray, directed: bool, rng: np.random.Generator) -> np.ndarray:
    n = p.shape[0]
    u = rng.random((n, n))
    adj = (u < p).astype(np.int8)
    if directed:
        np.fill_diagonal(adj, 0)
        return adj
    adj = np.triu(adj, 1)
    return adj + adj.T


def sample_adjacency_batch(p: np.ndarray, directed: bool, size: int, rng) -> np.ndarray:
    """Stack of ``size`` independent adjacency matrices drawn from ``p``."""
    n = p.shape[0]
    u = rng.random((size, n, n))
    adj = (u < p[None]).astype(np.int8)
    if directed:
        idx = np.arange(n)
        adj[:, idx, idx] = 0
        return adj
    adj = np.triu(adj, 1)
    return adj + adj.transpose(0, 2, 1)


def extract_ard(g: Graph, groups: NodeLabeling, respondents: Sequence[int]) -> ArdMatrix:
    """Aggregate ties of each respondent into counts per group.

    ``groups`` must label every node; a respondent's own node is never
    counted because the graph has no self-loops.
    """
    if groups.n != g.n:
        raise ValueError(f"labels cover {groups.n} nodes but the graph has {g.n}")
    sizes = groups.sizes()
    if np.any(sizes == 0):
        raise ValueError("every group must contain at least one node")
    resp = np.asarray(respondents, dtype=np.int64)
    if resp.size and (resp.min() < 0 or resp.max() >= g.n):
        raise ValueError("respondent index out of range")
    counts = g.adj[resp].astype(np.int64) @ groups.one_hot().astype(np.int64)
    return ArdMatrix(
        counts,
        sizes,
        respondent_groups=groups.labels[resp],
        n_total=g.n,
    )


def read_ard_csv(path) -> ArdMatrix:
    """Read ARD from CSV.

    Layout: a header row ``respondent,<group names...>``, a ``size`` row with
    group sizes, then one row per respondent (id followed by counts).
    """
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise GraphFormatError(f"cannot read ARD file {path}: {exc}") from exc
    if len(rows) < 3:
        raise GraphFormatError(f"{path}: need a header, a size row and at least one respondent")
    names = [c.strip() for c in rows[0][1:]]
    if rows[1][0].strip().lower() != "size":
        raise GraphFormatError(f"{path}: second row must start with 'size'")
    try:
        sizes = [int(c) for c in rows[1][1:]]
        counts = [[int(c) for c in r[1:]] for r in rows[2:]]
    except ValueError as exc:
        raise GraphFormatError(f"{path}: non-integer entry") from exc
    if any(len(r) != len(names) for r in counts) or len(sizes) != len(names):
        raise GraphFormatError(f"{path}: ragged rows")
    return ArdMatrix(np.asarray(counts), np.asarray(sizes), group_names=tuple(names))


def write_ard_csv(y: ArdMatrix, path) -> None:
    names = y.group_names or tuple(f"g{j}" for j in range(y.k))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["respondent", *names])
        w.writerow(["size", *y.group_sizes.tolist()])
        for i, row in enumerate(y.counts.tolist()):
            w.writerow([i, *row])


_TYPES = {
    "graph": Graph,
    "prob_matrix": ProbMatrix,
    "ard": ArdMatrix,
    "labels": NodeLabeling,
}


def dumps(obj) -> str:
    return json.dumps(obj.to_dict(), sort_keys=True)


def loads(text: str):
    d = json.loads(text)
    try:
        cls = _TYPES[d["type"]]
    except KeyError as exc:
        raise GraphFormatError(f"unknown serialized type {d.get('type')!r}") from exc
    return cls.from_dict(d)


def load_labels(path, n: Optional[int] = None) -> NodeLabeling:
    """Read one integer label per line (or ``node label`` pairs), 0- or 1-based.

    1-based labels (smallest label 1) are shifted down to start at 0.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise GraphFormatError(f"cannot read labels {path}: {exc}") from exc
    rows = [re.split(r"[\s,]+", ln.strip()) for ln in text.splitlines()]
    rows = [r for r in rows if r and r[0] and not r[0].startswith("#")]
    try:
        if all(len(r) >= 2 for r in rows):
            pairs = np.array([[int(r[0]), int(r[1])] for r in rows])
            nodes = pairs[:, 0] - pairs[:, 0].min()
            if np.unique(nodes).size != nodes.max() + 1:
                raise GraphFormatError(f"{path}: labels missing for some nodes")
            lab = np.empty(nodes.max() + 1, dtype=np.int64)
            lab[nodes] = pairs[:, 1]
        else:
            lab = np.array([int(r[0]) for r in rows])
    except ValueError as exc:
        raise GraphFormatError(f"{path}: non-integer label") from exc
    lab = lab - lab.min()
    # remap to consecutive integers so every community is nonempty
    _, lab = np.unique(lab, return_inverse=True)
    if n is not None and lab.size != n:
        raise GraphFormatError(f"{path}: {lab.size} labels for {n} nodes")
    return NodeLabeling(lab)
