"""Region graphs, distributions and column-stochastic transition matrices.

Convention: transition matrices are *column*-stochastic.  ``P[j, i]`` is the
probability of moving from region ``i`` to region ``j``, columns sum to one
(``1ᵀP = 1ᵀ``) and distributions propagate as ``rho_next = P @ rho``.  Most
Markov chain code is row-stochastic; transpose before handing matrices to such
code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

DIST_TOL = 1e-12
STOCHASTIC_TOL = 1e-10


class GraphError(ValueError):
    """Malformed or not strongly connected region graph."""


def adjacency_from_edges(n: int, edges: Iterable[tuple[int, int]]) -> np.ndarray:
    """Boolean adjacency ``A[i, j]`` = transition ``i -> j`` allowed."""
    A = np.zeros((n, n), dtype=bool)
    for i, j in edges:
        A[i, j] = True
    return A


def check_strong_connectivity(g: "RegionGraph | np.ndarray") -> bool:
    """True iff every node reaches every other node along directed edges.

    Accepts a :class:`RegionGraph` or a square boolean adjacency matrix (any
    nonzero entry counts as an edge, the diagonal is ignored).
    """
    A = g.adjacency() if isinstance(g, RegionGraph) else np.asarray(g) != 0
    if A.shape[0] <= 1:
        return True
    ncomp, _ = connected_components(csr_matrix(A), directed=True, connection="strong")
    return ncomp == 1


@dataclass(frozen=True)
class RegionGraph:
    """Directed, strongly connected graph of workspace regions.

    Self-transitions are always allowed and never need to be listed.
    ``target`` is an optional default target distribution read from a
    graph document.
    """

    n: int
    edges: frozenset[tuple[int, int]]
    names: tuple[str, ...] = ()
    target: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        edges = frozenset((int(i), int(j)) for i, j in self.edges if int(i) != int(j))
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "names", tuple(self.names))
        if self.n < 2:
            raise GraphError(f"a region graph needs at least 2 regions, got n={self.n}")
        for i, j in edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge ({i}, {j}) out of range for n={self.n}")
        if self.names and len(self.names) != self.n:
            raise GraphError(f"expected {self.n} names, got {len(self.names)}")
        if self.target is not None:
            object.__setattr__(self, "target", as_distribution(self.target, normalize=True))
            if self.target.shape != (self.n,):
                raise GraphError("target length does not match n")
        if not check_strong_connectivity(self.adjacency()):
            A = self.adjacency()
            _, labels = connected_components(csr_matrix(A), directed=True, connection="strong")
            raise GraphError(
                "region graph is not strongly connected "
                f"(strong components: {labels.tolist()})"
            )

    def adjacency(self) -> np.ndarray:
        return adjacency_from_edges(self.n, self.edges)

    def support(self) -> np.ndarray:
        """Column-convention support mask: ``S[j, i]`` true iff i -> j allowed (diagonal included)."""
        return self.adjacency().T | np.eye(self.n, dtype=bool)

    def out_neighbors(self, i: int) -> list[int]:
        return sorted(j for (a, j) in self.edges if a == i)

    def out_degree(self) -> np.ndarray:
        return self.adjacency().sum(axis=1)

    def one_way_edges(self) -> list[tuple[int, int]]:
        return sorted((i, j) for (i, j) in self.edges if (j, i) not in self.edges)

    def label(self, i: int) -> str:
        return self.names[i] if self.names else str(i)

    def to_document(self) -> dict:
        doc = {"n": self.n, "edges": [list(e) for e in sorted(self.edges)]}
        if self.names:
            doc["names"] = list(self.names)
        if self.target is not None:
            doc["target"] = self.target.tolist()
        return doc


def parse_graph(doc: dict) -> RegionGraph:
    try:
        n = int(doc["n"])
        edges = [(int(e[0]), int(e[1])) for e in doc["edges"]]
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise GraphError(f"cannot parse graph document: {exc}") from exc
    for e in doc["edges"]:
        if len(e) != 2:
            raise GraphError(f"edge entries must be [from, to] pairs, got {e!r}")
    return RegionGraph(n, frozenset(edges), tuple(doc.get("names", ())), doc.get("target"))


def load_graph(source: str | Path | dict) -> RegionGraph:
    """Load a graph from a JSON document (path, JSON text or parsed dict)."""
    if isinstance(source, dict):
        return parse_graph(source)
    text = str(source)
    if not text.lstrip().startswith("{"):
        text = Path(source).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphError(f"cannot parse graph document: {exc}") from exc
    return parse_graph(doc)


def complete_graph(n: int) -> RegionGraph:
    return RegionGraph(n, frozenset((i, j) for i in range(n) for j in range(n) if i != j))


def undirected_graph(n: int, pairs: Iterable[tuple[int, int]],
                     one_way: Iterable[tuple[int, int]] = ()) -> RegionGraph:
    edges = set()
    for i, j in pairs:
        edges |= {(i, j), (j, i)}
    edges |= set(one_way)
    return RegionGraph(n, frozenset(edges))


# -- distributions -----------------------------------------------------------

def as_distribution(values: Sequence[float] | np.ndarray, normalize: bool = False) -> np.ndarray:
    """Validate (or normalize) a probability vector and return it as a float array."""
    rho = np.asarray(values, dtype=float).reshape(-1)
    if rho.size == 0 or not np.all(np.isfinite(rho)):
        raise ValueError("distribution must be a nonempty finite vector")
    if np.any(rho < 0):
        raise ValueError("distribution entries must be non-negative")
    if normalize:
        total = rho.sum()
        if total <= 0:
            raise ValueError("cannot normalize an all-zero vector")
        return rho / total
    if abs(rho.sum() - 1.0) > DIST_TOL * max(1, rho.size):
        raise ValueError(f"distribution sums to {rho.sum()!r}, not 1")
    return rho


def uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def smooth_distribution(rho: np.ndarray, delta: float) -> np.ndarray:
    """``(rho + delta) / sum(rho + delta)``; strictly positive for delta > 0."""
    if delta < 0:
        raise ValueError("delta must be non-negative")
    rho = np.asarray(rho, dtype=float)
    out = rho + delta
    return out / out.sum()


# -- stochastic matrices -------------------------------------------------------

def check_stochastic(P: np.ndarray, graph: RegionGraph | None = None,
                     tol: float = STOCHASTIC_TOL) -> np.ndarray:
    """Validate a column-stochastic matrix (optionally against a graph support)."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"transition matrix must be square, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise ValueError("transition matrix has non-finite entries")
    if P.min() < -tol:
        raise ValueError(f"negative transition probability {P.min():.3g}")
    colsum = P.sum(axis=0)
    if np.max(np.abs(colsum - 1.0)) > tol:
        raise ValueError(f"columns must sum to 1 (max error {np.max(np.abs(colsum - 1)):.3g})")
    if graph is not None:
        if P.shape[0] != graph.n:
            raise ValueError("matrix size does not match graph")
        off = np.abs(P[~graph.support()])
        if off.size and off.max() > tol:
            raise ValueError("transition probability on an edge absent from the graph")
    return P


@dataclass(frozen=True)
class ChainReport:
    stationary: bool
    irreducible: bool
    detailed_balance: bool | None
    stationarity_error: float
    balance_error: float | None


def verify_chain(P: np.ndarray, rho: np.ndarray, tol: float = 1e-9,
                 check_balance: bool = True) -> ChainReport:
    """Check stationarity, irreducibility and (optionally) detailed balance of ``P``."""
    P = np.asarray(P, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if P.shape != (rho.size, rho.size):
        raise ValueError("dimension mismatch between chain and distribution")
    stat_err = float(np.max(np.abs(P @ rho - rho)))
    # support graph in row convention: i -> j iff P[j, i] > 0
    irreducible = check_strong_connectivity(P.T > 0)
    balance = bal_err = None
    if check_balance:
        if np.any(rho <= 0):
            raise ValueError("detailed balance check needs a strictly positive distribution")
        F = P * rho[None, :]
        bal_err = float(np.max(np.abs(F - F.T)))
        balance = bal_err <= tol
    return ChainReport(stat_err <= tol, irreducible, balance, stat_err, bal_err)


def metropolis_hastings(g: RegionGraph, rho: np.ndarray) -> np.ndarray:
    """Metropolis-Hastings chain on ``g`` with stationary distribution ``rho``.

    Proposals are uniform over out-neighbours; a move ``i -> j`` is accepted with
    probability ``min(1, rho_j d_i / (rho_i d_j))`` and rejected mass stays on the
    diagonal.  One-way edges have zero reverse proposal probability and therefore
    zero acceptance, which keeps the chain reversible.
    """
    rho = as_distribution(rho)
    if rho.size != g.n:
        raise ValueError("target length does not match graph")
    if np.any(rho <= 0):
        raise ValueError("Metropolis-Hastings needs a strictly positive target")
    A = g.adjacency()
    d = A.sum(axis=1).astype(float)
    P = np.zeros((g.n, g.n))
    for i, j in g.edges:
        if not A[j, i]:
            continue
        P[j, i] = min(1.0, rho[j] * d[i] / (rho[i] * d[j])) / d[i]
    P[np.diag_indices(g.n)] = 1.0 - P.sum(axis=0)
    return P
