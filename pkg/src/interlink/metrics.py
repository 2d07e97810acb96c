"""Cohesion, inequality, centrality and correlation measures for interlinking networks.

Everything is computed at full precision; rounding happens only when
reports are rendered.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dataset import LinkDataset, Organization, Sample, Sector
from .errors import MetricError, StructuralError
from .network import InterlinkNetwork, Provenance

RECIPROCITY_METHODS = ("arc", "dyad")
SECTORS = (Sector.INDUSTRY, Sector.ACADEMIA, Sector.GOVERNMENT)


@dataclass(frozen=True)
class CohesionReport:
    n: int
    inclusiveness_count: int
    inclusiveness_ratio: float
    ties: int
    connectivity_gap: float | None
    density: float
    reciprocity: float


def isolates(net: InterlinkNetwork) -> list[str]:
    adj = net.adjacency
    degree = adj.sum(axis=0) + adj.sum(axis=1)
    return [k for k, d in zip(net.nodes, degree) if d == 0]


def reciprocity(net: InterlinkNetwork, method: str = "arc") -> float:
    """Share of reciprocated links.

    ``arc``: arcs whose reverse arc exists over all arcs.
    ``dyad``: mutual dyads over all connected dyads.
    """
    if method not in RECIPROCITY_METHODS:
        raise ValueError(f"unknown reciprocity method {method!r}")
    ties = net.ties
    if ties == 0:
        return 0.0
    reciprocated = int((net.adjacency & net.adjacency.T).sum())
    if method == "arc":
        return reciprocated / ties
    mutual = reciprocated // 2
    return mutual / (ties - mutual)


def density(net: InterlinkNetwork) -> float:
    if net.n < 2:
        raise MetricError("density is undefined for fewer than two nodes")
    return net.ties / (net.n * (net.n - 1))


def cohesion(net: InterlinkNetwork, combined_ties: int | None = None, reciprocity_method: str = "arc") -> CohesionReport:
    """Inclusiveness, ties, connectivity gap, density and reciprocity.

    The connectivity gap is the share of the combined network's arcs that
    this network lacks; it is only reported for single data-set networks
    when *combined_ties* is given.
    """
    ties = net.ties
    gap = None
    if combined_ties is not None and net.provenance is not Provenance.COMBINED:
        if combined_ties < ties:
            raise ValueError(f"combined_ties {combined_ties} is smaller than ties {ties}")
        gap = (combined_ties - ties) / combined_ties if combined_ties else 0.0
    included = net.n - len(isolates(net))
    return CohesionReport(
        n=net.n,
        inclusiveness_count=included,
        inclusiveness_ratio=included / net.n if net.n else 0.0,
        ties=ties,
        connectivity_gap=gap,
        density=density(net),
        reciprocity=reciprocity(net, reciprocity_method),
    )


# -- centrality -------------------------------------------------------------------------


def degree(net: InterlinkNetwork) -> dict[str, tuple[int, int]]:
    """``{node: (in_degree, out_degree)}``."""
    indeg = net.adjacency.sum(axis=0)
    outdeg = net.adjacency.sum(axis=1)
    return {k: (int(i), int(o)) for k, i, o in zip(net.nodes, indeg, outdeg)}


def betweenness(net: InterlinkNetwork) -> dict[str, float]:
    """Unnormalized directed shortest-path betweenness (Brandes' algorithm)."""
    n = net.n
    succ = net.successors()
    score = [0.0] * n
    for s in range(n):
        order = []
        preds: list[list[int]] = [[] for _ in range(n)]
        sigma = [0] * n
        dist = [-1] * n
        sigma[s] = 1
        dist[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            order.append(v)
            for w in succ[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = [0.0] * n
        for w in reversed(order):
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                score[w] += delta[w]
    return dict(zip(net.nodes, score))


@dataclass
class CentralityTable:
    nodes: tuple[str, ...]
    in_degree: dict[str, int]
    out_degree: dict[str, int]
    betweenness: dict[str, float]

    @classmethod
    def of(cls, net: InterlinkNetwork) -> "CentralityTable":
        deg = degree(net)
        return cls(
            net.nodes,
            {k: d[0] for k, d in deg.items()},
            {k: d[1] for k, d in deg.items()},
            betweenness(net),
        )

    def top(self, measure: str, k: int = 5) -> list[tuple[str, float]]:
        values = getattr(self, measure)
        return sorted(values.items(), key=lambda kv: (-kv[1], kv[0]))[:k]


# -- inequality and correlation ------------------------------------------------------------


def gini(values: Sequence[float], corrected: bool = False) -> float:
    """Gini coefficient, mean absolute difference over twice the mean.

    ``corrected`` applies the n/(n-1) small-sample factor.  All-zero input
    is treated as perfect equality.
    """
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    if n == 0:
        raise MetricError("gini of an empty vector")
    if (x < 0).any():
        raise ValueError("gini needs non-negative values")
    total = math.fsum(x)
    if total == 0:
        return 0.0
    # sum_{i,j} |x_i - x_j| = 2 * sum_i (2i - n - 1) x_(i) for ascending x, i = 1..n
    weights = 2 * np.arange(1, n + 1) - n - 1
    g = math.fsum(weights * x) / (n * total)
    if corrected:
        g = g * n / (n - 1) if n > 1 else 0.0
    return g


def _check_pair(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError("correlation needs two vectors of equal length")
    if x.size < 2:
        raise MetricError("correlation needs at least two observations")
    return x, y


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x, y = _check_pair(x, y)
    dx = x - math.fsum(x) / x.size
    dy = y - math.fsum(y) / y.size
    sxx = math.fsum(dx * dx)
    syy = math.fsum(dy * dy)
    if sxx == 0 or syy == 0:
        raise MetricError("correlation is undefined for a constant vector")
    r = math.fsum(dx * dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def midranks(x: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size, dtype=float)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    x, y = _check_pair(x, y)
    return pearson(midranks(x), midranks(y))


@dataclass
class CorrelationReport:
    pearson_in: float | None = None
    pearson_out: float | None = None
    spearman_indeg_pages: float | None = None
    spearman_outdeg_pages: float | None = None


def _maybe(fn, *args):
    try:
        return fn(*args)
    except MetricError:
        return None


def degree_correlations(net_in: InterlinkNetwork, net_out: InterlinkNetwork) -> CorrelationReport:
    """Pearson correlation of in-degrees (and of out-degrees) across two networks.

    A coefficient that is undefined (constant degree vector) is ``None``.
    """
    if net_in.nodes != net_out.nodes:
        raise StructuralError("networks have different node lists")
    a, b = net_in.adjacency, net_out.adjacency
    return CorrelationReport(
        pearson_in=_maybe(pearson, a.sum(axis=0), b.sum(axis=0)),
        pearson_out=_maybe(pearson, a.sum(axis=1), b.sum(axis=1)),
    )


def size_correlations(net: InterlinkNetwork, page_counts: Mapping[str, float]) -> tuple[float | None, float | None]:
    """Spearman of in- and out-degree against site size, over nodes with a known size."""
    deg = degree(net)
    keys = [k for k in net.nodes if k in page_counts]
    pages = [page_counts[k] for k in keys]
    return (
        _maybe(spearman, [deg[k][0] for k in keys], pages),
        _maybe(spearman, [deg[k][1] for k in keys], pages),
    )


@dataclass
class GiniReport:
    """Gini coefficients keyed by ``(network label, "in" | "out")``."""

    values: dict[tuple[str, str], float] = field(default_factory=dict)
    basis: str = "network"
    corrected: bool = False

    def get(self, label: str, direction: str) -> float | None:
        return self.values.get((label, direction))


def gini_report(networks: Mapping[str, InterlinkNetwork], corrected: bool = False) -> GiniReport:
    report = GiniReport(basis="network", corrected=corrected)
    for label, net in networks.items():
        adj = net.adjacency
        report.values[(label, "in")] = gini(adj.sum(axis=0), corrected) if net.n else 0.0
        report.values[(label, "out")] = gini(adj.sum(axis=1), corrected) if net.n else 0.0
    return report


def harvested_counts(dataset: LinkDataset, keys: Sequence[str]) -> tuple[list[int], list[int]]:
    """Per-member counts of site-level links received and given in a data set."""
    index = {k: i for i, k in enumerate(keys)}
    inl = [0] * len(keys)
    outl = [0] * len(keys)
    for link in dataset.links:
        if link.target in index:
            inl[index[link.target]] += 1
        if link.source in index:
            outl[index[link.source]] += 1
    return inl, outl


def harvested_gini_report(datasets: Mapping[str, LinkDataset], keys: Sequence[str], corrected: bool = False) -> GiniReport:
    report = GiniReport(basis="harvested", corrected=corrected)
    for label, ds in datasets.items():
        inl, outl = harvested_counts(ds, keys)
        report.values[(label, "in")] = gini(inl, corrected) if keys else 0.0
        report.values[(label, "out")] = gini(outl, corrected) if keys else 0.0
    return report


# -- sectors ------------------------------------------------------------------------


@dataclass
class SectorMatrix:
    """Arc counts by (source sector, target sector) with per-organization means.

    Rows and columns follow :data:`SECTORS`.  Means are always derived
    from the totals and the organization counts.
    """

    counts: np.ndarray
    org_counts: dict[Sector, int]

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(3, 3)
        self.org_counts = {s: int(self.org_counts.get(s, 0)) for s in SECTORS}

    def __add__(self, other: "SectorMatrix") -> "SectorMatrix":
        return SectorMatrix(
            self.counts + other.counts, {s: self.org_counts[s] + other.org_counts[s] for s in SECTORS}
        )

    @property
    def row_totals(self) -> list[int]:
        return [int(v) for v in self.counts.sum(axis=1)]

    @property
    def column_totals(self) -> list[int]:
        return [int(v) for v in self.counts.sum(axis=0)]

    @property
    def grand_total(self) -> int:
        return int(self.counts.sum())

    @property
    def organizations(self) -> int:
        return sum(self.org_counts.values())

    @staticmethod
    def _mean(total: int, count: int) -> float | None:
        return total / count if count else None

    @property
    def row_means(self) -> list[float | None]:
        return [self._mean(t, self.org_counts[s]) for t, s in zip(self.row_totals, SECTORS)]

    @property
    def column_means(self) -> list[float | None]:
        return [self._mean(t, self.org_counts[s]) for t, s in zip(self.column_totals, SECTORS)]

    @property
    def grand_mean(self) -> float | None:
        return self._mean(self.grand_total, self.organizations)


def sector_matrix(
    net: InterlinkNetwork,
    orgs: Sample | Mapping[str, Organization],
    exclude_seed_outlinks: bool = False,
    seed: str | None = None,
) -> SectorMatrix:
    """Cross-tabulate arcs by the sectors of their endpoints."""
    if isinstance(orgs, Sample):
        seed = seed or orgs.seed.key
        lookup = {m.key: m for m in orgs.members}
    else:
        lookup = dict(orgs)
    seed = seed or net.seed
    missing = [k for k in net.nodes if k not in lookup]
    if missing:
        raise MetricError("unclassified nodes: " + ", ".join(missing))
    pos = {s: i for i, s in enumerate(SECTORS)}
    sector_idx = [pos[lookup[k].sector] for k in net.nodes]
    counts = np.zeros((3, 3), dtype=np.int64)
    for s, t in zip(*np.nonzero(net.adjacency)):
        if exclude_seed_outlinks and net.nodes[s] == seed:
            continue
        counts[sector_idx[s], sector_idx[t]] += 1
    org_counts = {sec: sector_idx.count(i) for sec, i in pos.items()}
    return SectorMatrix(counts, org_counts)
