"""Dichotomized interlinking networks over an organization sample."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dataset import LinkDataset, Sample
from .errors import StructuralError


class Provenance(str, enum.Enum):
    IN = "in"
    OUT = "out"
    COMBINED = "combined"


def _frozen(matrix) -> np.ndarray:
    m = np.array(matrix, dtype=bool, copy=True)
    m.setflags(write=False)
    return m


@dataclass(frozen=True, eq=False)
class InterlinkNetwork:
    nodes: tuple[str, ...]
    adjacency: np.ndarray  # bool, row = source, column = target
    provenance: Provenance
    seed: str | None = None

    def __post_init__(self):
        nodes = tuple(self.nodes)
        adj = _frozen(self.adjacency)
        n = len(nodes)
        if adj.shape != (n, n):
            raise StructuralError(f"adjacency shape {adj.shape} does not match {n} nodes")
        if len(set(nodes)) != n:
            raise StructuralError("duplicate nodes")
        if n and adj.diagonal().any():
            raise StructuralError("self-links on the diagonal")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    @classmethod
    def from_arcs(cls, nodes: Iterable[str], arcs: Iterable[tuple[str, str]], provenance=Provenance.COMBINED, seed=None):
        nodes = sorted(set(nodes))
        index = {k: i for i, k in enumerate(nodes)}
        adj = np.zeros((len(nodes), len(nodes)), dtype=bool)
        for s, t in arcs:
            if s != t:
                adj[index[s], index[t]] = True
        return cls(tuple(nodes), adj, provenance, seed)

    def __eq__(self, other):
        if not isinstance(other, InterlinkNetwork):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and np.array_equal(self.adjacency, other.adjacency)
            and self.provenance == other.provenance
            and self.seed == other.seed
        )

    __hash__ = None

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def ties(self) -> int:
        return int(self.adjacency.sum())

    def index(self, key: str) -> int:
        return self.nodes.index(key)

    def arcs(self) -> list[tuple[str, str]]:
        rows, cols = np.nonzero(self.adjacency)
        return [(self.nodes[i], self.nodes[j]) for i, j in zip(rows, cols)]

    def has_arc(self, source: str, target: str) -> bool:
        return bool(self.adjacency[self.index(source), self.index(target)])

    def successors(self) -> list[list[int]]:
        return [list(np.flatnonzero(row)) for row in self.adjacency]


def interlink(dataset: LinkDataset | Iterable[tuple[str, str]], sample: Sample | Sequence[str], seed: str | None = None):
    """Links between sample members only, as a boolean matrix.

    Any number of observed links from s to t becomes one arc; self-links
    and links touching non-members are dropped.
    """
    keys = sample.keys if isinstance(sample, Sample) else list(sample)
    if isinstance(sample, Sample):
        seed = sample.seed.key
    if isinstance(dataset, LinkDataset):
        pairs = dataset.pairs()
        provenance = Provenance.IN if dataset.kind.value == "in" else Provenance.OUT
    else:
        pairs = set(dataset)
        provenance = Provenance.COMBINED
    members = set(keys)
    arcs = [(s, t) for s, t in pairs if s in members and t in members and s != t]
    return InterlinkNetwork.from_arcs(keys, arcs, provenance, seed)


def weighted_matrix(dataset: LinkDataset, sample: Sample | Sequence[str]) -> tuple[list[str], np.ndarray]:
    """Raw link multiplicities between members, for auditing only."""
    keys = sorted(sample.keys if isinstance(sample, Sample) else sample)
    index = {k: i for i, k in enumerate(keys)}
    m = np.zeros((len(keys), len(keys)), dtype=np.int64)
    for (s, t), c in dataset.link_counts.items():
        if s in index and t in index and s != t:
            m[index[s], index[t]] += c
    return keys, m


def _check_aligned(a: InterlinkNetwork, b: InterlinkNetwork):
    if a.nodes != b.nodes:
        raise StructuralError("networks have different node lists")


def combine(in_net: InterlinkNetwork, out_net: InterlinkNetwork) -> InterlinkNetwork:
    _check_aligned(in_net, out_net)
    return InterlinkNetwork(
        in_net.nodes, in_net.adjacency | out_net.adjacency, Provenance.COMBINED, in_net.seed or out_net.seed
    )


def prune_seed_outlinks(net: InterlinkNetwork, seed: str | None = None) -> InterlinkNetwork:
    """Drop the seed's outgoing arcs, then every node left without arcs.

    The seed itself always stays.
    """
    seed = seed or net.seed
    if seed not in net.nodes:
        raise StructuralError(f"seed {seed!r} is not in the network")
    adj = np.array(net.adjacency)
    adj[net.index(seed), :] = False
    degree = adj.sum(axis=0) + adj.sum(axis=1)
    keep = [i for i, k in enumerate(net.nodes) if degree[i] > 0 or k == seed]
    return InterlinkNetwork(
        tuple(net.nodes[i] for i in keep), adj[np.ix_(keep, keep)], net.provenance, seed
    )


def mutual_arcs(net: InterlinkNetwork) -> set[frozenset[str]]:
    both = net.adjacency & net.adjacency.T
    rows, cols = np.nonzero(np.triu(both, k=1))
    return {frozenset((net.nodes[i], net.nodes[j])) for i, j in zip(rows, cols)}


def write_matrix(nodes: Sequence[str], matrix: np.ndarray, path: str | Path) -> None:
    """TSV matrix with site keys as header row and first column."""
    matrix = np.asarray(matrix)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t" + "\t".join(nodes) + "\n")
        for key, row in zip(nodes, matrix):
            fh.write(key + "\t" + "\t".join(str(int(v)) for v in row) + "\n")


def read_matrix(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")[1:]
        rows, names = [], []
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            if not parts or parts == [""]:
                continue
            names.append(parts[0])
            rows.append([int(v) for v in parts[1:]])
    if names != header:
        raise StructuralError(f"{path}: row labels differ from column labels")
    return header, np.array(rows, dtype=np.int64).reshape(len(header), len(header))
