"""Table rendering, graph export and run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Mapping, Sequence
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from . import __version__
from .dataset import Relationship, Sample
from .metrics import SECTORS, CentralityTable, CohesionReport, CorrelationReport, GiniReport, SectorMatrix
from .network import InterlinkNetwork, Provenance, mutual_arcs

GRAPH_FORMATS = ("gexf", "dot", "edgelist")
TABLE_STYLES = ("csv", "text")

DOT_PENWIDTH = {False: "1.0", True: "2.5"}


def fmt2(value: float | None) -> str:
    """Round half away from zero to two decimals; ``None`` renders empty."""
    if value is None:
        return ""
    return str(Decimal(value).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def fmt_pct(count: int, total: int) -> str:
    if not count:
        return ""
    pct = Decimal(100 * count) / Decimal(total) if total else Decimal(0)
    return f"{count} ({pct.quantize(Decimal(1), rounding=ROUND_HALF_UP)}%)"


@dataclass
class ParkReport:
    """Everything computed for one seed organization."""

    label: str
    sample: Sample
    networks: dict[str, InterlinkNetwork]
    cohesion: dict[str, CohesionReport]
    correlations: CorrelationReport
    gini: GiniReport
    gini_harvested: GiniReport | None
    centrality: CentralityTable
    sectors: SectorMatrix
    dataset_counts: dict[str, dict] = field(default_factory=dict)


@dataclass
class Table:
    name: str
    title: str
    header: list[str]
    rows: list[list[str]]
    sections: list[tuple[str, int]] = field(default_factory=list)  # (heading, first row index)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        has_sections = bool(self.sections)
        writer.writerow((["section"] if has_sections else []) + self.header)
        starts = dict((i, h) for h, i in self.sections)
        current = ""
        for i, row in enumerate(self.rows):
            current = starts.get(i, current)
            writer.writerow(([current] if has_sections else []) + row)
        return buf.getvalue()

    def to_text(self) -> str:
        cols = len(self.header)
        widths = [len(h) for h in self.header]
        for row in self.rows:
            for j, cell in enumerate(row):
                widths[j] = max(widths[j], len(cell))

        def line(cells):
            return "  ".join(c.ljust(widths[j]) for j, c in enumerate(cells)).rstrip()

        out = [self.title, "", line(self.header)]
        starts = dict((i, h) for h, i in self.sections)
        for i, row in enumerate(self.rows):
            if i in starts:
                out.append(starts[i])
            out.append(line(row + [""] * (cols - len(row))))
        return "\n".join(out) + "\n"


def table_relationships(parks: Sequence[ParkReport]) -> Table:
    header = [""] + [p.label for p in parks] + ["Total"]
    from .dataset import relationship_counts

    counts = [relationship_counts(p.sample) for p in parks]
    orgs = [len(p.sample) - 1 for p in parks]
    hosts = [p.sample.audit.get("distinct_target_hosts", o) for p, o in zip(parks, orgs)]
    rows = [
        ["External links"] + [str(h) for h in hosts] + [str(sum(hosts))],
        ["Organisations"] + [str(o) for o in orgs] + [str(sum(orgs))],
    ]
    for rel in Relationship:
        cells = [fmt_pct(c[rel], o) for c, o in zip(counts, orgs)]
        total = sum(c[rel] for c in counts)
        rows.append([rel.value] + cells + [fmt_pct(total, sum(orgs))])
    return Table("relationships", "Websites linked to by each seed, by type of relationship", header, rows)


def _cohesion_row(label: str, c: CohesionReport) -> list[str]:
    return [
        label,
        f"{c.inclusiveness_count} ({fmt2(c.inclusiveness_ratio)})",
        str(c.ties),
        fmt2(c.connectivity_gap),
        fmt2(c.density),
        fmt2(c.reciprocity),
    ]


def table_cohesion(parks: Sequence[ParkReport]) -> Table:
    header = ["", "Inclusiveness (%)", "Ties", "Connectivity Gap", "Density", "Reciprocity"]
    rows, sections = [], []
    for p in parks:
        sections.append((p.label, len(rows)))
        for key, label in (("in", "in"), ("out", "out"), ("combined", "both"), ("pruned", "pruned")):
            if key in p.cohesion:
                rows.append(_cohesion_row(label, p.cohesion[key]))
    return Table("cohesion", "Structural cohesion of the in- and out-data set networks", header, rows, sections)


def table_correlations(parks: Sequence[ParkReport]) -> Table:
    header = ["", "Inlinks", "Outlinks", "Spearman InDeg/Pages", "Spearman OutDeg/Pages"]
    rows = [
        [
            p.label,
            fmt2(p.correlations.pearson_in),
            fmt2(p.correlations.pearson_out),
            fmt2(p.correlations.spearman_indeg_pages),
            fmt2(p.correlations.spearman_outdeg_pages),
        ]
        for p in parks
    ]
    return Table("correlations", "Pearson correlation of degrees across data sets; degree vs. site size", header, rows)


def table_gini(parks: Sequence[ParkReport]) -> Table:
    header = ["", "IN Inlinks", "IN Outlinks", "OUT Inlinks", "OUT Outlinks"]
    rows, sections = [], []
    bases = [("network degrees", lambda p: p.gini), ("harvested link counts", lambda p: p.gini_harvested)]
    for heading, get in bases:
        block = [(p, get(p)) for p in parks if get(p) is not None]
        if not block:
            continue
        sections.append((heading, len(rows)))
        for p, g in block:
            rows.append(
                [p.label] + [fmt2(g.get(lbl, d)) for lbl in ("in", "out") for d in ("in", "out")]
            )
    return Table("gini", "Gini coefficients of in- and outlinks per data set", header, rows, sections)


def table_sectors(matrix: SectorMatrix) -> Table:
    names = [s.value for s in SECTORS]
    header = ["Websites", "Outlinks / Inlinks"] + names + ["Total", "Mean"]
    rows = []
    for i, sector in enumerate(SECTORS):
        rows.append(
            [str(matrix.org_counts[sector]), sector.value]
            + [str(int(v)) for v in matrix.counts[i]]
            + [str(matrix.row_totals[i]), fmt2(matrix.row_means[i])]
        )
    rows.append(
        [str(matrix.organizations), "Total"]
        + [str(v) for v in matrix.column_totals]
        + [str(matrix.grand_total), fmt2(matrix.grand_mean)]
    )
    rows.append(["", "Mean"] + [fmt2(v) for v in matrix.column_means] + [fmt2(matrix.grand_mean), ""])
    return Table("sectors", "Interconnections between institutional sectors", header, rows)


def table_centrality(parks: Sequence[ParkReport], k: int = 5) -> Table:
    header = ["Organisations", "InDeg", "Organisations", "OutDeg", "Organisations", "Betweenness"]
    rows, sections = [], []
    for p in parks:
        sections.append((p.label, len(rows)))
        cols = [p.centrality.top(m, k) for m in ("in_degree", "out_degree", "betweenness")]
        for i in range(max((len(c) for c in cols), default=0)):
            row = []
            for measure, col in zip(("in", "out", "btw"), cols):
                if i < len(col):
                    key, value = col[i]
                    row += [key, fmt2(value) if measure == "btw" else str(int(value))]
                else:
                    row += ["", ""]
            rows.append(row)
    return Table("centrality", f"Top {k} organisations by centrality", header, rows, sections)


def build_tables(parks: Sequence[ParkReport]) -> list[Table]:
    total = None
    for p in parks:
        total = p.sectors if total is None else total + p.sectors
    if total is None:
        total = SectorMatrix(np.zeros((3, 3)), {})
    return [
        table_relationships(parks),
        table_cohesion(parks),
        table_correlations(parks),
        table_gini(parks),
        table_sectors(total),
        table_centrality(parks),
    ]


def render_tables(tables: Sequence[Table] | Sequence[ParkReport], out_dir: str | Path, style: str = "text") -> list[Path]:
    """Write one file per table; returns the paths written."""
    if style not in TABLE_STYLES:
        raise ValueError(f"unknown table style {style!r}")
    if tables and isinstance(tables[0], ParkReport):
        tables = build_tables(tables)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for table in tables:
        ext = "csv" if style == "csv" else "txt"
        path = out_dir / f"{table.name}.{ext}"
        text = table.to_csv() if style == "csv" else table.to_text()
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        paths.append(path)
    return paths


# -- graph export --------------------------------------------------------------------


def _node_attrs(net: InterlinkNetwork, sample: Sample | None, centrality: CentralityTable):
    out = []
    for key in net.nodes:
        org = sample.get(key) if sample is not None else None
        out.append(
            {
                "name": org.name if org else key,
                "sector": org.sector.value if org else "",
                "relationship": org.relationship.value if org else "",
                "category": org.category if org else "",
                "in_degree": centrality.in_degree[key],
                "out_degree": centrality.out_degree[key],
                "betweenness": f"{centrality.betweenness[key]:.6f}",
            }
        )
    return out


def _edges(net: InterlinkNetwork) -> list[tuple[str, str, bool]]:
    mutual = mutual_arcs(net)
    return [(s, t, frozenset((s, t)) in mutual) for s, t in sorted(net.arcs())]


def _dot_quote(text) -> str:
    return '"' + str(text).replace("\\", "\\\\").replace('"', '\\"') + '"'


def _render_dot(net, attrs, edges) -> str:
    lines = ["digraph interlink {", "  node [shape=ellipse];"]
    for key, a in zip(net.nodes, attrs):
        fields = [f"label={_dot_quote(a['name'])}"] + [
            f"{name}={_dot_quote(a[name])}" for name in ("name", "sector", "relationship", "category", "in_degree", "out_degree", "betweenness")
        ]
        lines.append(f"  {_dot_quote(key)} [{', '.join(fields)}];")
    for s, t, m in edges:
        lines.append(f"  {_dot_quote(s)} -> {_dot_quote(t)} [mutual={_dot_quote(str(m).lower())}, penwidth={DOT_PENWIDTH[m]}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


_GEXF_NODE_ATTRS = [
    ("name", "string"),
    ("sector", "string"),
    ("relationship", "string"),
    ("category", "string"),
    ("in_degree", "integer"),
    ("out_degree", "integer"),
    ("betweenness", "double"),
]


def _render_gexf(net, attrs, edges) -> str:
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<gexf xmlns="http://www.gexf.net/1.2draft" version="1.2">',
        "  <meta>",
        f"    <creator>interlink {escape(__version__)}</creator>",
        f"    <description>{escape(net.provenance.value)} interlinking network</description>",
        "  </meta>",
        '  <graph defaultedgetype="directed" mode="static">',
        '    <attributes class="node">',
    ]
    for i, (title, kind) in enumerate(_GEXF_NODE_ATTRS):
        lines.append(f'      <attribute id="{i}" title="{title}" type="{kind}"/>')
    lines += [
        "    </attributes>",
        '    <attributes class="edge">',
        '      <attribute id="0" title="mutual" type="boolean"/>',
        "    </attributes>",
        "    <nodes>",
    ]
    for key, a in zip(net.nodes, attrs):
        lines.append(f"      <node id={quoteattr(key)} label={quoteattr(a['name'])}>")
        lines.append("        <attvalues>")
        for i, (title, _) in enumerate(_GEXF_NODE_ATTRS):
            lines.append(f'          <attvalue for="{i}" value={quoteattr(str(a[title]))}/>')
        lines.append("        </attvalues>")
        lines.append("      </node>")
    lines += ["    </nodes>", "    <edges>"]
    for i, (s, t, m) in enumerate(edges):
        lines.append(f'      <edge id="{i}" source={quoteattr(s)} target={quoteattr(t)}>')
        lines.append(f'        <attvalues><attvalue for="0" value="{str(m).lower()}"/></attvalues>')
        lines.append("      </edge>")
    lines += ["    </edges>", "  </graph>", "</gexf>"]
    return "\n".join(lines) + "\n"


def _render_edgelist(net, edges) -> str:
    lines = [f"# node\t{k}" for k in net.nodes]
    lines.append("source\ttarget\tmutual")
    lines += [f"{s}\t{t}\t{str(m).lower()}" for s, t, m in edges]
    return "\n".join(lines) + "\n"


def export_graph(
    net: InterlinkNetwork,
    sample: Sample | None,
    centrality: CentralityTable | None,
    fmt: str,
    path: str | Path | None = None,
) -> str:
    """Serialize *net* with node attributes and a ``mutual`` flag per edge.

    Returns the document text and writes it to *path* when given.
    """
    if fmt not in GRAPH_FORMATS:
        raise ValueError(f"unknown graph format {fmt!r}; expected one of {', '.join(GRAPH_FORMATS)}")
    centrality = centrality or CentralityTable.of(net)
    edges = _edges(net)
    if fmt == "edgelist":
        text = _render_edgelist(net, edges)
    else:
        attrs = _node_attrs(net, sample, centrality)
        text = _render_dot(net, attrs, edges) if fmt == "dot" else _render_gexf(net, attrs, edges)
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


def read_edgelist(path: str | Path, provenance=Provenance.COMBINED, seed: str | None = None) -> InterlinkNetwork:
    nodes: list[str] = []
    arcs: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# node\t"):
                nodes.append(line.split("\t", 1)[1])
            elif not line or line.startswith("#") or line == "source\ttarget\tmutual":
                continue
            else:
                s, t, _ = line.split("\t")
                arcs.append((s, t))
    nodes_all = set(nodes) | {k for arc in arcs for k in arc}
    return InterlinkNetwork.from_arcs(nodes_all, arcs, provenance, seed)


# -- manifest ----------------------------------------------------------------------------


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_path(path: str | Path) -> str:
    """Digest of a file, or of a directory's relative paths and file contents."""
    path = Path(path)
    if path.is_file():
        return sha256_file(path)
    h = hashlib.sha256()
    for sub in sorted(p for p in path.rglob("*") if p.is_file()):
        h.update(sub.relative_to(path).as_posix().encode("utf-8") + b"\0")
        h.update(sha256_file(sub).encode("ascii") + b"\n")
    return h.hexdigest()


def digest_json(obj) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class RunManifest:
    toolkit_version: str
    config_digest: str
    input_digests: dict[str, str]
    started_at: str
    finished_at: str
    counts: dict[str, dict]
    status: str = "ok"
    output_digests: dict[str, str] = field(default_factory=dict)


def write_manifest(
    path: str | Path,
    *,
    config,
    inputs: Mapping[str, str | Path] | Iterable[str | Path] = (),
    counts: Mapping[str, Mapping] | None = None,
    started_at: str = "",
    finished_at: str = "",
    status: str = "ok",
    outputs: Iterable[str | Path] = (),
    base: str | Path | None = None,
) -> RunManifest:
    """Persist a JSON manifest that pins the inputs and outcome of a run."""
    if not isinstance(inputs, Mapping):
        inputs = {str(p): p for p in inputs}
    base = Path(base) if base else None

    def label(p):
        p = Path(p)
        if base is not None:
            try:
                return p.resolve().relative_to(base.resolve()).as_posix()
            except ValueError:
                pass
        return p.as_posix()

    manifest = RunManifest(
        toolkit_version=__version__,
        config_digest=config if isinstance(config, str) else digest_json(config),
        input_digests={name: sha256_path(p) for name, p in sorted(inputs.items()) if os.path.exists(p)},
        started_at=started_at,
        finished_at=finished_at,
        counts={k: dict(v) for k, v in sorted((counts or {}).items())},
        status=status,
        output_digests={label(p): sha256_file(p) for p in sorted(outputs, key=str) if Path(p).is_file()},
    )
    Path(path).write_text(json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
