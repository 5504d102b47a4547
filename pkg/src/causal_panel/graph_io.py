"""Interchange formats: DOT network diagrams, canonical JSON, Table-style CSV."""
from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass

import numpy as np

from .granger import CausalityMatrix, extract_edges
from .icstar import MarkedGraph, classify_edges
from .panel import LABEL, format_number
from .stattests import CorrelationMatrix

VIEWS = ("granger", "dependence", "genuine")
DOC_EDGE_KINDS = ("undirected", "directed", "marked", "dashed", "dashed_both")
WEIGHT_CAP = 16.0
TARGET_DISPLAY = "Label (Disease Outbreaks)"


@dataclass(frozen=True)
class GraphNode:
    id: str
    label: str
    role: str = "indicator"  # indicator | target


@dataclass(frozen=True)
class GraphEdge:
    """Edge oriented so any arrowhead sits at ``dst`` (``dashed_both``: at both ends)."""

    src: str
    dst: str
    kind: str
    weight: float | None = None


@dataclass(frozen=True)
class GraphDocument:
    view: str
    nodes: tuple
    edges: tuple

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        if self.view not in VIEWS:
            raise ValueError(f"view must be one of {VIEWS}")
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("node ids must be unique")
        known = set(ids)
        for e in self.edges:
            if e.src not in known or e.dst not in known:
                raise ValueError(f"edge {e.src}->{e.dst} references an unknown node")
            if e.kind not in DOC_EDGE_KINDS:
                raise ValueError(f"unknown edge kind {e.kind!r}")


def _node(name, display=None):
    if name == LABEL:
        return GraphNode(name, TARGET_DISPLAY, "target")
    return GraphNode(name, (display or {}).get(name, name), "indicator")


def granger_weight(p: float) -> float:
    if p <= 0.0:
        return WEIGHT_CAP
    return min(-math.log10(p), WEIGHT_CAP)


def granger_document(m: CausalityMatrix, display=None) -> GraphDocument:
    edges, _ = extract_edges(m)
    nodes = [_node(v, display) for v in m.variables]
    out = [GraphEdge(e.cause, e.effect, "directed", granger_weight(e.p_value)) for e in edges]
    return GraphDocument("granger", nodes, out)


_MARKED_TO_DOC = {
    "undirected": ("ab", "undirected"),
    "dashed_into_b": ("ab", "dashed"),
    "dashed_into_a": ("ba", "dashed"),
    "dashed_both": ("ab", "dashed_both"),
    "directed_a_to_b": ("ab", "directed"),
    "directed_b_to_a": ("ba", "directed"),
    "marked_a_to_b": ("ab", "marked"),
    "marked_b_to_a": ("ba", "marked"),
}


def marked_graph_documents(g: MarkedGraph, display=None) -> tuple:
    """The two IC* views: every remaining dependence, and marked links only."""
    cls = classify_edges(g)
    dep_edges = []
    for a, b, kind in cls.dependence_edges:
        order, doc_kind = _MARKED_TO_DOC[kind]
        src, dst = (a, b) if order == "ab" else (b, a)
        dep_edges.append(GraphEdge(src, dst, doc_kind))
    dependence = GraphDocument("dependence", [_node(v, display) for v in g.nodes], dep_edges)
    genuine = GraphDocument(
        "genuine",
        [_node(v, display) for v in cls.genuine_nodes],
        [GraphEdge(s, d, "marked") for s, d in cls.genuine_edges],
    )
    return dependence, genuine


# ---------------------------------------------------------------------------
# DOT


def _q(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _attrs(pairs) -> str:
    return "[" + ", ".join(f"{k}={_q(str(v))}" for k, v in pairs) + "]"


_EDGE_STYLE = {
    "undirected": (("style", "solid"), ("dir", "none")),
    "directed": (("style", "solid"), ("dir", "forward")),
    "marked": (("style", "solid"), ("dir", "forward"), ("label", "*")),
    "dashed": (("style", "dashed"), ("dir", "forward")),
    "dashed_both": (("style", "dashed"), ("dir", "both")),
}


def export_dot(doc: GraphDocument) -> str:
    """DOT text; byte-stable for a given document."""
    lines = [f"digraph {_q(doc.view)} {{"]
    if doc.nodes:
        lines.append('  node [shape="ellipse", style="filled"];')
    node_fill = "pink" if doc.view == "genuine" else "palegreen"
    for n in doc.nodes:
        attrs = [("label", n.label), ("role", n.role)]
        if n.role == "target":
            attrs += [("shape", "doubleoctagon"), ("fillcolor", "gold")]
        else:
            attrs += [("fillcolor", node_fill)]
        lines.append(f"  {_q(n.id)} {_attrs(attrs)};")
    for e in doc.edges:
        attrs = [("kind", e.kind)] + list(_EDGE_STYLE[e.kind])
        if e.weight is not None:
            attrs.append(("weight", format_number(e.weight)))
        lines.append(f"  {_q(e.src)} -> {_q(e.dst)} {_attrs(attrs)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


_TOKEN = re.compile(r'\s*(?:(?P<str>"(?:[^"\\]|\\.)*")|(?P<arrow>->)|(?P<punct>[{}\[\];,=])|(?P<id>[A-Za-z_][A-Za-z0-9_]*))')


_UNESCAPE = re.compile(r"\\(.)")


def _tokens(text):
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"DOT syntax error at offset {pos}")
        pos = m.end()
        if m.group("str") is not None:
            yield ("qid", _UNESCAPE.sub(r"\1", m.group("str")[1:-1]))
        elif m.group("arrow"):
            yield ("->", "->")
        elif m.group("punct"):
            yield (m.group("punct"), m.group("punct"))
        else:
            yield ("id", m.group("id"))


def parse_dot(text: str) -> dict:
    """Parse the DOT subset emitted by :func:`export_dot`.

    Grammar: ``digraph ID { stmt* }`` with statements ``node [attrs];``,
    ``ID [attrs];`` and ``ID -> ID [attrs];``. Raises ``ValueError`` on
    anything else. Returns ``{"name", "nodes": {id: attrs}, "edges": [(src, dst, attrs)]}``.
    """
    toks = list(_tokens(text))
    pos = 0

    def take(kind=None, value=None):
        nonlocal pos
        if pos >= len(toks):
            raise ValueError("unexpected end of DOT input")
        t = toks[pos]
        found = "id" if t[0] == "qid" else t[0]
        if (kind and found != kind) or (value and t[1] != value):
            raise ValueError(f"expected {value or kind}, got {t[1]!r}")
        pos += 1
        return t[1]

    def attr_list():
        attrs = {}
        if pos < len(toks) and toks[pos][0] == "[":
            take("[")
            while toks[pos][0] != "]":
                k = take("id")
                take("=")
                attrs[k] = take("id")
                if toks[pos][0] == ",":
                    take(",")
            take("]")
        return attrs

    take("id", "digraph")
    name = take("id")
    take("{")
    nodes, edges = {}, []
    while toks[pos][0] != "}":
        keyword = toks[pos][0] == "id"
        ident = take("id")
        if toks[pos][0] == "->":
            take("->")
            dst = take("id")
            edges.append((ident, dst, attr_list()))
        else:
            attrs = attr_list()
            if not (keyword and ident == "node"):
                nodes[ident] = attrs
        take(";")
    take("}")
    if pos != len(toks):
        raise ValueError("trailing tokens after graph body")
    for s, d, _ in edges:
        if s not in nodes or d not in nodes:
            raise ValueError(f"edge {s}->{d} references an undeclared node")
    return {"name": name, "nodes": nodes, "edges": edges}


# ---------------------------------------------------------------------------
# canonical JSON


def _clean(v):
    if isinstance(v, float):
        return v if math.isfinite(v) else None
    if isinstance(v, np.floating):
        return _clean(float(v))
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def canonical_json(obj) -> str:
    """Sorted keys, fixed separators, shortest round-trip floats, trailing newline."""
    return json.dumps(_clean(obj), sort_keys=True, ensure_ascii=False, indent=1, allow_nan=False) + "\n"


def document_to_dict(doc: GraphDocument) -> dict:
    return {
        "type": "graph",
        "view": doc.view,
        "nodes": [{"id": n.id, "label": n.label, "role": n.role} for n in doc.nodes],
        "edges": [{"src": e.src, "dst": e.dst, "kind": e.kind, "weight": e.weight} for e in doc.edges],
    }


def matrix_to_dict(m: CausalityMatrix, metadata=None) -> dict:
    d = {
        "type": "causality_matrix",
        "variables": list(m.variables),
        "p": m.p.tolist(),
        "max_lag": m.max_lag,
        "alpha": m.alpha,
        "orientation": m.orientation,
        "lags": None if m.lags is None else m.lags.tolist(),
        "warnings": list(m.warnings),
    }
    if metadata:
        d["metadata"] = metadata
    return d


def heatmap_to_dict(cm: CorrelationMatrix, metadata=None) -> dict:
    d = {
        "type": "heatmap",
        "variables": list(cm.variables),
        "r": cm.r.tolist(),
        "excluded": list(cm.excluded),
        "warnings": list(cm.warnings),
    }
    if metadata:
        d["metadata"] = metadata
    return d


def export_json(obj, metadata=None) -> str:
    if isinstance(obj, GraphDocument):
        d = document_to_dict(obj)
        if metadata:
            d["metadata"] = metadata
    elif isinstance(obj, CausalityMatrix):
        d = matrix_to_dict(obj, metadata)
    elif isinstance(obj, CorrelationMatrix):
        d = heatmap_to_dict(obj, metadata)
    elif isinstance(obj, MarkedGraph):
        d = {"type": "marked_graph", **obj.to_dict()}
        if metadata:
            d["metadata"] = metadata
    else:
        raise TypeError(f"cannot export {type(obj).__name__}")
    return canonical_json(d)


def import_json(text: str):
    d = json.loads(text)
    kind = d.get("type")
    if kind == "graph":
        return GraphDocument(
            d["view"],
            [GraphNode(n["id"], n["label"], n["role"]) for n in d["nodes"]],
            [GraphEdge(e["src"], e["dst"], e["kind"], e["weight"]) for e in d["edges"]],
        )
    if kind == "causality_matrix":
        return CausalityMatrix(
            tuple(d["variables"]), np.array(d["p"], dtype=float).reshape(len(d["variables"]), -1),
            d["max_lag"], d["alpha"], d["orientation"],
            None if d["lags"] is None else np.array(d["lags"], dtype=int).reshape(len(d["variables"]), -1),
            tuple(d["warnings"]),
        )
    if kind == "heatmap":
        n = len(d["variables"])
        return CorrelationMatrix(
            tuple(d["variables"]), np.array(d["r"], dtype=float).reshape(n, n),
            tuple(d["excluded"]), tuple(d["warnings"]),
        )
    if kind == "marked_graph":
        return MarkedGraph.from_dict(d)
    raise ValueError(f"unknown JSON document type {kind!r}")


# ---------------------------------------------------------------------------
# Table-style CSV


def matrix_to_csv(m, display=None, corner: str = "Feature") -> str:
    """Square matrix with variable names as header row and first column."""
    names = m.variables
    values = m.p if isinstance(m, CausalityMatrix) else m.r
    shown = [_node(v, display).label for v in names]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([corner] + shown)
    for name, row in zip(shown, values):
        w.writerow([name] + [format_number(x) for x in row])
    return buf.getvalue()


def matrix_from_csv(text: str, max_lag: int, alpha: float, orientation: str = "row_effect") -> CausalityMatrix:
    rows = list(csv.reader(io.StringIO(text)))
    header = rows[0][1:]
    names = tuple(LABEL if h == TARGET_DISPLAY else h for h in header)
    p = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    return CausalityMatrix(names, p, max_lag, alpha, orientation)
