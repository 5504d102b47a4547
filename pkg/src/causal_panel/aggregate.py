"""Cross-country aggregation of label-adjacent indicators."""
from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .granger import GrangerEdge
from .panel import LABEL

RANK_METHODS = ("granger", "ic_dependence", "ic_genuine")


@dataclass(frozen=True)
class CountryFindings:
    country_id: str
    granger_label_edges: tuple = ()
    ic_dependence_label: frozenset = frozenset()
    ic_genuine_label: frozenset = frozenset()
    warnings: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "granger_label_edges", tuple(self.granger_label_edges))
        object.__setattr__(self, "ic_dependence_label", frozenset(self.ic_dependence_label))
        object.__setattr__(self, "ic_genuine_label", frozenset(self.ic_genuine_label))
        object.__setattr__(self, "warnings", tuple(self.warnings))
        if not self.ic_genuine_label <= self.ic_dependence_label:
            raise ValueError("genuine label neighbours must be a subset of the dependence ones")

    @property
    def granger_label_indicators(self) -> frozenset:
        """Indicators linked to the label in either direction."""
        out = set()
        for e in self.granger_label_edges:
            if e.effect == LABEL and e.cause != LABEL:
                out.add(e.cause)
            elif e.cause == LABEL and e.effect != LABEL:
                out.add(e.effect)
        return frozenset(out)

    def indicators_for(self, method: str) -> frozenset:
        if method == "granger":
            return self.granger_label_indicators
        if method == "ic_dependence":
            return self.ic_dependence_label
        if method == "ic_genuine":
            return self.ic_genuine_label
        raise ValueError(f"unknown method {method!r}; choose from {RANK_METHODS}")

    def to_dict(self) -> dict:
        return {
            "country": self.country_id,
            "granger_label_edges": [
                {"cause": e.cause, "effect": e.effect, "p_value": e.p_value, "lag": e.lag}
                for e in self.granger_label_edges
            ],
            "ic_dependence_label": sorted(self.ic_dependence_label),
            "ic_genuine_label": sorted(self.ic_genuine_label),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d) -> "CountryFindings":
        return cls(
            d["country"],
            tuple(GrangerEdge(e["cause"], e["effect"], e["p_value"], e["lag"])
                  for e in d.get("granger_label_edges", ())),
            frozenset(d.get("ic_dependence_label", ())),
            frozenset(d.get("ic_genuine_label", ())),
            tuple(d.get("warnings", ())),
        )


@dataclass(frozen=True)
class RankingTable:
    method: str
    rows: tuple = ()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("indicator", "frequency"))
        w.writerows(self.rows)
        return buf.getvalue()


@dataclass(frozen=True)
class IntersectionTable:
    rows: tuple = ()
    strict_genuine: bool = False

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("country", "indicator"))
        w.writerows(self.rows)
        return buf.getvalue()


@dataclass(frozen=True)
class SkippedCountry:
    country_id: str
    reason: str


def rank(findings: Iterable[CountryFindings], method: str) -> RankingTable:
    """Number of countries in which each indicator is label-adjacent under ``method``."""
    counts = Counter()
    for f in findings:
        counts.update(f.indicators_for(method))
    rows = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return RankingTable(method, tuple(rows))


def intersect(findings: Iterable[CountryFindings], strict_genuine: bool = False) -> IntersectionTable:
    """(country, indicator) pairs label-adjacent under both Granger and IC*."""
    rows = []
    for f in sorted(findings, key=lambda f: f.country_id):
        ic = f.ic_genuine_label if strict_genuine else f.ic_dependence_label
        for ind in sorted(f.granger_label_indicators & ic):
            rows.append((f.country_id, ind))
    return IntersectionTable(tuple(rows), strict_genuine)


def relationship_counts(findings: Sequence[CountryFindings]) -> tuple:
    """Total label-incident relationships per method: (granger, ic_dependence, ic_genuine)."""
    g = d = n = 0
    for f in findings:
        g += len(f.granger_label_edges)
        d += len(f.ic_dependence_label)
        n += len(f.ic_genuine_label)
    return g, d, n


@dataclass(frozen=True)
class Aggregate:
    rankings: dict = field(default_factory=dict)
    intersection: IntersectionTable = IntersectionTable()
    counts: tuple = (0, 0, 0)
    skipped: tuple = ()


def aggregate(findings: Sequence[CountryFindings], strict_genuine: bool = False,
              skipped: Sequence[SkippedCountry] = ()) -> Aggregate:
    findings = sorted(findings, key=lambda f: f.country_id)
    return Aggregate(
        {m: rank(findings, m) for m in RANK_METHODS},
        intersect(findings, strict_genuine),
        relationship_counts(findings),
        tuple(sorted(skipped, key=lambda s: s.country_id)),
    )
