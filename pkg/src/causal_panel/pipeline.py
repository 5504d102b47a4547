"""End-to-end per-country analysis and the batch runner.

Every country goes through: drop unusable indicators, impute, normalise,
stationarise (then align lengths), prune near-duplicate indicators, Granger
matrix, IC* graph. Results are folded into rankings and an intersection
table. Outputs are a pure function of (inputs, config, seed).
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import aggregate as agg
from . import graph_io
from .errors import CausalPanelError
from .granger import ORIENTATIONS, causality_matrix, extract_edges
from .icstar import genuine_neighbours_of, icstar_from_data, neighbours_of
from .imputation import METHODS, drift, impute
from .panel import LABEL, CountryPanel, PanelDataset, drop_sparse, ingest
from .seeding import derive_seed
from .stattests import (
    ADF_KINDS,
    SeriesMeta,
    fit_normalising_transform,
    is_near_constant,
    pearson_matrix,
    prune_correlated,
    shapiro_wilk,
    stationarize,
)

log = logging.getLogger(__name__)

SEED_ENV = "CAUSAL_PANEL_SEED"
# fields that do not influence results and are excluded from the config hash
_UNHASHED = ("workers", "output_dir")


@dataclass(frozen=True)
class RunConfig:
    imputation_method: str = "msreg"
    knn_k: int = 5
    sparse_threshold: float = 0.8
    transform_enabled: bool = True
    transform_before_impute: bool = False
    adf_kind: str = "constant"
    adf_max_lag: int | None = None
    adf_alpha: float = 0.05
    granger_max_lag: int = 2
    alpha_granger: float = 0.05
    alpha_ci: float = 0.05
    max_cond: int = 2
    prune_threshold: float = 0.95
    prune_before_impute: bool = False
    matrix_orientation: str = "row_effect"
    strict_genuine: bool = False
    seed: int = 0
    workers: int = 1
    output_dir: str = "out"

    def __post_init__(self):
        if self.imputation_method not in METHODS:
            raise ValueError(f"imputation_method must be one of {METHODS}")
        if self.adf_kind not in ADF_KINDS:
            raise ValueError(f"adf_kind must be one of {ADF_KINDS}")
        if self.matrix_orientation not in ORIENTATIONS:
            raise ValueError(f"matrix_orientation must be one of {ORIENTATIONS}")
        for name in ("sparse_threshold", "alpha_granger", "alpha_ci", "adf_alpha"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.0 < self.prune_threshold <= 1.0:
            raise ValueError("prune_threshold must lie in (0, 1]")
        if self.granger_max_lag < 1 or self.max_cond < 0 or self.knn_k < 1 or self.workers < 1:
            raise ValueError("granger_max_lag, knn_k, workers must be >= 1 and max_cond >= 0")
        if self.adf_max_lag is not None and self.adf_max_lag < 0:
            raise ValueError("adf_max_lag must be >= 0")

    def canonical(self, include_unhashed: bool = False) -> str:
        lines = []
        for f in sorted(dataclasses.fields(self), key=lambda f: f.name):
            if not include_unhashed and f.name in _UNHASHED:
                continue
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()[:16]

    def metadata(self) -> dict:
        return {
            "seed": self.seed,
            "alpha_granger": self.alpha_granger,
            "alpha_ci": self.alpha_ci,
            "config_hash": self.config_hash,
        }

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


_FIELD_TYPES = {
    "imputation_method": str, "knn_k": int, "sparse_threshold": float, "transform_enabled": bool,
    "transform_before_impute": bool, "adf_kind": str, "adf_max_lag": "optional_int",
    "adf_alpha": float, "granger_max_lag": int, "alpha_granger": float, "alpha_ci": float,
    "max_cond": int, "prune_threshold": float, "prune_before_impute": bool,
    "matrix_orientation": str, "strict_genuine": bool, "seed": int, "workers": int,
    "output_dir": str,
}


def parse_value(key: str, text: str):
    kind = _FIELD_TYPES.get(key)
    if kind is None:
        raise ValueError(f"unknown config key {key!r}")
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {text!r}")
    if kind == "optional_int":
        return None if text.lower() in ("none", "") else int(text)
    return kind(text)


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {n}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key] = parse_value(key, value)
    return out


def load_config(path=None, overrides=None, environ=None) -> RunConfig:
    """Resolve a config.

    Precedence, lowest first: defaults, ``CAUSAL_PANEL_SEED``, ``overrides``
    (command-line flags), the config file at ``path``.
    """
    environ = os.environ if environ is None else environ
    values = {}
    if environ.get(SEED_ENV):
        values["seed"] = int(environ[SEED_ENV])
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    return RunConfig(**values)


# ---------------------------------------------------------------------------
# per-country stages


class CountrySkipped(CausalPanelError):
    pass


@dataclass
class CountryState:
    panel: CountryPanel
    warnings: list = field(default_factory=list)
    metas: dict = field(default_factory=dict)
    drift: object = None
    pruned: tuple = ()
    imputed_cells: int = 0


def prepare_country(panel: CountryPanel, cfg: RunConfig) -> CountryState:
    """Drop indicators with too few observations for the chosen imputation."""
    need = 3 if cfg.imputation_method == "msreg" else 1
    counts = (~panel.missing).sum(axis=1)
    bad = [n for n, c in zip(panel.indicators, counts) if c < need]
    state = CountryState(panel)
    if bad:
        state.warnings.append(f"dropped indicators with < {need} observed values: {bad}")
        state.panel = panel.drop(bad)
    if not state.panel.indicators:
        raise CountrySkipped("no indicator has enough observed values")
    return state


def impute_country(state: CountryState, cfg: RunConfig) -> CountryState:
    panel = state.panel
    method = cfg.imputation_method
    if method == "msreg" and len(panel.indicators) < 2 and panel.missing.any():
        state.warnings.append("single indicator: stochastic regression unavailable, used random donors")
        method = "random"
    seed = derive_seed(cfg.seed, panel.country_id)
    imp = impute(panel, method, seed, cfg.knn_k)
    state.warnings.extend(imp.warnings)
    state.drift = drift(panel, imp)
    state.imputed_cells = int(imp.imputed_mask.sum())
    state.panel = imp.panel
    return state


def transform_country(state: CountryState, cfg: RunConfig) -> CountryState:
    """Pick a normalising transform per indicator (fitted on observed cells only)."""
    panel = state.panel
    values = np.array(panel.values)
    for i, name in enumerate(panel.indicators):
        obs = ~panel.missing[i]
        seen = panel.values[i, obs]
        tag, normal, w = "none", False, None
        if cfg.transform_enabled and seen.size >= 3:
            t = fit_normalising_transform(seen)
            values[i, obs] = t.apply(seen)
            tag = t.tag
        transformed = values[i, obs]
        if transformed.size >= 3 and not is_near_constant(transformed):
            res = shapiro_wilk(transformed)
            w, normal = res.w_statistic, res.p_value >= 0.05
        state.metas[name] = SeriesMeta(name, tag, 0, True, bool(normal), w)
    state.panel = panel.replace(values=values)
    return state


def stationarize_country(state: CountryState, cfg: RunConfig) -> CountryState:
    """Difference each indicator up to twice, then truncate all series to a common length."""
    panel = state.panel
    if panel.missing.any():
        raise CountrySkipped("stationarity testing requires a complete panel")
    n = len(panel.years)
    if n < 12:
        raise CountrySkipped(f"only {n} years; stationarity testing needs >= 12")
    results = {}
    for i, name in enumerate(panel.indicators):
        results[name] = stationarize(panel.values[i], cfg.adf_max_lag, cfg.adf_kind, cfg.adf_alpha)
    depth = max((r.diff_order for r in results.values()), default=0)
    values = np.empty((len(panel.indicators), n - depth))
    for i, name in enumerate(panel.indicators):
        r = results[name]
        values[i] = r.values[depth - r.diff_order:]
        base = state.metas.get(name, SeriesMeta(name))
        state.metas[name] = dataclasses.replace(
            base,
            diff_order=r.diff_order,
            stationary=bool(r.stationary),
            adf_p_value=None if r.adf is None else r.adf.p_value,
        )
        if r.degenerate:
            state.warnings.append(f"{name!r} is constant after {r.diff_order} difference(s)")
    if depth:
        state.warnings.append(f"aligned all series by dropping the first {depth} year(s)")
    state.panel = CountryPanel(
        panel.country_id, panel.indicators, panel.years[depth:], values,
        np.zeros_like(values, dtype=bool), panel.label[depth:],
    )
    return state


def prune_country(state: CountryState, cfg: RunConfig) -> CountryState:
    panel, dropped = prune_correlated(state.panel, cfg.prune_threshold, {LABEL})
    if dropped:
        state.warnings.append(f"pruned correlated indicators: {list(dropped)}")
    state.pruned = state.pruned + tuple(dropped)
    state.panel = panel
    return state


def analysis_frame(panel: CountryPanel, warnings: list) -> tuple:
    """Variables (non-constant indicators + label) and their (variables x years) data."""
    names, rows = [], []
    for i, name in enumerate(panel.indicators):
        if np.ptp(panel.values[i]) == 0:
            warnings.append(f"{name!r} is constant; excluded from causal analysis")
            continue
        names.append(name)
        rows.append(panel.values[i])
    label = panel.label.astype(float)
    if np.ptp(label) == 0:
        warnings.append("label is constant in this country; no label relationships can be tested")
    else:
        names.append(LABEL)
        rows.append(label)
    data = np.array(rows) if rows else np.empty((0, len(panel.years)))
    return tuple(names), data


def trim_leading_missing(panel: CountryPanel) -> CountryPanel:
    """Drop leading years with any missing cell (truncation left by stationarization)."""
    col_missing = panel.missing.any(axis=0)
    start = 0
    while start < col_missing.size and col_missing[start]:
        start += 1
    out = panel.slice_years(start)
    if out.missing.any():
        raise CountrySkipped("panel has interior missing cells; impute it first")
    return out


@dataclass
class CountryResult:
    country_id: str
    findings: agg.CountryFindings | None = None
    skipped_reason: str | None = None
    artifacts: dict = field(default_factory=dict)


def _meta_dict(m: SeriesMeta) -> dict:
    return dataclasses.asdict(m)


def granger_artifacts(cm, display=None, meta=None) -> dict:
    doc = graph_io.granger_document(cm, display)
    return {
        "granger_matrix.csv": graph_io.matrix_to_csv(cm, display),
        "granger_matrix.json": graph_io.export_json(cm, meta),
        "granger_graph.dot": graph_io.export_dot(doc),
        "granger_graph.json": graph_io.export_json(doc, meta),
    }


def icstar_artifacts(g, display=None, meta=None) -> dict:
    dep, gen = graph_io.marked_graph_documents(g, display)
    return {
        "ic_graph.json": graph_io.export_json(g, meta),
        "ic_dependence.dot": graph_io.export_dot(dep),
        "ic_dependence.json": graph_io.export_json(dep, meta),
        "ic_genuine.dot": graph_io.export_dot(gen),
        "ic_genuine.json": graph_io.export_json(gen, meta),
    }


def run_granger(variables, data, cfg: RunConfig):
    cm = causality_matrix(variables, data, cfg.granger_max_lag, cfg.alpha_granger, cfg.matrix_orientation)
    _, label_edges = extract_edges(cm)
    return cm, label_edges


def run_icstar(variables, data, cfg: RunConfig):
    g = icstar_from_data(variables, data, cfg.alpha_ci, cfg.max_cond)
    dep = set(neighbours_of(g, LABEL))
    gen = set(genuine_neighbours_of(g, LABEL))
    return g, dep, gen


def analyze_country(panel: CountryPanel, cfg: RunConfig) -> CountryResult:
    """Run every stage for one country; analytic failures become a skip record."""
    try:
        return _analyze(panel, cfg)
    except CausalPanelError as exc:
        return CountryResult(panel.country_id, skipped_reason=str(exc))


def _analyze(panel: CountryPanel, cfg: RunConfig) -> CountryResult:
    meta = cfg.metadata()
    state = prepare_country(panel, cfg)
    if cfg.prune_before_impute:
        prune_country(state, cfg)
    if cfg.transform_before_impute:
        transform_country(state, cfg)
    impute_country(state, cfg)
    if not cfg.transform_before_impute:
        transform_country(state, cfg)
    stationarize_country(state, cfg)
    if not cfg.prune_before_impute:
        prune_country(state, cfg)
    warnings = state.warnings
    variables, data = analysis_frame(state.panel, warnings)
    if len(variables) < 2:
        raise CountrySkipped("fewer than two non-constant variables remain")
    if data.shape[1] < 5 * cfg.granger_max_lag + 5:
        raise CountrySkipped(
            f"{data.shape[1]} aligned years; Granger tests need >= {5 * cfg.granger_max_lag + 5}"
        )
    cm, label_edges = run_granger(variables, data, cfg)
    warnings.extend(cm.warnings)
    g, dep, gen = run_icstar(variables, data, cfg)
    warnings.extend(g.warnings)
    findings = agg.CountryFindings(panel.country_id, tuple(label_edges), dep, gen, tuple(warnings))

    heat = pearson_matrix(state.panel.select([v for v in variables if v != LABEL]),
                          include_label=LABEL in variables)
    artifacts = {}
    artifacts.update(granger_artifacts(cm, meta=meta))
    artifacts.update(icstar_artifacts(g, meta=meta))
    artifacts["correlation_heatmap.json"] = graph_io.export_json(heat, meta)
    artifacts["series_meta.json"] = graph_io.canonical_json({
        "country": panel.country_id,
        "series": [_meta_dict(state.metas[n]) for n in sorted(state.metas)],
        "imputed_cells": state.imputed_cells,
        "drift": None if state.drift is None else dataclasses.asdict(state.drift),
        "pruned": list(state.pruned),
        "analysis_years": list(state.panel.years),
        "variables": list(variables),
        "warnings": list(warnings),
        "metadata": meta,
    })
    artifacts["findings.json"] = graph_io.canonical_json({**findings.to_dict(), "metadata": meta})
    return CountryResult(panel.country_id, findings, None, artifacts)


# ---------------------------------------------------------------------------
# batch


_SLUG_BAD = re.compile(r"[^A-Za-z0-9._-]+")


def country_slug(country_id: str) -> str:
    slug = _SLUG_BAD.sub("_", country_id).strip("._") or "country"
    if slug != country_id:
        slug += "-" + hashlib.sha256(country_id.encode("utf-8")).hexdigest()[:6]
    return slug


@dataclass
class RunReport:
    exit_code: int
    findings: list
    skipped: list
    aggregate: agg.Aggregate
    output_dir: Path
    warnings: list = field(default_factory=list)


def _analyze_star(args):
    return analyze_country(*args)


def analyze_all(data: PanelDataset, cfg: RunConfig) -> list:
    jobs = [(c, cfg) for c in data.countries]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_analyze_star, jobs))
    return [analyze_country(c, cfg) for c in data.countries]


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def skipped_csv(skipped: Sequence[agg.SkippedCountry]) -> str:
    import csv
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("country", "reason"))
    for s in skipped:
        w.writerow((s.country_id, s.reason))
    return buf.getvalue()


def write_aggregate(out: Path, result: agg.Aggregate, cfg: RunConfig, extra=None) -> None:
    meta = cfg.metadata()
    for method, table in result.rankings.items():
        write_text(out / f"ranking_{method}.csv", table.to_csv())
        write_text(out / f"ranking_{method}.json", graph_io.canonical_json({
            "method": method,
            "rows": [{"indicator": i, "frequency": f} for i, f in table.rows],
            "metadata": meta,
        }))
    write_text(out / "intersection.csv", result.intersection.to_csv())
    write_text(out / "intersection.json", graph_io.canonical_json({
        "strict_genuine": result.intersection.strict_genuine,
        "rows": [{"country": c, "indicator": i} for c, i in result.intersection.rows],
        "metadata": meta,
    }))
    g, d, n = result.counts
    write_text(out / "relationship_counts.json", graph_io.canonical_json({
        "granger": g, "ic_dependence": d, "ic_genuine": n, "metadata": meta,
    }))
    write_text(out / "skipped.csv", skipped_csv(result.skipped))
    if extra is not None:
        write_text(out / "report.json", graph_io.canonical_json({**extra, "metadata": meta}))


def run_dataset(data: PanelDataset, cfg: RunConfig, output_dir=None) -> RunReport:
    out = Path(output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_text(out / "config.txt", cfg.canonical())
    warnings = list(data.warnings)
    before = data.indicator_names
    data = drop_sparse(data, cfg.sparse_threshold)
    if data.indicator_names != before:
        warnings.append(f"dropped sparse indicators: {list(data.dropped)}")
    results = analyze_all(data, cfg)
    findings, skipped, countries = [], [], []
    for r in results:
        slug = country_slug(r.country_id)
        countries.append({"country": r.country_id, "dir": f"countries/{slug}",
                          "skipped": r.skipped_reason is not None})
        if r.skipped_reason is not None:
            skipped.append(agg.SkippedCountry(r.country_id, r.skipped_reason))
            continue
        findings.append(r.findings)
        for name, text in r.artifacts.items():
            write_text(out / "countries" / slug / name, text)
    result = agg.aggregate(findings, cfg.strict_genuine, skipped)
    exit_code = 2 if skipped else 0
    write_aggregate(out, result, cfg, {
        "countries": countries,
        "n_countries": len(results),
        "n_analyzed": len(findings),
        "n_skipped": len(skipped),
        "dropped_sparse_indicators": list(data.dropped),
        "warnings": warnings,
        "exit_code": exit_code,
        "caveats": ["the binary label enters the Granger regressions as a numeric 0/1 series"],
    })
    return RunReport(exit_code, findings, skipped, result, out, warnings)


def run_pipeline(cfg: RunConfig, values_path, label_path, layout: str = "long", output_dir=None) -> RunReport:
    data = ingest(values_path, layout, label_path)
    return run_dataset(data, cfg, output_dir)
