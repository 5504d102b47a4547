"""Command-line entry point.

Stage commands read and write artifact directories::

    <dir>/artifact.json    {"kind": ..., "stage": ...}
    <dir>/panels/*.csv     one wide CSV per country (panel artifacts)
    <dir>/labels.csv
    <dir>/series_meta.json per-country transform/differencing log (when present)

``run`` chains every stage in memory and writes the final results only.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import aggregate as agg
from . import graph_io
from . import pipeline as pl
from .errors import CausalPanelError, StageMismatchError
from .panel import LABEL, CountryPanel, PanelDataset, drop_sparse, ingest, write_wide
from .stattests import SeriesMeta
from .synth import synth_batch

log = logging.getLogger("causal_panel")

MANIFEST = "artifact.json"
PANEL_STAGES = ("ingested", "imputed", "transformed", "stationarized")


# ---------------------------------------------------------------------------
# artifacts


def write_manifest(directory: Path, kind: str, stage: str, cfg: pl.RunConfig | None = None, **extra):
    body = {"kind": kind, "stage": stage, **extra}
    if cfg is not None:
        body["metadata"] = cfg.metadata()
    pl.write_text(directory / MANIFEST, graph_io.canonical_json(body))


def read_manifest(directory: Path, expected_kind: str) -> dict:
    path = Path(directory) / MANIFEST
    if not path.is_file():
        raise StageMismatchError(expected_kind, "no artifact manifest", directory)
    body = json.loads(path.read_text(encoding="utf-8"))
    if body.get("kind") != expected_kind:
        raise StageMismatchError(expected_kind, body.get("kind"), directory)
    return body


def write_panel_artifact(directory: Path, data: PanelDataset, stage: str, cfg, metas=None, warnings=()):
    directory.mkdir(parents=True, exist_ok=True)
    panels = directory / "panels"
    if panels.exists():
        for old in panels.glob("*.csv"):
            old.unlink()
    write_wide(data, panels, directory / "labels.csv")
    if metas is not None:
        pl.write_text(directory / "series_meta.json", graph_io.canonical_json(
            {cid: [dataclasses.asdict(m) for m in ms] for cid, ms in sorted(metas.items())}
        ))
    write_manifest(directory, "panel", stage, cfg, warnings=list(warnings))


def read_panel_artifact(directory: Path):
    manifest = read_manifest(directory, "panel")
    data = ingest(Path(directory) / "panels", "wide", Path(directory) / "labels.csv")
    metas = {}
    meta_path = Path(directory) / "series_meta.json"
    if meta_path.is_file():
        raw = json.loads(meta_path.read_text(encoding="utf-8"))
        metas = {cid: [SeriesMeta(**m) for m in ms] for cid, ms in raw.items()}
    return manifest, data, metas


def usable(panel: CountryPanel) -> CountryPanel:
    """Indicators with at least one observed cell (others were dropped upstream)."""
    keep = [n for i, n in enumerate(panel.indicators) if not panel.missing[i].all()]
    return panel.select(keep)


def embed(sub: CountryPanel, like: CountryPanel) -> CountryPanel:
    """Place ``sub`` back into the layout of ``like``; absent cells become missing."""
    values = np.full(like.values.shape, np.nan)
    missing = np.ones(like.missing.shape, dtype=bool)
    label = np.array(like.label)
    offset = like.years.index(sub.years[0]) if sub.years else 0
    cols = slice(offset, offset + len(sub.years))
    for i, name in enumerate(sub.indicators):
        j = like.index(name)
        values[j, cols] = sub.values[i]
        missing[j, cols] = sub.missing[i]
    label[cols] = sub.label
    return CountryPanel(like.country_id, like.indicators, like.years, values, missing, label)


def _state_from(panel: CountryPanel, metas) -> pl.CountryState:
    state = pl.CountryState(usable(panel))
    for m in metas or ():
        state.metas[m.indicator] = m
    return state


def panel_stage(args, cfg, stage_fn, stage_name, accept=PANEL_STAGES, prepared=None):
    manifest, data, metas = read_panel_artifact(args.input)
    if manifest.get("stage") not in accept:
        raise StageMismatchError(f"panel at stage {'/'.join(accept)}", manifest.get("stage"), args.input)
    if prepared is not None:
        data = prepared(data)
    warnings, new_metas, out_panels = list(data.warnings), {}, []
    failed = 0
    for country in data.countries:
        state = _state_from(country, metas.get(country.country_id))
        try:
            stage_fn(state, cfg)
        except CausalPanelError as exc:
            failed += 1
            warnings.append(f"{country.country_id}: skipped: {exc}")
            out_panels.append(country)
            new_metas[country.country_id] = list(metas.get(country.country_id, ()))
            continue
        warnings.extend(f"{country.country_id}: {w}" for w in state.warnings)
        out_panels.append(embed(state.panel, country))
        new_metas[country.country_id] = [state.metas[n] for n in sorted(state.metas)]
    out = PanelDataset(tuple(out_panels), data.indicator_names, data.year_range, data.dropped)
    write_panel_artifact(Path(args.out), out, stage_name, cfg, new_metas, warnings)
    for w in warnings:
        log.warning(w)
    return 2 if failed else 0


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(args, cfg):
    data = ingest(args.values, args.layout, args.labels)
    for w in data.warnings:
        log.warning(w)
    write_panel_artifact(Path(args.out), data, "ingested", cfg, warnings=data.warnings)
    return 0


def cmd_impute(args, cfg):
    def sparse(data):
        data = drop_sparse(data, cfg.sparse_threshold)
        if data.dropped:
            return dataclasses.replace(
                data, warnings=data.warnings + (f"dropped sparse indicators: {list(data.dropped)}",))
        return data

    def stage(state, cfg):
        fresh = pl.prepare_country(state.panel, cfg)
        pl.impute_country(fresh, cfg)
        state.panel = fresh.panel
        state.warnings.extend(fresh.warnings)

    return panel_stage(args, cfg, stage, "imputed", accept=("ingested",), prepared=sparse)


def cmd_transform(args, cfg):
    return panel_stage(args, cfg, pl.transform_country, "transformed")


def cmd_stationarize(args, cfg):
    def stage(state, cfg):
        pl.stationarize_country(state, cfg)
        pl.prune_country(state, cfg)

    return panel_stage(args, cfg, stage, "stationarized")


def _analysis_countries(args, cfg):
    manifest, data, _ = read_panel_artifact(args.input)
    if manifest.get("stage") != "stationarized":
        log.warning(
            "input panel is at stage %r, not 'stationarized'; proceeding and trimming leading missing years",
            manifest.get("stage"),
        )
    out = []
    for country in data.countries:
        warnings = []
        try:
            panel = pl.trim_leading_missing(usable(country))
            variables, frame = pl.analysis_frame(panel, warnings)
            if len(variables) < 2:
                raise pl.CountrySkipped("fewer than two non-constant variables")
        except CausalPanelError as exc:
            out.append((country.country_id, None, None, [str(exc)]))
            continue
        out.append((country.country_id, variables, frame, warnings))
    return out


def _write_country_findings(out: Path, slug: str, findings: agg.CountryFindings, cfg):
    pl.write_text(out / "countries" / slug / "findings.json",
                  graph_io.canonical_json({**findings.to_dict(), "metadata": cfg.metadata()}))


def _analysis_command(args, cfg, kind, work):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    skipped = []
    for cid, variables, frame, warnings in _analysis_countries(args, cfg):
        if variables is None:
            skipped.append(agg.SkippedCountry(cid, warnings[0]))
            log.warning("%s: skipped: %s", cid, warnings[0])
            continue
        try:
            artifacts, findings = work(cid, variables, frame, warnings)
        except CausalPanelError as exc:
            skipped.append(agg.SkippedCountry(cid, str(exc)))
            continue
        slug = pl.country_slug(cid)
        for name, text in artifacts.items():
            pl.write_text(out / "countries" / slug / name, text)
        _write_country_findings(out, slug, findings, cfg)
    pl.write_text(out / "skipped.csv", pl.skipped_csv(skipped))
    write_manifest(out, kind, kind, cfg)
    return 2 if skipped else 0


def cmd_granger(args, cfg):
    def work(cid, variables, frame, warnings):
        if frame.shape[1] < 5 * cfg.granger_max_lag + 5:
            raise pl.CountrySkipped(f"{frame.shape[1]} years is too short for max_lag={cfg.granger_max_lag}")
        cm, label_edges = pl.run_granger(variables, frame, cfg)
        findings = agg.CountryFindings(cid, tuple(label_edges), warnings=tuple(warnings) + cm.warnings)
        return pl.granger_artifacts(cm, meta=cfg.metadata()), findings

    return _analysis_command(args, cfg, "granger", work)


def cmd_icstar(args, cfg):
    def work(cid, variables, frame, warnings):
        g, dep, gen = pl.run_icstar(variables, frame, cfg)
        findings = agg.CountryFindings(cid, (), dep, gen, tuple(warnings) + tuple(g.warnings))
        return pl.icstar_artifacts(g, meta=cfg.metadata()), findings

    return _analysis_command(args, cfg, "icstar", work)


def collect_findings(directories) -> list:
    """Merge every findings.json under ``directories``; partial records for one country are unioned."""
    merged = {}
    for d in directories:
        if not Path(d).is_dir():
            raise FileNotFoundError(f"findings directory not found: {d}")
        for path in sorted(Path(d).rglob("findings.json")):
            f = agg.CountryFindings.from_dict(json.loads(path.read_text(encoding="utf-8")))
            prev = merged.get(f.country_id)
            if prev is None:
                merged[f.country_id] = f
                continue
            edges = tuple(dict.fromkeys(prev.granger_label_edges + f.granger_label_edges))
            merged[f.country_id] = agg.CountryFindings(
                f.country_id, edges,
                prev.ic_dependence_label | f.ic_dependence_label,
                prev.ic_genuine_label | f.ic_genuine_label,
                tuple(dict.fromkeys(prev.warnings + f.warnings)),
            )
    return [merged[k] for k in sorted(merged)]


def cmd_aggregate(args, cfg):
    findings = collect_findings(args.inputs)
    result = agg.aggregate(findings, cfg.strict_genuine)
    out = Path(args.out)
    pl.write_aggregate(out, result, cfg)
    write_manifest(out, "aggregate", "aggregate", cfg, n_countries=len(findings))
    return 0


def cmd_synth(args, cfg):
    data, truths = synth_batch(args.countries, cfg.seed, args.years, n_planted=args.planted_in,
                               missing_fraction=args.missing)
    out = Path(args.out)
    write_panel_artifact(out, data, "ingested", cfg)
    pl.write_text(out / "ground_truth.json", graph_io.canonical_json(
        {cid: t.to_dict() for cid, t in sorted(truths.items())}
    ))
    return 0


def cmd_run(args, cfg):
    src = Path(args.values)
    if src.is_dir() and (src / MANIFEST).is_file():
        _, data, _ = read_panel_artifact(src)
    else:
        data = ingest(src, args.layout, args.labels)
    report = pl.run_dataset(data, cfg, args.out)
    for s in report.skipped:
        log.warning("%s: skipped: %s", s.country_id, s.reason)
    return report.exit_code


# ---------------------------------------------------------------------------
# argument parsing

_FLAG_FIELDS = {
    "imputation_method": ("--imputation", dict(choices=("random", "knn", "msreg"))),
    "knn_k": ("--knn-k", dict(type=int)),
    "sparse_threshold": ("--sparse-threshold", dict(type=float)),
    "adf_kind": ("--adf-kind", dict(choices=("none", "constant", "constant_trend"))),
    "adf_max_lag": ("--adf-max-lag", dict(type=int)),
    "granger_max_lag": ("--granger-max-lag", dict(type=int)),
    "alpha_granger": ("--alpha-granger", dict(type=float)),
    "alpha_ci": ("--alpha-ci", dict(type=float)),
    "max_cond": ("--max-cond", dict(type=int)),
    "prune_threshold": ("--prune-threshold", dict(type=float)),
    "matrix_orientation": ("--orientation", dict(choices=("row_effect", "row_cause"))),
    "seed": ("--seed", dict(type=int)),
    "workers": ("--workers", dict(type=int)),
}
_BOOL_FLAGS = {
    "strict_genuine": "--strict-genuine",
    "transform_enabled": "--no-transform",
    "transform_before_impute": "--transform-before-impute",
    "prune_before_impute": "--prune-before-impute",
}


def _add_config_flags(p):
    p.add_argument("-q", "--quiet", action="store_true", help="suppress warnings")
    g = p.add_argument_group("analysis settings")
    for dest, (flag, kw) in _FLAG_FIELDS.items():
        g.add_argument(flag, dest=dest, default=None, **kw)
    for dest, flag in _BOOL_FLAGS.items():
        value = dest != "transform_enabled"
        g.add_argument(flag, dest=dest, action="store_const", const=value, default=None)
    g.add_argument("--config", type=Path, default=None, help="key = value file; overrides flags")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causal-panel", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        _add_config_flags(p)
        p.set_defaults(func=fn)
        return p

    p = add("ingest", cmd_ingest, "read CSV input into a panel artifact")
    p.add_argument("values")
    p.add_argument("--labels", required=True)
    p.add_argument("--layout", choices=("long", "wide"), default="long")
    p.add_argument("--out", required=True)

    for name, fn, help_ in (
        ("impute", cmd_impute, "fill missing cells"),
        ("transform", cmd_transform, "apply normalising transforms"),
        ("stationarize", cmd_stationarize, "difference to stationarity and prune correlated indicators"),
        ("granger", cmd_granger, "pairwise Granger causality matrices"),
        ("icstar", cmd_icstar, "IC* marked graphs"),
    ):
        p = add(name, fn, help_)
        p.add_argument("input", type=Path)
        p.add_argument("--out", required=True)

    p = add("aggregate", cmd_aggregate, "rank indicators across countries")
    p.add_argument("inputs", nargs="+", type=Path)
    p.add_argument("--out", required=True)

    p = add("synth", cmd_synth, "generate a synthetic panel artifact with known structure")
    p.add_argument("--countries", type=int, required=True)
    p.add_argument("--years", type=int, default=40)
    p.add_argument("--planted-in", type=int, default=None,
                   help="countries where indicator A drives the label (default: all)")
    p.add_argument("--missing", type=float, default=0.0, help="MCAR fraction of masked cells")
    p.add_argument("--out", required=True)

    p = add("run", cmd_run, "full pipeline")
    p.add_argument("values", help="long CSV, wide directory, or panel artifact directory")
    p.add_argument("--labels")
    p.add_argument("--layout", choices=("long", "wide"), default="long")
    p.add_argument("--out", required=True)
    return parser


def config_from_args(args) -> pl.RunConfig:
    overrides = {k: getattr(args, k, None) for k in list(_FLAG_FIELDS) + list(_BOOL_FLAGS)}
    if getattr(args, "out", None):
        overrides["output_dir"] = str(args.out)
    return pl.load_config(args.config, overrides)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "run" and not Path(args.values).is_dir() and args.labels is None:
            parser.error("run: --labels is required unless the input is a panel artifact")
        return args.func(args, cfg)
    except (CausalPanelError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
