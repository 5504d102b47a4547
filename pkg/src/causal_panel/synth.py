"""Synthetic panels with known causal structure, used as test oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import StabilityError, UnknownNodeError
from .icstar import CiResult
from .panel import LABEL, CountryPanel, PanelDataset
from .seeding import derive_seed

BURN_IN = 100


@dataclass(frozen=True)
class GroundTruth:
    """Lagged linear structure over indicators plus the binary label.

    ``edges`` are ``(cause, effect)`` pairs; edges into ``LABEL`` act on a
    latent driver whose sign (relative to ``label_threshold``) becomes the
    label. ``self_coefficients`` holds optional lag-1 autoregressive terms.
    """

    indicators: tuple
    edges: tuple = ()
    lag_map: dict = field(default_factory=dict)
    coefficients: dict = field(default_factory=dict)
    noise_sd: float = 1.0
    self_coefficients: dict = field(default_factory=dict)
    label_threshold: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "indicators", tuple(self.indicators))
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        if LABEL in self.indicators:
            raise ValueError(f"{LABEL!r} is implicit and must not be listed as an indicator")
        if not self.noise_sd > 0:
            raise ValueError("noise_sd must be positive")
        known = set(self.nodes)
        for e in self.edges:
            src, dst = e
            if src not in known or dst not in known:
                raise UnknownNodeError(f"edge {e} references an unknown node")
            if src == dst:
                raise ValueError("self edges belong in self_coefficients")
            if src == LABEL:
                raise ValueError("the label cannot be a cause in the generator")
            if self.lag_map.get(e, 1) < 1:
                raise ValueError("lags must be >= 1")
        if _has_cycle(self.nodes, self.edges):
            raise ValueError("summary graph must be acyclic")

    @property
    def nodes(self) -> tuple:
        return self.indicators + (LABEL,)

    def lag(self, edge) -> int:
        return int(self.lag_map.get(tuple(edge), 1))

    def coefficient(self, edge) -> float:
        return float(self.coefficients.get(tuple(edge), 0.5))

    def parents(self, node) -> list:
        return [s for s, d in self.edges if d == node]

    def to_dict(self) -> dict:
        return {
            "indicators": list(self.indicators),
            "edges": [
                {"cause": s, "effect": d, "lag": self.lag((s, d)), "coefficient": self.coefficient((s, d))}
                for s, d in self.edges
            ],
            "noise_sd": self.noise_sd,
            "self_coefficients": {k: float(v) for k, v in sorted(self.self_coefficients.items())},
            "label_threshold": self.label_threshold,
        }

    @classmethod
    def from_dict(cls, d) -> "GroundTruth":
        edges = [(e["cause"], e["effect"]) for e in d["edges"]]
        return cls(
            tuple(d["indicators"]),
            tuple(edges),
            {(e["cause"], e["effect"]): e["lag"] for e in d["edges"]},
            {(e["cause"], e["effect"]): e["coefficient"] for e in d["edges"]},
            d.get("noise_sd", 1.0),
            dict(d.get("self_coefficients", {})),
            d.get("label_threshold", 0.0),
        )


def _has_cycle(nodes, edges):
    children = {n: [] for n in nodes}
    for s, d in edges:
        children[s].append(d)
    state = {}

    def visit(n):
        state[n] = 1
        for c in children[n]:
            if state.get(c) == 1 or (c not in state and visit(c)):
                return True
        state[n] = 2
        return False

    return any(n not in state and visit(n) for n in nodes)


def _coefficient_matrices(truth: GroundTruth):
    """VAR matrices A_1..A_L over state (indicators..., latent label driver)."""
    names = truth.nodes
    index = {n: i for i, n in enumerate(names)}
    max_lag = max([truth.lag(e) for e in truth.edges] + [1])
    k = len(names)
    mats = np.zeros((max_lag, k, k))
    for e in truth.edges:
        mats[truth.lag(e) - 1, index[e[1]], index[e[0]]] += truth.coefficient(e)
    for n, c in truth.self_coefficients.items():
        mats[0, index[n], index[n]] += c
    return mats


def spectral_radius(truth: GroundTruth) -> float:
    mats = _coefficient_matrices(truth)
    L, k, _ = mats.shape
    comp = np.zeros((k * L, k * L))
    comp[:k, :] = np.hstack(list(mats))
    if L > 1:
        comp[k:, :-k] = np.eye(k * (L - 1))
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


def gen_var_panel(truth: GroundTruth, n_years: int, seed: int, start_year: int = 2000,
                  country_id: str = "synthetic") -> tuple:
    """Simulate a stable linear VAR honouring ``truth``; returns ``(panel, truth)``."""
    if n_years < 30:
        raise ValueError("n_years must be >= 30")
    rho = spectral_radius(truth)
    if rho >= 1.0:
        raise StabilityError(f"coefficient spectrum has radius {rho:.4f} >= 1")
    mats = _coefficient_matrices(truth)
    L, k, _ = mats.shape
    rng = np.random.default_rng(seed)
    total = n_years + BURN_IN
    noise = rng.standard_normal((total + L, k)) * truth.noise_sd
    state = np.zeros((total + L, k))
    for t in range(L, total + L):
        s = noise[t].copy()
        for lag in range(1, L + 1):
            s += mats[lag - 1] @ state[t - lag]
        state[t] = s
    kept = state[-n_years:]
    values = kept[:, :-1].T
    label = (kept[:, -1] > truth.label_threshold).astype(np.int8)
    years = tuple(range(start_year, start_year + n_years))
    panel = CountryPanel.from_array(country_id, truth.indicators, years, values, label)
    return panel, truth


def gen_scm_samples(truth: GroundTruth, n: int, seed: int) -> tuple:
    """I.i.d. draws from the summary graph read as a contemporaneous linear SCM.

    Lags are ignored; the label is the thresholded latent driver. Returns
    ``(variable names, data)`` with ``data`` shaped (variables x n).
    """
    rng = np.random.default_rng(seed)
    names = truth.nodes
    order = _topological(names, truth.edges)
    vals = {}
    for node in order:
        v = rng.standard_normal(n) * truth.noise_sd
        for p in truth.parents(node):
            v = v + truth.coefficient((p, node)) * vals[p]
        vals[node] = v
    vals[LABEL] = (vals[LABEL] > truth.label_threshold).astype(float)
    return names, np.array([vals[v] for v in names])


def _topological(nodes, edges):
    indeg = {n: 0 for n in nodes}
    for _, d in edges:
        indeg[d] += 1
    ready = [n for n in nodes if indeg[n] == 0]
    out = []
    while ready:
        n = ready.pop(0)
        out.append(n)
        for s, d in edges:
            if s == n:
                indeg[d] -= 1
                if indeg[d] == 0:
                    ready.append(d)
    return out


def mask_missing(panel: CountryPanel, fraction: float, seed: int, mechanism: str = "mcar") -> CountryPanel:
    """Mask ``round(fraction * cells)`` uniformly chosen cells (the label is never masked)."""
    if mechanism != "mcar":
        raise ValueError("only MCAR masking is supported")
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must lie in [0, 1)")
    total = panel.values.size
    k = int(math.floor(fraction * total + 0.5))
    if k == 0:
        return panel
    rng = np.random.default_rng(seed)
    flat = rng.choice(total, size=k, replace=False)
    mask = panel.missing.copy().ravel()
    mask[flat] = True
    return panel.replace(missing=mask.reshape(panel.missing.shape))


# ---------------------------------------------------------------------------
# d-separation on the summary graph


def _ancestors(truth: GroundTruth, nodes) -> set:
    out = set(nodes)
    stack = list(nodes)
    while stack:
        n = stack.pop()
        for p in truth.parents(n):
            if p not in out:
                out.add(p)
                stack.append(p)
    return out


def dsep_oracle(truth: GroundTruth, a: str, b: str, cond: Sequence[str] = ()) -> bool:
    """True iff ``a`` and ``b`` are d-separated by ``cond`` in the summary DAG.

    Uses the moralised ancestral graph criterion.
    """
    known = set(truth.nodes)
    for n in (a, b, *cond):
        if n not in known:
            raise UnknownNodeError(f"unknown node {n!r}")
    cond = set(cond)
    if a == b or a in cond or b in cond:
        raise ValueError("a, b must be distinct and outside the conditioning set")
    anc = _ancestors(truth, {a, b} | cond)
    adj = {n: set() for n in anc}
    for s, d in truth.edges:
        if s in anc and d in anc:
            adj[s].add(d)
            adj[d].add(s)
    for n in anc:
        ps = [p for p in truth.parents(n) if p in anc]
        for i, p in enumerate(ps):
            for q in ps[i + 1:]:
                adj[p].add(q)
                adj[q].add(p)
    seen = {a}
    stack = [a]
    while stack:
        n = stack.pop()
        for m in adj[n]:
            if m in cond or m in seen:
                continue
            if m == b:
                return False
            seen.add(m)
            stack.append(m)
    return True


class DsepCITest:
    """Perfect CI oracle for :func:`causal_panel.icstar.skeleton`."""

    def __init__(self, truth: GroundTruth):
        self.truth = truth

    def __call__(self, a, b, cond) -> CiResult:
        indep = dsep_oracle(self.truth, a, b, cond)
        return CiResult(indep, 1.0 if indep else 0.0, frozenset(cond))


def true_skeleton(truth: GroundTruth) -> set:
    return {frozenset(e) for e in truth.edges}


# ---------------------------------------------------------------------------
# batches


DEFAULT_INDICATORS = ("A", "B", "C", "D", "E")


def random_truth(rng: np.random.Generator, indicators: Sequence[str] = DEFAULT_INDICATORS,
                 planted: str | None = "A", edge_prob: float = 0.3,
                 label_coefficient: float = 1.5) -> GroundTruth:
    """Random stable lag-1 structure; ``planted`` (if given) drives the label."""
    indicators = tuple(indicators)
    edges, lags, coefs = [], {}, {}
    for i, src in enumerate(indicators):
        for dst in indicators[i + 1:]:
            if planted in (src, dst):
                continue
            if rng.random() < edge_prob:
                e = (src, dst)
                edges.append(e)
                lags[e] = 1
                coefs[e] = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.3, 0.5))
    if planted is not None:
        e = (planted, LABEL)
        edges.append(e)
        lags[e] = 1
        coefs[e] = label_coefficient
    ar = {n: float(rng.uniform(0.2, 0.4)) for n in indicators}
    if planted is not None:
        ar[planted] = 0.7
    return GroundTruth(indicators, tuple(edges), lags, coefs, 1.0, ar)


def synth_batch(n_countries: int, seed: int, n_years: int = 40,
                indicators: Sequence[str] = DEFAULT_INDICATORS, planted: str = "A",
                n_planted: int | None = None, missing_fraction: float = 0.0,
                start_year: int = 2000) -> tuple:
    """A multi-country dataset; the first ``n_planted`` countries have ``planted`` -> label.

    Returns ``(PanelDataset, {country_id: GroundTruth})``.
    """
    if n_planted is None:
        n_planted = n_countries
    panels, truths = [], {}
    width = max(2, len(str(n_countries)))
    for c in range(n_countries):
        cid = f"country_{c:0{width}d}"
        rng = np.random.default_rng(derive_seed(seed, cid))
        truth = random_truth(rng, indicators, planted if c < n_planted else None)
        sim_seed = derive_seed(seed, cid + "/sim")
        panel, _ = gen_var_panel(truth, n_years, sim_seed, start_year, cid)
        if missing_fraction > 0:
            panel = mask_missing(panel, missing_fraction, derive_seed(seed, cid + "/mask"))
        panels.append(panel)
        truths[cid] = truth
    data = PanelDataset(tuple(panels), tuple(indicators), (start_year, start_year + n_years - 1))
    return data, truths
