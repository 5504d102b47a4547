"""Per-country imputation (random donor, KNN over years, stochastic regression).

All three methods leave observed cells untouched and are deterministic for a
fixed seed. Imputation works on one country at a time; callers wanting one
RNG stream per country should derive seeds with
:func:`causal_panel.seeding.derive_seed`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateIndicatorError
from .panel import CountryPanel


METHODS = ("random", "knn", "msreg")


@dataclass(frozen=True, eq=False)
class ImputedPanel:
    panel: CountryPanel
    method: str
    imputed_mask: np.ndarray
    seed: int
    warnings: tuple = ()
    # number of regressions fitted / noise-scale clamps (msreg only)
    n_regressions: int = 0
    n_clamped: int = 0
    noise_scales: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DriftReport:
    variance_delta: dict
    covariance_frobenius_delta: float
    correlation_max_abs_delta: float


def _finish(source: CountryPanel, values, method, seed, warnings=(), **extra) -> ImputedPanel:
    filled = source.replace(values=values, missing=np.zeros_like(source.missing))
    mask = source.missing.copy()
    mask.setflags(write=False)
    return ImputedPanel(filled, method, mask, int(seed), tuple(warnings), **extra)


def _require_observed(panel: CountryPanel, minimum: int = 1):
    counts = (~panel.missing).sum(axis=1)
    for name, n in zip(panel.indicators, counts):
        if n < minimum:
            if minimum == 1:
                raise DegenerateIndicatorError(name)
            raise DegenerateIndicatorError(
                name, f"indicator {name!r} has {n} observed values; at least {minimum} required"
            )


def impute_random(panel: CountryPanel, seed: int) -> ImputedPanel:
    """Fill each missing cell with a uniform draw from the same indicator's observed values."""
    _require_observed(panel)
    rng = np.random.default_rng(seed)
    values = np.array(panel.values)
    for i in range(len(panel.indicators)):
        miss = panel.missing[i]
        if not miss.any():
            continue
        donors = panel.values[i, ~miss]
        values[i, miss] = donors[rng.integers(0, donors.size, size=int(miss.sum()))]
    return _finish(panel, values, "random", seed)


def _year_distances(panel: CountryPanel, target: int):
    """Scaled Euclidean distance from year ``target`` to every year column."""
    obs = ~panel.missing
    dim = len(panel.indicators)
    both = obs & obs[:, [target]]
    overlap = both.sum(axis=0)
    diff = np.where(both, panel.values - panel.values[:, [target]], 0.0)
    sq = (diff ** 2).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = np.sqrt(sq * dim / overlap)
    dist[overlap == 0] = np.inf
    return dist


def impute_knn(panel: CountryPanel, k: int = 5, seed: int = 0) -> ImputedPanel:
    """Impute a year from the ``k`` most similar years observing the missing indicator.

    Distances are Euclidean over coordinates observed in both years, scaled
    by ``sqrt(dim / overlap)``; ties are broken by year order. Donors sharing
    no observed coordinate with the target are unusable; if that leaves no
    donor, the indicator's observed mean is used and a warning recorded.
    ``seed`` is kept for interface symmetry (the method draws no randomness).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    _require_observed(panel)
    values = np.array(panel.values)
    warnings = []
    n_years = len(panel.years)
    for t in range(n_years):
        miss_here = np.flatnonzero(panel.missing[:, t])
        if miss_here.size == 0:
            continue
        dist = _year_distances(panel, t)
        for i in miss_here:
            cand = [s for s in range(n_years)
                    if s != t and not panel.missing[i, s] and np.isfinite(dist[s])]
            if not cand:
                values[i, t] = panel.values[i, ~panel.missing[i]].mean()
                warnings.append(
                    f"{panel.country_id}: no comparable donor year for "
                    f"{panel.indicators[i]!r} in {panel.years[t]}; used indicator mean"
                )
                continue
            cand.sort(key=lambda s: (dist[s], s))
            chosen = cand[:k]
            values[i, t] = panel.values[i, chosen].mean()
    return _finish(panel, values, "knn", seed, warnings)


def _solve(X, y, warnings, name):
    """Least squares via normal equations with a ridge fallback for singular systems."""
    xtx = X.T @ X
    xty = X.T @ y
    if X.shape[0] >= X.shape[1] and np.linalg.cond(xtx) < 1e12:
        return np.linalg.solve(xtx, xty), False
    lam = 1e-8 * np.trace(xtx)
    warnings.append(f"singular regression for {name!r}; ridge-regularised solve (lambda={lam:.3g})")
    if lam == 0.0:
        return np.zeros(X.shape[1]), True
    return np.linalg.solve(xtx + lam * np.eye(X.shape[1]), xty), True


def impute_msreg(panel: CountryPanel, seed: int) -> ImputedPanel:
    """Stochastic multiple-regression imputation.

    For each indicator ``x_i`` with gaps, ``x_i`` is regressed on all other
    indicators over complete-case years, with every variable standardised by
    its complete-case mean and standard deviation. A missing cell ``r`` gets

        z_ir = sum_j beta_ij * z_jr + sqrt(1 - sum_j beta_ij * corr_ij) * N(0, 1)

    and is mapped back to original units. Predictor values that are
    themselves missing enter at their standardised mean (zero). If fewer than
    three complete-case years exist, all years observing ``x_i`` are used with
    mean-filled predictors. One independent normal draw is made per missing
    cell, in indicator-then-year order.
    """
    n_ind = len(panel.indicators)
    if n_ind < 2:
        raise ValueError("stochastic regression imputation needs at least two indicators")
    _require_observed(panel, 3)
    rng = np.random.default_rng(seed)
    obs = ~panel.missing
    values = np.array(panel.values)
    warnings = []
    scales = {}
    n_fit = n_clamped = 0
    for i in range(n_ind):
        miss = panel.missing[i]
        if not miss.any():
            continue
        name = panel.indicators[i]
        others = [j for j in range(n_ind) if j != i]
        rows = obs[i] & obs[others].all(axis=0)
        if rows.sum() < 3:
            rows = obs[i].copy()
            warnings.append(
                f"{panel.country_id}: fewer than 3 complete-case years for {name!r}; "
                "fitted on mean-filled predictors"
            )
        # standardisation moments from the fitting rows (observed cells only)
        mu = np.empty(n_ind)
        sd = np.empty(n_ind)
        for j in range(n_ind):
            sel = rows & obs[j]
            if not sel.any():
                sel = obs[j]
            vals = panel.values[j, sel]
            mu[j] = vals.mean()
            sd[j] = vals.std()
        if sd[i] == 0.0:
            values[i, miss] = mu[i]
            scales[name] = 0.0
            continue
        with np.errstate(invalid="ignore", divide="ignore"):
            z = (panel.values - mu[:, None]) / np.where(sd > 0, sd, 1.0)[:, None]
        z = np.where(obs, z, 0.0)
        usable = [j for j in others if sd[j] > 0]
        zi = z[i, rows]
        if usable:
            X = z[np.ix_(usable, rows)].T
            beta, _ = _solve(X, zi, warnings, name)
            corr = np.array([_corr(zi, X[:, c]) for c in range(X.shape[1])])
            explained = float(beta @ corr)
            pred = beta @ z[np.ix_(usable, np.flatnonzero(miss))]
        else:
            explained = 0.0
            pred = np.zeros(int(miss.sum()))
        n_fit += 1
        scale2 = 1.0 - explained
        if -1e-12 < scale2 < 0.0:
            scale2 = 0.0
        if scale2 < 0.0 or scale2 > 1.0:
            n_clamped += 1
            if scale2 < 0.0:
                warnings.append(
                    f"{panel.country_id}: negative noise variance for {name!r} "
                    f"({scale2:.3g}); clamped to 0"
                )
            scale2 = min(max(scale2, 0.0), 1.0)
        scale = float(np.sqrt(scale2))
        scales[name] = scale
        noise = rng.standard_normal(pred.size)
        values[i, miss] = mu[i] + sd[i] * (pred + scale * noise)
    return _finish(panel, values, "msreg", seed, warnings,
                   n_regressions=n_fit, n_clamped=n_clamped, noise_scales=scales)


def _corr(a, b):
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt((a @ a) * (b @ b))
    return float(a @ b / den) if den > 0 else 0.0


def impute(panel: CountryPanel, method: str = "msreg", seed: int = 0, k: int = 5) -> ImputedPanel:
    if method == "random":
        return impute_random(panel, seed)
    if method == "knn":
        return impute_knn(panel, k=k, seed=seed)
    if method == "msreg":
        return impute_msreg(panel, seed)
    raise ValueError(f"unknown imputation method {method!r}; choose from {METHODS}")


def _cov_corr(values):
    """Covariance and correlation of a (variables x samples) matrix; NaN where undefined."""
    if values.shape[1] < 2:
        n = values.shape[0]
        return np.zeros((n, n)), np.full((n, n), np.nan)
    cov = np.atleast_2d(np.cov(values, ddof=1))
    sd = np.sqrt(np.diag(cov))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = cov / np.outer(sd, sd)
    corr[~np.isfinite(corr)] = np.nan
    return cov, corr


def drift(before: CountryPanel, after: ImputedPanel) -> DriftReport:
    """Distributional change introduced by imputation.

    Variance deltas compare all cells after imputation with the observed cells
    before. Covariance and correlation of the source are taken over
    complete-case years; undefined correlations (constant variables) are skipped.
    """
    filled = after.panel
    if filled.shape != before.shape:
        raise ValueError("panels differ in shape")
    obs = ~before.missing
    var_delta = {}
    for i, name in enumerate(before.indicators):
        seen = before.values[i, obs[i]]
        v_before = float(seen.var()) if seen.size else 0.0
        var_delta[name] = float(filled.values[i].var()) - v_before
    rows = obs.all(axis=0)
    cov_b, corr_b = _cov_corr(before.values[:, rows])
    cov_a, corr_a = _cov_corr(filled.values)
    if not after.imputed_mask.any():
        cov_a, corr_a = cov_b, corr_b
    frob = float(np.linalg.norm(cov_a - cov_b)) if cov_a.size else 0.0
    delta = np.abs(corr_a - corr_b)
    delta = delta[np.isfinite(delta)]
    corr_max = float(delta.max()) if delta.size else 0.0
    return DriftReport(var_delta, frob, min(corr_max, 2.0))
