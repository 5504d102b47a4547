"""Inputs whose exports must match the matrix, ranking and intersection goldens."""
from pathlib import Path

from causal_panel.aggregate import CountryFindings, intersect, rank
from causal_panel.granger import GrangerEdge
from causal_panel.panel import LABEL

GOLDEN = Path(__file__).parent / "golden"

# Sample causality matrix with integer-formatted cells, as it would be typed by hand.
SAMPLE_MATRIX = (
    'Feature,Electricity Access,National Income,Central Govt. Debt,Ext. Health Expenditure,GDP,'
    'Inflation,International Tourism (Dept.),"Mortality (Diabetes, etc)",Label (Disease Outbreaks)\n'
    "Electricity Access,1,0.9823,1,1,1,0,0.7308,1,1\n"
    "National Income,1,1,1,1,1,1,1,1,1\n"
    "Central Govt. Debt,1,1,1,1,1,1,1,0.0184,1\n"
    "Ext. Health Expenditure,0.9948,1,0.9935,1,0.9935,0.9999,0.993,0.0186,1\n"
    "GDP,1,1,1,1,1,1,1,1,1\n"
    "Inflation,0,1,1,0.9905,1,1,0.892,1,1\n"
    "International Tourism (Dept.),0.0777,1,1,0.984,1,0.4913,1,0.0002,1\n"
    '"Mortality (Diabetes, etc)",1,1,0.9981,0.7306,1,1,0,1,1\n'
    "Label (Disease Outbreaks),1,1,0,1,1,0.9995,1,0,1\n"
)

GRANGER_FREQ = {
    "Individuals using the Internet (% of population)": 30,
    "GDP, PPP (constant 2017 international $)": 28,
    "GDP per person employed (constant 2017 PPP $)": 24,
    "Inflation, consumer prices (annual %)": 24,
    "GDP (constant 2010 US$)": 24,
}
DEPENDENCE_FREQ = {
    "Mortality rate attributed to unsafe water": 14,
    "Central government debt, total (% of GDP)": 13,
    "People using safely managed drinking water": 11,
    "Trade (% of GDP)": 11,
    "Individuals using the Internet (% of population)": 9,
}
GENUINE_FREQ = {
    "Out-of-pocket expenditure (% of current health expenditure)": 3,
    "Suicide mortality rate (per 100,000 population)": 3,
    "Domestic general government health expenditure": 3,
    "People using at least basic sanitation service": 1,
}
COMMON = (
    ("Iran, Islamic Rep.", "Hospital beds (per 1,000 people)"),
    ("Iran, Islamic Rep.", "People using at least basic drinking water services (% of population)"),
    ("Liberia", "Incidence of malaria (per 1,000 population at risk)"),
    ("Panama", "Trade (% of GDP)"),
    ("South Sudan", "GDP per capita (constant 2010 US$)"),
    ("St. Martin (French part)", "Central government debt, total (% of GDP)"),
)


def _edges(names):
    return tuple(GrangerEdge(n, LABEL, 0.01, 1) for n in sorted(names))


def findings_with(freq, method, n_countries=30):
    """Country ``i`` carries every indicator whose frequency exceeds ``i``."""
    out = []
    for i in range(n_countries):
        names = {n for n, f in freq.items() if i < f}
        if method == "granger":
            out.append(CountryFindings(f"c{i:02d}", _edges(names), frozenset(), frozenset()))
        else:
            gen = names if method == "ic_genuine" else set()
            out.append(CountryFindings(f"c{i:02d}", (), frozenset(names), frozenset(gen)))
    return out


def ranking_csvs() -> dict:
    return {
        method: rank(findings_with(freq, method), method).to_csv()
        for method, freq in (("granger", GRANGER_FREQ), ("ic_dependence", DEPENDENCE_FREQ),
                             ("ic_genuine", GENUINE_FREQ))
    }


def intersection_csv() -> str:
    by_country = {}
    for country, ind in COMMON:
        by_country.setdefault(country, set()).add(ind)
    findings = []
    for country, inds in by_country.items():
        # one decoy on each side that must not survive the intersection
        findings.append(CountryFindings(
            country, _edges(inds | {"Granger only"}), frozenset(inds | {"IC only"}), frozenset()))
    findings.append(CountryFindings("Bulgaria", _edges({"GDP"}), frozenset({"Inflation"}), frozenset()))
    return intersect(findings).to_csv()


def golden(name: str) -> str:
    return (GOLDEN / name).read_text(encoding="utf-8")
