import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from causal_panel.panel import CountryPanel, PanelDataset

# property tests default to 1000 generated cases
settings.register_profile(
    "default", max_examples=1000, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.register_profile("quick", max_examples=50, deadline=None)
settings.load_profile("default")


def make_panel(values, label=None, country="c", indicators=None, start=2000):
    values = np.asarray(values, dtype=float)
    n_ind, n_years = values.shape
    indicators = indicators or tuple(chr(ord("A") + i) for i in range(n_ind))
    years = tuple(range(start, start + n_years))
    if label is None:
        label = np.zeros(n_years, dtype=np.int8)
    return CountryPanel.from_array(country, tuple(indicators), years, values, np.asarray(label))


@pytest.fixture
def panel_factory():
    return make_panel


@pytest.fixture
def toy_dataset():
    rng = np.random.default_rng(3)
    panels = [
        make_panel(rng.standard_normal((3, 5)), rng.integers(0, 2, 5), country=cid,
                   indicators=("gdp", "debt", "water"))
        for cid in ("Xland", "Yland")
    ]
    return PanelDataset(tuple(panels), ("gdp", "debt", "water"), (2000, 2004))


# one line per acceptance criterion, shown even when output is captured
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][3:])):
            terminalreporter.write_line(line)
