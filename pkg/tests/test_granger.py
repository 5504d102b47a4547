import numpy as np
import pytest

from causal_panel.errors import DegenerateSeriesError, SampleSizeError
from causal_panel.granger import CausalityMatrix, causality_matrix, extract_edges, granger_pair
from causal_panel.graph_io import matrix_from_csv
from causal_panel.panel import LABEL


def lagged_pair(seed, n=200, coef=0.9, noise=1.0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    y = np.empty(n)
    y[0] = rng.standard_normal()
    y[1:] = coef * x[:-1] + noise * rng.standard_normal(n - 1)
    return x, y


def test_planted_lag_one_detected():
    hits = 0
    for s in range(100):
        x, y = lagged_pair(s, noise=0.5)
        p, lag = granger_pair(x, y, 2)
        hits += p < 0.01 and lag == 1
    assert hits >= 95


def test_null_calibration_max_lag_one():
    rejections = 0
    for s in range(1000):
        x, y = np.random.default_rng(s).standard_normal((2, 200))
        rejections += granger_pair(x, y, 1)[0] < 0.05
    assert 0.03 <= rejections / 1000 <= 0.10


def test_exact_functional_dependence():
    x = np.random.default_rng(0).standard_normal(60)
    y = np.concatenate([[0.0], x[:-1]])
    p, lag = granger_pair(x, y, 2)
    assert p < 1e-12
    assert lag == 1


def test_preconditions():
    x = np.random.default_rng(1).standard_normal(14)
    with pytest.raises(SampleSizeError):
        granger_pair(x, x[::-1], 2)
    with pytest.raises(DegenerateSeriesError):
        granger_pair(np.ones(30), np.arange(30.0), 1)
    with pytest.raises(ValueError):
        granger_pair(np.arange(30.0), np.arange(29.0), 1)


def chain_data(seed, n=200):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    y = np.zeros(n)
    z = np.zeros(n)
    e = rng.standard_normal((2, n))
    for t in range(1, n):
        y[t] = 0.8 * x[t - 1] + e[0, t]
        z[t] = 0.8 * y[t - 1] + e[1, t]
    return np.array([x, y, z])


def test_chain_orientation():
    ok = 0
    for s in range(100):
        m = causality_matrix(("X", "Y", "Z"), chain_data(s))
        i = {v: k for k, v in enumerate(m.variables)}
        ok += (m.p[i["Y"], i["X"]] < 0.05 and m.p[i["Z"], i["Y"]] < 0.05
               and m.p[i["X"], i["Z"]] >= 0.05)
    assert ok >= 90


def test_unit_diagonal_and_range():
    m = causality_matrix(("X", "Y", "Z"), chain_data(3))
    assert np.all(np.diag(m.p) == 1.0)
    assert np.all((m.p >= 0) & (m.p <= 1))


def test_single_variable():
    m = causality_matrix(("X",), np.random.default_rng(0).standard_normal((1, 30)))
    assert m.p.tolist() == [[1.0]]


def test_failed_pair_gets_p_one_with_warning():
    data = np.vstack([np.random.default_rng(0).standard_normal(30), np.ones(30)])
    m = causality_matrix(("X", "C"), data, 1)
    assert m.pvalue("X", "C") == 1.0 and m.pvalue("C", "X") == 1.0
    assert len(m.warnings) == 2


def test_row_cause_is_transpose():
    d = chain_data(4)
    a = causality_matrix(("X", "Y", "Z"), d, orientation="row_effect")
    b = causality_matrix(("X", "Y", "Z"), d, orientation="row_cause")
    assert np.array_equal(a.p, b.p.T)
    assert a.pvalue("X", "Y") == b.pvalue("X", "Y")
    assert set(extract_edges(a)[0]) == set(extract_edges(b)[0])


def test_extract_edges_examples():
    ones = CausalityMatrix(("A", LABEL), np.ones((2, 2)), 2, 0.05)
    assert extract_edges(ones) == ([], [])
    p = np.ones((2, 2))
    p[1, 0] = 0.01  # row = effect (label), column = cause (A)
    edges, label_edges = extract_edges(CausalityMatrix(("A", LABEL), p, 2, 0.05))
    assert [(e.cause, e.effect) for e in edges] == [("A", LABEL)]
    assert label_edges == edges
    assert all(e.p_value < 0.05 for e in edges)


def test_table_style_zero_cell_becomes_edge_into_label():
    text = (
        "Feature,Central Govt. Debt,GDP,Label (Disease Outbreaks)\n"
        "Central Govt. Debt,1,0.81,0.92\n"
        "GDP,0.30,1,0.66\n"
        "Label (Disease Outbreaks),0,0.47,1\n"
    )
    m = matrix_from_csv(text, 2, 0.05)
    _, label_edges = extract_edges(m)
    assert [(e.cause, e.effect) for e in label_edges] == [("Central Govt. Debt", LABEL)]


def test_alpha_extremes():
    m = causality_matrix(("X", "Y", "Z"), chain_data(5))
    assert extract_edges(CausalityMatrix(m.variables, m.p, 2, 0.0))[0] == []
    assert len(extract_edges(CausalityMatrix(m.variables, m.p, 2, 1.0))[0]) == 6


def test_deterministic():
    d = chain_data(6)
    a, b = causality_matrix(("X", "Y", "Z"), d), causality_matrix(("X", "Y", "Z"), d)
    assert a.p.tobytes() == b.p.tobytes() and a == b
