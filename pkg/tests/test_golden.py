import csv
import io

import numpy as np

from causal_panel.granger import extract_edges
from causal_panel.graph_io import matrix_from_csv, matrix_to_csv
from causal_panel.panel import LABEL

from tables import SAMPLE_MATRIX, golden, intersection_csv, ranking_csvs


def test_matrix_csv_matches_golden():
    m = matrix_from_csv(SAMPLE_MATRIX, 2, 0.05)
    assert matrix_to_csv(m) == golden("causality_matrix.csv")


def test_matrix_layout():
    rows = list(csv.reader(io.StringIO(golden("causality_matrix.csv"))))
    header = rows[0]
    assert header[0] == "Feature"
    assert [r[0] for r in rows[1:]] == header[1:]
    p = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    assert np.array_equal(np.diag(p), np.ones(len(p)))


def test_golden_matrix_reimports():
    m = matrix_from_csv(golden("causality_matrix.csv"), 2, 0.05)
    assert m.variables[-1] == LABEL
    _, label_edges = extract_edges(m)
    assert {(e.cause, e.effect) for e in label_edges} == {
        ("Central Govt. Debt", LABEL), ("Mortality (Diabetes, etc)", LABEL)}


def test_rankings_match_golden():
    for method, text in ranking_csvs().items():
        assert text == golden(f"ranking_{method}.csv"), method


def test_ranking_two_column_shape():
    for method in ("granger", "ic_dependence", "ic_genuine"):
        rows = list(csv.reader(io.StringIO(golden(f"ranking_{method}.csv"))))
        assert rows[0] == ["indicator", "frequency"]
        assert all(len(r) == 2 and int(r[1]) >= 1 for r in rows[1:])


def test_intersection_matches_golden():
    assert intersection_csv() == golden("intersection.csv")
    rows = list(csv.reader(io.StringIO(golden("intersection.csv"))))
    assert rows[0] == ["country", "indicator"] and all(len(r) == 2 for r in rows)
