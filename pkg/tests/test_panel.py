import numpy as np
import pytest

from causal_panel.errors import DomainError, DuplicateKeyError, ParseError
from causal_panel.panel import (
    LABEL,
    CountryPanel,
    PanelDataset,
    drop_sparse,
    ingest,
    missingness,
    write_long,
    write_wide,
)

from conftest import make_panel


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def long_rows(countries, indicators, years, skip=()):
    lines = ["country,year,indicator,value"]
    for c in countries:
        for y in years:
            for k, ind in enumerate(indicators):
                if (c, y) in skip:
                    continue
                lines.append(f"{c},{y},{ind},{k + y / 1000}")
    return "\n".join(lines) + "\n"


def labels_for(countries, years, value=1):
    return "country,year,label\n" + "".join(f"{c},{y},{value}\n" for c in countries for y in years)


def test_ingest_long_shapes(tmp_path):
    years = range(2000, 2005)
    vals = write(tmp_path / "v.csv", long_rows(["P", "Q"], ["a", "b", "c"], years))
    labs = write(tmp_path / "l.csv", labels_for(["P", "Q"], years))
    data = ingest(vals, "long", labs)
    assert len(data.countries) == 2
    assert all(c.shape == (3, 5) for c in data.countries)
    assert data.indicator_names == ("a", "b", "c")
    assert data.year_range == (2000, 2004)
    assert data.warnings == ()


def test_missing_year_is_materialised(tmp_path):
    years = range(2000, 2005)
    vals = write(tmp_path / "v.csv", long_rows(["X", "Y"], ["a", "b"], years, skip={("X", 2003)}))
    labs = write(tmp_path / "l.csv", labels_for(["X", "Y"], years))
    x = ingest(vals, "long", labs).country("X")
    col = x.years.index(2003)
    assert x.missing[:, col].all()
    assert not x.missing[:, [0, 1, 2, 4]].any()


def test_label_outside_domain(tmp_path):
    vals = write(tmp_path / "v.csv", long_rows(["X"], ["a"], [2000]))
    labs = write(tmp_path / "l.csv", "country,year,label\nX,2000,2\n")
    with pytest.raises(DomainError) as exc:
        ingest(vals, "long", labs)
    assert exc.value.line == 2


def test_malformed_row_reports_line(tmp_path):
    vals = write(tmp_path / "v.csv", "country,year,indicator,value\nX,2000,a,1.0\nX,20x1,a,2.0\n")
    with pytest.raises(ParseError) as exc:
        ingest(vals, "long")
    assert exc.value.line == 3


def test_duplicate_key(tmp_path):
    vals = write(tmp_path / "v.csv", "country,year,indicator,value\nX,2000,a,1\nX,2000,a,2\n")
    with pytest.raises(DuplicateKeyError):
        ingest(vals, "long")


def test_absent_label_defaults_to_zero_with_warning(tmp_path):
    vals = write(tmp_path / "v.csv", long_rows(["X"], ["a"], [2000, 2001]))
    labs = write(tmp_path / "l.csv", "country,year,label\nX,2000,1\n")
    data = ingest(vals, "long", labs)
    assert list(data.country("X").label) == [1, 0]
    assert any("2001" in w for w in data.warnings)


def test_empty_value_is_missing_and_columns_any_order(tmp_path):
    vals = write(tmp_path / "v.csv", "value,indicator,country,year\n,a,X,2000\n3.5,a,X,2001\n")
    x = ingest(vals, "long").country("X")
    assert x.missing.tolist() == [[True, False]]
    assert x.values[0, 1] == 3.5


def test_reserved_label_name_rejected(tmp_path):
    vals = write(tmp_path / "v.csv", f"country,year,indicator,value\nX,2000,{LABEL},1\n")
    with pytest.raises(ParseError):
        ingest(vals, "long")


def test_long_round_trip(tmp_path, toy_dataset):
    write_long(toy_dataset, tmp_path / "v.csv", tmp_path / "l.csv")
    back = ingest(tmp_path / "v.csv", "long", tmp_path / "l.csv")
    assert back == toy_dataset
    first = (tmp_path / "v.csv").read_bytes()
    write_long(back, tmp_path / "v.csv", tmp_path / "l.csv")
    assert (tmp_path / "v.csv").read_bytes() == first


def test_wide_round_trip_with_missing(tmp_path, toy_dataset):
    c = toy_dataset.countries[0]
    miss = c.missing.copy()
    miss[1, 2] = True
    data = PanelDataset((c.replace(missing=miss), toy_dataset.countries[1]),
                        toy_dataset.indicator_names, toy_dataset.year_range)
    write_wide(data, tmp_path / "wide", tmp_path / "l.csv")
    back = ingest(tmp_path / "wide", "wide", tmp_path / "l.csv")
    assert back == data
    assert back.country(c.country_id).missing[1, 2]


def test_wide_file_names_survive_odd_country_ids(tmp_path):
    p = make_panel([[1.0, 2.0]], country="St. Martin / FR")
    data = PanelDataset((p,), p.indicators, (2000, 2001))
    write_wide(data, tmp_path / "w", tmp_path / "l.csv")
    assert ingest(tmp_path / "w", "wide", tmp_path / "l.csv").country_ids == ("St. Martin / FR",)


def test_layout_invariants():
    a = make_panel([[1.0, 2.0]], country="a")
    b = make_panel([[1.0, 2.0, 3.0]], country="b")
    with pytest.raises(ValueError):
        PanelDataset((a, b), ("A",), (2000, 2001))
    with pytest.raises(ValueError):
        PanelDataset((), ("A", "A"), (2000, 2001))
    with pytest.raises(ValueError):
        PanelDataset((), (LABEL,), (2000, 2001))


def test_panel_values_are_read_only():
    p = make_panel([[1.0, 2.0]])
    with pytest.raises(ValueError):
        p.values[0, 0] = 5.0
    with pytest.raises(DomainError):
        CountryPanel.from_array("c", ("A",), (2000, 2001), [[1.0, 2.0]], [0, 3])


def _dataset(*panels):
    return PanelDataset(tuple(panels), panels[0].indicators, (panels[0].years[0], panels[0].years[-1]))


def test_missingness_zero_and_saturation():
    full = make_panel(np.ones((2, 4)))
    rep = missingness(_dataset(full))
    assert rep.overall_fraction == 0.0
    assert set(rep.per_indicator_fraction.values()) == {0.0}
    gone = make_panel([[np.nan] * 4, [1.0] * 4], country="x")
    gone2 = make_panel([[np.nan] * 4, [1.0] * 4], country="y")
    rep = missingness(_dataset(gone, gone2))
    assert rep.per_indicator_fraction["A"] == 1.0
    assert rep.overall_fraction == 0.5


def test_missingness_counts_24_of_100():
    vals = np.ones((1, 100))
    vals[0, :24] = np.nan
    assert missingness(_dataset(make_panel(vals))).per_indicator_fraction["A"] == pytest.approx(0.24)


def test_drop_sparse_boundaries():
    vals = np.ones((3, 10))
    vals[0, :6] = np.nan   # 0.6
    vals[1, :4] = np.nan   # 0.4
    data = _dataset(make_panel(vals))
    assert drop_sparse(data, 1.0).indicator_names == ("A", "B", "C")
    assert drop_sparse(data, 0.0).indicator_names == ("C",)
    half = drop_sparse(data, 0.5)
    assert half.indicator_names == ("B", "C")
    assert half.dropped == ("A",)
    assert drop_sparse(half, 0.5) == half


def test_drop_sparse_rejects_bad_threshold(toy_dataset):
    with pytest.raises(ValueError):
        drop_sparse(toy_dataset, 1.5)
