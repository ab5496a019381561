import csv
import io
import math
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nise.dataset import (
    CRIME_SCHEMA,
    ModelSpec,
    PanelData,
    absorb_effects,
    build_design,
    crime_spec,
    dump_panel,
    load_panel,
    log_transform,
    prepare_design,
    transform_panel,
    within_demean,
)
from nise.errors import (
    ConditioningError,
    ConfigError,
    DomainError,
    InsufficientDataError,
    IntegrityError,
    ParseError,
    SchemaError,
)

HEADER = "county,year,crmrte,prbarr,prbconv,prbpris,polpc,wmfg,mix,taxpc"


def _panel(groups, periods, **cols):
    return PanelData(
        groups=np.array(groups, dtype=str),
        periods=np.array(periods, dtype=str),
        columns={k: np.asarray(v, dtype=float) for k, v in cols.items()},
    )


def test_crime_panel_shape(crime_panel):
    assert crime_panel.n == 630
    assert crime_panel.n_groups == 90
    assert crime_panel.n_periods == 7
    assert crime_panel.balanced


def test_one_row_table():
    text = HEADER + "\n1,81,0.04,0.3,0.4,0.5,0.002,230,0.1,25\n"
    panel = load_panel(io.StringIO(text), CRIME_SCHEMA)
    assert panel.n == 1
    assert panel.columns["mix"][0] == 0.1


def test_missing_mapped_column():
    text = HEADER.replace(",mix", "") + "\n1,81,0.04,0.3,0.4,0.5,0.002,230,25\n"
    with pytest.raises(SchemaError, match="mix"):
        load_panel(io.StringIO(text), CRIME_SCHEMA)


def test_non_numeric_cell_reports_row():
    text = HEADER + "\n1,81,0.04,0.3,0.4,0.5,0.002,230,0.1,25\n2,81,0.04,abc,0.4,0.5,0.002,230,0.1,25\n"
    with pytest.raises(ParseError, match="row 1"):
        load_panel(io.StringIO(text), CRIME_SCHEMA)


def test_quoted_numeric_text_is_parsed():
    text = HEADER + '\n1,81,0.04,0.3,"0.4",0.5,0.002,230,0.1,25\n'
    panel = load_panel(io.StringIO(text), CRIME_SCHEMA)
    assert panel.columns["prob_conviction"][0] == 0.4


def test_empty_cell_rejected():
    text = HEADER + "\n1,81,0.04,0.3,,0.5,0.002,230,0.1,25\n"
    with pytest.raises(ParseError):
        load_panel(io.StringIO(text), CRIME_SCHEMA)


def test_duplicate_group_period():
    row = "1,81,0.04,0.3,0.4,0.5,0.002,230,0.1,25\n"
    with pytest.raises(IntegrityError, match="duplicate"):
        load_panel(io.StringIO(HEADER + "\n" + row + row), CRIME_SCHEMA)


def test_semicolon_delimiter():
    text = HEADER.replace(",", ";") + "\n1;81;0.04;0.3;0.4;0.5;0.002;230;0.1;25\n"
    panel = load_panel(io.StringIO(text), CRIME_SCHEMA, delimiter=";")
    assert panel.columns["wage_mfg"][0] == 230


def test_log_transform_exact():
    panel = _panel(["a", "a", "a"], [1, 2, 3], v=[1.0, math.e, math.e**2], w=[5, 6, 7])
    out = log_transform(panel, ["v"])
    np.testing.assert_allclose(out.columns["v"], [0.0, 1.0, 2.0], atol=1e-15)
    np.testing.assert_array_equal(out.columns["w"], [5, 6, 7])


def test_log_transform_rejects_zero():
    panel = _panel(["a", "a"], [1, 2], v=[1.0, 0.0])
    with pytest.raises(DomainError, match="row 1"):
        log_transform(panel, ["v"])


def test_crime_rate_positive_in_raw_table(crime_panel):
    # independent scan of the shipped file before any transform
    text = resources.files("nise").joinpath("data/crime.csv").read_text()
    rows = list(csv.DictReader(io.StringIO(text)))
    assert min(float(r["crmrte"]) for r in rows) > 0
    logged = log_transform(crime_panel, ["crime_rate"])
    assert np.all(np.isfinite(logged.columns["crime_rate"]))


def test_within_demean_examples():
    panel = _panel(["a", "a", "a", "b"], [1, 2, 3, 1], v=[2, 4, 6, 5])
    out = within_demean(panel, ["v"])
    np.testing.assert_allclose(out.columns["v"], [-2, 0, 2, 0])


def test_crime_panel_group_sums_vanish(crime_panel):
    spec = crime_spec("none")
    out = transform_panel(crime_panel, spec)
    for col in spec.columns:
        for g in np.unique(out.groups):
            s = out.columns[col][out.groups == g].sum()
            assert abs(s) <= 1e-9 * 7


def test_two_way_sweep_unbalanced_converges():
    rng = np.random.default_rng(3)
    groups = np.repeat(np.arange(6), 4).astype(str)
    periods = np.tile(np.arange(4), 6).astype(str)
    keep = np.ones(24, bool)
    keep[[1, 7, 13]] = False
    panel = _panel(groups[keep], periods[keep], v=rng.standard_normal(keep.sum()))
    out = absorb_effects(panel, ["v"]).columns["v"]
    for keys in (panel.groups, panel.periods):
        for k in np.unique(keys):
            assert abs(out[keys == k].sum()) < 1e-10


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30), st.integers(1, 5))
def test_demean_idempotent(values, k):
    groups = [str(i % k) for i in range(len(values))]
    panel = _panel(groups, list(range(len(values))), v=values)
    once = within_demean(panel, ["v"])
    twice = within_demean(once, ["v"])
    np.testing.assert_allclose(twice.columns["v"], once.columns["v"], atol=1e-12 * max(1, max(map(abs, values))))


def test_log_then_demean_differs_from_demean_then_log(crime_panel):
    spec = crime_spec("none")
    logged_first = transform_panel(crime_panel, spec).columns["crime_rate"]
    demeaned = within_demean(crime_panel, ["crime_rate"]).columns["crime_rate"]
    assert np.any(demeaned <= 0)  # demeaning first makes the log undefined
    assert np.all(np.isfinite(logged_first))


def test_build_design_crime_shapes(crime_panel):
    d = prepare_design(crime_panel, crime_spec("none"))
    assert (d.Y.shape, d.X.shape, d.Z.shape) == ((630, 3), (630, 3), (630, 2))
    assert d.y_labels == ("crime_rate", "prob_arrest", "police_pc")
    dd = prepare_design(crime_panel, crime_spec("dummies"))
    assert dd.X.shape == (630, 9)
    assert dd.x_labels[3:] == tuple(f"period_{y}" for y in range(82, 88))


def test_demeaned_period_dummies_sum_to_zero_per_group(crime_panel):
    d = prepare_design(crime_panel, crime_spec("dummies"))
    for g in np.unique(d.groups):
        np.testing.assert_allclose(d.X[d.groups == g, 3:].sum(axis=0), 0, atol=1e-12)


def test_within_invariant_on_all_blocks(crime_design):
    for block in (crime_design.Y, crime_design.X, crime_design.Z):
        for g in np.unique(crime_design.groups):
            assert np.all(np.abs(block[crime_design.groups == g].sum(axis=0)) <= 1e-9 * 630)


def test_build_design_preserves_row_order(crime_panel):
    spec = crime_spec("none")
    panel = transform_panel(crime_panel, spec)
    d = build_design(panel, spec)
    np.testing.assert_array_equal(d.Y[:, 0], panel.columns["crime_rate"])
    np.testing.assert_array_equal(d.X[:, 2], panel.columns["wage_mfg"])
    np.testing.assert_array_equal(d.Z[:, 1], panel.columns["tax_pc"])


def test_no_endogenous_regressors():
    rng = np.random.default_rng(0)
    panel = _panel(list("aabbcc"), [1, 2] * 3, y=rng.random(6) + 1, x=rng.random(6) + 1)
    spec = ModelSpec("y", exogenous=("x",), log_transform=False, within_demean=False)
    d = build_design(panel, spec)
    assert d.Y.shape == (6, 1)
    assert d.Z is None


def test_column_in_two_roles_rejected():
    with pytest.raises(IntegrityError):
        ModelSpec("y", endogenous=("a",), exogenous=("a",))
    with pytest.raises(ConfigError):
        ModelSpec("y", exogenous=("y", "x"))


def test_rank_deficient_x_names_column():
    panel = _panel(list("abcdef"), [1] * 6, y=[1, 2, 3, 4, 5, 7], a=[1, 2, 3, 4, 5, 6],
                   b=[2, 4, 6, 8, 10, 12])
    spec = ModelSpec("y", exogenous=("a", "b"), log_transform=False, within_demean=False)
    with pytest.raises(ConditioningError, match="offending columns: (a|b)"):
        build_design(panel, spec)


def test_insufficient_rows():
    panel = _panel(list("ab"), [1, 1], y=[1, 2], a=[1, 3])
    spec = ModelSpec("y", exogenous=("a",), log_transform=False, within_demean=False)
    with pytest.raises(InsufficientDataError):
        build_design(panel, spec)


def test_missing_model_column(crime_panel):
    with pytest.raises(SchemaError, match="density"):
        prepare_design(crime_panel, ModelSpec("crime_rate", exogenous=("density",)))


def test_dump_is_exact_and_repeatable(crime_panel):
    panel = transform_panel(crime_panel, crime_spec("absorb"))
    a, b = io.StringIO(), io.StringIO()
    dump_panel(panel, a)
    dump_panel(panel, b)
    assert a.getvalue() == b.getvalue()
    rows = list(csv.DictReader(io.StringIO(a.getvalue())))
    back = np.array([float(r["prob_arrest"]) for r in rows])
    np.testing.assert_array_equal(back, panel.columns["prob_arrest"])


def test_redemean_on_identity_resample_matches(crime_design):
    idx = np.arange(crime_design.n)
    again = crime_design.take(idx).redemeaned()
    np.testing.assert_allclose(again.Y, crime_design.Y, atol=1e-13)
    np.testing.assert_allclose(again.X, crime_design.X, atol=1e-13)
