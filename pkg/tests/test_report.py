import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from survboost.report import active_set, coefficient_table, relative_proportions, set_differences


def test_relative_proportion_example():
    props = relative_proportions([0.216, 0.113])
    assert [f"{p:.1f}" for p in props] == ["100.0", "52.3"]


def test_single_active_coefficient_is_100():
    assert_allclose(relative_proportions([0.0, -0.4, 0.0]), [0.0, -100.0, 0.0])
    assert_allclose(relative_proportions(np.zeros(3)), 0.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=10),
       st.floats(1e-3, 1e3))
def test_relative_proportions_scale_invariant(coef, c):
    coef = np.array(coef)
    base = relative_proportions(coef)
    assert_allclose(relative_proportions(c * coef), base, rtol=1e-9, atol=1e-9)
    if np.any(coef != 0):
        assert np.max(np.abs(base)) == pytest.approx(100.0)


def test_table_rows_sorted_and_dashed():
    names = ["a", "b", "c", "d"]
    table = coefficient_table(names, {
        "gehan": np.array([0.1, 0.0, -0.4, 0.0]),
        "coxph": np.array([0.2, 0.05, 0.0, 0.0]),
    })
    assert [r.name for r in table.rows] == ["a", "c", "b"]
    text = table.render().splitlines()
    assert text[0] == "name,coef_gehan,relprop_gehan,coef_coxph,relprop_coxph"
    assert text[1] == "a,0.1,25.0,0.2,100.0"
    assert text[2] == "c,-0.4,-100.0,-,-"
    assert text[3] == "b,-,-,0.05,25.0"


def test_empty_table_renders_header_only():
    table = coefficient_table(["a", "b"], {"gehan": np.zeros(2)})
    assert table.rows == []
    assert table.render() == "name,coef_gehan,relprop_gehan\n"


def test_nested_active_sets():
    genes = [f"g{i}" for i in range(19)]
    sets = {"coxph": frozenset(genes[:9]), "gehan": frozenset(genes)}
    diff = set_differences(sets)
    assert diff.totals == {"coxph": 9, "gehan": 19}
    assert diff.counts["coxph"]["gehan"] == 0
    assert diff.counts["gehan"]["coxph"] == 10
    assert diff.render().splitlines() == ["A,total,coxph,gehan", "coxph,9,-,0", "gehan,19,10,-"]


def test_identical_and_disjoint_sets():
    same = set_differences({"x": frozenset("abc"), "y": frozenset("abc")})
    assert same.counts == {"x": {"y": 0}, "y": {"x": 0}}
    apart = set_differences({"x": frozenset("ab"), "y": frozenset("cde")})
    assert apart.counts == {"x": {"y": 2}, "y": {"x": 3}}


@settings(max_examples=50, deadline=None)
@given(st.frozensets(st.integers(0, 20)), st.frozensets(st.integers(0, 20)))
def test_set_difference_accounting(a, b):
    diff = set_differences({"a": a, "b": b})
    assert diff.counts["a"]["b"] + len(a & b) == len(a)
    assert diff.counts["b"]["a"] + len(a & b) == len(b)


def test_active_set_uses_exact_zero():
    assert active_set(["a", "b", "c"], [0.0, 1e-300, -0.0]) == frozenset({"b"})
