from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from werner_lhv.intervals import (Interval, cos_power, decimal_down, decimal_up,
                                  interval_from_record, interval_to_record, iv, iv_precision,
                                  parse_fraction)

fractions = st.fractions(min_value=-10**6, max_value=10**6, max_denominator=10**9)

# cos^2(pi/10) to 40 digits, evaluated with sympy
COS2_PI_10 = Fraction("0.9045084971874737120511467085914095294301")


def test_iv_precision_restores_global_state():
    before = iv.prec
    with iv_precision(300):
        assert iv.prec == 300
    assert iv.prec == before


def test_cos_power_encloses_reference():
    x = cos_power(5, 2, 160)
    assert x.lo <= COS2_PI_10 + Fraction(1, 10**39) and COS2_PI_10 - Fraction(1, 10**39) <= x.hi
    assert x.width < Fraction(1, 10**30)


@given(fractions)
def test_directed_decimals_bracket(x):
    lo, hi = Fraction(decimal_down(x, 12)), Fraction(decimal_up(x, 12))
    assert lo <= x <= hi


@given(fractions, fractions)
def test_interval_product_contains_point_product(a, b):
    ia, ib = Interval(min(a, b), max(a, b)), Interval.point(b)
    prod = ia * ib
    assert prod.contains(a * b)


def test_record_round_trip_widens_outward():
    x = Interval(Fraction(1, 3), Fraction(2, 3))
    back = interval_from_record(interval_to_record(x))
    assert back.lo <= x.lo and x.hi <= back.hi


def test_record_rejects_wrong_rounding():
    rec = interval_to_record(Interval.point(Fraction(1, 2)))
    rec["lower_rounding"] = "up"
    with pytest.raises(ValueError):
        interval_from_record(rec)


@pytest.mark.parametrize("text, value", [("3/5", Fraction(3, 5)), ("1", Fraction(1)),
                                         (" 999/1000 ", Fraction(999, 1000))])
def test_parse_fraction(text, value):
    assert parse_fraction(text) == value


@pytest.mark.parametrize("text", ["0.6", "1/0", "abc", "1e-3"])
def test_parse_fraction_rejects(text):
    with pytest.raises(ValueError):
        parse_fraction(text)
