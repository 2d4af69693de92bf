import io
from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, strategies as st

from odpricing import data_pipeline as dp

import oracles

HEADER = ("Trip Start Timestamp,Pickup Community Area,Dropoff Community Area,"
          "Trip Seconds,Trip Miles,Fare,Additional Charges\n")
WED = "01/08/2020 07:15:00 AM"


def _parse(rows, **kw):
    stats = dp.ParseStats()
    records = list(dp.parse_trips(io.StringIO(HEADER + rows), stats=stats, **kw))
    return records, stats


def test_missing_dropoff_skipped():
    records, stats = _parse(f"{WED},3,,600,1.0,10.0,0\n{WED},3,4,600,1.0,10.0,0\n")
    assert len(records) == 1
    assert stats.missing_area == 1 and stats.rows == 2 and stats.kept == 1


def test_price_includes_additional_charges():
    records, _ = _parse(f"{WED},3,4,600,1.0,10.0,2.5\n")
    assert records[0].price == 12.5
    assert records[0].hours == pytest.approx(1 / 6)


def test_bad_duration_reports_line():
    records, stats = _parse(f"{WED},3,4,600,1.0,10.0,0\n{WED},3,4,abc,1.0,10.0,0\n")
    assert len(records) == 1
    assert stats.errors[0][0] == 3
    assert "duration" in stats.errors[0][1]


def test_missing_column_names_it():
    with pytest.raises(dp.DataError, match="Fare"):
        list(dp.parse_trips(io.StringIO("Trip Start Timestamp,Pickup Community Area,"
                                        "Dropoff Community Area\n")))


def test_custom_column_mapping():
    text = "when,from,to,fare\n2020-01-08 07:10:00,1,2,7.5\n"
    records = list(dp.parse_trips(io.StringIO(text), columns={
        "start": "when", "pickup": "from", "dropoff": "to", "fare": "fare"}))
    assert records[0].pickup == 1 and records[0].price == 7.5


def test_calibration_example():
    economy = dp.calibrate([[4.0]], [[36.65]], [[1 / 3]], m=10.0)
    assert economy.theta[0, 0] == pytest.approx(20.0)
    assert economy.Q[0, 0] == pytest.approx(25.00, abs=5e-3)


def test_calibration_zero_and_free_trips():
    economy = dp.calibrate([[0.0, 3.0], [2.0, 1.0]], [[np.nan, 0.0], [5.0, 2.0]],
                           np.full((2, 2), 0.5), m=5.0)
    assert economy.curve(0, 0).is_zero
    assert economy.Q[0, 1] == 3.0


def test_calibration_round_trip(rng):
    x = rng.uniform(0, 5, (5, 5)) * (rng.uniform(size=(5, 5)) < 0.7)
    p = rng.uniform(0, 40, (5, 5))
    d = rng.uniform(0.1, 1, (5, 5))
    economy = dp.calibrate(x, p, d)
    pos = x > 0
    np.testing.assert_allclose(economy.q(p)[pos], x[pos], rtol=1e-10)


def test_min_supply_examples():
    x = np.array([[0.0, 4.0], [0.0, 8.0]])
    d = np.array([[10.0, 20.0], [20.0, 10.0]])
    assert dp.min_supply(x, d) == pytest.approx(240.0)
    balanced = np.array([[1.0, 2.0], [2.0, 0.0]])
    assert dp.min_supply(balanced, d) == pytest.approx((d * balanced).sum())


@given(st.integers(2, 4), st.integers(0, 10_000))
def test_min_supply_against_enumeration(n, seed):
    r = np.random.default_rng(seed)
    x = r.uniform(0, 5, (n, n)) * (r.uniform(size=(n, n)) < 0.7)
    d = r.uniform(0.2, 3, (n, n))
    m, y = dp.min_supply_flow(x, d)
    assert np.all(y >= x - 1e-12)
    np.testing.assert_allclose(y.sum(axis=0), y.sum(axis=1), atol=1e-9)
    assert m == pytest.approx((d * y).sum(), rel=1e-12)
    assert m == pytest.approx(oracles.min_supply_enumeration(x, d), rel=1e-6, abs=1e-9)


def test_impute_triangle(rng):
    obs = rng.uniform(0.1, 1.0, (6, 6))
    obs[rng.uniform(size=(6, 6)) < 0.4] = np.nan
    np.fill_diagonal(obs, np.nan)
    obs[np.arange(6), (np.arange(6) + 1) % 6] = 0.5
    d = dp.impute_durations(obs)
    known = ~np.isnan(obs)
    np.testing.assert_array_equal(d[known], obs[known])
    for i in range(6):
        for j in range(6):
            if i != j and np.isnan(obs[i, j]):
                assert all(d[i, j] <= d[i, k] + d[k, j] + 1e-12 for k in range(6) if k not in (i, j))


def test_impute_disconnected():
    obs = np.array([[np.nan, 1.0], [np.nan, np.nan]])
    with pytest.raises(dp.DataError):
        dp.impute_durations(obs)


def _event_records(count):
    when = datetime(2020, 1, 8, 7, 30)
    return [dp.TripRecord(when, 5, 33, 600.0, 2.0, 10.0) for _ in range(count)]


def test_event_thresholds():
    assert dp.detect_event_days(_event_records(350)) == {(2020, 2)}
    assert dp.detect_event_days(_event_records(299)) == set()


def test_window_contains():
    window = dp.WeekWindow()
    assert window.contains(datetime(2020, 1, 8, 7, 59))
    assert not window.contains(datetime(2020, 1, 8, 8, 0))
    assert not window.contains(datetime(2020, 1, 9, 7, 30))


def test_synthetic_examples():
    e1 = dp.example1()
    assert e1.q(np.zeros((2, 2)))[0, 1] == 10 and e1.q(np.zeros((2, 2)))[1, 1] == 20
    assert e1.m == 240
    e2 = dp.example2()
    assert e2.m == 8.6
    np.testing.assert_array_equal(e2.Q, [[1, 1, 4], [4, 4, 1], [1, 1, 1]])
    np.testing.assert_array_equal(e2.theta, [[30, 30, 1], [1, 1, 30], [30, 30, 30]])
    a = dp.synthetic_economy({"kind": "random", "n": 4, "seed": 7})
    b = dp.synthetic_economy({"kind": "random", "n": 4, "seed": 7})
    np.testing.assert_array_equal(a.Q, b.Q)
    assert a.m == b.m


def test_week_economy_from_trips():
    x = np.array([[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]])
    p = np.array([[5.0, 8.0, 0.0], [8.0, 5.0, 9.0], [0.0, 9.0, 5.0]])
    d = np.array([[0.2, 0.3, 0.5], [0.3, 0.2, 0.3], [0.5, 0.3, 0.2]])
    records = dp.synthetic_trips(x, p, d, datetime(2019, 1, 7), weeks=3)
    weeks = dp.build_weekly_economies(records, n=3)
    assert len(weeks) == 3
    economy, spec = weeks[0]
    np.testing.assert_allclose(spec.x_obs, x)
    assert spec.d[0, 2] == pytest.approx(0.6)
    np.testing.assert_allclose(economy.Q[x > 0], (x * np.exp(p / (60 * d)))[x > 0])


def test_area_out_of_range():
    with pytest.raises(dp.DataError):
        dp.build_week_economy(_event_records(3), n=10)


def test_trips_csv_round_trip(tmp_path):
    records = _event_records(3)
    dp.write_trips_csv(tmp_path / "t.csv", records)
    assert list(dp.parse_trips(tmp_path / "t.csv")) == records
