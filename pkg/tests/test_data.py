import math

import numpy as np
import pytest

from spinfer.censoring import LOD_THRESHOLD
from spinfer.data import read_data_csv, simulate_influenza, simulate_lv, write_data_csv
from spinfer.errors import DataError, EmptyInputError, SchemaError
from spinfer.ode import LV_MODEL, LV_TRUE, solve_on_grid


def test_lv_layout():
    ds = simulate_lv(seed=0)
    assert len(ds.time) == 200 and np.unique(ds.time).size == 20
    assert ds.outputs == [0, 1]
    assert ds.design(0).N == 100 and set(ds.design(1).counts) == {5}


def test_lv_noise_free_equals_trajectory():
    ds = simulate_lv(seed=0, noise_var=0.0)
    times = np.unique(ds.time)
    clean = solve_on_grid(LV_MODEL, LV_TRUE, times)
    for k in (0, 1):
        for t, v in zip(ds.time[ds.output == k], ds.value[ds.output == k]):
            assert v == clean[k, np.searchsorted(times, t)]


def test_seed_reproducible():
    a, b = simulate_lv(seed=5), simulate_lv(seed=5)
    assert a.value.tobytes() == b.value.tobytes()
    assert not np.array_equal(a.value, simulate_lv(seed=6).value)


def test_influenza_stand_in():
    ds = simulate_influenza(seed=0)
    assert len(ds.time) == 165 and np.unique(ds.time).size == 11
    counts = [int(ds.censored[ds.time == d].sum()) for d in range(1, 12)]
    assert counts == [0] * 7 + [5, 15, 15, 15]
    assert np.all(ds.value[ds.censored] == 200.0)
    t = ds.transformed("log10p1")
    assert np.allclose(t.value[t.censored], LOD_THRESHOLD)
    assert np.all(t.value[~t.censored] >= LOD_THRESHOLD)


def test_csv_round_trip(tmp_path):
    for ds in (simulate_lv(seed=2), simulate_influenza(seed=3)):
        path = tmp_path / "d.csv"
        write_data_csv(path, ds)
        back = read_data_csv(path)
        for name in ("time", "value", "censored", "output"):
            np.testing.assert_array_equal(getattr(back, name), getattr(ds, name))
        for k in ds.outputs:
            a, b = ds.design(k), back.design(k)
            assert a.to_dict() == b.to_dict()


def test_transform_on_read(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("time,value,censored\n1,999,0\n2,200,1\n")
    ds = read_data_csv(path, transform="log10p1")
    np.testing.assert_allclose(ds.value, [3.0, math.log10(201)])
    assert ds.censoring().censored == ((2.0, 1),)


@pytest.mark.parametrize("text,err", [
    ("time,value\n1,2\n", SchemaError),
    ("time,value,censored\n", EmptyInputError),
    ("time,value,censored\n1,2,yes\n", DataError),
    ("time,value,censored\n1,nan,0\n", DataError),
    ("time,value,censored\n1,abc,0\n", DataError),
])
def test_schema_errors(tmp_path, text, err):
    path = tmp_path / "d.csv"
    path.write_text(text)
    with pytest.raises(err):
        read_data_csv(path)


def test_error_carries_line_number(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("time,value,censored\n1,2,0\n1,x,0\n")
    with pytest.raises(DataError, match=":3:"):
        read_data_csv(path)
