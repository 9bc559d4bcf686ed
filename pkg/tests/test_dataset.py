import numpy as np
import pytest
from hypothesis import given, strategies as st

from fairshift.dataset import (DatasetError, load_csv, load_schema,
                               make_dataset, save_csv, split)
from conftest import assert_valid

SCHEMA = {"a": "feature", "y": "label", "s": "sensitive"}


def write_csv(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_csv_stats_and_kinds(tmp_path):
    path = write_csv(tmp_path, "a,y,s\n1.0,1,0\n2.0,0,0\n3.0,1,1\n4.0,0,1\n")
    ds = assert_valid(load_csv(path, SCHEMA))
    meta = ds.meta("a")
    assert meta.mean == pytest.approx(2.5)
    assert meta.std_dev == pytest.approx(np.sqrt(1.25))  # population std
    assert meta.kind == "numeric"


def test_load_csv_binary_kind(tmp_path):
    path = write_csv(tmp_path, "a,y,s\n0,1,0\n1,0,1\n1,1,1\n")
    ds = load_csv(path, SCHEMA)
    assert ds.meta("a").kind == "binary"


def test_load_csv_non_binary_label(tmp_path):
    path = write_csv(tmp_path, "a,y,s\n1.0,2,0\n2.0,0,1\n")
    with pytest.raises(DatasetError, match="non-binary label"):
        load_csv(path, SCHEMA)


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(DatasetError, match="missing file"):
        load_csv(tmp_path / "nope.csv", SCHEMA)


def test_load_csv_reports_bad_cell(tmp_path):
    path = write_csv(tmp_path, "a,y,s\n1.0,1,0\nwat,0,1\n")
    with pytest.raises(DatasetError, match=r"row 2, column 'a'"):
        load_csv(path, SCHEMA)


def test_load_csv_missing_designated_column(tmp_path):
    path = write_csv(tmp_path, "a,y\n1.0,1\n2.0,0\n")
    with pytest.raises(DatasetError, match="missing designated column"):
        load_csv(path, SCHEMA)


def test_load_csv_zero_rows(tmp_path):
    path = write_csv(tmp_path, "a,y,s\n")
    with pytest.raises(DatasetError, match="zero data rows"):
        load_csv(path, SCHEMA)


def test_schema_roundtrip(tmp_path):
    path = tmp_path / "schema.json"
    path.write_text('{"a": "feature", "y": "label", "s": "sensitive"}')
    assert load_schema(path) == SCHEMA
    path.write_text('{"a": "wat"}')
    with pytest.raises(DatasetError, match="unknown role"):
        load_schema(path)


def _toy(n, seed=0):
    r = np.random.default_rng(seed)
    return make_dataset(r.standard_normal((n, 3)), r.integers(0, 2, n),
                        r.integers(0, 2, n), ["a", "b", "c"])


def test_split_sizes_and_determinism():
    ds = _toy(10)
    rest, test = split(ds, 0.2, seed=7)
    assert (rest.n_rows, test.n_rows) == (8, 2)
    rest2, test2 = split(ds, 0.2, seed=7)
    assert np.array_equal(rest.features, rest2.features)
    assert np.array_equal(test.features, test2.features)
    assert_valid(rest)
    assert_valid(test)


def test_split_degenerate_fraction():
    with pytest.raises(DatasetError, match="degenerate"):
        split(_toy(10), 0.999, seed=0)


@given(st.integers(2, 40), st.floats(0.05, 0.95), st.integers(0, 10 ** 6))
def test_split_roundtrip_multiset(n, fraction, seed):
    ds = _toy(n, seed=1)
    n_test = int(np.floor(fraction * n + 0.5))
    if n_test < 1 or n - n_test < 1:
        return
    rest, test = split(ds, fraction, seed)
    merged = np.vstack([rest.features, test.features])
    original = ds.features[np.lexsort(ds.features.T)]
    recovered = merged[np.lexsort(merged.T)]
    assert np.array_equal(original, recovered)


def test_save_csv_roundtrip(tmp_path):
    ds = _toy(12, seed=3)
    path = tmp_path / "out.csv"
    save_csv(ds, path, label_name="y", sensitive_name="s")
    back = load_csv(path, {"a": "feature", "b": "feature", "c": "feature",
                           "y": "label", "s": "sensitive"})
    assert np.allclose(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)


def test_stale_metadata_rejected():
    ds = _toy(5)
    ds.features[0, 0] += 1.0  # mutate behind the metadata's back
    with pytest.raises(DatasetError, match="stale"):
        assert_valid(ds)
