import gzip
import io
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from sgnopt.data_io import Dataset, ParseError, dumps_libsvm, parse_libsvm, save_libsvm, synth_logistic, write_libsvm

FIXTURES = Path(__file__).parent / "fixtures"

MALFORMED = {
    "bad_value.svm": 2,
    "zero_index.svm": 2,
    "unsorted.svm": 2,
    "duplicate.svm": 1,
    "multiclass.svm": 3,
    "bad_index.svm": 2,
    "missing_colon.svm": 2,
    "nonfinite.svm": 1,
    "bad_label.svm": 1,
}


def test_parse_single_line():
    ds = parse_libsvm(b"1 1:0.5 3:-1.2\n")
    assert (ds.n, ds.d) == (1, 3)
    assert ds.labels[0] == 1.0
    np.testing.assert_array_equal(ds.features.toarray(), [[0.5, 0.0, -1.2]])


def test_zero_one_labels():
    assert parse_libsvm("0 2:1\n".encode()).labels[0] == -1.0


def test_write_matches_example():
    ds = parse_libsvm(b"1 1:0.5 3:-1.2\n")
    assert dumps_libsvm(ds) == "1 1:0.5 3:-1.2\n"
    empty = Dataset(np.zeros(0), sp.csr_matrix((0, 3)))
    assert dumps_libsvm(empty) == ""


def test_good_fixture_and_sources():
    path = FIXTURES / "good.svm"
    ds = parse_libsvm(path)
    assert (ds.n, ds.d) == (2, 3)
    np.testing.assert_array_equal(ds.labels, [1.0, -1.0])
    raw = path.read_bytes()
    assert parse_libsvm(gzip.compress(raw)) == ds
    assert parse_libsvm(io.BytesIO(raw)) == ds
    assert parse_libsvm(io.StringIO(raw.decode())) == ds
    assert parse_libsvm(str(path), n_features=5).d == 5
    with pytest.raises(ValueError):
        parse_libsvm(path, n_features=2)


@pytest.mark.parametrize("name,line", sorted(MALFORMED.items()))
def test_malformed_fixtures_rejected(name, line):
    with pytest.raises(ParseError) as info:
        parse_libsvm(FIXTURES / name)
    assert info.value.lineno == line
    assert str(info.value).startswith(f"line {line}:")


def random_dataset(seed: int) -> Dataset:
    r = np.random.default_rng(seed)
    n, d = int(r.integers(0, 30)), int(r.integers(1, 40))
    dense = r.standard_normal((n, d))
    dense *= 10.0 ** r.integers(-20, 20, size=(n, d))
    dense[r.random((n, d)) < 0.7] = 0.0
    labels = np.where(r.random(n) < 0.5, 1.0, -1.0)
    return Dataset(labels, sp.csr_matrix(dense))


def test_round_trip_100_datasets(tmp_path):
    for seed in range(100):
        ds = random_dataset(seed)
        text = dumps_libsvm(ds)
        back = parse_libsvm(text.encode(), n_features=ds.d)
        assert back == ds
    save_libsvm(ds, tmp_path / "x.svm")
    assert (tmp_path / "x.svm").read_text() == text


@given(st.lists(st.tuples(st.booleans(), st.dictionaries(st.integers(1, 50),
       st.floats(allow_nan=False, allow_infinity=False).filter(lambda v: v != 0), max_size=8)), max_size=10))
def test_round_trip_property(rows):
    lines = []
    for positive, feats in rows:
        parts = ["1" if positive else "-1"] + [f"{k}:{v!r}" for k, v in sorted(feats.items())]
        lines.append(" ".join(parts))
    text = "".join(line + "\n" for line in lines)
    ds = parse_libsvm(text.encode())
    assert dumps_libsvm(ds) == text
    buf = io.StringIO()
    write_libsvm(ds, buf)
    assert parse_libsvm(buf.getvalue().encode(), n_features=ds.d) == ds


def test_synth_logistic():
    a = synth_logistic(300, 5, condition=1.0, seed=3)
    b = synth_logistic(300, 5, condition=1.0, seed=3)
    assert a == b
    assert set(np.unique(a.labels)) <= {-1.0, 1.0}
    cov = np.cov(a.features.toarray(), rowvar=False)
    w = np.linalg.eigvalsh(cov)
    assert w[-1] / w[0] <= 2.0
    c = synth_logistic(2000, 5, condition=100.0, seed=3)
    w = np.linalg.eigvalsh(np.cov(c.features.toarray(), rowvar=False))
    assert 50 <= w[-1] / w[0] <= 200
    assert synth_logistic(300, 5, seed=4) != a
