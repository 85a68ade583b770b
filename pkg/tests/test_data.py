import numpy as np
import pytest

from tabnas.data import DatasetError, load_csv, linearly_separable, split_indices, teacher_classification
from tabnas.errors import ValidationError


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def ten_rows(tmp_path):
    lines = ["a,b,label"] + [f"{i},{i * 0.5},{i % 2}" for i in range(10)]
    return write(tmp_path, "\n".join(lines) + "\n")


def test_split_sizes(tmp_path):
    ds = load_csv(ten_rows(tmp_path), "label", split_ratio=0.8, seed=0)
    assert len(ds.train[1]) == 8 and len(ds.validation[1]) == 2
    assert sorted(np.concatenate([ds.train_indices, ds.validation_indices]).tolist()) == list(range(10))


def test_split_seeded(tmp_path):
    p = ten_rows(tmp_path)
    a, b = load_csv(p, "label", seed=5), load_csv(p, "label", seed=5)
    np.testing.assert_array_equal(a.train[0], b.train[0])
    np.testing.assert_array_equal(a.validation[1], b.validation[1])
    c = load_csv(p, "label", seed=6)
    assert not np.array_equal(a.train_indices, c.train_indices)


def test_split_ratio_checked():
    with pytest.raises(ValidationError):
        split_indices(10, 1.0, 0)


def test_one_hot_categories(tmp_path):
    p = write(tmp_path, "x,colour,y\n1.0,red,a\n2.0,green,b\n3.0,blue,a\n4.0,red,b\n")
    ds = load_csv(p, "y")
    assert ds.num_features == 4
    assert ds.column_names == ["x", "colour=red", "colour=green", "colour=blue"]
    np.testing.assert_array_equal(ds.features[:, 1:], np.eye(3)[[0, 1, 2, 0]])
    np.testing.assert_array_equal(ds.features[:, 1:].sum(axis=1), 1.0)
    assert ds.num_classes == 2 and ds.output_dim == 1


def test_numeric_labels_sorted(tmp_path):
    p = write(tmp_path, "x,y\n1,10\n2,2\n3,7\n4,2\n")
    ds = load_csv(p, "y")
    np.testing.assert_array_equal(ds.labels, [2, 0, 1, 0])
    assert ds.output_dim == 3


def test_ragged_row(tmp_path):
    p = write(tmp_path, "x,y\n1,0\n2,1,5\n")
    with pytest.raises(DatasetError) as err:
        load_csv(p, "y")
    assert err.value.line == 3


def test_unparsable_value(tmp_path):
    p = write(tmp_path, "x,y\n1,0\n2,1\nabc,0\n")
    with pytest.raises(DatasetError) as err:
        load_csv(p, "y")
    assert err.value.line == 4 and "abc" in str(err.value)


def test_single_class(tmp_path):
    with pytest.raises(DatasetError, match="single value"):
        load_csv(write(tmp_path, "x,y\n1,0\n2,0\n"), "y")


def test_missing_label_column(tmp_path):
    with pytest.raises(DatasetError, match="not in header"):
        load_csv(ten_rows(tmp_path), "target")


def test_standardize_uses_training_rows(tmp_path):
    ds = load_csv(ten_rows(tmp_path), "label", standardize=True)
    Xt = ds.train[0]
    np.testing.assert_allclose(Xt.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(Xt.std(axis=0), 1.0, rtol=1e-12)


def test_synthetic_generators():
    ds = linearly_separable(100, d=3, seed=1)
    assert ds.features.shape == (100, 3) and set(ds.labels.tolist()) == {0, 1}
    t = teacher_classification(400, d=5, seed=2)
    assert t.features.shape == (400, 5) and abs(t.labels.mean() - 0.5) <= 0.01
    np.testing.assert_array_equal(t.labels, teacher_classification(400, d=5, seed=2).labels)
