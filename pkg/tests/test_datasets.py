import numpy as np
import pytest

from fedabc.datasets import (
    TRIMODAL_MEANS,
    CsvDataset,
    TwoClassSpec,
    generate_trimodal,
    generate_two_class_site,
    ingest_csv,
    stratified_split,
    write_csv,
)
from fedabc.errors import MissingColumn, NonBinaryLabel, NonFiniteFeature, ParseError
from fedabc.rng import RngStream


def test_trimodal_row_count():
    data = generate_trimodal(3000, RngStream(0))
    assert data.x.shape == (9000, 2)
    assert data.components.shape == (9000,)


def test_trimodal_component_means():
    data = generate_trimodal(10000, RngStream(1))
    for j in range(3):
        block = data.x[data.components == j]
        assert block.shape[0] == 10000
        assert np.all(np.abs(block.mean(axis=0) - TRIMODAL_MEANS[j]) < 0.05)


def test_trimodal_deterministic():
    a = generate_trimodal(50, RngStream(2))
    b = generate_trimodal(50, RngStream(2))
    assert np.array_equal(a.x, b.x)


def test_trimodal_true_params():
    data = generate_trimodal(10, RngStream(3))
    assert np.allclose(data.true_params.weights, 1.0 / 3.0)
    assert np.array_equal(data.true_params.means, TRIMODAL_MEANS)


def test_two_class_site_shapes_and_labels():
    spec = TwoClassSpec(
        n_majority=30, n_minority=5, dim=4, class_sep=2.0, site_shift=np.zeros(4)
    )
    rows, labels = generate_two_class_site(spec, RngStream(4))
    assert rows.shape == (35, 4)
    assert labels.sum() == 5
    minority = rows[labels == 1]
    majority = rows[labels == 0]
    assert minority[:, 0].mean() > majority[:, 0].mean()


def test_csv_ingest_well_formed(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("a,b,label\n1.0,2.0,0\n3.5,-1.0,1\n0.0,0.5,0\n")
    ds = ingest_csv(path, "label")
    assert ds.feature_names == ["a", "b"]
    assert ds.x.shape == (3, 2)
    assert list(ds.y) == [0, 1, 0]


def test_csv_ingest_missing_column(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(MissingColumn):
        ingest_csv(path, "label")


def test_csv_ingest_non_binary_label(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("a,label\n1.0,2\n")
    with pytest.raises(NonBinaryLabel):
        ingest_csv(path, "label")


def test_csv_ingest_non_finite(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("a,label\ninf,1\n")
    with pytest.raises(NonFiniteFeature):
        ingest_csv(path, "label")


def test_csv_ingest_malformed(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("a,label\n1.0\n")
    with pytest.raises(ParseError):
        ingest_csv(path, "label")
    with pytest.raises(ParseError):
        ingest_csv(tmp_path / "missing.csv", "label")


def test_csv_round_trip(tmp_path):
    rng = RngStream(5)
    ds = CsvDataset(
        feature_names=["f0", "f1", "f2"],
        label_name="label",
        x=rng.standard_normal((7, 3)),
        y=(rng.standard_normal(7) > 0).astype(int),
    )
    path = tmp_path / "round.csv"
    write_csv(ds, path)
    back = ingest_csv(path, "label")
    assert back.feature_names == ds.feature_names
    assert np.array_equal(back.x, ds.x)  # repr round-trip is exact
    assert np.array_equal(back.y, ds.y)


def test_stratified_split_preserves_classes():
    labels = np.array([0] * 20 + [1] * 5)
    train, test = stratified_split(labels, 0.4, RngStream(6))
    assert set(train) | set(test) == set(range(25))
    assert not set(train) & set(test)
    assert np.sum(labels[test] == 1) >= 1
    assert np.sum(labels[test] == 0) >= 1


def test_stratified_split_single_member_class_goes_to_test():
    labels = np.array([0] * 10 + [1])
    train, test = stratified_split(labels, 0.3, RngStream(7))
    assert 10 in test
    assert np.sum(labels[train] == 1) == 0
