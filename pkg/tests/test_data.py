import numpy as np
import pytest

from ades.data import Dataset, blob_centers, load_csv_dataset, make_blobs, save_csv_dataset
from ades.errors import DatasetError


@pytest.mark.parametrize("K,d", [(2, 2), (3, 2), (4, 3), (2, 5)])
def test_zero_spread_is_separable_by_nearest_center(K, d):
    ds = make_blobs(20, K, d, 0.0, seed=1)
    centers = blob_centers(K, d)
    dist = ((ds.features[:, None, :] - centers[None]) ** 2).sum(-1)
    assert np.mean(dist.argmin(1) == ds.labels) == 1.0


def test_same_seed_identical_and_splits_differ():
    a, b = make_blobs(50, 2, 2, 0.08, seed=4), make_blobs(50, 2, 2, 0.08, seed=4)
    assert a.features.tobytes() == b.features.tobytes() and np.array_equal(a.labels, b.labels)
    c = make_blobs(50, 2, 2, 0.08, seed=4, split="test")
    assert a.features.tobytes() != c.features.tobytes()


def test_blobs_in_unit_box_and_balanced():
    ds = make_blobs(300, 3, 2, 0.2, seed=0)
    assert ds.features.min() >= 0 and ds.features.max() <= 1
    assert np.bincount(ds.labels).tolist() == [300, 300, 300]


def test_linear_probe_separates_toy_blobs():
    ds = make_blobs(1000, 2, 2, 0.08, seed=0)
    x = np.hstack([ds.features, np.ones((len(ds), 1))])
    w, *_ = np.linalg.lstsq(x, 2.0 * ds.labels - 1.0, rcond=None)
    assert np.mean((x @ w > 0) == (ds.labels == 1)) > 0.95


def test_too_many_classes_for_corners():
    with pytest.raises(DatasetError):
        blob_centers(9, 3)


def test_csv_example(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("0.1,0.2,1\n0.3,0.4,0\n")
    ds = load_csv_dataset(p, 2)
    assert len(ds) == 2 and ds.dim == 2
    np.testing.assert_array_equal(ds.features, [[0.1, 0.2], [0.3, 0.4]])
    assert ds.labels.tolist() == [1, 0]


def test_csv_empty_file(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    with pytest.raises(DatasetError, match="empty dataset"):
        load_csv_dataset(p, 2)


@pytest.mark.parametrize("text,fragment", [
    ("0.1,0.2,1\n0.3,x,0\n", ":2:"),
    ("0.1,0.2,1\n0.3,0\n", ":2:"),
    ("0.1,0.2,5\n", "out of range"),
    ("1.5,0.2,0\n", "outside"),
])
def test_csv_errors_name_the_line(tmp_path, text, fragment):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(DatasetError, match=fragment):
        load_csv_dataset(p, 2)


def test_csv_round_trip_is_exact(tmp_path):
    ds = make_blobs(30, 3, 4, 0.1, seed=2)
    save_csv_dataset(tmp_path / "rt.csv", ds)
    back = load_csv_dataset(tmp_path / "rt.csv", 3)
    assert back.features.tobytes() == ds.features.tobytes()
    assert np.array_equal(back.labels, ds.labels)


def test_dataset_batches_cover_everything():
    ds = Dataset(np.zeros((10, 2)), np.zeros(10, dtype=int), 2)
    sizes = [len(y) for _, y in ds.batches(4)]
    assert sizes == [4, 4, 2]
