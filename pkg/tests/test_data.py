from __future__ import annotations

import numpy as np
import pytest

from core.errors import DataError, PartitionError
from core.models import Dataset
from data.datasets import load_csv, make_blobs, sample_memory, split_public, stratified_indices
from data.partition import dirichlet_partition, pilot_partition
from data.pca import pca_fit, pca_fit_transform


def _assert_exact_partition(assignments, n):
    flat = [i for rows in assignments for i in rows]
    assert sorted(flat) == list(range(n))
    assert all(rows for rows in assignments)


# ── load_csv ─────────────────────────────────────────────────────────


def test_bundled_iris(iris):
    assert iris.n == 150
    assert iris.dim == 4
    assert iris.class_count == 3
    assert iris.class_counts().tolist() == [50, 50, 50]
    assert iris.class_names == ("setosa", "versicolor", "virginica")


def test_single_row_file(tmp_path):
    path = tmp_path / "one.csv"
    path.write_text("1,2,A\n")
    data = load_csv(path)
    assert (data.n, data.dim, data.class_count) == (1, 2, 1)
    assert data.labels.tolist() == [0]
    np.testing.assert_array_equal(data.features, [[1.0, 2.0]])


def test_ragged_row_reports_line_number(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("a,b,label\n1,2,x\n3,4,y\n5,y\n")
    with pytest.raises(DataError, match="line 4") as info:
        load_csv(path, has_header=True)
    assert info.value.line == 4


def test_non_numeric_feature_reports_line_number(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2,x\n1,oops,y\n")
    with pytest.raises(DataError, match="line 2"):
        load_csv(path)


def test_missing_file_is_a_data_error(tmp_path):
    with pytest.raises(DataError):
        load_csv(tmp_path / "nope.csv")


def test_integer_labels_map_by_first_appearance(tmp_path):
    path = tmp_path / "ints.csv"
    path.write_text("0.5,7\n0.1,3\n0.2,7\n")
    assert load_csv(path).labels.tolist() == [0, 1, 0]


# ── make_blobs ───────────────────────────────────────────────────────


def test_blobs_with_zero_std_sit_on_centers():
    centers = [[0.0, 0.0], [3.0, 1.0]]
    data = make_blobs(2, 5, centers, 0.0, seed=1)
    for label, center in enumerate(centers):
        np.testing.assert_array_equal(data.features[data.labels == label], np.tile(center, (5, 1)))


def test_blobs_are_balanced():
    data = make_blobs(3, 10, [[0, 0], [1, 1], [2, 2]], 1.0, seed=1)
    assert data.n == 30
    assert data.class_counts().tolist() == [10, 10, 10]


def test_blob_means_within_clt_bound():
    centers = np.array([[0.0, 0.0], [5.0, -2.0]])
    n, std = 4000, 1.5
    data = make_blobs(2, n, centers, std, seed=3)
    for label, center in enumerate(centers):
        mean = data.features[data.labels == label].mean(axis=0)
        assert np.all(np.abs(mean - center) <= 4 * std / np.sqrt(n))


def test_blobs_reject_mismatched_centers():
    with pytest.raises(ValueError):
        make_blobs(3, 5, [[0, 0]], 1.0, seed=0)


# ── PCA ──────────────────────────────────────────────────────────────


def test_pca_recovers_axis_aligned_directions():
    gen = np.random.default_rng(5)
    features = gen.normal(size=(3000, 2)) * [0.5, 3.0]
    data = Dataset(features=features, labels=np.zeros(3000, dtype=np.int64), class_count=1)
    transform = pca_fit(data)
    first, second = transform.components
    assert np.arccos(min(1.0, abs(first @ [0.0, 1.0]))) < 0.05
    assert np.arccos(min(1.0, abs(second @ [1.0, 0.0]))) < 0.05
    assert transform.explained_variance[0] > transform.explained_variance[1]


def test_pca_on_iris_properties(iris):
    reduced, transform = pca_fit_transform(iris)
    assert reduced.dim == 2
    np.testing.assert_allclose(transform.components @ transform.components.T, np.eye(2), atol=1e-9)
    np.testing.assert_allclose(reduced.features.mean(axis=0), 0.0, atol=1e-9)
    total = reduced.features.var(axis=0, ddof=1).sum()
    assert total == pytest.approx(transform.explained_variance.sum(), rel=1e-9)
    # sign convention: the largest-magnitude loading of each component is positive
    for row in transform.components:
        assert row[np.argmax(np.abs(row))] > 0


def test_pca_ignores_row_duplication(iris):
    doubled = Dataset(
        features=np.vstack([iris.features, iris.features]),
        labels=np.concatenate([iris.labels, iris.labels]),
        class_count=iris.class_count,
    )
    a = pca_fit(iris)
    b = pca_fit(doubled)
    np.testing.assert_allclose(a.components, b.components, atol=1e-9)
    np.testing.assert_allclose(a.mean, b.mean, atol=1e-12)


def test_pca_rejects_constant_data():
    data = Dataset(features=np.ones((5, 3)), labels=np.zeros(5, dtype=np.int64), class_count=1)
    with pytest.raises(DataError):
        pca_fit(data)


# ── split_public / sample_memory ─────────────────────────────────────


def test_split_public_is_stratified(iris):
    train, public = split_public(iris, 0.2, seed=4)
    assert public.n == 30
    assert public.class_counts().tolist() == [10, 10, 10]
    assert train.n == 120


def test_split_indices_are_disjoint_and_covering(iris):
    kept, held = stratified_indices(iris.labels, 3, 0.2, seed=9)
    assert not set(kept) & set(held)
    assert sorted([*kept, *held]) == list(range(150))
    kept2, held2 = stratified_indices(iris.labels, 3, 0.2, seed=9)
    np.testing.assert_array_equal(held, held2)


def test_split_rejects_an_empty_side(iris):
    tiny = iris.subset([0, 50, 100])
    with pytest.raises(DataError):
        split_public(tiny, 0.2, seed=0)


def test_sample_memory_edges(iris):
    assert sample_memory(iris, iris.n, seed=0) == list(range(iris.n))
    (only,) = sample_memory(iris, 1, seed=0)
    assert 0 <= only < iris.n
    with pytest.raises(DataError):
        sample_memory(iris, iris.n + 1, seed=0)


def test_sample_memory_is_uniform():
    public = make_blobs(1, 20, [[0.0, 0.0]], 1.0, seed=0)
    m, trials = 5, 4000
    hits = np.zeros(public.n)
    for seed in range(trials):
        hits[sample_memory(public, m, seed)] += 1
    p = m / public.n
    sigma = np.sqrt(trials * p * (1 - p))
    assert np.all(np.abs(hits - trials * p) <= 4 * sigma)


# ── partitions ───────────────────────────────────────────────────────


def test_single_client_owns_everything(iris):
    part = dirichlet_partition(iris, 1, 0.5, seed=0)
    assert part.assignments == (tuple(range(150)),)


@pytest.mark.parametrize("seed", range(5))
def test_dirichlet_is_an_exact_partition(iris, seed):
    part = dirichlet_partition(iris, 5, 0.3, seed)
    _assert_exact_partition(part.assignments, iris.n)
    assert part.beta == 0.3


def test_large_beta_is_near_iid(iris):
    for seed in range(10):
        part = dirichlet_partition(iris, 3, 1e4, seed)
        matrix = part.class_matrix(iris.labels, 3)
        shares = matrix / matrix.sum(axis=1, keepdims=True)
        assert np.abs(shares - 1 / 3).max() <= 0.05


def test_small_beta_concentrates_classes(iris):
    concentrated = 0
    for seed in range(10):
        part = dirichlet_partition(iris, 3, 0.1, seed)
        _assert_exact_partition(part.assignments, iris.n)
        matrix = part.class_matrix(iris.labels, 3)
        if (matrix.max(axis=0) / matrix.sum(axis=0)).max() >= 0.8:
            concentrated += 1
    assert concentrated >= 5


def test_dirichlet_gives_up_when_clients_cannot_all_get_rows():
    data = make_blobs(1, 3, [[0.0, 0.0]], 1.0, seed=0)
    with pytest.raises(PartitionError):
        dirichlet_partition(data, 5, 0.5, seed=0)


def test_pilot_partition_counts(iris):
    train, _ = split_public(iris, 0.2, seed=0)
    part = pilot_partition(train.labels, 3)
    _assert_exact_partition(part.assignments, train.n)
    matrix = part.class_matrix(train.labels, 3)
    # 40 rows per class: 32 to the owner, 4 to each other client
    assert matrix.tolist() == [[32, 4, 4], [4, 32, 4], [4, 4, 32]]
    assert part.beta is None


def test_pilot_counts_are_rounded():
    labels = np.repeat(np.arange(3), 11)
    matrix = pilot_partition(labels, 3).class_matrix(labels, 3)
    # 8.8 rounds to 9 and 1.1 to 1, nothing left over
    assert matrix.tolist() == [[9, 1, 1], [1, 9, 1], [1, 1, 9]]


def test_pilot_leftover_goes_to_client_zero():
    labels = np.repeat(np.arange(3), 13)
    matrix = pilot_partition(labels, 3).class_matrix(labels, 3)
    # 10.4 -> 10 and 1.3 -> 1 leave one spare row per class
    assert matrix.tolist() == [[11, 2, 2], [1, 10, 1], [1, 1, 10]]


def test_pilot_overshoot_is_taken_from_client_zero():
    labels = np.repeat(np.arange(3), 5)
    part = pilot_partition(labels, 3)
    _assert_exact_partition(part.assignments, 15)
    # 4 + 1 + 1 rounded counts exceed the 5 rows of each class
    assert part.class_matrix(labels, 3).tolist() == [[3, 0, 0], [1, 4, 1], [1, 1, 4]]
