import numpy as np
import pytest

from mlinucb.ingest import (
    DatasetError,
    DatasetSpec,
    dataset_spec,
    fetch_instructions,
    load_csv,
    pca2_variance,
    synth_linear,
)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_toy_csv_with_string_labels(tmp_path):
    path = write(tmp_path, "f1,f2,label\n1,2,a\n3,4,b\n")
    ds = load_csv(DatasetSpec(path=path, label_column="label"))
    assert (ds.n_rounds, ds.dim, ds.n_classes) == (2, 2, 2)
    np.testing.assert_array_equal(ds.labels, [0, 1])
    np.testing.assert_array_equal(ds.contexts, [[1, 2], [3, 4]])


def test_first_appearance_label_order(tmp_path):
    path = write(tmp_path, "0,nonad.\n1,ad.\n2,nonad.\n")
    ds = load_csv(DatasetSpec(path=path))
    np.testing.assert_array_equal(ds.labels, [0, 1, 0])


def test_label_first_column_no_header(tmp_path):
    path = write(tmp_path, "3,1,0\n1,0,1\n3,2,2\n")
    ds = load_csv(DatasetSpec(path=path, label_column=0))
    np.testing.assert_array_equal(ds.labels, [0, 1, 0])
    np.testing.assert_array_equal(ds.contexts[:, 0], [1, 0, 2])


def test_missing_cells_filled_with_column_mean(tmp_path):
    path = write(tmp_path, "1,?,a\n3,4,b\n,8,a\n")
    ds = load_csv(DatasetSpec(path=path))
    np.testing.assert_allclose(ds.contexts, [[1, 6], [3, 4], [2, 8]])


def test_unparseable_row_reports_row_number(tmp_path):
    path = write(tmp_path, "1,2,a\n3,x,b\n")
    with pytest.raises(DatasetError, match="row 2"):
        load_csv(DatasetSpec(path=path))


def test_ragged_row(tmp_path):
    path = write(tmp_path, "1,2,a\n3,b\n")
    with pytest.raises(DatasetError, match="row 2"):
        load_csv(DatasetSpec(path=path))


def test_single_class_rejected(tmp_path):
    path = write(tmp_path, "1,2,a\n3,4,a\n")
    with pytest.raises(DatasetError):
        load_csv(DatasetSpec(path=path))


def test_expected_dims_checked(tmp_path):
    path = write(tmp_path, "1,2,a\n3,4,b\n")
    assert load_csv(DatasetSpec(path=path, expected_dims=(2, 2, 2))).n_rounds == 2
    with pytest.raises(DatasetError):
        load_csv(DatasetSpec(path=path, expected_dims=(2, 3, 2)))


def test_categorical_one_hot(tmp_path):
    path = write(tmp_path, "age,sex,y\n30,M,low\n40,F,high\n50,M,low\n")
    ds = load_csv(DatasetSpec(path=path, label_column="y", categorical_columns=("sex",)))
    np.testing.assert_array_equal(ds.contexts, [[30, 1, 0], [40, 0, 1], [50, 1, 0]])


def test_delimiter_and_scaling(tmp_path):
    path = write(tmp_path, "0;10;a\n5;20;b\n10;30;a\n")
    ds = load_csv(DatasetSpec(path=path, delimiter=";", scale_features=True))
    np.testing.assert_allclose(ds.contexts, [[0, 0], [0.5, 0.5], [1, 1]])


def test_deterministic_loading(tmp_path):
    path = write(tmp_path, "1,?,a\n3,4,b\n5,8,c\n")
    a, b = load_csv(DatasetSpec(path=path)), load_csv(DatasetSpec(path=path))
    assert a.contexts.tobytes() == b.contexts.tobytes()
    assert a.labels.tobytes() == b.labels.tobytes()


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_csv(DatasetSpec(path="/nonexistent/file.csv"))


def test_known_dataset_specs(tmp_path, monkeypatch):
    monkeypatch.setenv("MLINUCB_DATA_DIR", str(tmp_path))
    spec = dataset_spec("cnae9")
    assert spec.path == str(tmp_path / "CNAE-9.data") and spec.label_column == 0
    text = fetch_instructions()
    for name in ("covertype", "cnae9", "internet_ads", "warfarin"):
        assert name in text
    with pytest.raises(DatasetError):
        dataset_spec("unknown")


def test_synth_linear_shapes_and_determinism():
    ds, theta = synth_linear(200, 5, 4, 0.0, 3)
    assert (ds.n_rounds, ds.dim, ds.n_classes) == (200, 5, 4)
    assert np.all(np.linalg.norm(theta, axis=1) <= 1 + 1e-12)
    np.testing.assert_allclose(np.linalg.norm(ds.contexts, axis=1), 1.0)
    np.testing.assert_array_equal(ds.labels, np.argmax(ds.contexts @ theta.T, axis=1))
    ds2, _ = synth_linear(200, 5, 4, 0.0, 3)
    np.testing.assert_array_equal(ds.contexts, ds2.contexts)
    with pytest.raises(ValueError):
        synth_linear(10, 2, 1, 0.0, 0)


def test_pca_rank_two_plane():
    rng = np.random.default_rng(0)
    basis = np.linalg.qr(rng.standard_normal((5, 2)))[0].T
    X = rng.standard_normal((100, 2)) @ basis + 3.0
    frac, coords = pca2_variance(X)
    assert abs(frac - 1.0) <= 1e-10
    assert coords.shape == (100, 2)


def test_pca_invariances_and_projection_variance():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((60, 4)) * [5, 2, 1, 0.5]
    frac, coords = pca2_variance(X)
    assert 0 <= frac <= 1
    Q = np.linalg.qr(rng.standard_normal((4, 4)))[0]
    assert pca2_variance(X @ Q)[0] == pytest.approx(frac, rel=1e-10)
    assert pca2_variance(X + 7.0)[0] == pytest.approx(frac, rel=1e-10)
    eig = np.sort(np.linalg.eigvalsh(np.cov(X.T, bias=True)))[::-1]
    assert coords.var(axis=0).sum() == pytest.approx(eig[:2].sum(), rel=1e-8)
    assert frac == pytest.approx(eig[:2].sum() / eig.sum(), rel=1e-10)


def test_pca_sign_convention_and_zero_variance():
    X = np.array([[1.0, 0], [2, 0], [3, 0], [4, 0]])
    frac, coords = pca2_variance(X)
    assert frac == pytest.approx(1.0)
    assert coords[-1, 0] > 0
    assert pca2_variance(np.ones((4, 3)))[0] == 1.0
    with pytest.raises(ValueError):
        pca2_variance(np.zeros((2, 3)))


def test_named_loaders_on_raw_format_mimics(tmp_path, monkeypatch):
    from mlinucb.ingest import load_dataset

    monkeypatch.setenv("MLINUCB_DATA_DIR", str(tmp_path))
    # ad.data: padded numbers, '?' for missing, 'ad.'/'nonad.' last
    (tmp_path / "ad.data").write_text("  125,  125,1.0,0,1,ad.\n   ?,   ?,   ?,1,0,nonad.\n   60,  468,7.8,0,0,ad.\n")
    ads = load_dataset("internet_ads")
    assert (ads.n_rounds, ads.dim, ads.n_classes) == (3, 5, 2)
    np.testing.assert_allclose(ads.contexts[1, :3], [92.5, 296.5, 4.4])
    # CNAE-9.data: class first
    (tmp_path / "CNAE-9.data").write_text("1,0,2,0\n2,1,0,0\n9,0,0,3\n")
    cnae = load_dataset("cnae9")
    np.testing.assert_array_equal(cnae.labels, [0, 1, 2])
    assert cnae.dim == 3
    # covtype.data: class last
    (tmp_path / "covtype.data").write_text("2596,51,3,5\n2590,56,2,5\n2804,139,9,2\n")
    cov = load_dataset("covertype")
    assert (cov.dim, cov.n_classes) == (3, 2)
    (tmp_path / "warfarin.csv").write_text("age,weight,dose\n5,70,low\n6,80,medium\n7,65,high\n")
    war = load_dataset("warfarin")
    assert (war.n_rounds, war.dim, war.n_classes) == (3, 2, 3)
