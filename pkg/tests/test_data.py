import json
import warnings

import numpy as np
import pytest

from dcic.data import (ClassPrior, ClassRatio, Dataset, Projection,
                       TransitionMatrix, empirical_prior, read_dataset_csv,
                       symmetric_noise, validate_transition,
                       write_dataset_csv)


class TestDataset:
    def test_basic_labeled(self):
        data = Dataset(np.zeros((3, 2)), np.array([1, 2, 1]), "clean")
        assert data.n_samples == 3
        assert data.dim == 2
        assert data.n_classes == 2
        assert data.label_kind == "clean"

    def test_unlabeled(self):
        data = Dataset(np.ones((4, 3)))
        assert data.labels is None
        assert data.label_kind == "unlabeled"

    def test_explicit_n_classes(self):
        data = Dataset(np.zeros((2, 1)), np.array([1, 1]), "noisy", n_classes=5)
        assert data.n_classes == 5

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((2, 1)), np.array([0, 1]), "clean")
        with pytest.raises(ValueError):
            Dataset(np.zeros((2, 1)), np.array([1, 3]), "clean", n_classes=2)

    def test_nonfinite_features_rejected(self):
        bad = np.array([[1.0, np.nan], [0.0, 1.0]])
        with pytest.raises(ValueError):
            Dataset(bad)
        with pytest.raises(ValueError):
            Dataset(np.array([[np.inf]]))

    def test_features_frozen(self):
        data = Dataset(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            data.features[0, 0] = 1.0

    def test_bad_label_kind(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((2, 2)), np.array([1, 1]), "fuzzy")

    def test_with_features(self):
        data = Dataset(np.zeros((2, 2)), np.array([1, 2]), "clean")
        swapped = data.with_features(np.ones((2, 3)))
        assert swapped.dim == 3
        assert np.array_equal(swapped.labels, data.labels)
        assert swapped.label_kind == "clean"


class TestTransitionMatrix:
    def test_identity_valid(self):
        q = TransitionMatrix(np.eye(2))
        assert q.n_classes == 2
        assert q.diagonally_dominant

    def test_symmetric_flip_valid(self):
        q = TransitionMatrix(np.array([[0.6, 0.4], [0.4, 0.6]]))
        assert q.diagonally_dominant

    def test_singular_rejected(self):
        with pytest.raises(ValueError):
            TransitionMatrix(np.array([[0.5, 0.5], [0.5, 0.5]]))

    def test_non_stochastic_rejected(self):
        with pytest.raises(ValueError):
            TransitionMatrix(np.array([[0.7, 0.4], [0.4, 0.6]]))
        with pytest.raises(ValueError):
            TransitionMatrix(np.array([[1.2, -0.2], [0.0, 1.0]]))

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            TransitionMatrix(np.ones((2, 3)) / 3.0)

    def test_inverse_roundtrip(self, rng):
        for _ in range(20):
            c = int(rng.integers(2, 5))
            from conftest import random_transition
            q = random_transition(rng, c)
            ident = q.inverse() @ q.q
            assert np.abs(ident - np.eye(c)).max() <= 1e-8

    def test_json_roundtrip(self):
        q = TransitionMatrix(np.array([[0.8, 0.2], [0.3, 0.7]]))
        back = TransitionMatrix.from_json(q.to_json())
        assert np.array_equal(back.q, q.q)
        obj = json.loads(q.to_json())
        assert obj["c"] == 2
        assert len(obj["rows"]) == 2


class TestValidateTransition:
    def test_identity_no_warning(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            validate_transition(np.eye(2))

    def test_symmetric_flip_no_warning(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            validate_transition(np.array([[0.6, 0.4], [0.4, 0.6]]))

    def test_weak_diagonal_warns(self):
        q = np.array([[0.4, 0.6], [0.7, 0.3]])
        with pytest.warns(UserWarning):
            validate_transition(q)

    def test_singular_raises(self):
        with pytest.raises(ValueError):
            validate_transition(np.array([[0.5, 0.5], [0.5, 0.5]]))


class TestSymmetricNoise:
    def test_zero_rate_is_identity(self):
        assert np.array_equal(symmetric_noise(2, 0.0).q, np.eye(2))

    def test_binary_values(self):
        q = symmetric_noise(2, 0.4)
        assert np.allclose(q.q, [[0.6, 0.4], [0.4, 0.6]])

    def test_multiclass_rows(self):
        q = symmetric_noise(4, 0.3)
        assert np.allclose(np.diag(q.q), 0.7)
        off = q.q[~np.eye(4, dtype=bool)]
        assert np.allclose(off, 0.1)

    def test_invalid_rate(self):
        with pytest.raises(ValueError):
            symmetric_noise(2, 1.0)
        with pytest.raises(ValueError):
            symmetric_noise(2, -0.1)


class TestPriorAndRatio:
    def test_prior_simplex_enforced(self):
        with pytest.raises(ValueError):
            ClassPrior(np.array([0.6, 0.6]))
        with pytest.raises(ValueError):
            ClassPrior(np.array([1.2, -0.2]))

    def test_prior_ok(self):
        p = ClassPrior(np.array([0.25, 0.75]))
        assert p.n_classes == 2

    def test_ratio_nonnegative_finite(self):
        ClassRatio(np.array([1.4, 0.6]))
        with pytest.raises(ValueError):
            ClassRatio(np.array([-0.1, 2.1]))
        with pytest.raises(ValueError):
            ClassRatio(np.array([np.inf, 0.0]))


class TestProjection:
    def test_orthonormal_accepted(self):
        w = np.array([[1.0], [0.0]])
        proj = Projection(w)
        assert proj.dim_in == 2
        assert proj.dim_out == 1

    def test_non_orthonormal_rejected(self):
        with pytest.raises(ValueError):
            Projection(np.array([[1.0], [1.0]]))

    def test_apply(self, rng):
        x = rng.standard_normal((5, 3))
        w = np.linalg.qr(rng.standard_normal((3, 2)))[0]
        proj = Projection(w)
        assert np.allclose(proj.apply(x), x @ w)


class TestEmpiricalPrior:
    def test_symmetric_counts(self):
        assert np.allclose(empirical_prior(np.array([1, 1, 2, 2]), 2).p, [0.5, 0.5])

    def test_direct_count(self):
        assert np.allclose(empirical_prior(np.array([1, 1, 1, 2]), 2).p, [0.75, 0.25])

    def test_single_class(self):
        assert np.allclose(empirical_prior(np.array([2, 2, 2]), 3).p, [0, 1, 0])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            empirical_prior(np.array([], dtype=np.int64), 2)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            empirical_prior(np.array([1, 3]), 2)


class TestCsvRoundTrip:
    def test_labeled(self, tmp_path, rng):
        data = Dataset(rng.standard_normal((10, 3)), rng.integers(1, 4, 10), "noisy")
        path = tmp_path / "labeled.csv"
        write_dataset_csv(data, path)
        header = path.read_text().splitlines()[0]
        assert header == "f1,f2,f3,label"
        back = read_dataset_csv(path, label_kind="noisy")
        assert np.array_equal(back.features, data.features)
        assert np.array_equal(back.labels, data.labels)
        assert back.label_kind == "noisy"

    def test_unlabeled(self, tmp_path, rng):
        data = Dataset(rng.standard_normal((4, 2)) * 1e-7)
        path = tmp_path / "plain.csv"
        write_dataset_csv(data, path)
        assert path.read_text().splitlines()[0] == "f1,f2"
        back = read_dataset_csv(path)
        assert np.array_equal(back.features, data.features)
        assert back.labels is None
