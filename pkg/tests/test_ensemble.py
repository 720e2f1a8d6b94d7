import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from incipient import ensemble as ens
from incipient.learners import NetParams, TrainingError, TreeParams, score, train_tree


@pytest.fixture(scope="module")
def blobs():
    rng = np.random.default_rng(1)
    X = np.vstack([rng.normal(0, 1, (500, 3)), rng.normal(1.5, 1, (500, 3))])
    y = np.repeat([0, 1], 500)
    return X, y


@pytest.fixture(scope="module")
def tree_ensemble(blobs):
    X, y = blobs
    return ens.train_bagging(X, y, "tree", TreeParams(max_depth=6), K=7, max_samples=0.8, seed=11)


unit_matrix = arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 6)), elements=st.floats(0, 1))


class TestBagging:
    def test_member_seeds_distinct(self, tree_ensemble):
        assert len(set(tree_ensemble.member_seeds)) == tree_ensemble.K == 7

    def test_bootstrap_size(self):
        assert ens.bootstrap_indices(10, 0.8, 0).size == 8
        assert ens.bootstrap_indices(7, 0.5, 0).size == 4

    def test_unique_fraction_near_one_minus_inv_e(self):
        n = 1000
        fracs = [np.unique(ens.bootstrap_indices(n, 1.0, s)).size / n for s in range(10_000)]
        assert np.mean(fracs) == pytest.approx(1 - np.exp(-1), abs=0.01)

    def test_single_member_sees_full_bootstrap(self, blobs):
        X, y = blobs
        model = ens.train_bagging(X, y, "tree", TreeParams(max_depth=3), K=1, max_samples=1.0, seed=2,
                                  resample=False)
        idx = ens.bootstrap_indices(y.size, 1.0, model.member_seeds[0])
        alone = train_tree(X[idx], y[idx], TreeParams(max_depth=3))
        assert np.array_equal(alone.score(X), model.members[0].score(X))

    def test_deterministic(self, blobs, tree_ensemble):
        X, y = blobs
        again = ens.train_bagging(X, y, "tree", TreeParams(max_depth=6), K=7, max_samples=0.8, seed=11)
        assert np.array_equal(ens.predict_matrix(again, X), ens.predict_matrix(tree_ensemble, X))

    def test_columns_differ(self, blobs, tree_ensemble):
        M = ens.predict_matrix(tree_ensemble, blobs[0])
        assert len({M[:, k].tobytes() for k in range(M.shape[1])}) >= 2

    def test_identical_members_when_bootstraps_coincide(self, blobs, monkeypatch):
        X, y = blobs
        monkeypatch.setattr(ens, "member_seed", lambda master, k: 123)
        model = ens.train_bagging(X, y, "tree", TreeParams(max_depth=4), K=4, max_samples=1.0, seed=0)
        M = ens.predict_matrix(model, X)
        assert all(np.array_equal(M[:, 0], M[:, k]) for k in range(4))

    def test_net_members_get_own_seed(self, blobs):
        X, y = blobs
        model = ens.train_bagging(X, y, "net", NetParams(epochs=2), K=3, seed=0)
        M = ens.predict_matrix(model, X)
        assert not np.array_equal(M[:, 0], M[:, 1])

    def test_single_class_bootstrap_resampled_then_fails(self):
        # one positive among 200: most bootstraps of size 2 are single class
        X = np.arange(200.0).reshape(-1, 1)
        y = np.zeros(200, dtype=int)
        y[0] = 1
        with pytest.raises(TrainingError, match="single-class"):
            ens.train_bagging(X, y, K=1, max_samples=0.01, seed=0)

    def test_single_class_dev_rejected(self):
        with pytest.raises(TrainingError):
            ens.train_bagging(np.zeros((4, 1)), np.zeros(4))

    @pytest.mark.parametrize("kwargs", [dict(K=0), dict(max_samples=0.0), dict(max_samples=1.5),
                                        dict(mode="median"), dict(family="svm")])
    def test_bad_arguments(self, blobs, kwargs):
        with pytest.raises(ValueError):
            ens.train_bagging(*blobs, **kwargs)


class TestPredictMatrix:
    def test_column_is_standalone_member(self, blobs, tree_ensemble):
        X = blobs[0]
        M = ens.predict_matrix(tree_ensemble, X)
        assert M.shape == (X.shape[0], 7)
        for k, member in enumerate(tree_ensemble.members):
            assert np.array_equal(M[:, k], score(member, X))
        assert ((M >= 0) & (M <= 1)).all()

    def test_persistence_round_trip(self, blobs, tree_ensemble, tmp_path):
        ens.save_ensemble(tree_ensemble, tmp_path / "e")
        back = ens.load_ensemble(tmp_path / "e")
        assert back.member_seeds == tree_ensemble.member_seeds
        assert back.params == tree_ensemble.params
        a, b = ens.predict_matrix(tree_ensemble, blobs[0]), ens.predict_matrix(back, blobs[0])
        assert a.tobytes() == b.tobytes()

    def test_net_persistence_round_trip(self, blobs, tmp_path):
        X, y = blobs
        model = ens.train_bagging(X, y, "net", NetParams(epochs=1), K=2, seed=3)
        ens.save_ensemble(model, tmp_path / "n")
        back = ens.load_ensemble(tmp_path / "n")
        assert ens.predict_matrix(model, X).tobytes() == ens.predict_matrix(back, X).tobytes()


class TestCombine:
    def test_examples(self):
        row = np.array([[0.2, 0.4, 0.6]])
        assert ens.combine(row, "soft")[0] == pytest.approx(0.4)
        assert ens.combine(row, "hard", 0.5)[0] == pytest.approx(1 / 3)
        const = np.full((1, 5), 0.7)
        assert ens.combine(const, "soft", 0.3)[0] == pytest.approx(0.7)
        assert ens.combine(const, "hard", 0.3)[0] == 1.0

    def test_hard_needs_tau(self):
        with pytest.raises(ValueError):
            ens.combine(np.zeros((2, 2)), "hard")

    @given(M=unit_matrix, seed=st.integers(0, 2**32 - 1))
    def test_soft_permutation_invariant(self, M, seed):
        perm = np.random.default_rng(seed).permutation(M.shape[1])
        np.testing.assert_allclose(ens.combine(M[:, perm]), ens.combine(M), atol=1e-15)

    @given(M=unit_matrix, bump=st.floats(0, 1))
    def test_soft_monotone_and_bounded(self, M, bump):
        raised = M.copy()
        raised[0, 0] = min(1.0, raised[0, 0] + bump)
        assert ens.combine(raised)[0] >= ens.combine(M)[0] - 1e-15
        for mode in ("soft", "hard"):
            out = ens.combine(M, mode, 0.5)
            assert ((out >= 0) & (out <= 1)).all()

    @given(col=arrays(np.float64, st.integers(1, 10), elements=st.floats(0, 1)))
    def test_single_member_soft_is_identity(self, col):
        assert np.array_equal(ens.combine(col[:, None]), col)
