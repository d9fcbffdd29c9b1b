import numpy as np
import pytest

from wrckit.errors import NotDifferentiableError, TrainingDivergedError
from wrckit.evalharness import Dataset
from wrckit.models import (BayesOracle, Classifier, LinearModel, MlpModel,
                           TrainConfig, finite_diff_check, load_model,
                           save_model, train_logistic, train_mlp)
from wrckit.rng import RngHandle


def two_cluster_dataset(n=200, margin=0.2, seed=0):
    gen = RngHandle(seed).generator()
    half = n // 2
    a = gen.uniform([0.0, 0.0], [0.5 - margin / 2, 1.0], size=(half, 2))
    b = gen.uniform([0.5 + margin / 2, 0.0], [1.0, 1.0], size=(n - half, 2))
    X = np.vstack([a, b])
    y = np.concatenate([np.full(half, -1), np.full(n - half, 1)]).astype(np.int64)
    return Dataset(name="clusters", X=X, y=y, feature_names=("a", "b"))


class TestDecisionRule:
    def test_tie_resolves_positive(self):
        m = LinearModel([1.0, 0.0], -0.5)
        assert m.decide([0.5, 0.3]) == 1
        assert m.decide([0.49, 0.3]) == -1
        assert m.decide([0.51, 0.3]) == 1

    def test_decide_matches_score_sign_on_random_probes(self):
        model = MlpModel.initialized(3, 8, 8, RngHandle(2))
        X = RngHandle(3).generator().random((100_000, 3))
        s = model.scores(X)
        d = model.decides(X)
        assert np.all(d == np.where(s >= 0.0, 1, -1))

    def test_loaded_weights_decide(self):
        m = LinearModel([1.0, 0.0], -0.5)
        assert m.decide([0.7, 0.2]) == 1


class TestTrainMlp:
    def test_separable_clusters(self):
        model, report = train_mlp(two_cluster_dataset(), TrainConfig(seed=0))
        assert report.val_accuracy >= 0.95
        assert not report.below_threshold

    def test_constant_labels_flagged_degenerate(self):
        ds = two_cluster_dataset()
        ds = Dataset(name=ds.name, X=ds.X, y=np.ones(ds.n, dtype=np.int64),
                     feature_names=ds.feature_names)
        model, report = train_mlp(ds, TrainConfig(seed=0, epochs=5))
        assert report.degenerate
        assert report.val_accuracy == 1.0

    def test_xor_pattern_learnable(self):
        gen = RngHandle(3).generator()
        centers = np.array([[0.25, 0.25], [0.75, 0.75],
                            [0.25, 0.75], [0.75, 0.25]])
        X = np.vstack([gen.normal(c, 0.08, size=(60, 2)) for c in centers])
        y = np.repeat([1, 1, -1, -1], 60).astype(np.int64)
        ds = Dataset(name="xor", X=np.clip(X, 0, 1), y=y,
                     feature_names=("a", "b"))
        _, report = train_mlp(ds, TrainConfig(seed=0, hidden1=16, hidden2=16))
        assert report.val_accuracy >= 0.9

    def test_bit_reproducible(self):
        ds = two_cluster_dataset()
        m1, _ = train_mlp(ds, TrainConfig(seed=7, epochs=20))
        m2, _ = train_mlp(ds, TrainConfig(seed=7, epochs=20))
        probes = RngHandle(1).generator().random((50, 2))
        assert np.array_equal(m1.scores(probes), m2.scores(probes))

    def test_divergence_raises_with_epoch(self):
        # lr * weight_decay >> 2 makes the decay update a geometric blow-up
        ds = two_cluster_dataset()
        with pytest.raises(TrainingDivergedError) as err:
            train_mlp(ds, TrainConfig(seed=0, learning_rate=1e6,
                                      weight_decay=1.0, epochs=10))
        assert err.value.epoch >= 0


class TestTrainLogistic:
    def test_1d_split_boundary_near_half(self):
        gen = RngHandle(7).generator()
        X = np.concatenate([gen.uniform(0, 0.5, 100),
                            gen.uniform(0.5, 1.0, 100)])[:, None]
        y = np.concatenate([np.full(100, -1), np.full(100, 1)]).astype(np.int64)
        ds = Dataset(name="split", X=X, y=y, feature_names=("x",))
        model, report = train_logistic(
            ds, TrainConfig(seed=0, epochs=200, learning_rate=0.5))
        assert abs(-model.b / model.w[0] - 0.5) < 0.05
        assert report.val_accuracy >= 0.95

    def test_zero_epochs_returns_initialization(self):
        ds = two_cluster_dataset()
        model, _ = train_logistic(ds, TrainConfig(seed=0, epochs=0))
        assert np.all(model.w == 0.0)
        assert model.b == 0.0
        assert model.score([0.3, 0.7]) == 0.0


class TestGradients:
    def test_linear_gradient_exact(self):
        m = LinearModel([2.0, -1.0], 0.1)
        report = finite_diff_check(m, [0.4, 0.6])
        assert report.max_rel_error <= 1e-8
        assert not report.kink_adjacent

    def test_mlp_gradient_away_from_kinks(self):
        model = MlpModel.initialized(2, 16, 16, RngHandle(4))
        gen = RngHandle(5).generator()
        checked = 0
        for x in gen.uniform(0.1, 0.9, size=(50, 2)):
            report = finite_diff_check(model, x)
            if not report.kink_adjacent:
                assert report.max_rel_error <= 1e-4
                checked += 1
        assert checked >= 30

    def test_kink_adjacent_flagged(self):
        # put a hidden unit's kink exactly at x: z1 = x0 - 0.5
        model = MlpModel(w1=[[1.0, 0.0], [0.3, 0.4]], b1=[-0.5, 0.0],
                         w2=[[1.0, 0.2], [0.1, 0.9]], b2=[0.05, -0.02],
                         w3=[0.7, -0.3], b3=0.01)
        report = finite_diff_check(model, [0.5, 0.5])
        assert report.kink_adjacent

    def test_not_differentiable_raises(self):
        class Opaque(Classifier):
            @property
            def dim(self):
                return 2

            def score(self, x):
                return 1.0

        with pytest.raises(NotDifferentiableError):
            finite_diff_check(Opaque(), [0.5, 0.5])

    def test_mlp_input_gradient_matches_fd(self):
        model = MlpModel.initialized(4, 8, 8, RngHandle(6))
        x = np.array([0.31, 0.62, 0.47, 0.55])
        g = model.gradient(x)
        h = 1e-6
        for i in range(4):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            fd = (model.score(xp) - model.score(xm)) / (2 * h)
            assert g[i] == pytest.approx(fd, rel=1e-4, abs=1e-8)


class TestBayesOracle:
    class FlatBoundary:
        dim = 1
        flat_level = 0.5

        def heights(self, U):
            return np.full(U.shape[0], 0.5)

        def height_gradient(self, u):
            return np.zeros(1)

    def test_decides_by_vertical_gap(self):
        oracle = BayesOracle(self.FlatBoundary())
        assert oracle.decide([0.3, 0.7]) == 1
        assert oracle.decide([0.3, 0.2]) == -1
        assert oracle.decide([0.3, 0.5]) == 1  # tie rule

    def test_hyperplane_when_flat(self):
        oracle = BayesOracle(self.FlatBoundary())
        w, b = oracle.hyperplane()
        assert w.tolist() == [0.0, 1.0]
        assert b == -0.5


class TestPersistence:
    def test_mlp_round_trip_bit_identical(self, tmp_path):
        model, _ = train_mlp(two_cluster_dataset(), TrainConfig(seed=3, epochs=30))
        path = tmp_path / "m.txt"
        save_model(model, path)
        loaded = load_model(path)
        header = path.read_text().splitlines()[0]
        assert header == "wrckit-model v1 mlp 2 32 32"
        probes = RngHandle(10).generator().random((200, 2))
        assert np.array_equal(model.scores(probes), loaded.scores(probes))

    def test_linear_round_trip(self, tmp_path):
        model = LinearModel([0.123456789012345, -3.0], 0.25)
        path = tmp_path / "lin.txt"
        save_model(model, path)
        loaded = load_model(path)
        assert isinstance(loaded, LinearModel)
        assert np.array_equal(loaded.w, model.w)
        assert loaded.b == model.b

    def test_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("something-else v9 mlp 2 2 2\n0.0\n")
        with pytest.raises(ValueError):
            load_model(path)


def test_mlp_empirical_lipschitz_diagnostic():
    model = MlpModel.initialized(2, 16, 16, RngHandle(21))
    gen = RngHandle(22).generator()
    X = gen.random((10_000, 2))
    Y = np.clip(X + gen.normal(0.0, 0.01, size=X.shape), 0.0, 1.0)
    num = np.abs(model.scores(X) - model.scores(Y))
    den = np.linalg.norm(X - Y, axis=1)
    ok = den > 0
    l_emp = float(np.max(num[ok] / den[ok]))
    assert np.isfinite(l_emp) and l_emp > 0.0
    # global analytic bound: product of layer spectral norms dominates
    bound = (np.linalg.norm(model.w1, 2) * np.linalg.norm(model.w2, 2)
             * np.linalg.norm(model.w3))
    assert l_emp <= bound * (1 + 1e-9)
