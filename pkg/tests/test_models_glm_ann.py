import math

import numpy as np
import pytest

from spatialsales import models
from spatialsales.models import ANNConfig, GLMConfig, fit_ann, fit_glm, loss_and_grad
from spatialsales.models.linear import _binomial_deviance, _sigmoid, logit_link
from spatialsales.models.network import LINEAR, LOGISTIC, init_params


class TestGLMGaussian:
    def test_noiseless_recovery(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-3, 3, 200)
        y = 2.0 * x + 1.0
        model = fit_glm(x[:, None], y, ["x"], GLMConfig(), "regression")
        coefs = models.coefficients(model)
        assert coefs["(intercept)"] == pytest.approx(1.0, abs=1e-8)
        assert coefs["x"] == pytest.approx(2.0, abs=1e-8)

    def test_multivariate_recovery(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(300, 4))
        beta = np.array([0.5, -2.0, 3.0, 0.0])
        y = X @ beta + 4.0
        model = fit_glm(X, y, list("abcd"), GLMConfig(), "regression")
        coefs = models.coefficients(model)
        np.testing.assert_allclose(
            [coefs[c] for c in "abcd"], beta, rtol=0, atol=1e-8
        )

    def test_matches_gradient_descent(self):
        # oracle: plain full-batch gradient descent on the least-squares
        # objective over the same standardized design
        rng = np.random.default_rng(2)
        X = rng.normal(size=(150, 3))
        y = X @ np.array([1.0, -1.0, 0.5]) + 2.0 + rng.normal(0, 0.3, 150)
        model = fit_glm(X, y, list("abc"), GLMConfig(), "regression")
        Z = model.params.scaler.transform(X)
        w = np.zeros(Z.shape[1])
        b = y.mean()
        for _ in range(8000):
            resid = y - b - Z @ w
            w += 0.002 * (Z.T @ resid) / len(y)
            b += 0.002 * resid.mean()
        np.testing.assert_allclose(model.params.weights, w, rtol=0, atol=1e-6)
        assert model.params.intercept == pytest.approx(b, abs=1e-6)

    def test_predict_zero_vector_gives_intercept(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(100, 2))
        y = X @ np.array([1.0, 2.0]) + 5.0
        model = fit_glm(X, y, ["a", "b"], GLMConfig(), "regression")
        coefs = models.coefficients(model)
        pred = model.predict(np.zeros((1, 2)), ["a", "b"])
        assert pred[0] == pytest.approx(coefs["(intercept)"], rel=1e-9)


class TestGLMBinomial:
    def test_logit_link_identity(self):
        assert logit_link(0.5) == 0.0

    def test_irls_matches_fine_grid(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=120)
        p = _sigmoid(0.8 * x - 0.4)
        y = (rng.random(120) < p).astype(float)
        model = fit_glm(x[:, None], y, ["x"], GLMConfig(), "classification")
        z = model.params.scaler.transform(x[:, None])[:, 0]

        # fine grid over the 2-parameter standardized problem
        b0s = np.linspace(-2, 2, 401)
        b1s = np.linspace(-2, 2, 401)
        best = np.inf
        for b0 in b0s:
            devs = np.array([_binomial_deviance(y, _sigmoid(b0 + b1 * z)) for b1 in b1s])
            best = min(best, devs.min())
        irls_dev = _binomial_deviance(y, model.predict(x[:, None], ["x"]))
        assert irls_dev <= best + 1e-6

    def test_separable_data_flagged(self):
        x = np.concatenate([np.linspace(-2, -1, 20), np.linspace(1, 2, 20)])
        y = (x > 0).astype(float)
        model = fit_glm(x[:, None], y, ["x"], GLMConfig(max_iter=25), "classification")
        assert not model.params.converged
        assert np.isfinite(model.params.weights).all()  # ridge keeps them bounded

    def test_scores_in_unit_interval(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(80, 3))
        y = (X[:, 0] > 0).astype(float)
        model = fit_glm(X, y, list("abc"), GLMConfig(), "classification")
        s = model.predict(X, list("abc"))
        assert ((s >= 0) & (s <= 1)).all()


def finite_difference_grads(weights, biases, X, y, l1, output, h=1e-5):
    """Central-difference oracle for the network loss."""
    wgrads = [np.zeros_like(W) for W in weights]
    bgrads = [np.zeros_like(b) for b in biases]

    def loss_at():
        return loss_and_grad(weights, biases, X, y, l1, output)[0]

    for W, G in zip(weights, wgrads):
        it = np.nditer(W, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = W[i]
            W[i] = orig + h
            up = loss_at()
            W[i] = orig - h
            down = loss_at()
            W[i] = orig
            G[i] = (up - down) / (2 * h)
    for b, G in zip(biases, bgrads):
        for i in range(len(b)):
            orig = b[i]
            b[i] = orig + h
            up = loss_at()
            b[i] = orig - h
            down = loss_at()
            b[i] = orig
            G[i] = (up - down) / (2 * h)
    return wgrads, bgrads


def max_rel_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(a) + np.abs(n), 1e-8)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


class TestANN:
    def test_zero_hidden_weights_constant_output(self):
        # zeroed hidden layer: the network collapses to its output bias,
        # and dR/d(bias) = -2 * sum(y - f)
        rng = np.random.default_rng(6)
        X = rng.normal(size=(20, 5))
        y = rng.normal(size=20)
        weights, biases = init_params([5, 4, 1], rng)
        weights[0][:] = 0.0
        biases[0][:] = 0.0
        biases[1][:] = 0.7
        loss, wg, bg = loss_and_grad(weights, biases, X, y, 0.0, LINEAR)
        pred = np.full(20, 0.7)
        assert loss == pytest.approx(((y - pred) ** 2).sum(), rel=1e-12)
        assert bg[1][0] == pytest.approx(-2 * (y - pred).sum(), rel=1e-12)

    @pytest.mark.parametrize("l1", [0.0, 1e-3])
    @pytest.mark.parametrize("output", [LINEAR, LOGISTIC])
    def test_gradient_check_5431(self, l1, output):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(20, 5))
        y = rng.normal(size=20) if output == LINEAR else (rng.random(20) > 0.5).astype(float)
        weights, biases = init_params([5, 4, 3, 1], rng)
        for b in biases:  # move biases off zero so the L1 subgradient is smooth
            b += rng.uniform(0.05, 0.2, size=b.shape)
        _, wg, bg = loss_and_grad(weights, biases, X, y, l1, output)
        nwg, nbg = finite_difference_grads(weights, biases, X, y, l1, output)
        assert max_rel_error(wg, nwg) < 1e-4
        assert max_rel_error(bg, nbg) < 1e-4

    def test_xor_trainable(self):
        X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
        y = np.array([0.0, 1.0, 1.0, 0.0])
        cfg = ANNConfig(hidden=(8,), epochs=2000, learning_rate=0.5, l1=0.0, batch_size=4)
        solved = False
        for seed in range(5):
            model = fit_ann(X, y, ["a", "b"], cfg, "classification", seed=seed)
            acc = ((model.predict(X, ["a", "b"]) >= 0.5) == y).mean()
            if acc == 1.0:
                solved = True
                break
        assert solved

    def test_learns_linear_function(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(300, 3))
        y = X @ np.array([1.0, -2.0, 0.5]) + 1.0
        cfg = ANNConfig(hidden=(16,), epochs=200, learning_rate=0.05, l1=0.0, batch_size=64)
        model = fit_ann(X[:200], y[:200], list("abc"), cfg, "regression", seed=0)
        pred = model.predict(X[200:], list("abc"))
        rmse = math.sqrt(((pred - y[200:]) ** 2).mean())
        assert rmse < 0.3 * y.std()

    def test_determinism(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(60, 3))
        y = rng.normal(size=60)
        cfg = ANNConfig(hidden=(8,), epochs=20, learning_rate=0.05, batch_size=16)
        m1 = fit_ann(X, y, list("abc"), cfg, "regression", seed=3)
        m2 = fit_ann(X, y, list("abc"), cfg, "regression", seed=3)
        np.testing.assert_array_equal(m1.predict(X, list("abc")), m2.predict(X, list("abc")))

    def test_restart_on_divergence(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(50, 2)) * 50
        y = rng.normal(size=50) * 1e6
        cfg = ANNConfig(hidden=(8,), epochs=50, learning_rate=1e9, batch_size=8, max_restarts=3)
        try:
            model = fit_ann(X, y, ["a", "b"], cfg, "regression", seed=0)
            assert np.isfinite(model.predict(X, ["a", "b"])).all()
        except models.ModelFitError:
            pass  # aborting after the retries is the documented fallback


class TestImportance:
    def test_single_split_tree(self):
        x = np.linspace(-1, 1, 20)
        X = np.column_stack([x, np.zeros(20)])
        y = (x > 0).astype(float)
        model = models.fit_random_forest(
            X, y, ["a", "b"], models.RFConfig(trees=1, bootstrap_fraction=0.0, min_node=10, m_try=2),
            "regression", seed=0,
        )
        imp = models.variable_importance(model, X, y)
        assert imp.scores["a"] == 1.0
        assert imp.scores["b"] == 0.0

    def test_max_score_is_one(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(100, 4))
        y = X[:, 2] + rng.normal(0, 0.1, 100)
        model = models.fit_gbm(X, y, list("abcd"), models.GBMConfig(iterations=10), "regression")
        imp = models.variable_importance(model, X, y)
        assert max(imp.scores.values()) == 1.0
        assert not imp.all_zero

    def test_all_zero_flagged(self):
        rng = np.random.default_rng(12)
        X = rng.normal(size=(40, 3))
        y = np.full(40, 2.0)
        model = models.fit_random_forest(X, y, list("abc"), models.RFConfig(trees=3), "regression")
        imp = models.variable_importance(model, X, y)
        assert imp.all_zero
        assert set(imp.scores.values()) == {0.0}

    def test_duplicated_column_mass_splits(self):
        rng = np.random.default_rng(13)
        X = rng.normal(size=(300, 3))
        y = 3 * X[:, 0] + rng.normal(0, 0.3, 300)
        cfg = models.RFConfig(trees=50, min_node=10, m_try=2)
        single = models.fit_random_forest(X, y, list("abc"), cfg, "regression", seed=1)
        Xdup = np.column_stack([X, X[:, 0]])
        dup = models.fit_random_forest(Xdup, y, list("abcd"), cfg, "regression", seed=1)
        mass_single = single.importances_raw["a"]
        mass_dup = dup.importances_raw["a"] + dup.importances_raw["d"]
        assert mass_dup == pytest.approx(mass_single, rel=0.10)

    def test_permutation_importance_glm(self):
        rng = np.random.default_rng(14)
        X = rng.normal(size=(400, 3))
        y = 5 * X[:, 1] + rng.normal(0, 0.2, 400)
        model = fit_glm(X[:300], y[:300], list("abc"), GLMConfig(), "regression")
        imp = models.variable_importance(model, X[300:], y[300:])
        assert imp.scores["b"] == 1.0
        assert imp.scores["a"] < 0.1 and imp.scores["c"] < 0.1


class TestGLMSerialization:
    @pytest.mark.parametrize("kind", ["glm", "ann"])
    def test_round_trip(self, tmp_path, kind):
        rng = np.random.default_rng(15)
        X = rng.normal(size=(80, 3))
        X[rng.random(size=X.shape) < 0.15] = np.nan
        y = rng.normal(size=80)
        if kind == "glm":
            model = fit_glm(X, y, list("abc"), GLMConfig(), "regression")
        else:
            cfg = ANNConfig(hidden=(6,), epochs=10, learning_rate=0.05, batch_size=16)
            model = fit_ann(X, y, list("abc"), cfg, "regression", seed=1)
        path = tmp_path / "m.json"
        models.save_model(model, path)
        loaded = models.load_model(path)
        np.testing.assert_array_equal(model.predict(X, list("abc")), loaded.predict(X, list("abc")))
