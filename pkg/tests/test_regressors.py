import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kqiest import regressors
from kqiest.regressors import (
    ABR_ZERO_LEARNING_RATE,
    FAMILIES,
    GRIDS,
    AdaBoostR2Regressor,
    EstimatorSpec,
    KDTree,
    KNeighborsRegressor,
    MLPRegressor,
    RandomForestRegressor,
    RegressionTree,
    RidgeRegressor,
    SpecError,
    SVRRegressor,
    grid_cells,
    model_from_dict,
    model_to_dict,
)
from kqiest.regressors.mlp import init_params, loss_and_grad
from kqiest.regressors.trees import weighted_median
from kqiest.schema import LeakageError

import oracles


def toy(rng, n=80, d=4, noise=0.1):
    X = rng.standard_normal((n, d))
    y = X @ np.arange(1.0, d + 1) + np.sin(2 * X[:, 0]) + noise * rng.standard_normal(n)
    return X, y


class TestGrids:
    def test_cell_counts(self):
        counts = {f: len(grid_cells(f)) for f in FAMILIES}
        assert counts == {"RF": 36, "RR": 22, "SVR": 336, "KNR": 27, "NN": 35, "ABR": 20}
        assert sum(counts.values()) == 476

    def test_row_major_order(self):
        cells = grid_cells("RR")
        assert cells[0] == {"alpha": 1e-5, "fit_intercept": False}
        assert cells[1] == {"alpha": 1e-5, "fit_intercept": True}
        assert cells[-1] == {"alpha": 1e5, "fit_intercept": True}

    def test_listed_values(self):
        assert GRIDS["RF"]["n_estimators"] == [1, 2, 3, 4, 5, 6]
        assert GRIDS["RF"]["max_depth"] == [5, 6, 7, 8, 9, 10]
        assert GRIDS["SVR"]["epsilon"] == [0.01, 0.1, 0.5, 1.0]
        assert GRIDS["ABR"]["learning_rate"] == [0.0, 0.333, 0.666, 1.0]
        assert GRIDS["NN"]["hidden_layer_sizes"][-1] == (200, 200, 200)


class TestSpec:
    def test_unknown_family(self):
        with pytest.raises(SpecError):
            EstimatorSpec("XGB", {})

    def test_missing_and_extra(self):
        with pytest.raises(SpecError, match="missing"):
            EstimatorSpec("RR", {"alpha": 1.0})
        with pytest.raises(SpecError, match="unexpected"):
            EstimatorSpec("RR", {"alpha": 1.0, "fit_intercept": True, "solver": "x"})

    @pytest.mark.parametrize("family,hp", [
        ("RR", {"alpha": -1.0, "fit_intercept": True}),
        ("KNR", {"leaf_size": 10, "n_neighbors": 0, "p": 2}),
        ("KNR", {"leaf_size": 10, "n_neighbors": 2, "p": 0.5}),
        ("SVR", {"kernel": "linear", "degree": 1, "epsilon": 0.1, "C": 1}),
        ("SVR", {"kernel": "rbf", "degree": 1, "epsilon": 0.1, "C": 0}),
        ("NN", {"alpha": 1e-4, "hidden_layer_sizes": []}),
        ("RF", {"n_estimators": 2.5, "max_depth": 5}),
    ])
    def test_domain_errors(self, family, hp):
        with pytest.raises(SpecError):
            EstimatorSpec(family, hp)

    def test_abr_zero_learning_rate_substituted(self):
        spec = EstimatorSpec("ABR", {"n_estimators": 50, "learning_rate": 0.0})
        hp, notes = spec.effective()
        assert hp["learning_rate"] == ABR_ZERO_LEARNING_RATE
        assert notes and "replaced" in notes[0]

    def test_fit_guards(self, rng):
        spec = EstimatorSpec("RR", {"alpha": 1.0, "fit_intercept": True})
        with pytest.raises(ValueError):
            regressors.fit(spec, np.zeros((1, 2)), np.zeros(1))
        X = rng.standard_normal((5, 2))
        X[0, 0] = np.nan
        with pytest.raises(ValueError):
            regressors.fit(spec, X, np.zeros(5))
        model = regressors.fit(spec, rng.standard_normal((5, 2)), np.zeros(5))
        with pytest.raises(ValueError):
            regressors.predict(model, np.zeros((2, 3)))

    def test_fit_rejects_test_matrix(self, session_split):
        spec = EstimatorSpec("RR", {"alpha": 1.0, "fit_intercept": True})
        regressors.fit(spec, session_split[0], "latency_ms")
        with pytest.raises(LeakageError):
            regressors.fit(spec, session_split[1], "latency_ms")


class TestRidge:
    @pytest.mark.parametrize("alpha", [1e-5, 1.0, 1e3])
    @pytest.mark.parametrize("intercept", [False, True])
    def test_matches_gradient_descent(self, rng, alpha, intercept):
        X = rng.standard_normal((50, 5))
        y = X @ rng.standard_normal(5) + 3.0 + 0.2 * rng.standard_normal(50)
        w_ref, b_ref = oracles.ridge_gd(X, y, alpha, intercept)
        m = RidgeRegressor(alpha, intercept).fit(X, y)
        np.testing.assert_allclose(m.coef_, w_ref, atol=1e-6)
        assert m.intercept_ == pytest.approx(b_ref, abs=1e-6)

    def test_intercept_not_penalized(self, rng):
        X = rng.standard_normal((40, 3))
        y = np.full(40, 7.0)
        m = RidgeRegressor(1e5, True).fit(X, y)
        np.testing.assert_allclose(m.predict(X), 7.0, atol=1e-9)


class TestKnn:
    @pytest.mark.parametrize("p", [1, 2, 3])
    @pytest.mark.parametrize("k", [1, 4])
    def test_matches_brute_force(self, rng, p, k):
        X, y = toy(rng, n=150, d=3)
        Q = rng.standard_normal((40, 3))
        pred = KNeighborsRegressor(k, p, 5).fit(X, y).predict(Q)
        np.testing.assert_allclose(pred, oracles.knn_brute(X, y, Q, k, p), rtol=0, atol=1e-12)

    def test_ties_go_to_lower_index(self):
        X = np.array([[0.0], [1.0], [-1.0], [1.0]])
        idx, dist = KDTree(X, leaf_size=1).query(np.array([[0.5]]), 2)
        np.testing.assert_array_equal(idx[0], [0, 1])
        np.testing.assert_allclose(dist[0], [0.5, 0.5])

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 1000), leaf=st.integers(1, 40))
    def test_leaf_size_invariance(self, seed, leaf):
        r = np.random.default_rng(seed)
        X = np.round(r.standard_normal((60, 2)), 1)  # coarse grid forces distance ties
        Q = np.round(r.standard_normal((15, 2)), 1)
        base = KDTree(X, 1).query(Q, 5, 2.0)
        other = KDTree(X, leaf).query(Q, 5, 2.0)
        np.testing.assert_array_equal(base[0], other[0])

    def test_k_larger_than_n(self, rng):
        with pytest.raises(ValueError):
            KNeighborsRegressor(6).fit(rng.standard_normal((5, 2)), np.zeros(5))


class TestMlp:
    def test_gradient_check(self, rng):
        X = rng.standard_normal((12, 3))
        y = rng.standard_normal(12)
        params = init_params([3, 5, 4, 1], rng)
        _, grads = loss_and_grad(params, X, y, 0.01)
        numeric = oracles.finite_diff_grad(lambda: loss_and_grad(params, X, y, 0.01)[0], params)
        for g, n in zip(grads, numeric):
            rel = np.linalg.norm(g - n) / max(np.linalg.norm(g) + np.linalg.norm(n), 1e-12)
            assert rel < 1e-4

    def test_learns_smooth_function(self, rng):
        X = rng.uniform(-2, 2, (400, 2))
        y = np.sin(X[:, 0]) + X[:, 1] ** 2
        m = MLPRegressor((50, 50), 1e-4, seed=0, epochs=300).fit(X, y)
        assert np.mean(np.abs(m.predict(X) - y)) < 0.15 * np.mean(np.abs(y - y.mean()))

    def test_seed_determinism(self, rng):
        X, y = toy(rng)
        a = MLPRegressor((20,), seed=3, epochs=20).fit(X, y).predict(X)
        b = MLPRegressor((20,), seed=3, epochs=20).fit(X, y).predict(X)
        np.testing.assert_array_equal(a, b)

    def test_runs_every_epoch_by_default(self, rng):
        X = rng.standard_normal((100, 2))
        m = MLPRegressor((10,), seed=0, epochs=50).fit(X, np.zeros(100))
        assert len(m.loss_curve_) == 50

    def test_optional_plateau_stop(self, rng):
        X = rng.standard_normal((100, 2))
        m = MLPRegressor((10,), seed=0, epochs=500, n_iter_no_change=10).fit(X, np.zeros(100))
        assert len(m.loss_curve_) < 500


class TestSvr:
    def test_small_rbf_against_qp(self, rng):
        X = rng.uniform(-1, 1, (30, 2))
        y = np.sin(3 * X[:, 0]) + 0.5 * X[:, 1]
        m = SVRRegressor("rbf", 3, 0.1, 10.0, tol=1e-6).fit(X, y)
        K = oracles.rbf_kernel(X, m.gamma_)
        beta_ref, obj_ref = oracles.svr_dual_qp(K, y, 0.1, 10.0)
        assert m.converged_
        assert abs(m.objective_ - obj_ref) < 1e-2
        assert abs(oracles.svr_dual_objective(K, y, 0.1, m.dual_) - m.objective_) < 1e-8
        assert m.kkt_gap_ < 1e-3

    def test_feasibility(self, rng):
        X, y = toy(rng, n=60)
        m = SVRRegressor("poly", 2, 0.1, 1.0).fit(X, y)
        n = len(y)
        assert np.all(m.dual_ >= 0) and np.all(m.dual_ <= 1.0)
        assert abs(m.dual_[:n].sum() - m.dual_[n:].sum()) < 1e-9

    def test_epsilon_tube(self, rng):
        # a tube wider than the target spread leaves every point inside: no support vectors
        X = rng.standard_normal((20, 2))
        y = 0.01 * rng.standard_normal(20)
        m = SVRRegressor("rbf", 1, 1.0, 1.0).fit(X, y)
        assert len(m.dual_coef_) == 0

    def test_iteration_cap_reported(self, rng):
        X, y = toy(rng, n=60)
        m = SVRRegressor("rbf", 1, 0.01, 100.0, max_iter=3).fit(X, y)
        assert not m.converged_
        assert not regressors.TrainedModel(EstimatorSpec(
            "SVR", {"kernel": "rbf", "degree": 1, "epsilon": 0.01, "C": 100}), 4, m).converged


class TestTrees:
    def test_stump_matches_exhaustive_split(self, rng):
        x = rng.standard_normal(60)
        y = np.where(x > 0.3, 2.0, -1.0) + 0.3 * rng.standard_normal(60)
        t = RegressionTree(1).fit(x[:, None], y)
        _, thr = oracles.best_stump(x, y)
        assert t.threshold_[0] == pytest.approx(thr, abs=1e-12)

    def test_unlimited_depth_interpolates(self, rng):
        X = rng.standard_normal((50, 3))
        y = rng.standard_normal(50)
        np.testing.assert_allclose(RegressionTree().fit(X, y).predict(X), y, atol=1e-12)

    def test_depth_limit(self, rng):
        X, y = toy(rng, n=200)
        assert RegressionTree(3).fit(X, y).n_leaves <= 8

    def test_zero_weight_rows_ignored(self, rng):
        X, y = toy(rng, n=40)
        w = np.r_[np.ones(20), np.zeros(20)]
        a = RegressionTree(4).fit(X, y, w).predict(X)
        b = RegressionTree(4).fit(X[:20], y[:20]).predict(X)
        np.testing.assert_allclose(a, b)

    def test_forest_seeded(self, rng):
        X, y = toy(rng)
        a = RandomForestRegressor(4, 5, seed=1).fit(X, y).predict(X)
        b = RandomForestRegressor(4, 5, seed=1).fit(X, y).predict(X)
        c = RandomForestRegressor(4, 5, seed=2).fit(X, y).predict(X)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)


class TestAdaBoost:
    @settings(max_examples=50, deadline=None)
    @given(vals=st.lists(st.floats(-100, 100), min_size=1, max_size=12),
           data=st.data())
    def test_weighted_median_oracle(self, vals, data):
        w = data.draw(st.lists(st.floats(0.01, 10), min_size=len(vals), max_size=len(vals)))
        v, w = np.array(vals), np.array(w)
        assert weighted_median(v[None, :], w)[0] == oracles.weighted_lower_median(v, w)

    def test_improves_on_single_tree(self, rng):
        X, y = toy(rng, n=300, noise=0.3)
        ab = AdaBoostR2Regressor(50, 1.0, seed=0).fit(X, y)
        single = RegressionTree(3).fit(X, y)
        err = lambda p: np.mean(np.abs(p - y))
        assert err(ab.predict(X)) < err(single.predict(X))

    def test_weights_stay_normalized(self, rng):
        X, y = toy(rng)
        ab = AdaBoostR2Regressor(20, 0.5, seed=0).fit(X, y)
        assert all(math.isclose(s, 1.0) for s in ab.weight_sums_)
        assert np.all(ab.estimator_weights_ > 0)

    def test_zero_learning_rate_rejected_directly(self):
        with pytest.raises(ValueError):
            AdaBoostR2Regressor(10, 0.0)


class TestSerialization:
    @pytest.mark.parametrize("family", FAMILIES)
    def test_round_trip_predictions(self, rng, family):
        X, y = toy(rng, n=60)
        hp = grid_cells(family)[0]
        if family == "NN":
            hp = {"alpha": 1e-3, "hidden_layer_sizes": (8,)}
        model = regressors.fit(EstimatorSpec(family, hp, seed=4), X, y)
        doc = json.loads(json.dumps(model_to_dict(model)))
        back = model_from_dict(doc)
        np.testing.assert_array_equal(back.predict(X), model.predict(X))
        assert back.spec == model.spec

    def test_bad_format(self):
        with pytest.raises(ValueError):
            model_from_dict({"format": "other", "version": 1})


class TestContractExamples:
    @pytest.mark.parametrize("family,tol", [
        ("RR", 1e-6), ("KNR", 1e-12), ("RF", 1e-12), ("ABR", 1e-12), ("SVR", 0.1), ("NN", 1e-2)])
    def test_constant_target(self, rng, family, tol):
        X = rng.standard_normal((40, 3))
        hp = {"RR": {"alpha": 1e-5, "fit_intercept": True},
              "KNR": {"leaf_size": 10, "n_neighbors": 4, "p": 2},
              "RF": {"n_estimators": 3, "max_depth": 5},
              "ABR": {"n_estimators": 50, "learning_rate": 1.0},
              "SVR": {"kernel": "rbf", "degree": 1, "epsilon": 0.1, "C": 1.0},
              "NN": {"alpha": 1e-4, "hidden_layer_sizes": (20,)}}[family]
        model = regressors.fit(EstimatorSpec(family, hp, seed=0), X, np.full(40, 3.5))
        np.testing.assert_allclose(model.predict(rng.standard_normal((10, 3))), 3.5, atol=tol)

    def test_one_neighbor_recovers_training_target(self, rng):
        X, y = toy(rng, n=50)
        np.testing.assert_array_equal(KNeighborsRegressor(1).fit(X, y).predict(X), y)

    def test_ridge_exact_line(self):
        x = np.linspace(-3, 3, 25)[:, None]
        m = RidgeRegressor(1e-5, True).fit(x, 2 * x[:, 0] + 1)
        assert m.coef_[0] == pytest.approx(2.0, abs=1e-4)
        assert m.intercept_ == pytest.approx(1.0, abs=1e-4)

    def test_single_round_adaboost_is_its_tree(self, rng):
        X, y = toy(rng)
        ab = AdaBoostR2Regressor(1, 1.0, seed=3).fit(X, y)
        np.testing.assert_array_equal(ab.predict(X), ab.trees_[0].predict(X))

    def test_deeper_forest_fits_tighter(self):
        x = np.linspace(0, 2 * np.pi, 20)[:, None]
        y = np.sin(x[:, 0])
        err = lambda depth: np.mean(np.abs(
            RandomForestRegressor(6, depth, seed=0).fit(x, y).predict(x) - y))
        assert err(10) < err(5)

    def test_forest_within_target_range(self, rng):
        X, y = toy(rng)
        pred = RandomForestRegressor(6, 10, seed=0).fit(X, y).predict(rng.standard_normal((200, 4)) * 3)
        assert y.min() <= pred.min() and pred.max() <= y.max()

    def test_svr_sine(self, rng):
        x = np.sort(rng.uniform(0, 2 * np.pi, 50))[:, None]
        xt = rng.uniform(0, 2 * np.pi, 200)[:, None]
        m = SVRRegressor("rbf", 1, 0.01, 100.0).fit(x, np.sin(x[:, 0]))
        assert m.converged_
        assert np.mean(np.abs(m.predict(xt) - np.sin(xt[:, 0]))) < 0.1
        K = oracles.rbf_kernel(x, m.gamma_)
        _, qp_obj = oracles.svr_dual_qp(K, np.sin(x[:, 0]), 0.01, 100.0)
        assert abs(m.objective_ - qp_obj) < 1e-2
