import itertools
import os
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
import stubs
from qensemble import ensemble, optim
from qensemble.data import Dataset, generate_linear
from qensemble.ensemble import CombinationRule, EnsembleConfig
from qensemble.errors import ConfigurationError, TrainingError
from qensemble.optim import TrainConfig
from qensemble.qnn import QnnModel


class TestSelection:
    def test_bootstrap(self):
        rng = np.random.default_rng(0)
        idx = ensemble.bootstrap_indices(200, 0.2, rng)
        assert idx.size == 40 and idx.min() >= 0 and idx.max() < 200
        assert ensemble.bootstrap_indices(10, 1.0, np.random.default_rng(1)).size == 10
        np.testing.assert_array_equal(ensemble.bootstrap_indices(50, 0.5, np.random.default_rng(3)),
                                      ensemble.bootstrap_indices(50, 0.5, np.random.default_rng(3)))
        assert ensemble.bootstrap_indices(3, 0.01, rng).size == 1

    def test_bootstrap_has_duplicates_eventually(self):
        idx = ensemble.bootstrap_indices(10, 1.0, np.random.default_rng(5))
        assert len(set(idx)) < 10

    @pytest.mark.parametrize("d,rf,rounding,size", [
        (5, 0.3, "half_up", 2), (5, 0.3, "floor", 1), (8, 0.3, "floor", 2), (13, 0.8, "half_up", 10),
        (5, 0.8, "half_up", 4), (5, 0.5, "half_up", 3), (5, 0.5, "floor", 2), (7, 1.0, "floor", 7),
        (2, 0.1, "floor", 1),
    ])
    def test_subspace_sizes(self, d, rf, rounding, size):
        idx = ensemble.subspace_indices(d, rf, np.random.default_rng(0), rounding)
        assert idx.size == size
        assert np.all(np.diff(idx) > 0) and idx.max() < d

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            EnsembleConfig(n_estimators=0)
        with pytest.raises(ConfigurationError):
            EnsembleConfig(sample_ratio=0.0)
        with pytest.raises(ConfigurationError):
            EnsembleConfig(feature_ratio=1.2)
        with pytest.raises(ConfigurationError):
            EnsembleConfig(scheme="stacking")
        with pytest.raises(ConfigurationError):
            EnsembleConfig(rounding="ceil")


class TestCombine:
    def test_examples(self):
        assert ensemble.combine(np.array([0, 0, 1]), "majority_vote", task="classification") == 0
        assert ensemble.combine(np.array([0, 1]), "weighted_majority_vote", [1, 3], task="classification") == 1
        assert ensemble.combine(np.array([0, 1]), "majority_vote", task="classification") == 0  # tie

    def test_regression_rules(self):
        p = np.array([[0.1, 0.5], [0.3, -0.5], [0.8, 0.0]])
        np.testing.assert_allclose(ensemble.combine(p, "average"), [0.4, 0.0])
        np.testing.assert_allclose(ensemble.combine(p, "weighted_average", [1, 1, 2]), [0.5, 0.0])
        np.testing.assert_allclose(ensemble.combine(p, "min"), [0.1, -0.5])
        np.testing.assert_allclose(ensemble.combine(p, "max"), [0.8, 0.5])
        np.testing.assert_allclose(ensemble.combine(p, "weighted_median", [1, 1, 5]), [0.8, 0.0])

    def test_rule_task_mismatch(self):
        with pytest.raises(ConfigurationError):
            ensemble.combine(np.zeros((2, 3)), "borda", task="regression")
        with pytest.raises(ConfigurationError):
            ensemble.combine(np.zeros((2, 3, 2)), "min", task="classification")
        with pytest.raises(ConfigurationError):
            ensemble.combine(np.zeros((2, 3)), "weighted_average", [1, 0])

    def test_borda_matches_brute_force(self, rng):
        for _ in range(200):
            probs = rng.dirichlet(np.ones(3), size=3)
            got = ensemble.combine(probs, "borda", task="classification")
            assert got == oracles.borda_brute_force(probs)

    def test_borda_exhaustive_distinct_rankings(self):
        perms = list(itertools.permutations([0.5, 0.3, 0.2]))
        for trio in itertools.combinations(perms, 3):
            probs = np.array(trio)
            assert ensemble.combine(probs, "borda", task="classification") == oracles.borda_brute_force(probs)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.1, 100))
    def test_permutation_and_scale_invariance(self, seed, scale):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(1, 6))
        preds = rng.uniform(-1, 1, (m, 4))
        w = rng.uniform(0.1, 2, m)
        perm = rng.permutation(m)
        np.testing.assert_allclose(ensemble.combine(preds[perm], "average"), ensemble.combine(preds, "average"),
                                   atol=1e-12)
        np.testing.assert_allclose(ensemble.combine(preds, "weighted_average", w * scale),
                                   ensemble.combine(preds, "weighted_average", w), atol=1e-12)
        probs = rng.dirichlet(np.ones(3), size=(m, 4))
        np.testing.assert_array_equal(
            ensemble.combine(probs, "weighted_majority_vote", w * scale, task="classification"),
            ensemble.combine(probs, "weighted_majority_vote", w, task="classification"))


class TestJury:
    def test_examples(self):
        assert ensemble.jury_probability(3, 0.6) == pytest.approx(0.216, abs=1e-15)
        for m in (2, 5, 9):
            assert ensemble.jury_probability(m, 1.0) == 1.0
        assert ensemble.jury_probability(1, 0.7) == 0.0  # empty range as printed
        assert ensemble.jury_probability(3, 0.6, threshold=2) == pytest.approx(0.648)

    def test_monotone_in_p(self):
        grid = np.linspace(0, 1, 41)
        for m in (1, 2, 3, 7, 15):
            vals = [ensemble.jury_probability(m, p) for p in grid]
            assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))

    def test_monte_carlo(self):
        rng = np.random.default_rng(1)
        mc = oracles.jury_monte_carlo(5, 0.6, 4, 1_000_000, rng)
        assert abs(ensemble.jury_probability(5, 0.6) - mc) < 0.002


class TestBoostingOracles:
    def test_adaboost_r2_trace(self):
        ens, learner = stubs.r2_run()
        exp = stubs.r2_expected()
        assert [t.accepted for t in ens.history] == [True, True, False]
        assert len(ens.members) == 2
        for t, lbar in zip(ens.history, exp["avg_losses"]):
            assert t.average_loss == pytest.approx(lbar, abs=1e-12)
        for t, beta, mw in zip(ens.history, exp["betas"], exp["member_weights"]):
            assert t.beta == pytest.approx(beta, abs=1e-12)
            assert t.member_weight == pytest.approx(mw, abs=1e-12)
        for t, w in zip(ens.history, exp["weights"]):
            np.testing.assert_allclose(t.sample_weights_before, w, atol=1e-12)
            assert t.sample_weights_before.sum() == pytest.approx(1, abs=1e-9)
        preds = np.stack([m.predictor.outputs for m in ens.members])
        expected_pred = (exp["member_weights"][0] * preds[0] + exp["member_weights"][1] * preds[1]) \
            / sum(exp["member_weights"])
        np.testing.assert_allclose(ens.predict(stubs.R2_X), expected_pred, atol=1e-12)

    def test_adaboost_r2_perfect_member(self):
        learner = stubs.ScriptedLearner([stubs.R2_Y, stubs.R2_Y + 1])
        ens = ensemble.fit_adaboost_r2(Dataset(stubs.R2_X, stubs.R2_Y), EnsembleConfig("adaboost_r2", 5),
                                       learner=learner)
        assert len(ens.members) == 1 and len(learner.calls) == 1
        assert ens.members[0].weight == pytest.approx(math.log(1e10))
        np.testing.assert_allclose(ens.predict(stubs.R2_X), stubs.R2_Y)

    def test_adaboost_r2_first_member_kept(self):
        learner = stubs.ScriptedLearner([stubs.R2_Y + np.array([1.0, 1.0, 0.0, 1.0])])
        ens = ensemble.fit_adaboost_r2(Dataset(stubs.R2_X, stubs.R2_Y), EnsembleConfig("adaboost_r2", 5),
                                       learner=learner)
        assert len(ens.members) == 1 and ens.members[0].weight == 1.0

    def test_samme_r_trace(self):
        ens, learner = stubs.samme_r_run()
        exp = stubs.samme_r_expected()
        np.testing.assert_allclose(learner.calls[0][2], exp["weights"][0], atol=1e-12)
        np.testing.assert_allclose(learner.calls[1][2], exp["weights"][1], atol=1e-12)
        np.testing.assert_allclose(ens.history[-1].sample_weights_after, exp["weights"][2], atol=1e-12)
        np.testing.assert_allclose(ens.decision_function(np.zeros((4, 3))), exp["scores"], atol=1e-12)
        np.testing.assert_array_equal(ens.predict(np.zeros((4, 3))), np.argmax(exp["scores"], axis=1))

    def test_samme_r_uniform_learner_keeps_weights(self):
        learner = stubs.ScriptedLearner([np.full((4, 3), 1 / 3)] * 2)
        data = Dataset(np.zeros((4, 3)), stubs.SR_Y, "classification")
        ens = ensemble.fit_adaboost_samme_r(data, EnsembleConfig("adaboost_samme_r", 2), learner=learner)
        np.testing.assert_allclose(ens.history[-1].sample_weights_after, 0.25, atol=1e-15)
        np.testing.assert_allclose(ens.decision_function(np.zeros((4, 3))), 0.0, atol=1e-12)

    def test_scheme_task_checks(self):
        with pytest.raises(ConfigurationError):
            ensemble.fit_adaboost_r2(Dataset(np.zeros((4, 3)), stubs.SR_Y, "classification"),
                                     EnsembleConfig("adaboost_r2"))
        with pytest.raises(ConfigurationError):
            ensemble.fit_adaboost_samme_r(Dataset(stubs.R2_X, stubs.R2_Y), EnsembleConfig("adaboost_samme_r"))

    def test_member_failure_is_wrapped(self):
        def broken(train_set, seed, sample_weight=None):
            raise FloatingPointError("boom")
        with pytest.raises(TrainingError) as err:
            ensemble.fit_bagging(Dataset(stubs.R2_X, stubs.R2_Y), EnsembleConfig(), learner=broken)
        assert err.value.member == 0


@pytest.fixture(scope="module")
def linear():
    from qensemble.data import prepare
    return prepare(generate_linear(60, 5, 0.1, seed=0), seed=0)


class TestBaggingQnn:
    def test_degenerate_identity(self, linear):
        tr = TrainConfig(epochs=5)
        ens = ensemble.fit_bagging(linear.train, EnsembleConfig("bagging", 1, 1.0, 1.0, seed=11), tr, layers=2)
        fm = optim.train(QnnModel.create(5, 2, seed=11), linear.train, tr.replace(seed=11)).model
        assert np.array_equal(ens.predict(linear.test.features), fm.predict(linear.test.features))

    def test_members_and_resources(self, linear):
        ens = ensemble.fit_bagging(linear.train, EnsembleConfig("bagging", 4, 0.2, 0.8, seed=2),
                                   TrainConfig(epochs=2), layers=2)
        assert len(ens.members) == 4
        for m in ens.members:
            assert m.feature_indices.size == 4 == m.predictor.config.n_qubits
        total = ens.resources()
        assert total.trainable_params == 4 * 3 * 2 * 4
        assert total.cnot_gates == 4 * 2 * 2 * 3
        assert np.all(ens.weights == 1.0)

    def test_classification_bagging_averages_probabilities(self, rng):
        X = rng.uniform(-1, 1, (20, 4))
        y = (X[:, 0] > 0).astype(int) + (X[:, 1] > 0).astype(int)
        data = Dataset(X, y, "classification")
        ens = ensemble.fit_bagging(data, EnsembleConfig("bagging", 3, 1.0, 0.8, seed=0), TrainConfig(epochs=2),
                                   layers=1)
        probs = ens.predict_proba(X)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0)
        np.testing.assert_array_equal(ens.predict(X), np.argmax(probs, axis=1))
        with pytest.raises(ConfigurationError):
            ensemble.fit_bagging(data, EnsembleConfig("bagging", 1, 1.0, 0.3, seed=0), TrainConfig(epochs=1))

    def test_adaboost_r2_with_qnn_weights_normalized(self, linear):
        ens = ensemble.fit_adaboost_r2(linear.train, EnsembleConfig("adaboost_r2", 3, seed=1), TrainConfig(epochs=3),
                                       layers=1)
        for t in ens.history:
            assert t.sample_weights_after.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(np.isfinite(ens.weights))


class TestDeepModelMagnitudes:
    def test_adaboost_r2_tracks_fm_at_ten_layers(self):
        from qensemble.data import load_builtin, prepare
        lin = prepare(load_builtin("linear", seed=0), seed=0)
        tr = TrainConfig(epochs=150)
        fm = optim.train(QnnModel.create(5, 10, seed=0), lin.train, tr).model
        ens = ensemble.fit_adaboost_r2(lin.train, EnsembleConfig("adaboost_r2", 10, seed=0), tr, layers=10)
        fm_mse = optim.mse_loss(fm.predict(lin.test.features), lin.test.targets)
        ada_mse = optim.mse_loss(ens.predict(lin.test.features), lin.test.targets)
        assert abs(ada_mse - fm_mse) <= 0.01

    @pytest.mark.slow
    @pytest.mark.skipif(os.environ.get("QENSEMBLE_FULL_ACCEPTANCE") != "1",
                        reason="about 45 min; set QENSEMBLE_FULL_ACCEPTANCE=1")
    def test_samme_r_wine_ten_layers(self):
        from qensemble.data import load_builtin, prepare
        wine = prepare(load_builtin("wine"), seed=0)
        ens = ensemble.fit_adaboost_samme_r(wine.train, EnsembleConfig("adaboost_samme_r", 10, seed=0),
                                            TrainConfig(epochs=150), layers=10)
        assert np.mean(ens.predict(wine.test.features) == wine.test.targets) >= 0.90
