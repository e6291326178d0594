import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regrobust.attacks import AttackConfig
from regrobust.data import (
    TEST,
    Dataset,
    compute_neighbors,
    fit_normalizer,
    normalize_dataset,
    split_dataset,
)
from regrobust.defenses import DefenseConfig
from regrobust.errors import ConfigError, DimensionError, SearchFailed, TrainingDiverged
from regrobust.nn import forward, params_to_vector
from regrobust.training import (
    AdamState,
    SearchSpace,
    TrainConfig,
    adam_step,
    random_search,
    sample_defense_config,
    train,
)

from conftest import linear_dataset


class TestAdam:
    def test_zero_gradient_from_rest_leaves_params(self):
        p, s = adam_step(np.array([0.5, -0.25]), np.zeros(2), AdamState.zeros(2), t=1,
                         cfg=TrainConfig())
        assert np.array_equal(p, [0.5, -0.25])
        assert np.all(s.m == 0.0) and np.all(s.v == 0.0)

    def test_zero_gradient_decays_moments(self):
        state = AdamState(m=np.array([1.0, -2.0]), v=np.array([4.0, 9.0]))
        _, s = adam_step(np.array([0.5, 0.5]), np.zeros(2), state, t=3, cfg=TrainConfig())
        assert np.array_equal(s.m, 0.9 * state.m)
        assert np.array_equal(s.v, 0.999 * state.v)

    def test_first_step_matches_hand_computation(self):
        cfg = TrainConfig(learning_rate=1e-3)
        p, s = adam_step(np.zeros(1), np.ones(1), AdamState.zeros(1), t=1, cfg=cfg)
        m_hat = 0.1 / (1 - 0.9)
        v_hat = 0.001 / (1 - 0.999)
        expected = -1e-3 * m_hat / (np.sqrt(v_hat) + 1e-8)
        assert p[0] == pytest.approx(expected, rel=1e-12)
        assert s.m[0] == pytest.approx(0.1, rel=1e-15)
        assert s.v[0] == pytest.approx(0.001, rel=1e-15)

    @settings(max_examples=60)
    @given(st.floats(-100.0, 100.0).filter(lambda g: abs(g) > 1e-6))
    def test_first_step_moves_against_gradient(self, g):
        cfg = TrainConfig()
        p, _ = adam_step(np.zeros(1), np.array([g]), AdamState.zeros(1), t=1, cfg=cfg)
        assert np.sign(p[0]) == -np.sign(g)

    def test_update_magnitude_bounded_by_lr_scale(self):
        # With bias correction the first-step size is ~lr regardless of |g|.
        cfg = TrainConfig(learning_rate=0.01)
        for g in (1e-4, 1.0, 1e4):
            p, _ = adam_step(np.zeros(1), np.array([g]), AdamState.zeros(1), t=1, cfg=cfg)
            assert abs(p[0]) <= cfg.learning_rate * 1.0001

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            adam_step(np.zeros(2), np.zeros(3), AdamState.zeros(2), t=1, cfg=TrainConfig())

    def test_bad_step_index_rejected(self):
        with pytest.raises(ConfigError):
            adam_step(np.zeros(1), np.zeros(1), AdamState.zeros(1), t=0, cfg=TrainConfig())


class TestTrainConfig:
    @pytest.mark.parametrize(
        "kw",
        [{"learning_rate": 0.0}, {"batch_size": 0}, {"epochs": 0},
         {"adam_beta1": 1.0}, {"adam_eps": 0.0}],
    )
    def test_bad_values_rejected(self, kw):
        with pytest.raises(ConfigError):
            TrainConfig(**kw)


class TestTrain:
    def test_fits_linear_data(self, lin_ds):
        # width 1 (the 1-d default) is a single relu hinge and cannot cover
        # the whole line, so give the fit a few units
        cfg = TrainConfig(learning_rate=0.01, epochs=400, seed=0, hidden_dim=8)
        net, hist = train(lin_ds, DefenseConfig(kind="none"), cfg)
        rows = lin_ds.rows(TEST)
        pred = forward(net, lin_ds.features[rows])
        assert np.mean((lin_ds.targets[rows] - pred) ** 2) < 1e-3
        assert len(hist) == 400
        assert hist[-1] < hist[0]
        assert all(np.isfinite(h) for h in hist)

    def test_deterministic_given_seed(self, lin_ds):
        cfg = TrainConfig(learning_rate=0.01, epochs=30, seed=5)
        n1, h1 = train(lin_ds, DefenseConfig(kind="none"), cfg)
        n2, h2 = train(lin_ds, DefenseConfig(kind="none"), cfg)
        assert np.array_equal(params_to_vector(n1), params_to_vector(n2))
        assert h1 == h2

    def test_seed_changes_the_model(self, lin_ds):
        cfg1 = TrainConfig(learning_rate=0.01, epochs=30, seed=5)
        cfg2 = TrainConfig(learning_rate=0.01, epochs=30, seed=6)
        n1, _ = train(lin_ds, DefenseConfig(kind="none"), cfg1)
        n2, _ = train(lin_ds, DefenseConfig(kind="none"), cfg2)
        assert not np.array_equal(params_to_vector(n1), params_to_vector(n2))

    def test_ansr_needs_neighbors(self, lin_ds):
        with pytest.raises(ConfigError, match="neighbors"):
            train(lin_ds, DefenseConfig(kind="ansr"), TrainConfig(epochs=1))

    def test_ansr_deterministic_with_neighbors(self, lin_ds):
        nbrs = compute_neighbors(lin_ds)
        cfg = TrainConfig(learning_rate=0.01, epochs=10, seed=2)
        d = DefenseConfig(kind="ansr", beta=1.0, lam=1.0, n_samples=16)
        n1, _ = train(lin_ds, d, cfg, neighbors=nbrs)
        n2, _ = train(lin_ds, d, cfg, neighbors=nbrs)
        assert np.array_equal(params_to_vector(n1), params_to_vector(n2))

    def test_strong_stability_penalty_flattens_predictions(self, lin_ds):
        # A large penalty weight should visibly shrink the prediction spread
        # relative to an unpenalized run from the same seed.
        nbrs = compute_neighbors(lin_ds)
        cfg = TrainConfig(learning_rate=0.01, epochs=300, seed=1)
        flat, _ = train(
            lin_ds,
            DefenseConfig(kind="ansr", beta=4.0, lam=500.0, n_samples=32),
            cfg,
            neighbors=nbrs,
        )
        free, _ = train(lin_ds, DefenseConfig(kind="none"), cfg)
        X = lin_ds.features
        assert np.std(forward(flat, X)) < 0.5 * np.std(forward(free, X))

    def test_divergence_aborts_with_step_info(self, lin_ds):
        cfg = TrainConfig(learning_rate=1e160, epochs=5, seed=0)
        with pytest.raises(TrainingDiverged, match=r"epoch \d+, step \d+"):
            train(lin_ds, DefenseConfig(kind="none"), cfg)

    def test_sigmoid_output_for_bounded_targets(self):
        rng = np.random.default_rng(9)
        X = rng.uniform(-1, 1, size=(60, 2))
        y = 1.0 / (1.0 + np.exp(-(X[:, 0] + X[:, 1])))
        ds = Dataset(features=X, targets=y, split=None, target_bounded_01=True)
        ds = split_dataset(ds, seed=1)
        net, _ = train(ds, DefenseConfig(kind="none"), TrainConfig(epochs=5, seed=0))
        assert net.output_activation == "sigmoid"
        out = forward(net, ds.features)
        assert np.all(out >= 0.0) and np.all(out <= 1.0)


class TestSearchSpace:
    def test_defaults(self):
        s = SearchSpace()
        assert s.delta == (0.01, 16.0)
        assert s.sigma == (0.01, 16.0)
        assert s.beta == (0.5, 8.0)
        assert s.lam == (0.1, 10.0)
        assert s.n_trials == 20

    def test_bad_range_rejected(self):
        with pytest.raises(ConfigError):
            SearchSpace(beta=(2.0, 1.0))
        with pytest.raises(ConfigError):
            SearchSpace(delta=(0.0, 1.0))
        with pytest.raises(ConfigError):
            SearchSpace(n_trials=0)


class TestSampleDefenseConfig:
    def test_draws_stay_in_ranges(self):
        rng = np.random.default_rng(0)
        space = SearchSpace()
        for _ in range(500):
            c = sample_defense_config("combined", space, rng)
            assert space.delta[0] <= c.delta <= space.delta[1]
            assert space.sigma[0] <= c.sigma <= space.sigma[1]
            assert space.beta[0] <= c.beta <= space.beta[1]
            assert space.lam[0] <= c.lam <= space.lam[1]

    def test_only_relevant_params_drawn(self):
        rng = np.random.default_rng(0)
        c = sample_defense_config("pseudo_huber", SearchSpace(), rng)
        base = DefenseConfig(kind="pseudo_huber")
        assert c.sigma == base.sigma and c.beta == base.beta and c.lam == base.lam
        assert c.delta != base.delta

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            sample_defense_config("magic", SearchSpace(), np.random.default_rng(0))


class TestRandomSearch:
    def test_single_trial_returns_it_and_logs(self, lin_ds):
        space = SearchSpace(n_trials=1)
        cfg = TrainConfig(learning_rate=0.01, epochs=60, seed=0)
        best, records = random_search(
            lin_ds, "pseudo_huber", space, "val_mse_clean", seed=3, train_cfg=cfg
        )
        assert len(records) == 1
        assert records[0].config == best
        assert np.isfinite(records[0].value)
        assert records[0].source == "sampled"

    def test_log_is_complete_and_deterministic(self, lin_ds):
        space = SearchSpace(n_trials=3)
        cfg = TrainConfig(learning_rate=0.01, epochs=40, seed=0)
        _, r1 = random_search(lin_ds, "pseudo_huber", space, "val_mse_clean", 7, cfg)
        _, r2 = random_search(lin_ds, "pseudo_huber", space, "val_mse_clean", 7, cfg)
        assert [r.value for r in r1] == [r.value for r in r2]
        assert [r.config for r in r1] == [r.config for r in r2]
        assert [r.trial for r in r1] == [0, 1, 2]

    def test_argmin_selected(self, lin_ds):
        space = SearchSpace(n_trials=4)
        cfg = TrainConfig(learning_rate=0.01, epochs=40, seed=0)
        best, records = random_search(lin_ds, "pseudo_huber", space, "val_mse_clean", 11, cfg)
        vals = [r.value for r in records]
        assert best == records[int(np.argmin(vals))].config

    def test_injected_candidates_run_first(self, lin_ds):
        space = SearchSpace(n_trials=1)
        cfg = TrainConfig(learning_rate=0.01, epochs=40, seed=0)
        cand = DefenseConfig(kind="pseudo_huber", delta=2.5)
        _, records = random_search(
            lin_ds, "pseudo_huber", space, "val_mse_clean", 5, cfg, candidates=[cand]
        )
        assert len(records) == 2
        assert records[0].source == "injected" and records[0].config == cand
        assert records[1].source == "sampled"

    def test_adversarial_objective_prefers_stability(self):
        # A wiggly noisy target makes the unregularized net steep. The two
        # objectives must disagree about the injected candidates: the attacked
        # one picks the stabilized config, the clean one the unregularized.
        rng = np.random.default_rng(42)
        X = rng.uniform(-2, 2, size=(120, 2))
        y = np.sin(2.0 * X[:, 0]) + 0.5 * X[:, 1] + 0.3 * rng.normal(size=120)
        ds = Dataset(features=X, targets=y, split=None, name="wiggle")
        ds = split_dataset(ds, (0.6, 0.2, 0.2), seed=3)
        ds = normalize_dataset(ds, fit_normalizer(ds))
        nbrs = compute_neighbors(ds)
        weak = DefenseConfig(kind="ansr", lam=0.001, beta=2.0, n_samples=16)
        strong = DefenseConfig(kind="ansr", lam=2.0, beta=2.0, n_samples=16)
        cfg = TrainConfig(learning_rate=0.01, batch_size=16, epochs=200, hidden_dim=12)
        attack = AttackConfig(kind="pgd", epsilon=0.05, rho=0.2, steps=10)
        picks = {}
        for objective in ("val_mse_pgd", "val_mse_clean"):
            best, _ = random_search(
                ds,
                "ansr",
                SearchSpace(n_trials=1),
                objective,
                seed=5,
                train_cfg=cfg,
                neighbors=nbrs,
                attack=attack,
                candidates=(weak, strong),
                n_samples=16,
            )
            picks[objective] = best.lam
        assert picks["val_mse_pgd"] == strong.lam
        assert picks["val_mse_clean"] == weak.lam

    def test_all_diverged_raises_with_log(self, lin_ds):
        space = SearchSpace(n_trials=2)
        cfg = TrainConfig(learning_rate=1e160, epochs=2, seed=0)
        with pytest.raises(SearchFailed) as exc_info:
            random_search(lin_ds, "pseudo_huber", space, "val_mse_clean", 1, cfg)
        assert len(exc_info.value.trials) == 2
        assert all(np.isnan(r.value) for r in exc_info.value.trials)

    def test_bad_objective_rejected(self, lin_ds):
        with pytest.raises(ConfigError):
            random_search(lin_ds, "ansr", SearchSpace(), "test_mse", 0, TrainConfig())

    def test_jobs_do_not_change_results(self, lin_ds):
        space = SearchSpace(n_trials=3)
        cfg = TrainConfig(learning_rate=0.01, epochs=30, seed=0)
        _, serial = random_search(lin_ds, "pseudo_huber", space, "val_mse_clean", 13, cfg, jobs=1)
        _, par = random_search(lin_ds, "pseudo_huber", space, "val_mse_clean", 13, cfg, jobs=2)
        assert [r.value for r in serial] == [r.value for r in par]
