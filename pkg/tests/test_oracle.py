import numpy as np
import pytest

from gntk import (
    FiniteGcnConfig,
    GcnHyper,
    LayerWithReplacement,
    LayerWithoutReplacement,
    NodeWise,
    NoSampling,
    TrainSplit,
    build_ring_graph,
    empirical_mask_check,
    empirical_output_covariance,
    evolve_prior,
    gcn_kernels,
    identity_features,
    induced_subgraph,
    mask_with_replacement,
    mask_without_replacement,
    nodewise_mask,
    sample_finite_gcn_output,
    train_finite_gcn,
    uniform_probabilities,
)

from conftest import random_graph, random_psd


@pytest.fixture(scope="module")
def ring12():
    return induced_subgraph(build_ring_graph(), np.arange(12))


class TestFiniteGcnConfig:
    def test_rejects_bad_widths(self):
        hyper = GcnHyper(1.0, 0.0, 2)
        with pytest.raises(ValueError):
            FiniteGcnConfig(widths=(4, 8), hyper=hyper)  # wrong length
        with pytest.raises(ValueError):
            FiniteGcnConfig(widths=(4, 8, 2), hyper=hyper)  # non-scalar output
        with pytest.raises(ValueError):
            FiniteGcnConfig(widths=(4, 0, 1), hyper=hyper)

    def test_rejects_bad_trials(self):
        with pytest.raises(ValueError):
            FiniteGcnConfig(widths=(4, 8, 1), hyper=GcnHyper(1.0, 0.0, 2), n_trials=0)


class TestFiniteOutputs:
    def test_shape_and_determinism(self, ring12):
        cfg = FiniteGcnConfig(widths=(12, 32, 1), hyper=GcnHyper(1.0, 0.1, 2), n_trials=5, seed=4)
        a = sample_finite_gcn_output(ring12, np.eye(12), cfg)
        b = sample_finite_gcn_output(ring12, np.eye(12), cfg)
        assert a.shape == (5, 12)
        assert np.array_equal(a, b)

    def test_x0_shape_checked(self, ring12):
        cfg = FiniteGcnConfig(widths=(12, 32, 1), hyper=GcnHyper(1.0, 0.1, 2), n_trials=1)
        with pytest.raises(ValueError):
            sample_finite_gcn_output(ring12, np.eye(11), cfg)

    def test_bias_only_network_gives_constant_output(self, ring12):
        # sigma_w ~ 0: output is sigma_b * b * 1, so the covariance tends to all-ones
        hyper = GcnHyper(1e-30, 1.0, 2)
        cfg = FiniteGcnConfig(widths=(12, 16, 1), hyper=hyper, n_trials=400, seed=5)
        out = sample_finite_gcn_output(ring12, np.eye(12), cfg)
        assert np.allclose(out, out[:, :1], atol=1e-10)  # constant across nodes
        emp = out.T @ out / cfg.n_trials
        assert np.abs(emp - 1.0).max() < 0.2

    def test_covariance_matches_exact_aggregation(self, ring12):
        hyper = GcnHyper(2.0, 0.1, 2, "relu")
        analytic = gcn_kernels(ring12, identity_features(12), hyper)
        cfg = FiniteGcnConfig(widths=(12, 1024, 1), hyper=hyper, n_trials=50, seed=6)
        emp = empirical_output_covariance(ring12, np.eye(12), cfg, n_columns=512)
        rel = np.linalg.norm(emp - analytic.k) / np.linalg.norm(analytic.k)
        assert rel < 0.05

    def test_covariance_matches_masked_kernel(self, ring12):
        hyper = GcnHyper(2.0, 0.1, 2, "relu")
        scheme = LayerWithReplacement(p=uniform_probabilities(12), n_samples=12)
        analytic = gcn_kernels(ring12, identity_features(12), hyper, scheme)
        cfg = FiniteGcnConfig(
            widths=(12, 1024, 1), hyper=hyper, scheme=scheme, n_trials=400, seed=7
        )
        emp = empirical_output_covariance(ring12, np.eye(12), cfg, n_columns=256)
        rel = np.linalg.norm(emp - analytic.k) / np.linalg.norm(analytic.k)
        assert rel < 0.05

    def test_error_decreases_with_width(self, ring12):
        hyper = GcnHyper(2.0, 0.1, 2, "relu")
        analytic = gcn_kernels(ring12, identity_features(12), hyper)
        wins = 0
        for fam in range(5):
            errs = []
            for width in (512, 2048):
                cfg = FiniteGcnConfig(
                    widths=(12, width, 1), hyper=hyper, n_trials=20, seed=100 + fam
                )
                emp = empirical_output_covariance(ring12, np.eye(12), cfg, n_columns=width)
                errs.append(np.linalg.norm(emp - analytic.k))
            wins += errs[1] < errs[0]
        assert wins >= 4


class TestEmpiricalMaskCheck:
    def _psd(self, n=10):
        rng = np.random.default_rng(42)
        r = rng.standard_normal((n, n))
        return r @ r.T / n + 0.5 * np.ones((n, n)) + 0.5 * np.eye(n)

    def test_with_replacement_within_two_percent(self):
        c = self._psd()
        scheme = LayerWithReplacement(p=uniform_probabilities(10), n_samples=5)
        emp = empirical_mask_check(scheme, c, n_draws=100_000, seed=9)
        target = mask_with_replacement(scheme.p, 5) * c
        assert (np.abs(emp - target) / np.abs(target)).max() < 0.02

    def test_without_replacement_q_one_is_exact(self):
        c = self._psd()
        scheme = LayerWithoutReplacement(q=np.ones(10))
        emp = empirical_mask_check(scheme, c, n_draws=10, seed=0)
        assert np.array_equal(emp, c)

    def test_without_replacement_converges(self):
        c = self._psd()
        scheme = LayerWithoutReplacement(q=np.full(10, 0.5))
        emp = empirical_mask_check(scheme, c, n_draws=100_000, seed=10)
        target = mask_without_replacement(scheme.q) * c
        assert (np.abs(emp - target) / np.abs(target)).max() < 0.03

    def test_nodewise_full_fanout_is_exact_support_block(self, ring12):
        c = self._psd(12)
        scheme = NodeWise(fanout=15)
        x, xp = 0, 5
        emp = empirical_mask_check(scheme, c, n_draws=5, seed=0, graph=ring12, pair=(x, xp))
        expected = nodewise_mask(ring12, 15, x, xp) * c
        assert np.array_equal(emp, expected)

    def test_nodewise_stochastic_matches_mask(self, ring12):
        c = self._psd(12)
        scheme = NodeWise(fanout=3)
        for pair in [(2, 2), (2, 7)]:
            emp = empirical_mask_check(scheme, c, n_draws=200_000, seed=11, graph=ring12, pair=pair)
            target = nodewise_mask(ring12, 3, *pair) * c
            assert np.abs(emp - target).max() < 0.02 * np.abs(target).max()

    def test_nodewise_needs_graph_and_pair(self):
        with pytest.raises(ValueError):
            empirical_mask_check(NodeWise(fanout=2), np.eye(3), 10, seed=0)

    def test_error_shrinks_like_sqrt_draws(self):
        c = self._psd()
        scheme = LayerWithReplacement(p=uniform_probabilities(10), n_samples=5)
        target = mask_with_replacement(scheme.p, 5) * c
        ratios = []
        for rep in range(3):
            e_small = np.abs(empirical_mask_check(scheme, c, 4_000, seed=200 + rep) - target).max()
            e_big = np.abs(empirical_mask_check(scheme, c, 16_000, seed=300 + rep) - target).max()
            ratios.append(e_big / e_small)
        assert np.median(ratios) <= 0.75

    def test_deterministic(self):
        c = self._psd()
        scheme = LayerWithoutReplacement(q=np.full(10, 0.7))
        a = empirical_mask_check(scheme, c, 5_000, seed=12)
        b = empirical_mask_check(scheme, c, 5_000, seed=12)
        assert np.array_equal(a, b)


class TestTraining:
    def _setup(self, n=10, widths=(10, 24, 1), seed=0):
        rng = np.random.default_rng(13)
        g = random_graph(rng, n)
        split = TrainSplit(
            train_idx=np.arange(3), rest_idx=np.arange(3, n), y_b=np.array([1.0, -0.5, 0.25])
        )
        cfg = FiniteGcnConfig(widths=widths, hyper=GcnHyper(1.5, 0.2, 2), n_trials=1, seed=seed)
        return g, split, cfg

    def test_zero_steps_returns_initial_output(self):
        g, split, cfg = self._setup()
        traj = train_finite_gcn(g, np.eye(10), cfg, split, eta=0.1, n_steps=0)
        out = sample_finite_gcn_output(g, np.eye(10), cfg)
        assert traj.shape == (1, 10)
        # same parameter draw order as the sampler's first trial
        ref = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0, 0)))
        del ref
        assert np.isfinite(traj).all()

    def test_gradients_match_finite_differences(self):
        g, split, cfg = self._setup(widths=(10, 6, 1))
        x0 = np.eye(10)
        eta = 1e-2
        traj = train_finite_gcn(g, x0, cfg, split, eta=eta, n_steps=1)

        # rebuild the initial parameters and take one explicit numeric step
        rng = np.random.default_rng(cfg.seed)
        w1 = rng.standard_normal((10, 6))
        b1 = rng.standard_normal(6)
        w2 = rng.standard_normal((6, 1))
        b2 = rng.standard_normal(1)
        sw, sb = np.sqrt(1.5), np.sqrt(0.2)
        a = g.adjacency

        def forward(w1, b1, w2, b2):
            z1 = sw / np.sqrt(10) * (a @ x0 @ w1) + sb * b1[None, :]
            x1 = np.maximum(z1, 0.0)
            return sw / np.sqrt(6) * (a @ x1 @ w2) + sb * b2[None, :]

        def loss(w1, b1, w2, b2):
            f = forward(w1, b1, w2, b2)[:, 0]
            return 0.5 * np.mean((f[split.train_idx] - split.y_b) ** 2)

        eps = 1e-6
        params = [w1, b1, w2, b2]
        grads = []
        for arr in params:
            grad = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + eps
                up = loss(*params)
                arr[idx] = orig - eps
                down = loss(*params)
                arr[idx] = orig
                grad[idx] = (up - down) / (2 * eps)
                it.iternext()
            grads.append(grad)
        stepped = [p - eta * gr for p, gr in zip(params, grads)]
        f_expected = forward(*stepped)[:, 0]
        assert np.allclose(traj[1], f_expected, atol=1e-6)

    def test_loss_decreases_at_stable_rate_figure_setup(self):
        g = build_ring_graph()
        from gntk import figure1_split

        split = figure1_split(g)
        hyper = GcnHyper(32.0, 0.0, 2, "relu")
        x0 = np.eye(100)
        wins = 0
        for seed in range(20):
            cfg = FiniteGcnConfig(widths=(100, 100, 1), hyper=hyper, n_trials=1, seed=seed)
            traj = train_finite_gcn(g, x0, cfg, split, eta=1e-4, n_steps=500)
            loss0 = np.mean((traj[0][split.train_idx] - split.y_b) ** 2)
            loss_end = np.mean((traj[-1][split.train_idx] - split.y_b) ** 2)
            wins += loss_end < loss0
        assert wins >= 19

    def test_divergence_detector_fires_above_stability_limit(self):
        g = build_ring_graph()
        from gntk import figure1_split

        split = figure1_split(g)
        hyper = GcnHyper(32.0, 0.0, 2, "relu")
        cfg = FiniteGcnConfig(widths=(100, 100, 1), hyper=hyper, n_trials=1, seed=0)
        with pytest.warns(RuntimeWarning, match="diverged"):
            traj = train_finite_gcn(g, np.eye(100), cfg, split, eta=0.1, n_steps=50)
        assert traj.shape[0] < 51

    def test_wide_training_tracks_evolved_mean(self):
        g = build_ring_graph()
        from gntk import figure1_split

        split = figure1_split(g)
        hyper = GcnHyper(32.0, 0.0, 2, "relu")
        kp = gcn_kernels(g, identity_features(100), hyper)
        eta_gp, eta_fd = 0.1, 1e-4
        cfg = FiniteGcnConfig(widths=(100, 512, 1), hyper=hyper, n_trials=1, seed=1)
        steps = 12
        traj = train_finite_gcn(g, np.eye(100), cfg, split, eta=eta_fd, n_steps=steps)
        state = evolve_prior(kp, split, eta=eta_gp, t=steps * eta_fd / eta_gp)
        # mean prediction: y + alpha (f0 - y); compare residuals on the training set
        from gntk.dynamics import EvolutionSolver

        solver = EvolutionSolver(kp, split, eta_gp)
        alpha, _ = solver.alpha_beta(steps * eta_fd / eta_gp)
        predicted = split.y_b + alpha @ (traj[0][split.train_idx] - split.y_b)
        scale = np.linalg.norm(traj[0][split.train_idx] - split.y_b)
        assert np.linalg.norm(traj[steps][split.train_idx] - predicted) / scale < 0.10

    def test_deterministic(self):
        g, split, cfg = self._setup()
        a = train_finite_gcn(g, np.eye(10), cfg, split, eta=0.01, n_steps=5)
        b = train_finite_gcn(g, np.eye(10), cfg, split, eta=0.01, n_steps=5)
        assert np.array_equal(a, b)

    def test_rejects_bad_arguments(self):
        g, split, cfg = self._setup()
        with pytest.raises(ValueError):
            train_finite_gcn(g, np.eye(10), cfg, split, eta=0.1, n_steps=-1)
        with pytest.raises(ValueError):
            train_finite_gcn(g, np.eye(10), cfg, split, eta=0.0, n_steps=1)
