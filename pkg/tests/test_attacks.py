"""Attack primitives against analytic stub models and small trained models."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rulattack import attacks, models, ndgrad as ng
from rulattack.attacks import (
    AttackConfig,
    Perturbation,
    check_fool,
    fgsm,
    inner_min_r,
    load_perturbation,
    project_linf,
    save_perturbation,
    uap_compute,
)
from rulattack.data import Window
from rulattack.errors import ConfigError, DomainError, FormatError


class SumModel:
    """f(X) = sum of all entries; gradient is exactly ones."""

    model_id = "sum"

    def forward(self, x):
        return ng.sum_all(x)


def _windows(xs, ys):
    return [
        Window(x=np.asarray(x, dtype=np.float64), y=float(y), engine_id=i + 1, end_cycle=10)
        for i, (x, y) in enumerate(zip(xs, ys))
    ]


class TestFgsm:
    def test_zero_epsilon_is_identity(self):
        x = np.random.default_rng(0).uniform(0, 1, (4, 3))
        adv = fgsm(SumModel(), x, label=10.0, epsilon=0.0)
        np.testing.assert_array_equal(adv, x)

    def test_linear_model_underprediction_pushes_down(self):
        # L = (f - Y)^2, so with Y > f(X) the loss gradient is negative everywhere
        x = np.full((4, 5), 0.1)
        y = x.sum() + 5.0
        adv = fgsm(SumModel(), x, label=y, epsilon=0.01)
        np.testing.assert_allclose(adv - x, -0.01)

    def test_step_size_reached_when_gradients_nonzero(self):
        x = np.random.default_rng(1).uniform(0, 1, (3, 3))
        adv = fgsm(SumModel(), x, label=0.0, epsilon=0.02)  # Y < f: push up
        assert np.abs(adv - x).max() == pytest.approx(0.02)
        assert set(np.round(np.unique(adv - x), 12)) <= {0.02}

    def test_elements_move_by_plus_minus_epsilon_or_zero(self, trained_lstm, small_split):
        w = small_split["test_windows"][0]
        model = models.RulPredictor(trained_lstm)
        adv = fgsm(model, w.x, w.y, epsilon=0.005)
        deltas = np.unique(np.round(adv - w.x, 12))
        assert set(deltas) <= {-0.005, 0.0, 0.005}

    def test_clamp_keeps_unit_interval(self, trained_lstm, small_split):
        w = small_split["test_windows"][0]
        model = models.RulPredictor(trained_lstm)
        adv = fgsm(model, w.x, w.y, epsilon=0.5, clamp_inputs=True)
        assert adv.min() >= 0.0 and adv.max() <= 1.0


class TestProjectLinf:
    def test_inside_ball_unchanged(self):
        u = np.array([[0.005, -0.002], [0.0, 0.009]])
        np.testing.assert_array_equal(project_linf(u, 0.01), u)

    def test_clamp_values(self):
        assert project_linf(np.array([0.5]), 0.01)[0] == 0.01
        assert project_linf(np.array([-0.02]), 0.01)[0] == -0.01

    def test_negative_epsilon_rejected(self):
        with pytest.raises(DomainError):
            project_linf(np.zeros(2), -0.1)

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=20),
        st.floats(0, 1, allow_nan=False),
    )
    def test_idempotent_contraction(self, values, eps):
        u = np.array(values)
        proj = project_linf(u, eps)
        np.testing.assert_array_equal(project_linf(proj, eps), proj)
        assert np.abs(proj).max() <= min(np.abs(u).max(), eps) + 1e-15
        assert np.abs(proj).max() <= eps


class TestCheckFool:
    def test_counting(self):
        # f = sum; thresholds (1+0.1)*y
        xs = [np.full((2, 2), v / 4.0) for v in (12.0, 10.0, 9.0, 20.0)]
        ys = [10.0, 10.0, 10.0, 10.0]  # threshold 11: fooled are 12 and 20
        ratio = check_fool(SumModel(), _windows(xs, ys), None, alpha=0.1)
        assert ratio == 0.5

    def test_all_and_none(self):
        xs = [np.full((2, 2), 1.0)] * 3  # f = 4
        assert check_fool(SumModel(), _windows(xs, [1.0] * 3), None, 0.1) == 1.0
        assert check_fool(SumModel(), _windows(xs, [100.0] * 3), None, 0.1) == 0.0

    def test_strict_inequality_at_threshold(self):
        xs = [np.full((1, 2), 5.5)]  # f = 11 == (1+0.1)*10 exactly
        assert check_fool(SumModel(), _windows(xs, [10.0]), None, 0.1) == 0.0

    def test_zero_rul_windows_excluded(self):
        xs = [np.full((2, 2), 1.0)] * 2
        wins = _windows(xs, [1.0, 0.0])
        assert check_fool(SumModel(), wins, None, 0.1) == 1.0  # denominator is 1

    def test_no_positive_labels_is_error(self):
        with pytest.raises(DomainError):
            check_fool(SumModel(), _windows([np.ones((2, 2))], [0.0]), None, 0.1)

    def test_monotone_in_alpha(self):
        # f = sum: y = 10 and sums 10.5..14 straddle the (1+alpha)*10 thresholds
        xs = [np.full((2, 2), v / 4.0) for v in (10.5, 11.5, 12.5, 14.0)]
        wins = _windows(xs, [10.0] * 4)
        ratios = [check_fool(SumModel(), wins, None, alpha=a) for a in (0.02, 0.1, 0.3)]
        assert ratios == [1.0, 0.75, 0.25]
        assert ratios[0] >= ratios[1] >= ratios[2]

    def test_monotone_in_alpha_on_trained_model(self, trained_gru, small_split):
        model = models.RulPredictor(trained_gru)
        wins = small_split["test_windows"][:60]
        u = np.full(wins[0].x.shape, 0.1)
        ratios = [check_fool(model, wins, u, alpha=a) for a in (0.02, 0.1, 0.3)]
        assert ratios[0] >= ratios[1] >= ratios[2]


class TestInnerMinR:
    def test_pre_satisfied_returns_zero_after_zero_steps(self):
        x = np.full((2, 2), 10.0)  # f = 40 > 1.1 * 5
        r, converged = inner_min_r(SumModel(), x, 5.0, 0.1, step=0.01, max_iters=5)
        assert converged
        np.testing.assert_array_equal(r, np.zeros((2, 2)))

    def test_linear_model_one_step_analytic(self):
        # f = 1.0 on a 10x10 grid; one step of 0.01 adds exactly 1.0
        x = np.full((10, 10), 0.01)
        r, converged = inner_min_r(SumModel(), x, 1.0, 0.1, step=0.01, max_iters=20)
        assert converged
        np.testing.assert_allclose(r, 0.01)
        assert (x + r).sum() == pytest.approx(2.0)

    def test_iteration_budget_yields_best_effort(self):
        x = np.zeros((2, 2))  # f = 0, needs sum > 110; one step gives 0.04
        r, converged = inner_min_r(SumModel(), x, 100.0, 0.1, step=0.01, max_iters=1)
        assert not converged
        assert np.abs(r).max() > 0

    def test_dead_gradient_flagged(self):
        class DeadModel:
            def forward(self, x):
                return ng.scale(ng.sum_all(x), 0.0)

        r, converged = inner_min_r(DeadModel(), np.ones((2, 2)), 5.0, 0.1, 0.01, 10)
        assert not converged
        np.testing.assert_array_equal(r, np.zeros((2, 2)))


class TestUapCompute:
    def test_paper_default_config(self):
        cfg = AttackConfig()
        assert (cfg.epsilon, cfg.alpha, cfg.r_fool, cfg.e_fool) == (0.01, 0.1, 0.99, 3)
        assert cfg.effective_inner_step == pytest.approx(0.001)

    def test_config_validation(self):
        for bad in (
            dict(epsilon=-1),
            dict(alpha=0),
            dict(r_fool=0),
            dict(r_fool=1.5),
            dict(e_fool=0),
            dict(inner_step=0.0),
            dict(inner_max_iters=0),
        ):
            with pytest.raises(ConfigError):
                AttackConfig(**bad)

    def test_zero_epsilon_returns_zero_and_baseline(self, trained_lstm, small_split):
        model = models.RulPredictor(trained_lstm)
        wins = small_split["test_windows"][:50]
        cfg = AttackConfig(epsilon=0.0, inner_step=0.001, e_fool=2, seed=1)
        pert = uap_compute(model, wins, cfg)
        np.testing.assert_array_equal(pert.u, np.zeros_like(pert.u))
        assert pert.achieved_fooling == check_fool(model, wins, None, cfg.alpha)

    def test_norm_bound_holds_at_every_update(self, trained_lstm, small_split):
        model = models.RulPredictor(trained_lstm)
        wins = small_split["test_windows"][::4]  # mixed engines, none fooled at baseline
        cfg = AttackConfig(epsilon=0.01, e_fool=1, inner_max_iters=5, seed=3)
        seen = []
        pert = uap_compute(model, wins, cfg, on_update=lambda u: seen.append(np.abs(u).max()))
        assert seen, "expected at least one update"
        assert all(v <= 0.01 for v in seen)
        assert np.abs(pert.u).max() <= 0.01

    def test_epoch_budget_is_never_exceeded(self, trained_lstm, small_split):
        model = models.RulPredictor(trained_lstm)
        wins = small_split["test_windows"][::8]
        cfg = AttackConfig(epsilon=1e-6, r_fool=1.0, e_fool=2, inner_max_iters=2, seed=3)
        pert = uap_compute(model, wins, cfg)
        assert pert.epochs_run == 2  # tiny ball cannot reach r_fool = 1

    def test_deterministic_given_seed(self, trained_gru, small_split):
        model = models.RulPredictor(trained_gru)
        wins = small_split["test_windows"][::6]
        cfg = AttackConfig(epsilon=0.01, e_fool=1, inner_max_iters=4, seed=11)
        a = uap_compute(model, wins, cfg)
        b = uap_compute(model, wins, cfg)
        np.testing.assert_array_equal(a.u, b.u)
        assert a.achieved_fooling == b.achieved_fooling

    def test_different_seeds_give_different_perturbations(self, trained_gru, small_split):
        # order matters once the mid-epoch guard starts skipping fooled samples
        model = models.RulPredictor(trained_gru)
        wins = small_split["test_windows"][::4]
        a = uap_compute(model, wins, AttackConfig(epsilon=0.1, e_fool=2, inner_max_iters=3, seed=1))
        b = uap_compute(model, wins, AttackConfig(epsilon=0.1, e_fool=2, inner_max_iters=3, seed=2))
        assert not np.array_equal(a.u, b.u)
        assert np.abs(a.u).max() <= 0.1 and np.abs(b.u).max() <= 0.1

    def test_already_fooled_dataset_runs_zero_epochs(self):
        xs = [np.full((2, 2), 10.0)] * 3  # f = 40 >> 1.1 * 2
        pert = uap_compute(SumModel(), _windows(xs, [2.0] * 3), AttackConfig(seed=0))
        assert pert.epochs_run == 0
        assert pert.achieved_fooling == 1.0
        np.testing.assert_array_equal(pert.u, 0.0)

    def test_empty_dataset_rejected(self):
        with pytest.raises(DomainError):
            uap_compute(SumModel(), [], AttackConfig())

    def test_fooling_improves_on_trained_model(self, trained_lstm, small_split):
        model = models.RulPredictor(trained_lstm)
        fit = small_split["test_windows"][::3]
        cfg = AttackConfig(epsilon=0.1, e_fool=2, seed=5)
        pert = uap_compute(model, fit, cfg)
        test = small_split["test_windows"]
        before = check_fool(model, test, None, cfg.alpha)
        after = check_fool(model, test, pert.u, cfg.alpha)
        assert after > before
        stack = np.stack([w.x for w in test])
        shift = models.predict(trained_lstm, stack + pert.u) - models.predict(trained_lstm, stack)
        assert shift.mean() > 0  # the attack pushes predictions up on average


class TestPerturbationFiles:
    def _pert(self):
        return Perturbation(
            u=np.array([[0.01, -0.01], [0.0, 0.005]]),
            epsilon=0.01,
            alpha=0.1,
            source_model="lstm",
            achieved_fooling=0.5,
            epochs_run=2,
        )

    def test_round_trip(self, tmp_path):
        path = tmp_path / "u.json"
        save_perturbation(self._pert(), path)
        loaded = load_perturbation(path)
        np.testing.assert_array_equal(loaded.u, self._pert().u)
        assert loaded.source_model == "lstm"
        assert loaded.epochs_run == 2

    def test_truncated_rejected(self, tmp_path):
        path = tmp_path / "u.json"
        save_perturbation(self._pert(), path)
        path.write_text(path.read_text()[:40])
        with pytest.raises(FormatError):
            load_perturbation(path)

    def test_norm_violation_rejected(self, tmp_path):
        import json

        path = tmp_path / "u.json"
        save_perturbation(self._pert(), path)
        doc = json.loads(path.read_text())
        doc["values"][0][0] = 0.5
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatError, match="epsilon"):
            load_perturbation(path)
