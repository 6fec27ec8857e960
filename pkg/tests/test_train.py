import warnings

import numpy as np
import pytest

from fd import central_diff, rel_err
from snelfs.data import BINARY, MULTICLASS, REGRESSION, Dataset, Task, gen_linreg, gen_madelon, gen_xor
from snelfs.fslayer import init_fs_weights, omega_a_grad, omega_s_grad
from snelfs.nn import Architecture, MlpParams, init_params
from snelfs.presets import PRESETS, build_config, get_preset
from snelfs.schedule import CyclicSchedule, LambdaCycle
from snelfs.train import (TrainConfig, default_schedule, objective, objective_grad, select_features,
                          snel_ranker, train)


def small_schedule(lo=0.01, hi=0.2, steps=2, eps=1):
    return CyclicSchedule(LambdaCycle(lo, hi, steps, 1), LambdaCycle(lo, hi, steps, 1), eps)


def toy(output="sigmoid", n_out=1, seed=0, m=6, dim=2, hidden=(3,), l1=0.01, l2=0.01):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((12, m))
    x = (x - x.mean(0)) / x.std(0)
    if output == "linear":
        y = rng.standard_normal(12)
    else:
        y = rng.integers(0, max(n_out, 2), 12).astype(float)
    arch = Architecture(dim, hidden, output, n_out, l1, l2)
    mlp = init_params(arch, seed)
    w = rng.normal(0, 0.3, (m, dim))
    return x, y, arch, mlp, w


def away_from_kinks(x, w, mlp):
    a = x @ w
    col = np.abs(w).sum(0)
    var = np.mean(a * a, 0)
    pre = a @ mlp.weights[0] + mlp.biases[0]
    return (np.abs(col - 1).min() > 1e-3 and np.abs(var - 1).min() > 1e-3 and np.abs(pre).min() > 1e-6
            and min(np.abs(p).min() for p in mlp.weights) > 1e-6)


class TestObjective:
    def test_zero_multipliers_give_plain_loss(self):
        x, y, arch, mlp, w = toy()
        f, parts = objective(w, mlp, x, y, 0.0, 0.0, arch)
        assert f == pytest.approx(parts["l"] + parts["reg"])
        f2, _ = objective(w, mlp, x, y, 0.3, 0.2, arch)
        assert f2 == pytest.approx(f + 0.3 * parts["omega_s"] + 0.2 * parts["omega_a"])

    def test_one_hot_weights_have_no_penalty(self):
        x, y, arch, mlp, _ = toy()
        w = np.zeros((6, 2))
        w[1, 0] = 1.0
        w[4, 1] = -1.0
        f, parts = objective(w, mlp, x, y, 0.5, 0.5, arch)
        assert parts["omega_s"] == 0.0 and parts["omega_a"] == pytest.approx(0.0, abs=1e-12)
        assert f == pytest.approx(parts["l"] + parts["reg"])

    def test_penalties_at_initialization(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((400, 500))
        x = (x - x.mean(0)) / x.std(0)
        arch = Architecture(15, (5, 5))
        _, parts = objective(init_fs_weights(500, 15), init_params(arch, 0), x, np.zeros(400), 0.1, 0.1, arch)
        assert parts["omega_s"] == 0.0
        assert parts["omega_a"] >= 15 * 0.75 - 1e-9

    @pytest.mark.parametrize("seed", range(8))
    @pytest.mark.parametrize("output,n_out", [("sigmoid", 1), ("softmax", 3), ("linear", 1)])
    def test_gradient_matches_finite_differences(self, seed, output, n_out):
        x, y, arch, mlp, w = toy(output, n_out, seed)
        if not away_from_kinks(x, w, mlp):
            pytest.skip("near a kink")
        g = objective_grad(w, mlp, x, y, 0.05, 0.05, arch)

        def f():
            return objective(w, mlp, x, y, 0.05, 0.05, arch)[0]

        num = central_diff(f, [w, *mlp.weights, *mlp.biases])
        for a, n in zip(g.arrays(), num):
            assert rel_err(a, n) < 1e-5

    def test_zero_multipliers_leave_backprop_term(self):
        x, y, arch, mlp, w = toy()
        g = objective_grad(w, mlp, x, y, 0.0, 0.0, arch)
        np.testing.assert_allclose(g.fs, x.T @ g.inputs)

    def test_frozen_loss_decomposition(self):
        x, _, arch, mlp, w = toy("linear")
        w[:, 0] *= 4.0  # one column over the budget
        mlp = MlpParams([np.zeros_like(p) for p in mlp.weights], [np.zeros_like(b) for b in mlp.biases],
                        "linear")
        g = objective_grad(w, mlp, x, np.zeros(12), 0.3, 0.7, arch)
        np.testing.assert_allclose(g.fs, 0.3 * omega_s_grad(w) + 0.7 * omega_a_grad(w, x), atol=1e-15)

    def test_return_value_matches_objective(self):
        x, y, arch, mlp, w = toy("softmax", 3)
        _, f, parts = objective_grad(w, mlp, x, y, 0.1, 0.2, arch, return_value=True)
        f2, parts2 = objective(w, mlp, x, y, 0.1, 0.2, arch)
        assert f == pytest.approx(f2, rel=1e-14)
        assert parts == pytest.approx(parts2)

    def test_descent_with_small_step(self):
        from snelfs.nn import AdamState, adam_step

        x, y, arch, mlp, w = toy(seed=3)
        state = AdamState(lr=1e-4)
        values = []
        for _ in range(11):
            g, f, _ = objective_grad(w, mlp, x, y, 0.05, 0.05, arch, return_value=True)
            values.append(f)
            new = adam_step(state, [w, *mlp.weights, *mlp.biases], [g.fs, *g.weights, *g.biases])
            w = new[0]
            mlp = MlpParams.from_arrays(new[1:], mlp.output)
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(small_schedule(), dim=0)
        with pytest.raises(ValueError):
            TrainConfig(small_schedule(), lr=0)
        with pytest.raises(ValueError):
            TrainConfig(small_schedule(), metric="auc")
        with pytest.raises(ValueError):
            TrainConfig(small_schedule(), batch_size="half")

    def test_json_round_trip(self):
        cfg = TrainConfig(small_schedule(), dim=4, hidden=(3, 2), batch_size="full", seed=5)
        assert TrainConfig.from_json(cfg.to_json()) == cfg

    def test_presets_follow_paper_settings(self):
        xor, mad, xor5k = PRESETS["xor"], PRESETS["mad"], PRESETS["xor5k"]
        assert (xor.schedule.lambda_s.min, xor.schedule.lambda_s.max) == (0.001, 0.02)
        assert (mad.schedule.lambda_a.min, mad.schedule.lambda_a.max) == (0.01, 0.2)
        assert mad.schedule.lambda_s.steps == 38 and mad.schedule.epochs_per_stage == 1
        assert mad.hidden == (5, 5) and mad.l1 == mad.l2 == 0.01 and mad.dim == 15
        assert xor5k.schedule.lambda_a.steps == 19 and xor5k.schedule.epochs_per_stage == 10
        assert xor5k.hidden == (10,) and xor5k.l1 == 0.0 and PRESETS["reg5k"].l2 == 0.01
        for cfg in PRESETS.values():
            assert cfg.schedule.lambda_s.cycles == 1 and cfg.schedule.lambda_a.cycles == 2

    def test_build_config(self):
        cfg = build_config({"preset": "mad", "lr": 5e-5, "lambda_s": {"range": "tiny"},
                            "lambda_a": {"steps": 3}, "epochs_per_stage": 2})
        assert cfg.lr == 5e-5
        assert (cfg.schedule.lambda_s.min, cfg.schedule.lambda_s.max) == (0.001, 0.01)
        assert cfg.schedule.lambda_a.steps == 3 and cfg.schedule.epochs_per_stage == 2
        with pytest.raises(KeyError):
            build_config({"preset": "mad", "learning_rate": 1})
        with pytest.raises(KeyError):
            get_preset("nope")


def quick_cfg(**kw):
    base = dict(schedule=small_schedule(), dim=3, hidden=(4,), l1=0.01, l2=0.01, lr=1e-2, seed=0)
    base.update(kw)
    return TrainConfig(**base)


class TestTrain:
    def test_epoch_count_and_history(self):
        ds = gen_madelon(0, 60, 10).dataset
        cfg = quick_cfg(schedule=small_schedule(steps=3, eps=2))
        rep = train(ds, cfg)
        assert rep.n_stages == cfg.schedule.n_stages == 36
        assert rep.epochs_run == cfg.schedule.n_epochs == 72
        assert all(v.shape == (72,) for v in rep.history.values())
        assert rep.history["lambda_s"][0] == 0.01

    def test_deterministic(self):
        ds = gen_madelon(1, 60, 10).dataset
        a, b = train(ds, quick_cfg()), train(ds, quick_cfg())
        assert a.to_json(include_weights=True) == b.to_json(include_weights=True)

    def test_minibatch_deterministic(self):
        ds = gen_xor(1, 80, 6).dataset
        a, b = train(ds, quick_cfg(batch_size=16)), train(ds, quick_cfg(batch_size=16))
        np.testing.assert_array_equal(a.best.fs_weights.w, b.best.fs_weights.w)

    def test_best_is_admissible(self):
        ds = gen_madelon(2, 80, 10).dataset
        rep = train(ds, quick_cfg(schedule=small_schedule(steps=4)))
        if not rep.no_admissible_model:
            assert rep.best.avg_penalty_s <= 0.3 and rep.best.avg_penalty_a <= 0.3
        assert max(rep.history["val_metric"]) >= rep.best.val_metric

    def test_no_admissible_model_flag(self):
        ds = gen_madelon(2, 60, 10).dataset
        with pytest.warns(UserWarning, match="penalty limit"):
            rep = train(ds, quick_cfg(penalty_limit=0.0, lr=1e-5))
        assert rep.no_admissible_model
        assert rep.to_json()["no_admissible_model"] is True
        assert rep.best.val_metric == max(rep.history["val_metric"])

    def test_zero_multipliers_drift_without_penalty(self):
        ds = gen_madelon(0, 60, 10).dataset
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = train(ds, quick_cfg(schedule=small_schedule(0.0, 0.0)))
        assert (rep.history["lambda_s"] == 0).all()
        assert not np.allclose(rep.best.fs_weights.w, 1 / 20)

    def test_split_and_standardization(self):
        ds = gen_linreg(0, 50, 8).dataset
        rep = train(ds, quick_cfg())
        assert np.intersect1d(rep.train_indices, rep.val_indices).size == 0
        assert rep.train_indices.size == 40
        assert rep.history["val_metric"].max() <= 0.0  # neg_mse

    def test_validation_rows_never_reach_gradients(self, monkeypatch):
        import snelfs.train as t

        ds = gen_madelon(3, 50, 6).dataset
        seen = []
        orig = t.objective_grad

        def spy(fs, mlp, x, *args, **kw):
            seen.append(x.copy())
            return orig(fs, mlp, x, *args, **kw)

        monkeypatch.setattr(t, "objective_grad", spy)
        rep = train(ds, quick_cfg(batch_size=7))
        x_tr = ds.x[rep.train_indices]
        z_tr = (x_tr - x_tr.mean(0)) / x_tr.std(0)
        rows = {tuple(np.round(r, 9)) for r in z_tr}
        assert all(tuple(np.round(r, 9)) in rows for b in seen for r in b)

    def test_metric_task_mismatch(self):
        with pytest.raises(ValueError):
            train(gen_linreg(0, 20, 3).dataset, quick_cfg(metric="accuracy"))
        with pytest.raises(ValueError):
            train(gen_xor(0, 20, 3).dataset, quick_cfg(metric="neg_mse"))

    def test_multiclass_and_f1(self):
        rng = np.random.default_rng(0)
        y = np.arange(45) % 3
        x = rng.standard_normal((45, 5))
        x[:, 2] += 2 * y
        ds = Dataset(x, y, Task(MULTICLASS, 3))
        rep = train(ds, quick_cfg(metric="f1"))
        assert 0 <= rep.best.val_metric <= 1

    def test_reset_optimizer_option(self):
        ds = gen_madelon(0, 40, 5).dataset
        a = train(ds, quick_cfg())
        b = train(ds, quick_cfg(reset_optimizer=True))
        assert not np.array_equal(a.best.fs_weights.w, b.best.fs_weights.w) or a.best.epoch_index == 0

    def test_finds_single_linear_feature(self):
        syn = gen_linreg(0, 120, 20, n_inf=1)
        cfg = TrainConfig(default_schedule(steps=4), dim=2, hidden=(5,), l1=0.01, l2=0.01, lr=1e-2)
        rep = train(syn.dataset, cfg)
        assert select_features(rep, top_k=1) == syn.true_features.tolist()


class TestSelect:
    def _report(self):
        x = np.random.default_rng(0).standard_normal((30, 6))
        x = (x - x.mean(0)) / x.std(0)
        w = np.zeros((6, 2))
        w[2, 0], w[5, 1] = 1.0, -1.0
        from snelfs.fslayer import saliency_report

        return saliency_report(w, x)

    def test_top_k(self):
        assert sorted(select_features(self._report(), top_k=2)) == [2, 5]
        assert select_features(self._report(), top_k=0) == []

    def test_threshold(self):
        assert select_features(self._report(), threshold=1.1, measure="max_weight") == []
        assert select_features(self._report(), threshold=0.5, measure="max_weight") == [2, 5]

    def test_errors(self):
        with pytest.raises(ValueError):
            select_features(self._report(), top_k=7)
        with pytest.raises(ValueError):
            select_features(self._report())
        with pytest.raises(ValueError):
            select_features(self._report(), top_k=1, threshold=0.1)

    def test_ranker_adapter(self):
        ds = gen_madelon(0, 40, 6).dataset
        rank = snel_ranker(quick_cfg())
        r = rank(ds)
        assert sorted(r.tolist()) == list(range(6))


def test_divergence_raises():
    ds = gen_linreg(0, 40, 5).dataset
    with pytest.raises(FloatingPointError):
        with np.errstate(all="ignore"):
            train(ds, quick_cfg(lr=1e300))
