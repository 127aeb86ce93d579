import numpy as np
import pytest

from rbfpoint.model import ChannelSpec, ModelSpec, ParamGroup, build
from rbfpoint.nn import ParameterError
from rbfpoint.optim import (
    Adam,
    EpochStats,
    LrSchedule,
    class_accuracy,
    evaluate,
    train_epoch,
)
from rbfpoint.synth import make_shape_dataset


def make_group(values, grads, name="p", trainable=True, clamp_min=None):
    param = np.asarray(values, dtype=np.float64)
    grad = np.asarray(grads, dtype=np.float64)
    return ParamGroup(name, param, grad, trainable=trainable, clamp_min=clamp_min)


def small_net(seed=0, **overrides):
    base = dict(
        variant="enhanced",
        input_dim=3,
        num_classes=2,
        use_transform=False,
        channels=[ChannelSpec(kernel="gaussian", m=8, stop=3)],
        shared_mlp_widths=[8, 16],
        classifier_widths=[8],
        keep_prob=1.0,
    )
    base.update(overrides)
    return build(ModelSpec(**base), rng_seed=seed)


class TestAdam:
    def test_zero_gradient_is_a_no_op(self):
        group = make_group([1.0, -2.0], [0.0, 0.0])
        Adam([group]).step(lr=0.1)
        np.testing.assert_array_equal(group.param, [1.0, -2.0])

    def test_first_step_matches_hand_formula(self):
        # after one step the bias-corrected moments reduce to g and g^2,
        # so the update is lr * g / (|g| + eps)
        g = np.array([0.3, -1.7, 4.0])
        group = make_group(np.zeros(3), g.copy())
        opt = Adam([group])
        opt.step(lr=0.01)
        expected = -0.01 * g / (np.abs(g) + opt.eps)
        np.testing.assert_allclose(group.param, expected, rtol=1e-12)

    def test_converges_on_quadratic(self):
        group = make_group([10.0], [0.0])
        opt = Adam([group])
        for _ in range(2000):
            group.grad[0] = 2.0 * (group.param[0] - 3.0)
            opt.step(lr=0.05)
        assert abs(group.param[0] - 3.0) < 1e-2

    def test_frozen_group_is_untouched(self):
        frozen = make_group([5.0], [100.0], name="frozen", trainable=False)
        live = make_group([5.0], [100.0], name="live")
        opt = Adam([frozen, live])
        for _ in range(3):
            opt.step(lr=0.1)
        assert frozen.param[0] == 5.0
        assert not opt.m["frozen"].any()
        assert not opt.v["frozen"].any()
        assert live.param[0] != 5.0

    def test_clamp_min_applies_after_update(self):
        group = make_group([1e-3], [50.0], clamp_min=1e-3)
        opt = Adam([group])
        opt.step(lr=0.1)  # would push the value negative
        assert group.param[0] == 1e-3

    def test_non_finite_gradient_aborts_with_group_name(self):
        group = make_group([1.0], [np.nan], name="rbf.ch0.sigmas")
        with pytest.raises(FloatingPointError, match="rbf.ch0.sigmas"):
            Adam([group]).step(lr=0.1)


class TestLrSchedule:
    def test_boundary_epochs(self):
        sched = LrSchedule()
        assert sched.lr_at(0) == 2e-4
        assert sched.lr_at(19) == 2e-4
        assert sched.lr_at(20) == pytest.approx(1.4e-4, rel=1e-12)
        assert sched.lr_at(40) == pytest.approx(2e-4 * 0.49, rel=1e-12)

    def test_floor(self):
        sched = LrSchedule()
        assert sched.lr_at(10_000) == 1e-6

    def test_piecewise_constant_and_non_increasing(self):
        sched = LrSchedule()
        values = [sched.lr_at(e) for e in range(100)]
        assert all(a >= b for a, b in zip(values, values[1:]))
        for start in range(0, 100, 20):
            block = values[start : start + 20]
            assert len(set(block)) == 1


class TestEpochStats:
    def test_line_round_trip_is_lossless(self):
        stats = EpochStats(
            epoch=17,
            lr=2e-4 * 0.7,
            train_loss=1.2345678901234567,
            train_acc=0.9871,
            test_acc_instance=1 / 3,
            test_acc_class=2 / 7,
            seconds=0.0,
        )
        again = EpochStats.from_line(stats.to_line())
        assert again == stats

    def test_header_matches_field_order(self):
        assert EpochStats.HEADER.split(",") == [
            "epoch",
            "lr",
            "train_loss",
            "train_acc",
            "test_acc_instance",
            "test_acc_class",
            "seconds",
        ]


class TestClassAccuracy:
    def test_unweighted_mean_of_recalls(self):
        labels = np.array([0, 0, 0, 0, 1])
        preds = np.array([0, 0, 0, 0, 0])
        # class 0 recall 1.0, class 1 recall 0.0
        assert class_accuracy(labels, preds, num_classes=2) == pytest.approx(0.5)

    def test_absent_classes_are_ignored(self):
        labels = np.array([2, 2])
        preds = np.array([2, 1])
        assert class_accuracy(labels, preds, num_classes=5) == pytest.approx(0.5)


class TestTrainEpoch:
    def make_dataset(self):
        return make_shape_dataset(
            n_per_class=4, n_points=24, seed=1, classes=("sphere", "box")
        )

    def test_empty_dataset_rejected(self):
        dataset = self.make_dataset()
        empty = type(dataset)(dataset.x[:0], dataset.y[:0], dataset.coord_dims)
        net = small_net()
        opt = Adam(net.param_groups())
        with pytest.raises(ParameterError, match="empty"):
            train_epoch(net, opt, empty, 0, 1e-3, np.random.default_rng(0))

    def test_trailing_single_sample_is_skipped(self):
        dataset = self.make_dataset()
        five = type(dataset)(dataset.x[:5], dataset.y[:5], dataset.coord_dims)
        net = small_net()
        opt = Adam(net.param_groups())
        stats = train_epoch(
            net, opt, five, 0, 1e-3, np.random.default_rng(0), batch_size=2
        )
        # 5 samples with batch 2 leaves one orphan row behind
        assert round(stats.train_acc * 4) == stats.train_acc * 4

    def test_deterministic_given_seeds(self):
        dataset = self.make_dataset()
        states = []
        for _ in range(2):
            net = small_net(seed=3)
            opt = Adam(net.param_groups())
            rng = np.random.default_rng(77)
            for epoch in range(2):
                train_epoch(
                    net, opt, dataset, epoch, 1e-3, rng, batch_size=4,
                    record_time=False,
                )
            states.append({name: arr.copy() for name, arr in net.state_arrays()})
        for name in states[0]:
            np.testing.assert_array_equal(states[0][name], states[1][name], err_msg=name)

    def test_frozen_kernels_survive_training(self):
        dataset = self.make_dataset()
        net = small_net(seed=3, train_centers=False, train_sigmas=False)
        before = net.mc_rbf.channels[0].centers.copy()
        before_s = net.mc_rbf.channels[0].sigmas.copy()
        opt = Adam(net.param_groups())
        rng = np.random.default_rng(5)
        for epoch in range(3):
            train_epoch(net, opt, dataset, epoch, 1e-3, rng, batch_size=4)
        np.testing.assert_array_equal(net.mc_rbf.channels[0].centers, before)
        np.testing.assert_array_equal(net.mc_rbf.channels[0].sigmas, before_s)

    def test_overfits_a_small_batch(self):
        dataset = self.make_dataset()
        net = small_net(seed=0)
        opt = Adam(net.param_groups())
        rng = np.random.default_rng(9)
        stats = None
        for epoch in range(1000):
            stats = train_epoch(net, opt, dataset, epoch, 5e-3, rng, batch_size=8)
            if stats.train_loss < 1e-3:
                break
        assert stats.train_loss < 1e-3
        assert stats.train_acc == 1.0

    def test_evaluate_agrees_with_manual_argmax(self):
        dataset = self.make_dataset()
        net = small_net(seed=2)
        instance, per_class = evaluate(net, dataset)
        logits = net.forward(dataset.x, train=False)
        preds = logits.argmax(axis=1)
        assert instance == pytest.approx(float((preds == dataset.y).mean()))
        assert per_class == pytest.approx(class_accuracy(dataset.y, preds, 2))
