import numpy as np
import pytest

from conftest import max_rel_err
from rbfpoint import nn
from rbfpoint.model import (
    ChannelSpec,
    ModelSpec,
    Network,
    SpecError,
    build,
    count_flops,
)
from rbfpoint.nn import ShapeError, softmax_cross_entropy


def tiny_spec(**overrides):
    base = dict(
        variant="enhanced",
        input_dim=2,
        num_classes=3,
        coord_dims=2,
        use_transform=True,
        channels=[
            ChannelSpec(kernel="gaussian", m=2, start=0, stop=2),
            ChannelSpec(kernel="markov", m=2, start=0, stop=2),
        ],
        shared_mlp_widths=[3, 4],
        classifier_widths=[3],
        keep_prob=1.0,
        tnet_point_widths=[3, 4],
        tnet_fc_widths=[3],
    )
    base.update(overrides)
    return ModelSpec(**base)


class TestSpec:
    def test_defaults(self):
        spec = ModelSpec()
        spec.validate()
        assert spec.shared_mlp_widths == [16, 128, 1024]
        assert spec.global_feature_dim == 1024

    def test_vanilla_has_no_shared_mlp(self):
        spec = ModelSpec(variant="vanilla")
        spec.validate()
        assert spec.shared_mlp_widths == []
        assert spec.global_feature_dim == 300

    def test_validation_lists_all_violations(self):
        spec = ModelSpec(
            variant="vanilla",
            shared_mlp_widths=[5],
            num_classes=1,
            channels=[ChannelSpec(m=0, start=0, stop=5)],
        )
        with pytest.raises(SpecError) as excinfo:
            spec.validate()
        message = str(excinfo.value)
        assert "shared MLP" in message
        assert "num_classes" in message
        assert "kernel count" in message
        assert "out of bounds" in message

    def test_json_round_trip(self):
        spec = tiny_spec()
        again = ModelSpec.from_json(spec.to_json())
        assert again == spec


class TestBuild:
    def test_rbf_parameter_subtotal(self):
        spec = ModelSpec(variant="vanilla", channels=[ChannelSpec(m=300)])
        net = build(spec, rng_seed=0)
        assert net.count_params()["rbf"] == 1200

    def test_enhanced_shared_mlp_subtotal(self):
        net = build(ModelSpec(num_classes=40), rng_seed=0)
        assert net.count_params()["shared_mlp"] == 139_088

    def test_deterministic_given_seed(self):
        a = build(tiny_spec(), rng_seed=9)
        b = build(tiny_spec(), rng_seed=9)
        for (name_a, arr_a), (name_b, arr_b) in zip(
            a.state_arrays(), b.state_arrays()
        ):
            assert name_a == name_b
            np.testing.assert_array_equal(arr_a, arr_b)

    def test_transform_is_identity_at_init(self, rng):
        net = build(tiny_spec(), rng_seed=3)
        coords = rng.standard_normal((4, 6, 2))
        t = net.tnet.forward(coords, train=False)
        np.testing.assert_array_equal(t, np.broadcast_to(np.eye(2), (4, 2, 2)))


class TestForward:
    def test_empty_cloud_rejected(self):
        net = build(tiny_spec(), rng_seed=0)
        with pytest.raises(ShapeError, match="empty"):
            net.forward(np.zeros((1, 0, 2)))

    @pytest.mark.parametrize("use_transform", [False, True])
    def test_permutation_invariance_bit_exact(self, rng, use_transform):
        net = build(tiny_spec(use_transform=use_transform), rng_seed=1)
        pts = rng.standard_normal((2, 11, 2))
        perm = rng.permutation(11)
        base = net.forward(pts, train=False)
        permuted = net.forward(pts[:, perm, :], train=False)
        np.testing.assert_array_equal(base, permuted)

    def test_duplicating_points_changes_nothing(self, rng):
        net = build(tiny_spec(), rng_seed=1)
        pts = rng.standard_normal((1, 7, 2))
        base = net.forward(pts, train=False)
        doubled = net.forward(np.concatenate([pts, pts], axis=1), train=False)
        np.testing.assert_array_equal(base, doubled)

    def test_vanilla_is_degenerate_enhanced(self, rng):
        vanilla = build(
            tiny_spec(variant="vanilla", shared_mlp_widths=[]), rng_seed=5
        )
        degenerate = build(
            tiny_spec(variant="enhanced", shared_mlp_widths=[]), rng_seed=5
        )
        pts = rng.standard_normal((2, 6, 2))
        np.testing.assert_array_equal(
            vanilla.forward(pts, train=False), degenerate.forward(pts, train=False)
        )


class TestBackward:
    def _loss(self, net, pts, labels):
        logits = net.forward(pts, train=True)
        loss, grad = softmax_cross_entropy(logits, labels)
        return loss, grad

    def test_backward_before_forward_rejected(self):
        net = build(tiny_spec(), rng_seed=0)
        with pytest.raises(ShapeError, match="before forward"):
            net.backward(np.zeros((1, 3)))

    def test_zero_grad_logits_gives_zero_param_grads(self, rng):
        net = build(tiny_spec(), rng_seed=2)
        net.forward(rng.standard_normal((2, 5, 2)), train=True)
        net.zero_grads()
        net.backward(np.zeros((2, 3)))
        for group in net.param_groups():
            assert not group.grad.any(), group.name

    def test_end_to_end_gradients_match_finite_differences(self, rng):
        net = build(tiny_spec(), rng_seed=4)
        pts = rng.standard_normal((2, 5, 2))
        labels = np.array([0, 2])
        _, grad_logits = self._loss(net, pts, labels)
        net.zero_grads()
        net.backward(grad_logits)
        analytic = {g.name: g.grad.copy() for g in net.param_groups()}

        h = 1e-5
        worst = 0.0
        for group in net.param_groups():
            numeric = np.zeros_like(group.param)
            flat = group.param.ravel()
            nflat = numeric.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up, _ = self._loss(net, pts, labels)
                flat[i] = orig - h
                down, _ = self._loss(net, pts, labels)
                flat[i] = orig
                nflat[i] = (up - down) / (2 * h)
            worst = max(worst, max_rel_err(analytic[group.name], numeric))
        assert worst <= 1e-4, f"max rel err {worst:.3e}"

    def test_input_gradient_flows_through_transform(self, rng):
        net = build(tiny_spec(), rng_seed=4)
        pts = rng.standard_normal((2, 5, 2))
        labels = np.array([1, 2])
        _, grad_logits = self._loss(net, pts, labels)
        net.zero_grads()
        grad_in = net.backward(grad_logits)
        h = 1e-5
        numeric = np.zeros_like(pts)
        flat = pts.ravel()
        nflat = numeric.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up, _ = self._loss(net, pts, labels)
            flat[i] = orig - h
            down, _ = self._loss(net, pts, labels)
            flat[i] = orig
            nflat[i] = (up - down) / (2 * h)
        assert max_rel_err(grad_in, numeric) <= 1e-4


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, rng, tmp_path):
        net = build(tiny_spec(), rng_seed=7)
        # move running stats off their defaults
        net.forward(rng.standard_normal((3, 6, 2)), train=True)
        path = tmp_path / "model.ckpt"
        net.save(path)
        clone = Network.load(path)
        for (name, arr), (_, arr2) in zip(net.state_arrays(), clone.state_arrays()):
            np.testing.assert_array_equal(arr, arr2, err_msg=name)
        pts = rng.standard_normal((2, 5, 2))
        np.testing.assert_array_equal(
            net.forward(pts, train=False), clone.forward(pts, train=False)
        )

    def test_save_is_byte_deterministic(self, rng, tmp_path):
        net = build(tiny_spec(), rng_seed=7)
        net.save(tmp_path / "a.ckpt")
        net.save(tmp_path / "b.ckpt")
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


class TestFlops:
    def test_bare_gaussian_rbf_layer_count(self):
        spec = ModelSpec(
            variant="vanilla",
            use_transform=False,
            channels=[ChannelSpec(m=300)],
        )
        assert count_flops(spec, 1024)["rbf"] == 3_072_000

    def test_pointwise_stages_scale_linearly(self):
        spec = tiny_spec(use_transform=False)
        one = count_flops(spec, 1)
        many = count_flops(spec, 64)
        for stage in ("rbf", "shared_mlp"):
            assert many[stage] == 64 * one[stage]

    def test_full_model_totals_are_reported(self, capsys):
        # totals printed next to the published full-scale figures;
        # no tolerance asserted against those references
        for variant in ("vanilla", "enhanced"):
            spec = ModelSpec(variant=variant, channels=[ChannelSpec(m=300)])
            net = build(spec, rng_seed=0)
            total = count_flops(spec, 1024)["total"]
            params = net.count_params()["total"]
            reference = (
                "2.2M params / 24M FLOPs"
                if variant == "vanilla"
                else "3.2M params / 218M FLOPs"
            )
            print(
                f"{variant}: {params} params, {total} FLOPs/sample "
                f"(reference full-scale: {reference})"
            )
        assert "reference full-scale" in capsys.readouterr().out
