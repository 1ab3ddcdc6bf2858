"""Network assembly, architecture contracts, and whole-net gradients."""

import numpy as np
import pytest

from conftest import central_diff_param, relative_error
from repscope.nn import (
    LayerSpec,
    Network,
    NetworkSpec,
    VGG16_CHANNELS,
    build_standard_cnn,
    build_vgg16,
    infer_shapes,
    softmax_cross_entropy,
)


class TestArchitectures:
    def test_standard_cnn_structure(self):
        """4 convs with [16,32,64,128] channels, pools after conv 2 and 3,
        dense 100 then output 10."""
        spec = build_standard_cnn(with_batchnorm=False)
        convs = [ls for ls in spec.layers if ls.kind == "conv2d"]
        assert [c.out_channels for c in convs] == [16, 32, 64, 128]
        pools = [i for i, ls in enumerate(spec.layers) if ls.kind == "maxpool2d"]
        assert len(pools) == 2
        denses = [ls for ls in spec.layers if ls.kind == "dense"]
        assert [(d.in_dim, d.out_dim) for d in denses] == [(1152, 100), (100, 10)]
        # pool follows the 2nd and 3rd conv's relu
        conv_positions = [i for i, ls in enumerate(spec.layers)
                          if ls.kind == "conv2d"]
        assert pools[0] > conv_positions[1] and pools[0] < conv_positions[2]
        assert pools[1] > conv_positions[2] and pools[1] < conv_positions[3]

    def test_standard_cnn_bn_placement(self):
        spec = build_standard_cnn(with_batchnorm=True)
        kinds = [ls.kind for ls in spec.layers]
        # every batchnorm sits between a linear transform and its relu
        for i, kind in enumerate(kinds):
            if kind == "batchnorm":
                assert kinds[i - 1] in ("conv2d", "dense")
                assert kinds[i + 1] == "relu"
        assert kinds.count("batchnorm") == 5

    def test_no_batchnorm_flag(self):
        spec = build_standard_cnn(with_batchnorm=False)
        assert all(ls.kind != "batchnorm" for ls in spec.layers)

    def test_standard_cnn_relu_count(self):
        assert len(build_standard_cnn(True).relu_indices()) == 5

    def test_vgg16_channel_sequence(self):
        spec = build_vgg16(with_batchnorm=False)
        convs = [ls.out_channels for ls in spec.layers if ls.kind == "conv2d"]
        assert convs == [64, 64, 128, 128, 256, 256, 256,
                         512, 512, 512, 512, 512, 512]
        assert convs == list(VGG16_CHANNELS)

    def test_vgg16_conv_geometry(self):
        spec = build_vgg16(with_batchnorm=True)
        for ls in spec.layers:
            if ls.kind == "conv2d":
                assert ls.kernel_size == 3 and ls.padding == 1
            if ls.kind == "maxpool2d":
                assert ls.window == 2 and ls.stride == 2
        assert sum(ls.kind == "maxpool2d" for ls in spec.layers) == 5

    def test_vgg16_pool_positions(self):
        """Pools come after convolutions 2, 4, 7, 10, 13."""
        spec = build_vgg16(with_batchnorm=False)
        conv_count = 0
        pool_after = []
        for ls in spec.layers:
            if ls.kind == "conv2d":
                conv_count += 1
            if ls.kind == "maxpool2d":
                pool_after.append(conv_count)
        assert pool_after == [2, 4, 7, 10, 13]

    def test_vgg16_shapes_flow_to_one_by_one(self):
        spec = build_vgg16(with_batchnorm=False)
        shapes = infer_shapes(spec)
        flat_idx = next(i for i, ls in enumerate(spec.layers)
                        if ls.kind == "flatten")
        assert shapes[flat_idx - 1] == (512, 1, 1)
        assert shapes[-1] == (10,)

    def test_bad_composition_rejected(self):
        with pytest.raises(ValueError, match="dense expects width"):
            NetworkSpec((1, 4, 4), (LayerSpec.flatten(),
                                    LayerSpec.dense(99, 10)))

    def test_batchnorm_feature_mismatch_rejected(self):
        with pytest.raises(ValueError, match="batchnorm features"):
            NetworkSpec((3, 8, 8), (LayerSpec.conv2d(3, 4, 3),
                                    LayerSpec.batchnorm(5)))


class TestForward:
    def test_logit_shape_contract(self, rng):
        net = Network(build_standard_cnn(True), seed=0)
        x = rng.uniform(0, 1, (2, 1, 28, 28)).astype(np.float32)
        acts = net.forward(x)
        assert acts[-1].shape == (2, 10)
        assert len(acts) == len(net.spec.layers)

    def test_input_shape_validated(self, rng):
        net = Network(build_standard_cnn(True), seed=0)
        with pytest.raises(ValueError, match="input shape"):
            net.forward(np.zeros((2, 3, 28, 28), dtype=np.float32))

    def test_eval_forward_is_pure(self, rng):
        net = Network(build_standard_cnn(True), seed=3)
        x = rng.uniform(0, 1, (4, 1, 28, 28)).astype(np.float32)
        a1 = net.forward(x, train=False)[-1]
        a2 = net.forward(x, train=False)[-1]
        assert np.array_equal(a1, a2)

    def test_astype_preserves_values(self, rng):
        net = Network(build_standard_cnn(True), seed=5)
        net64 = net.astype(np.float64)
        for (p32, _), (p64, _) in zip(net.parameters(), net64.parameters()):
            assert np.allclose(p32, p64)
            assert p64.dtype == np.float64


def tiny_conv_spec(with_bn=True):
    """2-channel conv net small enough for exhaustive finite differences."""
    layers = [LayerSpec.conv2d(1, 2, 3)]
    if with_bn:
        layers.append(LayerSpec.batchnorm(2))
    layers += [
        LayerSpec.relu(),
        LayerSpec.maxpool2d(2, 2),
        LayerSpec.flatten(),
        LayerSpec.dense(2 * 2 * 2, 3),
    ]
    return NetworkSpec((1, 6, 6), tuple(layers))


def network_loss(net, x, y):
    logits = net.forward(x, train=True)[-1]
    loss, _, _ = softmax_cross_entropy(logits, y)
    return loss


class TestWholeNetworkGradients:
    @pytest.mark.parametrize("seed", range(10))
    def test_finite_differences_over_seeds(self, seed):
        """All parameter gradients within 1e-4 relative error of central
        differences on seeded tiny networks (8-sample batch, 64-bit)."""
        rng = np.random.default_rng(seed)
        net = Network(tiny_conv_spec(with_bn=True), seed=seed, dtype=np.float64)
        x = rng.normal(size=(8, 1, 6, 6))
        y = rng.integers(0, 3, 8)

        bn = net.layers[1]
        rm, rv = bn.running_mean.copy(), bn.running_var.copy()

        logits = net.forward(x, train=True)[-1]
        loss, grad, _ = softmax_cross_entropy(logits, y)
        net.backward(grad)
        analytic = [(p.copy(), g.copy()) for p, g in net.parameters()]

        def loss_fn():
            bn.running_mean[:] = rm
            bn.running_var[:] = rv
            return network_loss(net, x, y)

        for (param, _), (_, agrad) in zip(net.parameters(), analytic):
            fd = central_diff_param(loss_fn, param)
            assert relative_error(agrad, fd) < 1e-4

    def test_zero_learning_signal(self, rng):
        """If the labels' one-hot equals the softmax output, gradients
        vanish."""
        net = Network(NetworkSpec((1, 2, 2), (LayerSpec.flatten(),
                                              LayerSpec.dense(4, 2))),
                      seed=0, dtype=np.float64)
        dense = net.layers[1]
        dense.weight[...] = 0.0
        dense.bias[...] = 0.0
        # uniform softmax; craft labels so mean one-hot == softmax: use both
        # classes equally often over an even batch
        x = rng.normal(size=(4, 1, 2, 2))
        y = np.array([0, 1, 0, 1])
        logits = net.forward(x, train=True)[-1]
        loss, grad, probs = softmax_cross_entropy(logits, y)
        net.backward(grad)
        # gradient of bias is softmax-mean minus label-mean == 0
        assert np.abs(dense.dbias).max() < 1e-12

    def test_single_sgd_step_decreases_loss(self, rng):
        """One small-lr SGD step on a fixed batch reduces the loss."""
        net = Network(tiny_conv_spec(with_bn=False), seed=1, dtype=np.float64)
        x = rng.normal(size=(8, 1, 6, 6))
        y = rng.integers(0, 3, 8)
        logits = net.forward(x, train=True)[-1]
        loss0, grad, _ = softmax_cross_entropy(logits, y)
        net.backward(grad)
        for p, g in net.parameters():
            p -= 1e-3 * g
        loss1 = network_loss(net, x, y)
        assert loss1 < loss0
