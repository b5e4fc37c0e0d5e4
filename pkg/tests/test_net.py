import numpy as np
import pytest

from lipnets.errors import OddWidthError, ShapeMismatchError
from lipnets.linalg import orthogonality_residual
from lipnets.net import (
    CONSTRAINED,
    ORTHOGONAL,
    SPECTRAL_NORM,
    UNCONSTRAINED,
    DenseLayer,
    GroupSortLayer,
    LipNet,
    backward,
    build_mlp,
    forward,
    groupsort2,
    input_gradient_norm,
    lipschitz_upper_bound,
    load_checkpoint,
    net_from_dict,
    net_to_dict,
    project,
    save_checkpoint,
)

from oracles import finite_difference_gradients


class TestGroupSort:
    def test_sorts_pair(self):
        assert np.array_equal(groupsort2(np.asarray([3.0, 1.0])), [1.0, 3.0])

    def test_fixed_point(self):
        x = np.asarray([1.0, 3.0, 2.0, 5.0])
        assert np.array_equal(groupsort2(x), x)

    def test_norm_preserved(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = rng.standard_normal(8)
            assert np.linalg.norm(groupsort2(x)) == pytest.approx(np.linalg.norm(x), abs=1e-15)

    def test_odd_width_rejected(self):
        with pytest.raises(OddWidthError):
            groupsort2(np.asarray([1.0, 2.0, 3.0]))


def _golden_net():
    W1 = np.asarray([[0.6, 0.8], [-0.8, 0.6], [0.5, -0.5], [0.1, 0.2]])
    b1 = np.asarray([0.1, -0.2, 0.0, 0.3])
    W2 = np.asarray(
        [[0.25, -0.5, 0.75, 0.0], [1.0, 0.5, 0.0, -0.25], [0.0, 0.3, -0.3, 0.6], [0.45, 0.0, 0.2, -0.1]]
    )
    b2 = np.asarray([0.0, 0.05, -0.05, 0.2])
    W3 = np.asarray([[0.5, -0.25, 0.3, 0.85]])
    b3 = np.asarray([-0.15])
    return LipNet(
        [
            DenseLayer(W1, b1, constraint=UNCONSTRAINED),
            GroupSortLayer(),
            DenseLayer(W2, b2, constraint=UNCONSTRAINED),
            GroupSortLayer(),
            DenseLayer(W3, b3, constraint=UNCONSTRAINED),
        ],
        mode=UNCONSTRAINED,
    )


class TestForward:
    def test_identity_layer(self):
        net = LipNet([DenseLayer(np.eye(3), np.zeros(3), constraint=UNCONSTRAINED)], mode=UNCONSTRAINED)
        X = np.random.default_rng(1).standard_normal((6, 3))
        assert np.array_equal(forward(net, X), X)

    def test_orthogonal_layer_is_nonexpansive(self):
        net = build_mlp((4, 4, 4), seed=3, activation="none", final_constraint=ORTHOGONAL)
        rng = np.random.default_rng(2)
        for _ in range(100):
            x, z = rng.standard_normal((2, 4))
            fx, fz = forward(net, np.stack([x, z]))
            assert np.linalg.norm(fx - fz) <= (1 + 1e-9) * np.linalg.norm(x - z)

    def test_golden_trace(self):
        # frozen step-by-step trace, computed once by an independent script
        net = _golden_net()
        out = forward(net, np.asarray([0.35, -1.25]))
        assert out[0] == pytest.approx(-0.9948875, abs=1e-15)

    def test_shape_mismatch(self):
        net = build_mlp((2, 4, 1), seed=0)
        with pytest.raises(ShapeMismatchError):
            forward(net, np.zeros((3, 5)))


class TestBackward:
    def test_linear_input_grad(self):
        rng = np.random.default_rng(4)
        W = rng.standard_normal((3, 5))
        net = LipNet([DenseLayer(W, np.zeros(3), constraint=UNCONSTRAINED)], mode=UNCONSTRAINED)
        upstream = rng.standard_normal((7, 3))
        X = rng.standard_normal((7, 5))
        bundle = backward(net, X, upstream)
        assert np.allclose(bundle.input_grad, upstream @ W, atol=1e-14)

    def test_matches_finite_differences(self):
        net = build_mlp((2, 8, 8, 1), seed=7)
        rng = np.random.default_rng(8)
        X = rng.standard_normal((4, 2))
        upstream = rng.standard_normal((4, 1))
        bundle = backward(net, X, upstream)

        def objective(n):
            return float(np.sum(forward(n, X) * upstream))

        dW_num, db_num = finite_difference_gradients(objective, net, h=1e-6)
        for got, want in zip(bundle.dW, dW_num):
            scale = np.maximum(np.abs(want), 1e-3)
            assert np.max(np.abs(got - want) / scale) <= 1e-5
        for got, want in zip(bundle.db, db_num):
            scale = np.maximum(np.abs(want), 1e-3)
            assert np.max(np.abs(got - want) / scale) <= 1e-5

    def test_bias_gradient_bounded_by_upstream(self):
        # single sample: every layer 1-Lipschitz means ||db|| <= ||upstream||
        net = build_mlp((3, 8, 8, 1), seed=9)
        rng = np.random.default_rng(10)
        x = rng.standard_normal((1, 3))
        upstream = rng.standard_normal((1, 1))
        bundle = backward(net, x, upstream)
        bound = np.linalg.norm(upstream)
        for db in bundle.db:
            assert np.linalg.norm(db) <= bound * (1 + 1e-9)

    def test_weight_gradient_bounded_by_activation(self):
        net = build_mlp((3, 8, 8, 1), seed=11)
        rng = np.random.default_rng(12)
        x = rng.standard_normal((1, 3))
        upstream = rng.standard_normal((1, 1))
        bundle = backward(net, x, upstream)
        # recompute the activations entering each dense layer
        h = x
        acts = []
        for layer in net.layers:
            if isinstance(layer, DenseLayer):
                acts.append(h)
                h = h @ layer.W.T + layer.b
            else:
                h = groupsort2(h)
        bound = np.linalg.norm(upstream)
        for dW, act in zip(bundle.dW, acts):
            assert np.linalg.norm(dW) <= bound * np.linalg.norm(act) * (1 + 1e-9)

    def test_upstream_shape_checked(self):
        net = build_mlp((2, 4, 1), seed=0)
        with pytest.raises(ShapeMismatchError):
            backward(net, np.zeros((3, 2)), np.zeros((4, 1)))


class TestProject:
    def test_orthogonal_fixed_point(self):
        net = build_mlp((4, 4, 4, 1), seed=13)
        before = [l.W.copy() for l in net.dense_layers()]
        project(net)
        for w0, layer in zip(before, net.dense_layers()):
            assert np.max(np.abs(w0 - layer.W)) <= 1e-10

    def test_scaled_identity_projects_to_identity(self):
        layer = DenseLayer(2.0 * np.eye(3), np.zeros(3), constraint=ORTHOGONAL)
        net = LipNet([layer], mode=CONSTRAINED)
        project(net)
        assert np.max(np.abs(layer.W - np.eye(3))) <= 1e-10

    def test_invariants_after_random_steps(self):
        net = build_mlp((2, 8, 8, 1), seed=14)
        rng = np.random.default_rng(15)
        for _ in range(100):
            for layer in net.dense_layers():
                layer.W += 0.05 * rng.standard_normal(layer.W.shape)
            project(net)
            for layer in net.dense_layers():
                if layer.constraint == ORTHOGONAL:
                    assert orthogonality_residual(layer.W) <= 1e-6
                elif layer.constraint == SPECTRAL_NORM:
                    from lipnets.linalg import power_iteration

                    assert power_iteration(layer.W, 200, 1e-12, min_iters=10).sigma <= 1 + 1e-6


class TestInputGradientNorm:
    def test_unit_linear_functional(self):
        u = np.asarray([[0.6, 0.8]])
        net = LipNet([DenseLayer(u, np.zeros(1), constraint=SPECTRAL_NORM)], mode=CONSTRAINED)
        assert input_gradient_norm(net, np.asarray([0.3, -0.7])) == pytest.approx(1.0, abs=1e-12)

    def test_constrained_net_bounded(self):
        net = build_mlp((2, 8, 8, 1), seed=16)
        rng = np.random.default_rng(17)
        for _ in range(20):
            assert input_gradient_norm(net, rng.standard_normal(2)) <= 1 + 1e-9

    def test_gradient_norm_preserving_square_net(self):
        # all-orthogonal square stack: the gradient norm stays 1 off sorting ties
        for seed in range(5):
            net = build_mlp((4, 4, 4, 1), seed=seed, final_constraint=ORTHOGONAL)
            rng = np.random.default_rng(100 + seed)
            value = input_gradient_norm(net, rng.standard_normal(4))
            assert 1 - 1e-6 <= value <= 1 + 1e-9


class TestLipschitzUpperBound:
    def test_constrained_close_to_one(self):
        net = build_mlp((2, 8, 8, 1), seed=18)
        assert lipschitz_upper_bound(net) <= 1 + 1e-5

    def test_single_diagonal_layer(self):
        net = LipNet([DenseLayer(np.diag([3.0, 1.0]), np.zeros(2), constraint=UNCONSTRAINED)], mode=UNCONSTRAINED)
        assert lipschitz_upper_bound(net) == pytest.approx(3.0, rel=1e-9)

    def test_empirical_slope_below_bound(self):
        net = build_mlp((2, 8, 8, 1), seed=19, mode=UNCONSTRAINED, activation="groupsort")
        for layer in net.dense_layers():
            layer.W *= 1.7
        bound = lipschitz_upper_bound(net)
        rng = np.random.default_rng(20)
        X = rng.standard_normal((10_000, 2))
        Z = rng.standard_normal((10_000, 2))
        fX = forward(net, X)[:, 0]
        fZ = forward(net, Z)[:, 0]
        slopes = np.abs(fX - fZ) / np.linalg.norm(X - Z, axis=1)
        assert np.max(slopes) <= bound

    def test_constrained_pairs_lipschitz(self):
        net = build_mlp((2, 16, 16, 1), seed=21)
        rng = np.random.default_rng(22)
        X = rng.standard_normal((10_000, 2)) * 2
        Z = rng.standard_normal((10_000, 2)) * 2
        fX = forward(net, X)[:, 0]
        fZ = forward(net, Z)[:, 0]
        gaps = np.abs(fX - fZ)
        assert np.all(gaps <= (1 + 1e-6) * np.linalg.norm(X - Z, axis=1))


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        net = build_mlp((2, 6, 6, 1), seed=23)
        path = tmp_path / "ckpt.json"
        save_checkpoint(net, str(path))
        loaded = load_checkpoint(str(path))
        assert loaded.mode == net.mode
        for a, b in zip(net.dense_layers(), loaded.dense_layers()):
            assert np.array_equal(a.W, b.W)
            assert np.array_equal(a.b, b.b)
            assert a.constraint == b.constraint

    def test_dict_round_trip_keeps_layer_kinds(self):
        net = build_mlp((2, 4, 1), seed=24, mode=UNCONSTRAINED, activation="relu")
        rebuilt = net_from_dict(net_to_dict(net))
        assert [type(l).__name__ for l in rebuilt.layers] == [type(l).__name__ for l in net.layers]


class TestValidation:
    def test_width_chain_checked(self):
        with pytest.raises(ShapeMismatchError):
            LipNet(
                [
                    DenseLayer(np.zeros((4, 2)) + np.eye(4, 2), np.zeros(4), constraint=UNCONSTRAINED),
                    DenseLayer(np.eye(3), np.zeros(3), constraint=UNCONSTRAINED),
                ],
                mode=UNCONSTRAINED,
            )

    def test_constrained_mode_requires_constraints(self):
        with pytest.raises(ValueError):
            LipNet([DenseLayer(np.eye(2), np.zeros(2), constraint=UNCONSTRAINED)], mode=CONSTRAINED)

    def test_odd_width_before_groupsort(self):
        with pytest.raises(OddWidthError):
            LipNet(
                [DenseLayer(np.eye(3), np.zeros(3), constraint=UNCONSTRAINED), GroupSortLayer()],
                mode=UNCONSTRAINED,
            )
