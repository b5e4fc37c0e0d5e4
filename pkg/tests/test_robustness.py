import csv

import numpy as np
import pytest

from lipnets.errors import NotArgmaxError, UnconstrainedNetError
from lipnets.geometry import RegionLabeler, koch_snowflake, sdf_grid_dataset, snowflake_bbox
from lipnets.losses import LossSpec
from lipnets.net import (
    CONSTRAINED,
    SPECTRAL_NORM,
    UNCONSTRAINED,
    DenseLayer,
    LipNet,
    build_mlp,
    forward,
)
from lipnets.robustness import (
    balance_bias,
    binary_certificate,
    evaluation_report,
    mcr,
    mmcr,
    multiclass_certificate,
    pgd_l2,
    robust_accuracy,
    write_evaluation_report,
)
from lipnets.train import LabeledDataset, OptimizerCfg, separable_blobs_task, train, two_moons_task


def _unit_linear_net(u=(0.6, 0.8), bias=0.0):
    return LipNet([DenseLayer(np.asarray([list(u)]), np.asarray([bias]), constraint=SPECTRAL_NORM)])


class TestBinaryCertificate:
    def test_boundary_point(self):
        cert = binary_certificate(_unit_linear_net(), np.asarray([0.0, 0.0]))
        assert cert.radius == 0.0
        assert cert.predicted == 1  # sign(0) = +1

    def test_radius_is_abs_logit(self):
        net = _unit_linear_net()
        x = np.asarray([1.0, -0.5])
        cert = binary_certificate(net, x)
        assert cert.radius == pytest.approx(abs(0.6 - 0.4), abs=1e-15)
        assert cert.predicted == 1

    def test_requires_constrained(self):
        net = build_mlp((2, 4, 1), seed=0, mode=UNCONSTRAINED, activation="groupsort")
        with pytest.raises(UnconstrainedNetError):
            binary_certificate(net, np.zeros(2))


class TestMulticlassCertificate:
    def test_tied_top_logits(self):
        assert multiclass_certificate([2.0, 2.0, 0.0], 0) == 0.0

    def test_direct(self):
        assert multiclass_certificate([3.0, 1.0, 0.0], 0) == pytest.approx(1.0, abs=1e-15)

    def test_not_argmax_rejected(self):
        with pytest.raises(NotArgmaxError):
            multiclass_certificate([3.0, 1.0], 1)

    def test_two_class_reduction(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a, b = rng.standard_normal(2)
            k = 0 if a >= b else 1
            assert multiclass_certificate([a, b], k) == pytest.approx(abs(a - b) / 2, abs=1e-14)


class TestMcr:
    def test_constant_net(self):
        net = LipNet([DenseLayer(np.zeros((1, 2)), np.asarray([0.7]), constraint=SPECTRAL_NORM)])
        data = LabeledDataset(np.zeros((5, 2)), np.ones(5, dtype=int))
        assert mcr(net, data) == pytest.approx(0.7, abs=1e-15)

    def test_label_flip_negates(self):
        net = build_mlp((2, 8, 1), seed=1)
        rng = np.random.default_rng(2)
        pts = rng.standard_normal((20, 2))
        labels = rng.choice([-1, 1], 20)
        d1 = LabeledDataset(pts, labels)
        d2 = LabeledDataset(pts, -labels)
        assert mcr(net, d1) == pytest.approx(-mcr(net, d2), abs=1e-15)

    def test_two_forms_agree(self):
        net = build_mlp((2, 8, 1), seed=3)
        rng = np.random.default_rng(4)
        data = LabeledDataset(rng.standard_normal((50, 2)), rng.choice([-1, 1], 50))
        values = forward(net, data.points)[:, 0]
        correct = data.labels * values > 0
        wrong = data.labels * values < 0
        two_term = np.sum(np.abs(values[correct])) / 50 - np.sum(np.abs(values[wrong])) / 50
        assert mcr(net, data) == pytest.approx(two_term, abs=1e-12)

    def test_sdf_oracle_grid(self):
        from lipnets import signed_distance

        boundary = koch_snowflake(2)
        labeler = RegionLabeler()
        grid = sdf_grid_dataset(boundary, labeler, 40, snowflake_bbox())
        oracle = lambda X: signed_distance(boundary, labeler, X)
        assert mcr(oracle, grid) == pytest.approx(np.mean(np.abs(grid.regression_targets)), abs=1e-12)


class TestMmcr:
    def test_equal_logits_zero(self):
        net = LipNet([DenseLayer(np.zeros((3, 2)), np.zeros(3), constraint=SPECTRAL_NORM)])
        data = LabeledDataset(np.random.default_rng(5).standard_normal((10, 2)), np.zeros(10, dtype=int))
        assert mmcr(net, data) == 0.0

    def test_matches_per_sample_loop(self):
        net = build_mlp((2, 8, 8, 3), seed=6)
        rng = np.random.default_rng(7)
        data = LabeledDataset(rng.standard_normal((40, 2)), rng.integers(0, 3, 40))
        logits = forward(net, data.points)
        expected = 0.0
        for i in range(40):
            k = data.labels[i]
            others = np.delete(logits[i], k)
            expected += logits[i, k] - others.max()
        assert mmcr(net, data) == pytest.approx(expected / 40, abs=1e-12)

    def test_two_class_reduction_to_mcr(self):
        net = build_mlp((2, 8, 2), seed=8)
        rng = np.random.default_rng(9)
        pts = rng.standard_normal((30, 2))
        classes = rng.integers(0, 2, 30)
        logits = forward(net, pts)
        diff = logits[:, 1] - logits[:, 0]
        pm = 2 * classes - 1
        expected = np.mean(pm * diff)
        assert mmcr(net, LabeledDataset(pts, classes)) == pytest.approx(expected, abs=1e-12)


class TestPgd:
    def test_linear_closed_form(self):
        net = _unit_linear_net()
        x = np.asarray([0.3, 0.4])  # f(x) = 0.5
        result = pgd_l2(net, x, 1, eps=0.6, steps=100)
        assert result.found
        assert result.norm <= 0.6 + 1e-12
        assert result.norm >= 0.5  # cannot beat the true radius

    def test_eps_below_certificate_never_flips(self):
        net = build_mlp((2, 8, 8, 1), seed=10)
        rng = np.random.default_rng(11)
        flips = 0
        for _ in range(25):
            x = rng.standard_normal(2)
            cert = binary_certificate(net, x)
            if cert.radius < 1e-6:
                continue
            result = pgd_l2(net, x, cert.predicted, eps=0.999 * cert.radius, steps=50, restarts=2)
            flips += result.found
        assert flips == 0

    def test_success_norm_at_least_radius(self):
        net = build_mlp((2, 8, 8, 1), seed=12)
        rng = np.random.default_rng(13)
        checked = 0
        for _ in range(40):
            x = rng.standard_normal(2) * 1.5
            cert = binary_certificate(net, x)
            if cert.radius < 0.01:
                continue
            result = pgd_l2(net, x, cert.predicted, eps=3.0 * cert.radius, steps=80, restarts=2)
            if result.found:
                checked += 1
                assert result.norm >= cert.radius * (1 - 1e-9)
        assert checked >= 5

    def test_eps_validated(self):
        with pytest.raises(ValueError):
            pgd_l2(_unit_linear_net(), np.zeros(2), 1, eps=0.0)


class TestRobustAccuracy:
    def _trained_net_and_data(self):
        data = separable_blobs_task(120, gap=0.2, seed=14)
        net = build_mlp((2, 16, 16, 1), seed=14)
        train(net, data, LossSpec("hinge", m=0.1), OptimizerCfg(kind="adam", lr=5e-3, epochs=40, batch_size=60, seed=14))
        return net, data

    def test_eps_zero_is_clean_accuracy(self):
        net, data = self._trained_net_and_data()
        logits = forward(net, data.points)[:, 0]
        clean = np.mean(np.where(logits >= 0, 1, -1) == data.labels)
        assert robust_accuracy(net, data, 0.0, "certified") == pytest.approx(clean)
        assert robust_accuracy(net, data, 0.0, "empirical") == pytest.approx(clean)

    def test_certified_below_empirical(self):
        net, data = self._trained_net_and_data()
        for eps in (0.02, 0.05, 0.1):
            certified = robust_accuracy(net, data, eps, "certified")
            empirical = robust_accuracy(net, data, eps, "empirical", steps=50, restarts=2)
            assert certified <= empirical + 1e-12

    def test_certified_nonincreasing_in_eps(self):
        net, data = self._trained_net_and_data()
        values = [robust_accuracy(net, data, eps, "certified") for eps in (0.0, 0.02, 0.05, 0.1, 0.3)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_sdf_oracle_certified_fraction(self):
        import lipnets

        boundary = koch_snowflake(2)
        labeler = RegionLabeler()
        grid = sdf_grid_dataset(boundary, labeler, 32, snowflake_bbox())
        oracle = lambda X: lipnets.signed_distance(boundary, labeler, X)
        got = robust_accuracy(oracle, grid, 0.1, "certified")
        assert got == pytest.approx(np.mean(np.abs(grid.regression_targets) >= 0.1), abs=1e-12)

    def test_mode_validated(self):
        net, data = self._trained_net_and_data()
        with pytest.raises(ValueError):
            robust_accuracy(net, data, 0.1, "nope")


class TestBalanceBias:
    def test_constant_potential(self):
        net = LipNet([DenseLayer(np.zeros((1, 2)), np.asarray([1.3]), constraint=SPECTRAL_NORM)])
        rng = np.random.default_rng(15)
        T = balance_bias(net, rng.standard_normal((10, 2)), rng.standard_normal((12, 2)), tol=1e-10)
        assert T == pytest.approx(1.3, abs=1e-8)

    def test_antisymmetric_setup(self):
        net = _unit_linear_net()  # f(-x) = -f(x), zero bias
        rng = np.random.default_rng(16)
        P = rng.standard_normal((40, 2))
        T = balance_bias(net, P, -P, tol=1e-10)
        assert T == pytest.approx(0.0, abs=1e-8)

    def test_balance_equation_satisfied(self):
        net = build_mlp((2, 8, 8, 1), seed=17)
        rng = np.random.default_rng(18)
        P = rng.standard_normal((30, 2)) + 0.5
        Q = rng.standard_normal((30, 2)) - 0.5
        T = balance_bias(net, P, Q, tol=1e-8)
        fP = forward(net, P)[:, 0]
        fQ = forward(net, Q)[:, 0]
        zp = np.mean(1 / (1 + np.exp(fP - T)))
        zq = np.mean(1 / (1 + np.exp(T - fQ)))
        assert abs(zp - zq) <= 1e-8

    def test_gap_monotone_in_threshold(self):
        net = build_mlp((2, 8, 8, 1), seed=19)
        rng = np.random.default_rng(20)
        P = rng.standard_normal((25, 2))
        Q = rng.standard_normal((25, 2)) + 1.0
        fP = forward(net, P)[:, 0]
        fQ = forward(net, Q)[:, 0]
        grid = np.linspace(fP.min() - 2, fP.max() + 2, 60)
        gaps = [np.mean(1 / (1 + np.exp(fP - T))) - np.mean(1 / (1 + np.exp(T - fQ))) for T in grid]
        assert np.all(np.diff(gaps) > 0)


class TestEvaluationReport:
    def test_columns_and_consistency(self, tmp_path):
        data = two_moons_task(60, 0.1, seed=21)
        net = build_mlp((2, 8, 8, 1), seed=21)
        rows = evaluation_report(net, data, eps=0.05, steps=30, restarts=1)
        assert list(rows[0].keys()) == ["point_id", "label", "prediction", "logit", "certificate", "pgd_found", "pgd_norm"]
        logits = forward(net, data.points)[:, 0]
        for row in rows[:10]:
            i = row["point_id"]
            assert row["logit"] == pytest.approx(logits[i], abs=1e-12)
            assert row["certificate"] == pytest.approx(abs(logits[i]), abs=1e-12)

    def test_csv_written(self, tmp_path):
        data = two_moons_task(20, 0.1, seed=22)
        net = build_mlp((2, 8, 1), seed=22)
        rows = evaluation_report(net, data, eps=0.05, steps=10, restarts=1)
        path = tmp_path / "report.csv"
        write_evaluation_report(rows, str(path))
        with open(path, newline="") as fh:
            read = list(csv.DictReader(fh))
        assert len(read) == 20
        assert read[0]["point_id"] == "0"
