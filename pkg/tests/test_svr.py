import numpy as np
import pytest

from nonmarkov import dataset, svr
from nonmarkov.errors import ConfigError, DataFormatError

import oracles


def smooth_problem(seed, n=30, within_eps=False):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(-2, 2, n))[:, None]
    y = 0.5 * np.sin(1.7 * x[:, 0]) + 0.3
    if within_eps:
        y = y + rng.uniform(-4e-4, 4e-4, n)
    else:
        y = y + 0.01 * rng.standard_normal(n)
    return x, y


class TestKernel:
    def test_self_similarity(self):
        x = np.array([0.3, -1.2, 4.0])
        assert svr.rbf(x, x, 0.7) == 1.0

    def test_unit_distance(self):
        assert svr.rbf(np.zeros(2), np.array([1.0, 0.0]), 1.0) == pytest.approx(
            np.exp(-1.0)
        )

    def test_gram_matrix_is_psd(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((5, 3))
        gram = svr.rbf_gram(x, x, 0.9)
        assert np.abs(gram - gram.T).max() < 1e-15
        assert np.linalg.eigvalsh(gram).min() >= -1e-10

    def test_length_mismatch(self):
        with pytest.raises(ConfigError):
            svr.rbf(np.zeros(2), np.zeros(3), 1.0)

    def test_scale_gamma(self):
        x = np.array([[0.0, 10.0], [2.0, 10.0]])  # variances 1 and 0
        assert svr.resolve_gamma("scale", x) == pytest.approx(1.0 / (2 * 0.5))
        assert svr.resolve_gamma(0.25, x) == 0.25


class TestFit:
    def test_constant_targets(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((8, 2))
        model = svr.fit(x, np.full(8, 0.37))
        assert len(model.dual_coefs) == 0
        assert model.intercept == pytest.approx(0.37)
        assert svr.predict(model, rng.standard_normal(2)) == pytest.approx(0.37)

    def test_smooth_targets_inside_tube(self):
        x, y = smooth_problem(2, within_eps=True)
        # C large enough that no dual coefficient is box-constrained
        config = svr.SvrConfig(C=100.0)
        model = svr.fit(x, y, config)
        assert np.abs(model.dual_coefs).max() < config.C
        resid = np.abs(svr.predict(model, x) - y)
        assert resid.max() <= config.epsilon + config.tol

    def test_dual_feasibility(self):
        x, y = smooth_problem(3)
        config = svr.SvrConfig()
        model = svr.fit(x, y, config)
        assert np.abs(model.dual_coefs).max() <= config.C
        assert abs(model.dual_coefs.sum()) <= config.tol

    def test_kkt_certificate(self):
        x, y = smooth_problem(4)
        config = svr.SvrConfig()
        model = svr.fit(x, y, config)
        assert svr.kkt_violations(model, x, y, config).max() <= config.tol

    def test_matches_projected_gradient_oracle(self):
        config = svr.SvrConfig(tol=1e-8, kernel_gamma=0.7)
        for seed in range(3):
            rng = np.random.default_rng(seed)
            x = rng.standard_normal((10, 3))
            y = np.sin(x[:, 0]) + 0.1 * rng.standard_normal(10)
            model = svr.fit(x, y, config)
            got = svr.dual_objective(model, x, y, config)
            kern = svr.rbf_gram(x, x, 0.7)
            want = oracles.projected_gradient_svr_dual(kern, y, config.C, config.epsilon)
            assert abs(got - want) < 1e-6

    def test_row_permutation_leaves_predictions(self):
        x, y = smooth_problem(5)
        config = svr.SvrConfig(tol=1e-10)
        model_a = svr.fit(x, y, config)
        perm = np.random.default_rng(6).permutation(len(y))
        model_b = svr.fit(x[perm], y[perm], config)
        probe = np.linspace(-2, 2, 50)[:, None]
        assert np.abs(svr.predict(model_a, probe) - svr.predict(model_b, probe)).max() < 1e-8

    def test_monotone_dual_ascent(self):
        x, y = smooth_problem(7)
        model = svr.fit(x, y, svr.SvrConfig(), record_objective=True)
        hist = model.objective_history
        assert hist is not None and len(hist) == model.n_iter
        assert np.all(np.diff(hist) >= -1e-9)

    def test_non_convergence_is_flagged(self):
        x, y = smooth_problem(8)
        model = svr.fit(x, y, svr.SvrConfig(max_iter=2))
        assert not model.converged
        assert model.n_iter == 2

    def test_rejects_bad_shapes(self):
        with pytest.raises(ConfigError):
            svr.fit(np.zeros((3, 2)), np.zeros(4))
        with pytest.raises(ConfigError):
            svr.SvrConfig(C=0.0)
        with pytest.raises(ConfigError):
            svr.SvrConfig(kernel_gamma="auto")


class TestPredict:
    def test_free_support_vector_sits_on_tube(self):
        x, y = smooth_problem(9)
        config = svr.SvrConfig()
        model = svr.fit(x, y, config)
        free = np.abs(model.dual_coefs) < config.C
        assert free.any()
        for sv, beta in zip(model.support_vectors[free], model.dual_coefs[free]):
            i = np.flatnonzero((x == sv).all(axis=1))[0]
            resid = y[i] - svr.predict(model, x[i])
            assert abs(resid - config.epsilon * np.sign(beta)) <= config.tol

    def test_scaler_is_applied(self):
        x, y = smooth_problem(10)
        scaler = dataset.Scaler(x.mean(axis=0), x.std(axis=0))
        model = svr.fit(scaler.transform(x), y, svr.SvrConfig(), scaler)
        direct = svr.decision_function(model, scaler.transform(x))
        assert np.abs(svr.predict(model, x) - direct).max() < 1e-14

    def test_length_mismatch(self):
        x, y = smooth_problem(11)
        model = svr.fit(x, y)
        with pytest.raises(ConfigError):
            svr.predict(model, np.zeros(3))


class TestMae:
    def test_identical(self):
        assert svr.mae([0.1, 0.2], [0.1, 0.2]) == 0.0

    def test_unit_swap(self):
        assert svr.mae([0.0, 1.0], [1.0, 0.0]) == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ConfigError):
            svr.mae([0.0], [0.0, 1.0])


class TestModelIO:
    def test_roundtrip_predictions_bitwise(self, tmp_path):
        x, y = smooth_problem(12)
        scaler = dataset.Scaler(x.mean(axis=0), np.maximum(x.std(axis=0), 1e-12))
        model = svr.fit(scaler.transform(x), y, svr.SvrConfig(), scaler)
        path = tmp_path / "model.txt"
        svr.save_model(model, path)
        back = svr.load_model(path)
        rng = np.random.default_rng(13)
        probe = rng.standard_normal((100, x.shape[1]))
        assert np.array_equal(svr.predict(model, probe), svr.predict(back, probe))

    def test_truncated_file_rejected(self, tmp_path):
        x, y = smooth_problem(14)
        model = svr.fit(x, y)
        path = tmp_path / "model.txt"
        svr.save_model(model, path)
        text = path.read_text().splitlines()
        bad = tmp_path / "bad.txt"
        bad.write_text("\n".join(text[:-2]) + "\n")
        with pytest.raises(DataFormatError):
            svr.load_model(bad)

    def test_version_mismatch_rejected(self, tmp_path):
        x, y = smooth_problem(15)
        model = svr.fit(x, y)
        path = tmp_path / "model.txt"
        svr.save_model(model, path)
        text = path.read_text().replace("nonmarkov-svr v1", "nonmarkov-svr v9")
        bad = tmp_path / "bad.txt"
        bad.write_text(text)
        with pytest.raises(DataFormatError):
            svr.load_model(bad)
