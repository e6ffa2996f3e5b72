import numpy as np
import pytest

from nonmarkov import channels, qmath
from nonmarkov.errors import ConfigError, StateValidationError

import oracles


class TestTensor:
    def test_identity_case(self):
        out = qmath.tensor(qmath.IDENTITY_2, qmath.IDENTITY_2)
        assert np.array_equal(out, np.eye(4))

    def test_sigma_z_with_identity(self):
        out = qmath.tensor(qmath.SIGMA_Z, qmath.IDENTITY_2)
        assert np.array_equal(out, np.diag([1.0, 1.0, -1.0, -1.0]).astype(complex))

    def test_involution_product(self):
        xx = qmath.tensor(qmath.SIGMA_X, qmath.SIGMA_X)
        assert np.abs(xx @ xx - np.eye(4)).max() < 1e-15

    def test_rejects_vectors(self):
        with pytest.raises(ConfigError):
            qmath.tensor(np.ones(2), qmath.IDENTITY_2)


class TestPartialTrace:
    def test_product_state_factorizes(self):
        rng = np.random.default_rng(0)
        rho_a = oracles.random_density(2, rng)
        rho_b = oracles.random_density(3, rng)
        joint = np.kron(rho_a, rho_b)
        assert np.abs(qmath.partial_trace(joint, [2, 3], [0]) - rho_a).max() < 1e-12
        assert np.abs(qmath.partial_trace(joint, [2, 3], [1]) - rho_b).max() < 1e-12

    def test_bell_marginal_is_maximally_mixed(self):
        bell = qmath.ket2dm(qmath.KET_BELL)
        red = qmath.partial_trace(bell, [2, 2], [1])
        assert np.abs(red - np.eye(2) / 2).max() < 1e-12

    def test_random_three_factor_state_vs_loop_oracle(self):
        rng = np.random.default_rng(1)
        rho = oracles.random_density(16, rng)
        got = qmath.partial_trace(rho, [2, 2, 4], [0, 1])
        want = oracles.loop_partial_trace(rho, [2, 2, 4], [0, 1])
        assert np.abs(got - want).max() < 1e-12
        assert abs(np.trace(got) - 1.0) < 1e-12
        assert np.abs(got - got.conj().T).max() < 1e-12

    def test_disjoint_factors_commute(self):
        rng = np.random.default_rng(2)
        rho = oracles.random_density(12, rng)
        via_b = qmath.partial_trace(rho, [2, 2, 3], [0, 2])
        one = qmath.partial_trace(via_b, [2, 3], [0])
        other_first = qmath.partial_trace(rho, [2, 2, 3], [0, 1])
        other = qmath.partial_trace(other_first, [2, 2], [0])
        assert np.abs(one - other).max() < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError):
            qmath.partial_trace(np.eye(4) / 4, [2, 3], [0])
        with pytest.raises(ConfigError):
            qmath.partial_trace(np.eye(4) / 4, [2, 2], [])


class TestTraceDistance:
    def test_identical_states(self):
        rho = oracles.random_density(4, np.random.default_rng(3))
        assert qmath.trace_distance(rho, rho) == 0.0

    def test_orthogonal_pure_states(self):
        d = qmath.trace_distance(qmath.ket2dm(qmath.KET_E), qmath.ket2dm(qmath.KET_G))
        assert abs(d - 1.0) < 1e-15

    def test_pd_pair_matches_dephasing_factor(self):
        # eigen-based route against the analytic off-diagonal evolution
        nu, tau = 1.0, 0.5
        r1 = channels.pd_apply(qmath.ket2dm(qmath.KET_PLUS), nu, tau)
        r2 = channels.pd_apply(qmath.ket2dm(qmath.KET_MINUS), nu, tau)
        want = abs(channels.pd_lambda(nu, tau))
        assert abs(qmath.trace_distance(r1, r2) - want) < 1e-12

    def test_symmetry_and_triangle_inequality(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            a, b, c = (oracles.random_density(3, rng) for _ in range(3))
            dab = qmath.trace_distance(a, b)
            assert abs(dab - qmath.trace_distance(b, a)) < 1e-12
            assert dab <= qmath.trace_distance(a, c) + qmath.trace_distance(c, b) + 1e-9

    def test_contractive_under_channels(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            a = oracles.random_density(2, rng)
            b = oracles.random_density(2, rng)
            before = qmath.trace_distance(a, b)
            nu = rng.uniform(0.0, 5.0)
            assert (
                qmath.trace_distance(
                    channels.pd_apply(a, nu, 0.4), channels.pd_apply(b, nu, 0.4)
                )
                <= before + 1e-9
            )
            t = rng.uniform(0.0, 5.0)
            assert (
                qmath.trace_distance(
                    channels.ad_apply(a, t, 0.7), channels.ad_apply(b, t, 0.7)
                )
                <= before + 1e-9
            )

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError):
            qmath.trace_distance(np.eye(2) / 2, np.eye(4) / 4)


class TestConcurrence:
    def test_bell_state(self):
        assert abs(qmath.concurrence(qmath.ket2dm(qmath.KET_BELL)) - 1.0) < 1e-12

    def test_product_basis_state(self):
        ee = np.zeros((4, 4), dtype=complex)
        ee[0, 0] = 1.0
        assert qmath.concurrence(ee) == 0.0

    def test_one_sided_damping_vs_independent_wootters(self):
        # survival 0.25 on the open side of a Bell pair
        g = 0.5
        m1, m2 = channels.ad_kraus(g)
        k1, k2 = np.kron(np.eye(2), m1), np.kron(np.eye(2), m2)
        bell = qmath.ket2dm(qmath.KET_BELL)
        rho = k1 @ bell @ k1.conj().T + k2 @ bell @ k2.conj().T
        got = qmath.concurrence(rho)
        # the sqrt-route oracle loses half its precision on rank-deficient states
        assert abs(got - oracles.wootters_concurrence(rho)) < 1e-7

    def test_random_states_vs_independent_wootters(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            rho = oracles.random_density(4, rng)
            assert abs(qmath.concurrence(rho) - oracles.wootters_concurrence(rho)) < 1e-8

    def test_separable_products_vanish(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            rho = np.kron(oracles.random_density(2, rng), oracles.random_density(2, rng))
            assert qmath.concurrence(rho) < 1e-9

    def test_batched_matches_scalar(self):
        rng = np.random.default_rng(8)
        batch = np.stack([oracles.random_density(4, rng) for _ in range(5)])
        got = qmath.concurrence(batch)
        want = [qmath.concurrence(batch[i]) for i in range(5)]
        assert np.abs(got - want).max() < 1e-12

    def test_wrong_dimension(self):
        with pytest.raises(ConfigError):
            qmath.concurrence(np.eye(2) / 2)


class TestValidateDensity:
    def test_accepts_random_states(self):
        rng = np.random.default_rng(9)
        for dim in (2, 4, 8):
            qmath.validate_density(oracles.random_density(dim, rng))

    def test_rejects_non_hermitian(self):
        rho = np.eye(2, dtype=complex) / 2
        rho[0, 1] = 1e-8
        with pytest.raises(StateValidationError):
            qmath.validate_density(rho)

    def test_rejects_wrong_trace(self):
        with pytest.raises(StateValidationError):
            qmath.validate_density(np.eye(2, dtype=complex))

    def test_rejects_negative_eigenvalue(self):
        rho = np.diag([1.2, -0.2]).astype(complex)
        with pytest.raises(StateValidationError):
            qmath.validate_density(rho)
