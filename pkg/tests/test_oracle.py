import numpy as np
import pytest

from monattn.attention import monotonic_alpha_recurrence
from monattn.numkit import DomainError, SeededRng
from monattn.oracle import enumerate_alpha_exact, monte_carlo_alpha, residual_mass


def recurrence_matrix(p):
    U, T = p.shape
    prev, rows = np.eye(1, T)[0], []
    for i in range(U):
        prev = monotonic_alpha_recurrence(p[i], prev)
        rows.append(prev)
    return np.array(rows)


class TestExact:
    def test_single_row(self):
        est = enumerate_alpha_exact([[0.5, 0.5]])
        np.testing.assert_allclose(est.alpha, [[0.5, 0.25]])
        np.testing.assert_allclose(est.residual, [0.25])

    def test_all_ones(self):
        est = enumerate_alpha_exact(np.ones((3, 4)))
        np.testing.assert_array_equal(est.alpha, np.tile(np.eye(1, 4), (3, 1)))

    def test_all_zeros(self):
        est = enumerate_alpha_exact(np.zeros((3, 4)))
        assert est.alpha.sum() == 0.0
        assert est.residual.tolist() == [1.0, 1.0, 1.0]

    def test_two_rows_by_hand(self):
        # row 2: from pick 1 (0.5): 0.5 * [0.5, 0.25]; from pick 2 (0.25): 0.25 * [0, 0.5]
        est = enumerate_alpha_exact([[0.5, 0.5], [0.5, 0.5]])
        np.testing.assert_allclose(est.alpha[1], [0.25, 0.125 + 0.125])

    def test_size_limits(self):
        with pytest.raises(DomainError):
            enumerate_alpha_exact(np.full((2, 9), 0.5))
        with pytest.raises(DomainError):
            enumerate_alpha_exact(np.full((7, 2), 0.5))
        with pytest.raises(DomainError):
            enumerate_alpha_exact([[0.5, 1.5]])

    def test_agrees_with_recurrence(self):
        gen = np.random.default_rng(7)
        worst = 0.0
        for _ in range(50):
            p = gen.uniform(0.0, 1.0, (gen.integers(1, 5), gen.integers(1, 7)))
            worst = max(worst, np.abs(enumerate_alpha_exact(p).alpha - recurrence_matrix(p)).max())
        assert worst < 1e-10

    def test_rows_plus_residual_are_distributions(self):
        p = np.random.default_rng(3).uniform(0, 1, (4, 6))
        est = enumerate_alpha_exact(p)
        assert np.all(est.alpha >= 0)
        np.testing.assert_allclose(est.alpha.sum(axis=1) + est.residual, 1.0, atol=1e-10)


def test_residual_mass():
    assert residual_mass([0.5, 0.25]) == 0.25
    assert residual_mass([1.0, 0.0]) == 0.0
    assert residual_mass([0.0, 0.0]) == 1.0
    assert residual_mass([0.7, 0.7]) == 0.0


class TestMonteCarlo:
    def test_single_row_within_four_stderr(self):
        est = monte_carlo_alpha([[0.5, 0.5]], 100_000, SeededRng(0, 1))
        assert np.all(np.abs(est.alpha - [[0.5, 0.25]]) <= 4 * est.stderr)

    def test_deterministic_p_has_zero_variance(self):
        p = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        est = monte_carlo_alpha(p, 1000, SeededRng(0, 1))
        np.testing.assert_array_equal(est.alpha, enumerate_alpha_exact(p).alpha)
        assert est.stderr.max() == 0.0

    def test_semantics_agree_without_fall_off(self):
        # last column is certain, so no row can fall off
        p = np.random.default_rng(1).uniform(0.2, 0.8, (3, 4))
        p[:, -1] = 1.0
        a = monte_carlo_alpha(p, 5000, SeededRng(2, 0), "absorbing").alpha
        b = monte_carlo_alpha(p, 5000, SeededRng(2, 0), "rescanning").alpha
        np.testing.assert_array_equal(a, b)

    def test_semantics_differ_with_fall_off(self):
        p = np.full((3, 3), 0.3)
        a = monte_carlo_alpha(p, 20000, SeededRng(2, 0), "absorbing").alpha
        b = monte_carlo_alpha(p, 20000, SeededRng(2, 0), "rescanning").alpha
        assert a[0].tolist() == b[0].tolist()
        assert np.all(b[1:] > a[1:])

    def test_sharding_reproducible_and_independent_of_workers(self):
        p = np.random.default_rng(5).uniform(0.1, 0.9, (3, 4))
        seq = monte_carlo_alpha(p, 30001, SeededRng(8, 40), shards=4, n_jobs=1)
        par = monte_carlo_alpha(p, 30001, SeededRng(8, 40), shards=4, n_jobs=4)
        np.testing.assert_array_equal(seq.alpha, par.alpha)
        assert seq.n_samples == 30001

    def test_bad_arguments(self):
        with pytest.raises(DomainError):
            monte_carlo_alpha([[0.5]], 0, SeededRng())
        with pytest.raises(DomainError):
            monte_carlo_alpha([[0.5]], 10, SeededRng(), semantics="other")
