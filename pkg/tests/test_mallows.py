import itertools
import math

import numpy as np
import pytest
from scipy import integrate, stats

from stepseg.errors import InputError
from stepseg.mallows import (
    RHO_MAX,
    RHO_MIN,
    MallowsParams,
    gmm_log_prob,
    inversions_from_permutation,
    log_prior_rho,
    log_psi,
    permutation_from_inversions,
    posterior_rho_params,
    prior_inversion_mean,
    sample_inversion_count,
    slice_sample_rho,
)


def inversions_oracle(perm):
    """Direct pairwise count: elements greater than k placed before k."""
    pos = {p: i for i, p in enumerate(perm)}
    k = len(perm)
    return [
        sum(1 for big in range(item + 1, k + 1) if pos[big] < pos[item])
        for item in range(1, k)
    ]


def log_psi_oracle(rho, n):
    return math.log(sum(math.exp(-rho * c) for c in range(n)))


def inversion_mean_oracle(rho, n):
    w = [math.exp(-rho * c) for c in range(n)]
    return sum(c * x for c, x in zip(range(n), w)) / sum(w)


class TestCodec:
    def test_identity(self):
        assert inversions_from_permutation([1, 2, 3, 4]).tolist() == [0, 0, 0]
        assert permutation_from_inversions([0, 0, 0]).tolist() == [1, 2, 3, 4]

    def test_full_reversal(self):
        assert inversions_from_permutation([3, 2, 1]).tolist() == [2, 1]
        assert permutation_from_inversions([2, 1]).tolist() == [3, 2, 1]

    def test_worked_example(self):
        perm = (2, 3, 1)
        assert inversions_from_permutation(perm).tolist() == [2, 0]
        assert inversions_from_permutation(perm).tolist() == inversions_oracle(perm)
        assert permutation_from_inversions([2, 0]).tolist() == [2, 3, 1]

    @pytest.mark.parametrize("k", range(1, 8))
    def test_bijection_exhaustive(self, k):
        seen = set()
        for perm in itertools.permutations(range(1, k + 1)):
            v = inversions_from_permutation(perm)
            assert v.tolist() == inversions_oracle(perm)
            assert tuple(permutation_from_inversions(v)) == perm
            seen.add(tuple(v.tolist()))
        assert len(seen) == math.factorial(k)

    def test_inverse_direction(self):
        # every valid inversion vector round-trips too
        k = 5
        ranges = [range(k - pos) for pos in range(k - 1)]
        for v in itertools.product(*ranges):
            perm = permutation_from_inversions(list(v))
            assert inversions_from_permutation(perm).tolist() == list(v)

    def test_invalid_inputs(self):
        with pytest.raises(InputError):
            inversions_from_permutation([1, 1, 2])
        with pytest.raises(InputError):
            inversions_from_permutation([2, 3])
        with pytest.raises(InputError):
            permutation_from_inversions([3, 0])  # v_1 max is 2 for K=3


class TestLogPsi:
    def test_single_term(self):
        assert log_psi(0.37, 1) == 0.0
        assert log_psi(12.0, 1) == 0.0

    def test_geometric_sum_value(self):
        assert log_psi(1.0, 3) == pytest.approx(log_psi_oracle(1.0, 3), abs=1e-12)
        assert log_psi(1.0, 3) == pytest.approx(0.4076059644443804, abs=1e-9)

    def test_large_dispersion_limit(self):
        assert abs(log_psi(20.0, 5)) < 1e-8

    def test_identity_over_grid(self):
        for rho in [1e-3, 1e-2, 0.1, 0.5, 1.0, 3.0, 10.0, 30.0]:
            for n in [2, 3, 7, 20, 50]:
                assert log_psi(rho, n) == pytest.approx(
                    log_psi_oracle(rho, n), abs=1e-12
                )

    def test_rejects_bad_args(self):
        with pytest.raises(InputError):
            log_psi(0.0, 3)
        with pytest.raises(InputError):
            log_psi(1.0, 0)


class TestGmmLogProb:
    def test_zero_inversions(self):
        params = MallowsParams(rho=[0.7, 1.3, 2.0])
        expected = -sum(log_psi(r, n) for r, n in zip([0.7, 1.3, 2.0], [4, 3, 2]))
        assert gmm_log_prob([0, 0, 0], params) == pytest.approx(expected, abs=1e-12)

    def test_frozen_value(self):
        # oracle: enumerate all 6 permutations of K=3, check value and total mass
        params = MallowsParams(rho=[1.0, 1.0])
        assert gmm_log_prob([1, 0], params) == pytest.approx(-1.7208676519626032, abs=1e-9)
        total = sum(
            math.exp(gmm_log_prob(inversions_from_permutation(p), params))
            for p in itertools.permutations([1, 2, 3])
        )
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_two_element_closed_form(self):
        for rho in [0.2, 1.0, 4.0]:
            params = MallowsParams(rho=[rho])
            assert gmm_log_prob([1], params) == pytest.approx(
                -rho - math.log1p(math.exp(-rho)), abs=1e-12
            )

    def test_normalization_random(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            k = int(rng.integers(2, 7))
            params = MallowsParams(rho=rng.uniform(0.05, 5.0, size=k - 1))
            total = sum(
                math.exp(gmm_log_prob(inversions_from_permutation(p), params))
                for p in itertools.permutations(range(1, k + 1))
            )
            assert total == pytest.approx(1.0, abs=1e-9)

    def test_monotone_in_each_position(self):
        params = MallowsParams(rho=[0.9, 0.4, 1.5])
        base = [1, 1, 1]
        for pos in range(3):
            lower = list(base)
            lower[pos] -= 1
            assert gmm_log_prob(lower, params) > gmm_log_prob(base, params)

    def test_length_mismatch(self):
        with pytest.raises(InputError):
            gmm_log_prob([1, 0, 0], MallowsParams(rho=[1.0, 1.0]))


class TestPriorInversionMean:
    def test_matches_bruteforce(self):
        for rho0 in [0.1, 0.5, 1.0, 2.0, 5.0]:
            for n in range(2, 21):
                assert prior_inversion_mean(rho0, n) == pytest.approx(
                    inversion_mean_oracle(rho0, n), abs=1e-9
                )

    def test_frozen_values(self):
        assert prior_inversion_mean(1.0, 2) == pytest.approx(0.2689414213699951, abs=1e-9)
        assert prior_inversion_mean(1.0, 3) == pytest.approx(0.4247896173955586, abs=1e-9)

    def test_concentrates_at_zero(self):
        assert prior_inversion_mean(40.0, 6) < 1e-12


class TestLogPriorRho:
    def test_flat_when_nu_zero(self):
        for rho in [0.1, 1.0, 7.0]:
            assert log_prior_rho(rho, 0.3, 0.0, 4) == 0.0

    def test_direct_evaluation(self):
        expected = -(1.0 * 0.26894 + log_psi_oracle(1.0, 2))
        assert log_prior_rho(1.0, 0.26894, 1.0, 2) == pytest.approx(expected, abs=1e-12)

    def test_mode_at_matching_mean(self):
        # density peaks where the expected inversion count equals v_k0
        n, nu0 = 4, 2.5
        target = 0.6
        grid = np.linspace(0.01, 10.0, 20001)
        vals = [log_prior_rho(r, target, nu0, n) for r in grid]
        mode = grid[int(np.argmax(vals))]
        # root-find oracle: solve prior_inversion_mean(rho, n) == target
        lo, hi = 1e-6, 50.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if prior_inversion_mean(mid, n) > target:
                lo = mid
            else:
                hi = mid
        assert mode == pytest.approx(0.5 * (lo + hi), abs=1e-3)


class TestSampleInversionCount:
    def test_tiny_dispersion_uniform(self):
        rng = np.random.default_rng(0)
        n = 4
        draws = [sample_inversion_count(1e-9, n, rng) for _ in range(100_000)]
        freq = np.bincount(draws, minlength=n)
        chi2 = np.sum((freq - 25_000.0) ** 2 / 25_000.0)
        assert chi2 < stats.chi2.ppf(0.999, df=n - 1)

    def test_large_dispersion_degenerate(self):
        rng = np.random.default_rng(1)
        draws = [sample_inversion_count(20.0, 5, rng) for _ in range(20_000)]
        assert np.mean(np.asarray(draws) == 0) > 0.999

    def test_matches_law(self):
        rng = np.random.default_rng(2)
        draws = np.asarray([sample_inversion_count(1.0, 3, rng) for _ in range(100_000)])
        freq = np.bincount(draws, minlength=3) / draws.size
        expected = np.exp(-np.arange(3.0))
        expected /= expected.sum()
        assert np.allclose(freq, expected, atol=0.01)


class TestPosteriorRhoParams:
    def test_no_data_returns_prior(self):
        assert posterior_rho_params(0, 0, 0.37, 1.7) == (0.37, 1.7)

    def test_arithmetic(self):
        v_post, nu_post = posterior_rho_params(1, 2, 0.26894, 0.1)
        assert nu_post == pytest.approx(2.1)
        assert v_post == pytest.approx((1 + 0.1 * 0.26894) / 2.1, abs=1e-12)

    def test_data_dominates(self):
        v_post, nu_post = posterior_rho_params(0, 10_000, 0.5, 0.1)
        assert v_post < 1e-4
        assert nu_post == pytest.approx(10_000.1)


def _target_mean_by_quadrature(v_post, nu_post, n):
    def density(rho):
        return math.exp(log_prior_rho(rho, v_post, nu_post, n))

    mass, _ = integrate.quad(density, RHO_MIN, RHO_MAX, limit=200)
    first, _ = integrate.quad(lambda r: r * density(r), RHO_MIN, RHO_MAX, limit=200)
    return first / mass


class TestSliceSampleRho:
    def test_calibration_against_quadrature(self):
        rng = np.random.default_rng(11)
        v_post, nu_post, n = 0.3, 5.0, 3
        x = 1.0
        draws = np.empty(50_000)
        for i in range(draws.size):
            x = slice_sample_rho(x, v_post, nu_post, n, rng)
            draws[i] = x
        expected = _target_mean_by_quadrature(v_post, nu_post, n)
        assert abs(draws.mean() - expected) / expected < 0.02

    def test_concentration_with_large_nu(self):
        rng = np.random.default_rng(12)
        n, v_post = 3, 0.45
        x = 1.0
        draws = np.empty(3000)
        for i in range(draws.size):
            x = slice_sample_rho(x, v_post, 1e6, n, rng)
            draws[i] = x
        # root-find oracle: the rho whose expected inversion count is v_post
        lo, hi = 1e-6, 50.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if prior_inversion_mean(mid, n) > v_post:
                lo = mid
            else:
                hi = mid
        assert draws.mean() == pytest.approx(0.5 * (lo + hi), abs=0.01)
        assert draws.std() < 0.01

    def test_target_invariance(self):
        # one slice step from an (approximate) target draw leaves the law alone
        rng = np.random.default_rng(13)
        v_post, nu_post, n = 0.5, 8.0, 4
        x = 0.8
        chain = np.empty(30_000)
        for i in range(chain.size):
            x = slice_sample_rho(x, v_post, nu_post, n, rng)
            chain[i] = x
        before = chain[5000::5]
        stepped = np.asarray([slice_sample_rho(s, v_post, nu_post, n, rng) for s in before])
        assert stats.ks_2samp(before, stepped).pvalue > 0.01

    def test_deterministic_given_stream(self):
        a = slice_sample_rho(1.0, 0.3, 5.0, 3, np.random.default_rng(5))
        b = slice_sample_rho(1.0, 0.3, 5.0, 3, np.random.default_rng(5))
        assert a == b
