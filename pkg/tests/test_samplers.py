import itertools
import math

import numpy as np
import pytest

from nastein.samplers import (CertificateError, FieldSpec, cov_domination_test, cov_with_stderr,
                              derive_seed, na_covariance_test, sample_block_sums, sample_field,
                              sample_sites, sample_vector, splitmix64, sub_block_sums,
                              truncated_spectral_min, verify_cov_domination, verify_na)

from conftest import LN2

SIGN_GAUSS = FieldSpec("sign_gaussian_na", 1, 0.3, LN2)


def test_splitmix_reference_values():
    # first outputs of the reference splitmix64 generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4


def test_derive_seed_distinct():
    seeds = {derive_seed(7, r) for r in range(10_000)}
    assert len(seeds) == 10_000
    assert derive_seed(7, 3) != derive_seed(8, 3)


def test_spectral_certificate():
    assert truncated_spectral_min(0.0, 1.0, 1) == pytest.approx(1.0)
    # at theta = 0 the density is 1 - 2c sum e^{-lam k} = 1 - 2c/(e^lam - 1)
    assert truncated_spectral_min(0.3, LN2, 1) == pytest.approx(1 - 2 * 0.3 * (1 - 2.0 ** -50), abs=1e-9)
    with pytest.raises(CertificateError):
        FieldSpec("gaussian_na", 1, 0.6, LN2)
    FieldSpec("gaussian_na", 2, 0.1, LN2)


def test_spec_validation():
    with pytest.raises(ValueError):
        FieldSpec("ising", 1)
    with pytest.raises(ValueError):
        FieldSpec("iid_rademacher", 0)
    with pytest.raises(ValueError):
        FieldSpec("iid_rademacher", 1, K=-1.0)
    assert FieldSpec("multinomial", params={"N": 3, "probs": [0.5, 0.5]}) == \
        FieldSpec("multinomial", params={"probs": (0.5, 0.5), "N": 3})
    assert SIGN_GAUSS.bound == 1 and math.isinf(FieldSpec("gaussian_na", 1, 0.3, LN2).bound)


# --- vectors -------------------------------------------------------------------

def test_multinomial_two_balls_two_boxes():
    # outcomes (2,0), (1,1), (1,1), (0,2) equally likely: Cov = E[X1 X2] - 1 = 0.5 - 1
    outcomes = [(sum(b == 0 for b in o), sum(b == 1 for b in o)) for o in itertools.product(range(2), repeat=2)]
    exact = np.mean([a * b for a, b in outcomes]) - 1.0
    assert exact == -0.5
    spec = FieldSpec("multinomial", params={"N": 2})
    x = sample_vector(spec, 2, seed=1, replicates=20_000).values
    cov, se = cov_with_stderr(x[:, 0], x[:, 1])
    assert abs(cov - exact) <= 3 * se
    assert np.all(x.sum(axis=1) == 2)


def test_multinomial_zero_balls():
    x = sample_vector(FieldSpec("multinomial", params={"N": 0}), 4, seed=0, replicates=3).values
    assert np.all(x == 0)


def test_srswor_pairs_equiprobable():
    spec = FieldSpec("srswor", params={"population": [-1, 0, 1]})
    x = sample_vector(spec, 2, seed=2, replicates=30_000).values
    pairs = [frozenset(r) for r in x.tolist()]
    assert all(len(p) == 2 for p in pairs)
    counts = np.array([pairs.count(frozenset(p)) for p in itertools.combinations([-1.0, 0.0, 1.0], 2)])
    assert counts.sum() == len(pairs)
    expected = len(pairs) / 3
    assert np.all(np.abs(counts - expected) <= 3 * math.sqrt(expected * 2 / 3))


def test_vector_errors():
    with pytest.raises(ValueError):
        sample_vector(FieldSpec("srswor", params={"population": [1, 2]}), 3, 0)
    with pytest.raises(ValueError):
        sample_vector(FieldSpec("srswor"), 1, 0)
    with pytest.raises(ValueError):
        sample_vector(SIGN_GAUSS, 3, 0)
    with pytest.raises(ValueError):
        sample_vector(FieldSpec("multinomial", params={"N": 2, "probs": [1.0]}), 2, 0)


def test_vector_determinism():
    spec = FieldSpec("multinomial", params={"N": 5})
    a = sample_vector(spec, 4, 9, 50).values
    assert np.array_equal(a, sample_vector(spec, 4, 9, 50).values)
    assert not np.array_equal(a, sample_vector(spec, 4, 10, 50).values)


# --- fields ------------------------------------------------------------------------

def test_iid_field():
    x = sample_field(FieldSpec("iid_rademacher", 2), 6, seed=0, replicates=500).values
    assert x.shape == (500, 6, 6) and set(np.unique(x)) == {-1.0, 1.0}
    assert abs(x.mean()) <= 3 / math.sqrt(x.size)


def test_sign_gaussian_lag_one():
    x = sample_field(SIGN_GAUSS, 2, seed=4, replicates=40_000).values
    cov, se = cov_with_stderr(x[:, 0], x[:, 1])
    assert abs(cov - 2 / math.pi * math.asin(-0.15)) <= 3 * se
    assert set(np.unique(x)) == {-1.0, 1.0}


def test_gaussian_lag_one():
    spec = FieldSpec("gaussian_na", 1, 0.3, LN2)
    x = sample_field(spec, 3, seed=6, replicates=40_000).values
    cov, se = cov_with_stderr(x[:, 0], x[:, 1])
    assert abs(cov + 0.3 * 0.5) <= 3 * se
    assert abs(x[:, 1].var() - 1) < 0.03


def test_field_determinism_and_workers():
    spec = FieldSpec("gaussian_na", 2, 0.1, LN2)
    a = sample_field(spec, 5, seed=3, replicates=2500).values
    b = sample_field(spec, 5, seed=3, replicates=2500, workers=4).values
    assert np.array_equal(a, b)
    c = sample_field(spec, 5, seed=3, replicates=1100).values
    assert np.array_equal(a[:1100], c)


def test_field_translation_shares_law():
    # distinct corners with the same shape give identical draws for a stationary field
    a = sample_field(SIGN_GAUSS, 4, 1, 10, corner=(0,)).values
    b = sample_field(SIGN_GAUSS, 4, 1, 10, corner=(17,)).values
    assert np.array_equal(a, b)


def test_stationarity_across_anchors():
    pts = np.array([[k] for k in range(0, 60)])
    x = sample_sites(SIGN_GAUSS, pts, 20_000, seed=8)
    covs, ses = zip(*[cov_with_stderr(x[:, j], x[:, j + 2]) for j in (0, 11, 23, 37, 52)])
    pooled = math.sqrt(np.mean(np.square(ses)))
    assert np.ptp(covs) <= 2 * 3 * pooled


def test_decay_certificate_transfer():
    x = sample_field(SIGN_GAUSS, 6, seed=12, replicates=20_000).values
    for k in range(1, 6):
        cov, se = cov_with_stderr(x[:, 0], x[:, k])
        assert -cov <= 0.3 * math.exp(-LN2 * k) + 3 * se


@pytest.mark.parametrize("spec", [FieldSpec("iid_rademacher", 1), SIGN_GAUSS,
                                  FieldSpec("gaussian_na", 1, 0.3, LN2)])
def test_mean_zero(spec):
    x = sample_field(spec, 8, seed=1, replicates=5000).values.mean(axis=1)
    assert abs(x.mean()) <= 3 * x.std(ddof=1) / math.sqrt(len(x))


def test_block_sums_match_field():
    spec = FieldSpec("sign_gaussian_na", 2, 0.1, LN2)
    S = sample_block_sums(spec, [(0, 0)], 4, 30, seed=2)
    F = sample_field(spec, 4, seed=2, replicates=30).values
    np.testing.assert_array_equal(S[:, 0], F.reshape(30, -1).sum(axis=1))


def test_iid_block_sums_law():
    S = sample_block_sums(FieldSpec("iid_rademacher", 1), [(0,), (5,)], 5, 20_000, seed=1)
    assert S.shape == (20_000, 2)
    assert set(np.unique(S)) <= {-5.0, -3.0, -1.0, 1.0, 3.0, 5.0}
    assert S.var() == pytest.approx(5, rel=0.05)


def test_sub_block_sums_total():
    xi = sub_block_sums(SIGN_GAUSS, 9, 4, 20, seed=0)
    F = sample_field(SIGN_GAUSS, 9, seed=0, replicates=20).values
    assert xi.shape == (20, 3)
    np.testing.assert_allclose(xi.sum(axis=1), F.sum(axis=1))


# --- NA screening -------------------------------------------------------------

def test_multinomial_singletons_na():
    spec = FieldSpec("multinomial", params={"N": 4, "probs": [0.2, 0.3, 0.5]})
    rep = verify_na(spec, ((0,), (2,)), replicates=20_000, seed=1, m=3)
    assert rep.passed
    s = next(p for p in rep.pairs if p.name == "sum/sum")
    assert abs(s.cov + 4 * 0.2 * 0.5) <= 3 * s.stderr


def test_iid_passes():
    rep = verify_na(FieldSpec("iid_rademacher", 1), ((0, 1), (2, 3)), replicates=5000, seed=0, n=4, l=1)
    assert rep.passed


@pytest.mark.parametrize("d,n", [(1, 8), (1, 16), (2, 8)])
def test_sign_gaussian_sub_blocks_na(d, n):
    spec = FieldSpec("sign_gaussian_na", d, 0.3 if d == 1 else 0.1, LN2)
    l = n // 4
    m = ((n - 1) // l + 1) ** d
    rep = verify_na(spec, ((0,), (1,)), replicates=10_000, seed=d, n=n, l=l)
    assert rep.passed
    rep = verify_na(spec, (tuple(range(m // 2)), tuple(range(m // 2, m))), replicates=10_000, seed=d, n=n, l=l)
    assert rep.passed


def test_positive_control_fails():
    rng = np.random.default_rng(0)
    z = rng.standard_normal((10_000, 2))
    x = np.column_stack([z[:, 0], 0.5 * z[:, 0] + math.sqrt(0.75) * z[:, 1]])
    assert not na_covariance_test(x, (0,), (1,)).passed


def test_overlapping_subsets_rejected():
    x = np.zeros((10, 4))
    with pytest.raises(ValueError, match="disjoint"):
        na_covariance_test(x, (0, 1), (1, 2))
    with pytest.raises(ValueError):
        na_covariance_test(x, (), (1,))
    with pytest.raises(ValueError):
        na_covariance_test(x, (0,), (4,))


def test_domination_identity_reduces_to_sign():
    spec = FieldSpec("multinomial", params={"N": 3})
    x = sample_vector(spec, 3, 0, 10_000).values
    rep = cov_domination_test(x, (0,), (1,), lambda a: a[:, 0], lambda b: b[:, 0], 1.0, 1.0)
    assert rep.lhs == pytest.approx(rep.rhs)
    assert rep.passed


def test_domination_tanh_multinomial():
    spec = FieldSpec("multinomial", params={"N": 2})
    rep = verify_cov_domination(spec, ((0,), (1,)), lambda a: np.tanh(a[:, 0]), lambda b: np.tanh(b[:, 0]),
                                1.0, 1.0, replicates=10_000, seed=3, m=2)
    assert rep.passed


def test_domination_constant_function():
    x = sample_vector(FieldSpec("multinomial", params={"N": 3}), 3, 0, 1000).values
    rep = cov_domination_test(x, (0,), (1, 2), lambda a: np.ones(len(a)), lambda b: b.sum(axis=1), 0.0, 1.0)
    assert rep.lhs == 0 and rep.rhs == 0 and rep.passed


def test_domination_requires_bounds():
    with pytest.raises(ValueError):
        cov_domination_test(np.zeros((5, 2)), (0,), (1,), np.sum, np.sum, None, 1.0)
