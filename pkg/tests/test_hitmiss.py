import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linkreg.hitmiss import (
    FeatureSpec,
    alpha_conditional_log_density,
    cluster_feature_marginal,
    cluster_feature_marginal_naive,
    cluster_log_marginal,
    log_ratio_add_record,
)

from oracles import hitmiss_latent_enumeration

HALF = np.array([0.5, 0.5])


def test_singleton_is_frequency():
    th = np.array([0.2, 0.3, 0.5])
    for v in range(3):
        assert cluster_feature_marginal([v], 0.37, th) == pytest.approx(th[v], rel=1e-14)


def test_two_record_example():
    assert cluster_feature_marginal([1, 1], 0.2, HALF) == pytest.approx(0.41, abs=1e-15)


def test_full_distortion_is_independence():
    th = np.array([0.1, 0.6, 0.3])
    vals = [0, 1, 1, 2]
    assert cluster_feature_marginal(vals, 1.0, th) == pytest.approx(np.prod(th[vals]), rel=1e-13)


def test_zero_distortion_needs_agreement():
    th = np.array([0.1, 0.6, 0.3])
    assert cluster_feature_marginal([1, 1, 1], 0.0, th) == pytest.approx(0.6, rel=1e-14)
    assert cluster_feature_marginal([1, 2], 0.0, th) == 0.0


def test_marginal_factorises_over_fields():
    spec = FeatureSpec.from_rows([HALF, np.array([0.2, 0.3, 0.5])])
    codes = np.array([[1, 2], [1, 0]])
    alpha = [0.2, 0.4]
    want = math.log(cluster_feature_marginal([1, 1], 0.2, HALF)) + \
        math.log(cluster_feature_marginal([2, 0], 0.4, spec.theta[1]))
    assert cluster_log_marginal([0, 1], codes, alpha, spec) == pytest.approx(want, abs=1e-14)
    one = FeatureSpec.from_rows([HALF])
    assert cluster_log_marginal([0, 1], codes[:, :1], [0.2], one) == pytest.approx(math.log(0.41), abs=1e-14)


def test_add_record_examples():
    spec = FeatureSpec.from_rows([HALF])
    codes = np.array([[1], [1]])
    assert log_ratio_add_record([], 1, codes, [0.2], spec) == pytest.approx(math.log(0.5))
    assert log_ratio_add_record([0], 1, codes, [0.2], spec) == pytest.approx(math.log(0.41 / 0.5), abs=1e-14)
    spec3 = FeatureSpec.from_rows([np.array([0.2, 0.8]), np.array([0.1, 0.2, 0.7])])
    codes3 = np.array([[0, 1], [1, 2], [0, 0]])
    assert log_ratio_add_record([0, 1], 2, codes3, [1.0, 1.0], spec3) == \
        pytest.approx(math.log(0.2) + math.log(0.1), abs=1e-14)


def test_alpha_density_examples():
    spec = FeatureSpec.from_rows([HALF])
    codes = np.array([[1], [1], [0]])
    # singletons only: the data term is free of alpha
    flat = [alpha_conditional_log_density(0, a, [[0], [1], [2]], codes, spec) for a in (0.1, 0.5, 0.9)]
    assert max(flat) - min(flat) < 1e-14
    beta_kernel = [alpha_conditional_log_density(0, a, [[0], [1], [2]], codes, spec, (2.0, 3.0))
                   - math.log(a) - 2 * math.log(1 - a) for a in (0.1, 0.5, 0.9)]
    assert max(beta_kernel) - min(beta_kernel) < 1e-13
    got = alpha_conditional_log_density(0, 0.2, [[0, 1], [2]], codes, spec)
    assert got == pytest.approx(math.log(0.41) + math.log(0.5), abs=1e-14)
    assert alpha_conditional_log_density(0, 1.2, [[0, 1]], codes, spec) == -math.inf


def test_marginal_sums_to_one_over_code_tuples():
    rng = np.random.Generator(np.random.PCG64(7))
    for m in range(2, 5):
        th = rng.dirichlet(np.ones(m))
        for n in range(1, 4):
            for a in (0.0, 0.13, 0.8, 1.0):
                total = math.fsum(cluster_feature_marginal(list(v), a, th)
                                  for v in itertools.product(range(m), repeat=n))
                assert total == pytest.approx(1.0, abs=1e-10)


codes_strategy = st.integers(2, 6).flatmap(
    lambda m: st.tuples(st.just(m), st.lists(st.integers(0, m - 1), min_size=1, max_size=6)))


@settings(max_examples=200, deadline=None)
@given(codes_strategy, st.floats(0.0, 1.0), st.integers(0, 10**6))
def test_fast_equals_naive_and_enumeration(case, alpha, seed):
    m, vals = case
    th = np.random.Generator(np.random.PCG64(seed)).dirichlet(np.ones(m))
    fast = cluster_feature_marginal(vals, alpha, th)
    assert fast == pytest.approx(cluster_feature_marginal_naive(vals, alpha, th), rel=1e-12, abs=1e-300)
    if len(vals) <= 3 and fast > 0:
        want = hitmiss_latent_enumeration(np.array(vals)[:, None], [alpha], [th])
        assert math.log(fast) == pytest.approx(want, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(codes_strategy, st.floats(0.01, 0.99), st.randoms(use_true_random=False))
def test_order_invariance(case, alpha, rnd):
    m, vals = case
    th = np.full(m, 1.0 / m)
    shuffled = list(vals)
    rnd.shuffle(shuffled)
    assert cluster_feature_marginal(shuffled, alpha, th) == pytest.approx(
        cluster_feature_marginal(vals, alpha, th), rel=1e-12)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 3), st.integers(1, 5), st.integers(0, 10**6))
def test_add_record_equals_difference(p, size, seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    rows = [rng.dirichlet(np.ones(int(rng.integers(2, 6)))) for _ in range(p)]
    spec = FeatureSpec.from_rows(rows)
    codes = np.column_stack([rng.integers(0, len(r), size=size + 1) for r in rows])
    alpha = rng.uniform(0.01, 0.99, size=p)
    base = list(range(size))
    want = cluster_log_marginal(base + [size], codes, alpha, spec) - cluster_log_marginal(base, codes, alpha, spec)
    assert log_ratio_add_record(base, size, codes, alpha, spec) == pytest.approx(want, abs=1e-10)


def test_feature_spec_validation():
    with pytest.raises(ValueError):
        FeatureSpec.from_rows([np.array([0.5, 0.6])])
    with pytest.raises(ValueError):
        FeatureSpec.from_rows([np.array([1.0])])
    spec = FeatureSpec.from_rows([HALF])
    with pytest.raises(ValueError):
        spec.check_codes(np.array([[2]]))


def test_empirical_frequencies_floor():
    codes = np.array([[0], [0], [1]])
    spec = FeatureSpec.empirical(codes, [3])
    assert spec.theta[0, 2] > 0
    assert spec.theta[0, :3].sum() == pytest.approx(1.0, abs=1e-15)
    assert spec.theta[0, 0] == pytest.approx(2 / 3, rel=1e-6)
