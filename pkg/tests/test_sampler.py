import math
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import invgamma, kstest

from linkreg import _kernels
from linkreg.corpus import Corpus
from linkreg.datagen import builtin_experiment, generate_corpus
from linkreg.hitmiss import FeatureSpec, log_ratio_add_record
from linkreg.partition import NEW
from linkreg.priors import PYP, UniformLabels, parse_prior, predictive_alloc
from linkreg.regression import log_ratio_move_regression
from linkreg.sampler import (
    Chain,
    ConfigError,
    Mode,
    SamplerConfig,
    VariancePrior,
    gibbs_update_lambda,
    merge_samples,
    metropolis_update_alpha,
    metropolis_update_regression,
    run_chain,
    run_chains,
)

from micro import BATTERY, compare
from oracles import canonical, exact_partition_posterior

BACKENDS = ["python"] + (["compiled"] if _kernels.compiled_backend is not None else [])


def subset(corpus: Corpus, n: int) -> Corpus:
    """First ``n // 2`` records of each of the first two databases (or the first ``n``)."""
    keep = []
    for d in np.unique(corpus.db)[:2]:
        idx = np.flatnonzero(corpus.db == d)
        keep.extend(idx[: n // len(np.unique(corpus.db)[:2])])
    keep = np.array(sorted(keep))
    reg = None
    if corpus.regression is not None:
        from linkreg.regression import RegressionData

        reg = RegressionData(corpus.regression.y[keep], corpus.regression.x[keep])
    return Corpus(corpus.db[keep], corpus.rec[keep], corpus.codes[keep], corpus.features, reg,
                  None if corpus.entity is None else corpus.entity[keep])


def _experiment(name, n=80, seed=0):
    spec = builtin_experiment(name, seed)
    gen = generate_corpus(spec)
    return subset(gen.corpus, n), parse_prior(spec.prior)


@pytest.mark.skipif(_kernels.compiled_backend is None, reason="compiled kernel not built")
@pytest.mark.parametrize("name,extra", [
    ("ExpI", {}),
    ("ExpII", {}),
    ("ExpIII", {"var_x_prior": VariancePrior(0.01, 10.0)}),
    ("RL500-dedup", {"mode": Mode.LINKAGE_ONLY, "random_scan": True}),
])
def test_backends_are_bitwise_twins(name, extra):
    corpus, prior = _experiment(name)
    cfg = SamplerConfig(iterations=60, burn_in=10, seed=5, **extra)
    a = run_chain(corpus, prior, cfg, backend=_kernels.get_backend("compiled"))
    b = run_chain(corpus, prior, cfg, backend=_kernels.get_backend("python"))
    for field in ("labels", "k", "t", "alpha", "beta", "var_y", "var_x"):
        x, y = getattr(a, field), getattr(b, field)
        if x is None:
            assert y is None
        else:
            np.testing.assert_array_equal(x, y, err_msg=field)
    assert a.acceptance == b.acceptance


def _reference_weights(chain: Chain, r: int) -> dict:
    """Normalised allocation probabilities of record ``r`` from the pure reference functions."""
    st = chain.state
    corpus = chain.corpus
    spec = corpus.features
    logw = {}
    for target, w in predictive_alloc(chain.prior, st, r):
        if w == 0:
            continue
        members = [] if target == NEW else [m for m in st.members(target) if m != r]
        lw = math.log(w) + log_ratio_add_record(members, r, corpus.codes, chain.alpha, spec)
        if chain.use_reg:
            lw += log_ratio_move_regression(st, r, target, corpus.regression, chain.params)
        logw[target] = lw
    top = max(logw.values())
    tot = sum(math.exp(v - top) for v in logw.values())
    return {t: math.exp(v - top) / tot for t, v in logw.items()}


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("name,prior_text,mode", [
    ("ExpII", "pyp:0.4,0.98", Mode.JOINT),
    ("ExpII", "uniform-labels:600", Mode.JOINT),
    ("ExpII", "uniform-partitions:600", Mode.LINKAGE_ONLY),
    ("ExpIII", "cpyp:1,0.725", Mode.JOINT),
    ("ExpI", "pyp:2,0.5", Mode.JOINT),
])
def test_kernel_weights_match_reference(backend, name, prior_text, mode):
    corpus, _ = _experiment(name, n=30, seed=1)
    prior = parse_prior(prior_text)
    cfg = SamplerConfig(iterations=2, seed=0, mode=mode, alpha_init=0.3)
    chain = Chain(corpus, prior, cfg, backend=_kernels.get_backend(backend))
    rng = np.random.Generator(np.random.PCG64(9))
    # scramble the partition first so that clusters of several records exist
    chain.sweep_lambda(chain.order, rng.random(chain.order.shape[0]) * 0.02)
    checked = 0
    for r in chain.order[:: max(1, len(chain.order) // 12)]:
        r = int(r)
        want = _reference_weights(chain, r)
        before = chain.state.labels.copy()
        gibbs_update_lambda(chain, r, rng)
        cand, prob = chain.last_weights()
        assert prob.sum() == pytest.approx(1.0, abs=1e-12)
        got = {}
        for c, p in zip(cand.tolist(), prob.tolist()):
            got[NEW if c < 0 else c] = got.get(NEW if c < 0 else c, 0.0) + p
        for t in set(want) | set(got):
            assert got.get(t, 0.0) == pytest.approx(want.get(t, 0.0), abs=1e-10), (r, t)
        assert set(np.flatnonzero(before != chain.state.labels)) <= {r}
        checked += 1
    assert checked >= 5


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("name", ["ExpI", "ExpII"])
def test_joint_without_regression_is_linkage_only(backend, name):
    corpus, prior = _experiment(name, n=60)
    kern = _kernels.get_backend(backend)
    joint = SamplerConfig(iterations=30, seed=3, mode=Mode.JOINT)
    a = Chain(corpus.without_regression(), prior, joint, backend=kern)
    b = Chain(corpus, prior, replace(joint, mode=Mode.LINKAGE_ONLY), backend=kern)
    rng = np.random.Generator(np.random.PCG64(0))
    for _ in range(5):
        u = rng.random(a.order.shape[0])
        a.sweep_lambda(a.order, u)
        b.sweep_lambda(b.order, u)
        m = int(a.info[0])
        assert m == int(b.info[0])
        assert a.wbuf[:m].tobytes() == b.wbuf[:m].tobytes()
        np.testing.assert_array_equal(a.state.labels, b.state.labels)
    sa = run_chain(corpus.without_regression(), prior, joint, backend=kern)
    sb = run_chain(corpus, prior, replace(joint, mode=Mode.LINKAGE_ONLY), backend=kern)
    np.testing.assert_array_equal(sa.labels, sb.labels)
    np.testing.assert_array_equal(sa.alpha, sb.alpha)


def test_two_record_binary_matches_enumeration():
    case = BATTERY[0]
    for joint in (False, True):
        res, unknown = compare(case, joint, 100_000, seed=7)
        assert not unknown
        for p, f, se in res.values():
            assert abs(f - p) <= 3 * se


def test_identical_records_nearly_always_cluster():
    theta = [np.full(10, 0.1)] * 3
    exact = exact_partition_posterior([1, 1], np.array([[3, 4, 5], [3, 4, 5]]), theta, [1e-4] * 3,
                                      ("pyp", 1.0, 0.5))
    assert exact[(0, 0)] > 0.99
    spec = FeatureSpec.from_rows(theta)
    c = Corpus(np.array([1, 1]), np.array([1, 2]), np.array([[3, 4, 5], [3, 4, 5]]), spec)
    cfg = SamplerConfig(iterations=20_000, seed=1, mode=Mode.LINKAGE_ONLY, update_alpha=False, alpha_init=1e-4)
    s = run_chain(c, PYP(1.0, 0.5), cfg)
    assert np.mean(s.k == 1) == pytest.approx(exact[(0, 0)], abs=0.005)


def test_no_features_follows_prior_alone():
    spec = FeatureSpec(np.zeros((0, 0)), [])
    c = Corpus(np.array([1, 1, 1]), np.array([1, 2, 3]), np.zeros((3, 0), int), spec)
    s = run_chain(c, UniformLabels(4), SamplerConfig(iterations=40_000, seed=2, mode=Mode.LINKAGE_ONLY))
    freq = Counter(canonical(row) for row in s.labels)
    # (4)_k / 4^3 for k = 1, 2, 3
    want = {(0, 0, 0): 4 / 64, (0, 0, 1): 12 / 64, (0, 1, 0): 12 / 64, (0, 1, 1): 12 / 64, (0, 1, 2): 24 / 64}
    for key, p in want.items():
        assert freq[key] / s.n_kept == pytest.approx(p, abs=0.015)


def _tiny_corpus(with_reg=True):
    from linkreg.regression import RegressionData

    spec = FeatureSpec.from_rows([np.array([0.3, 0.7]), np.array([0.2, 0.3, 0.5])])
    reg = RegressionData([1.0, math.nan, 0.4, 2.0], [[math.nan], [0.3], [0.1], [0.8]]) if with_reg else None
    return Corpus(np.array([1, 1, 2, 2]), np.array([1, 2, 1, 2]), np.array([[0, 1], [1, 2], [0, 0], [1, 1]]),
                  spec, reg)


def test_one_kept_sample():
    cfg = SamplerConfig(iterations=6, burn_in=5, thin=1)
    assert cfg.n_kept == 1
    assert run_chain(_tiny_corpus(), PYP(1.0, 0.5), cfg).n_kept == 1
    assert SamplerConfig(iterations=100, burn_in=10, thin=7).n_kept == 12


def test_seeded_runs_are_identical_and_seeds_differ():
    corpus, prior = _experiment("ExpII", n=60)
    cfg = SamplerConfig(iterations=40, burn_in=5, seed=8)
    a, b = run_chain(corpus, prior, cfg), run_chain(corpus, prior, cfg)
    for field in ("labels", "alpha", "beta", "var_y", "var_x"):
        assert getattr(a, field).tobytes() == getattr(b, field).tobytes()
    c = run_chain(corpus, prior, replace(cfg, seed=9))
    assert c.alpha.tobytes() != a.alpha.tobytes()


def test_parallel_chains_match_sequential():
    corpus, prior = _experiment("ExpI", n=40)
    cfg = SamplerConfig(iterations=20, seed=4)
    seq = run_chains(corpus, prior, cfg, n_chains=2, workers=1)
    par = run_chains(corpus, prior, cfg, n_chains=2, workers=2)
    for x, y in zip(seq, par):
        np.testing.assert_array_equal(x.labels, y.labels)
        np.testing.assert_array_equal(x.beta, y.beta)
    assert [s.seed for s in seq] == [4, 5] and [s.chain for s in seq] == [0, 1]
    assert merge_samples(seq).n_kept == 40


def test_bipartite_chain_never_violates_constraint():
    spec = builtin_experiment("RL500-bipartite", 0)
    corpus = subset(generate_corpus(spec).corpus, 120)
    s = run_chain(corpus, parse_prior(spec.prior), SamplerConfig(iterations=60, seed=0, mode=Mode.LINKAGE_ONLY))
    for row in s.labels:
        key = row * 3 + corpus.db
        assert np.unique(key).size == key.size
    assert s.t is not None and np.all(s.k == corpus.n_records - s.t)


def test_pyp_with_duplicate_ban_respects_it():
    corpus, _ = _experiment("RL500-dedup", n=80)
    cfg = SamplerConfig(iterations=40, seed=0, mode=Mode.LINKAGE_ONLY, no_within_db_duplicates=True)
    s = run_chain(corpus, PYP(0.4, 0.98), cfg)
    for row in s.labels:
        key = row * 3 + corpus.db
        assert np.unique(key).size == key.size


def test_alpha_uniform_when_all_singletons():
    spec = FeatureSpec.from_rows([np.array([0.3, 0.7])])
    c = Corpus(np.array([1, 1, 1]), np.array([1, 2, 3]), np.array([[0], [1], [1]]), spec)
    cfg = SamplerConfig(iterations=100_000, seed=3, thin=10, mode=Mode.LINKAGE_ONLY, update_lambda=False,
                        adapt=False, proposal_sd_alpha=2.0)
    s = run_chain(c, PYP(1.0, 0.5), cfg)
    assert s.n_kept == 10_000
    assert kstest(s.alpha[:, 0], "uniform").pvalue > 0.001


def test_alpha_tiny_step_always_accepted():
    chain = Chain(_tiny_corpus(), PYP(1.0, 0.5), SamplerConfig(iterations=2, init_labels=(0, 0, 2, 2)))
    rng = np.random.Generator(np.random.PCG64(0))
    assert all(metropolis_update_alpha(chain, l, 1e-12, rng) for l in (0, 1) for _ in range(20))


def test_alpha_acceptance_is_symmetric_on_logit_scale():
    # from a and b the Metropolis ratios are reciprocal
    chain = Chain(_tiny_corpus(), PYP(1.0, 0.5), SamplerConfig(iterations=2, init_labels=(0, 0, 2, 2)))

    def log_target_logit(a):
        return chain.alpha_log_target(0, a) + math.log(a * (1 - a))

    a, b = 0.1, 0.6
    assert (log_target_logit(b) - log_target_logit(a)) == pytest.approx(-(log_target_logit(a) - log_target_logit(b)))


def test_regression_walk_without_likelihood_samples_the_prior():
    corpus = _tiny_corpus()
    vy = VariancePrior(2.0, 8.0)
    cfg = SamplerConfig(iterations=2, var_y_prior=vy)
    chain = Chain(corpus, PYP(1.0, 0.5), cfg)
    chain.regression_log_lik = lambda params: 0.0
    rng = np.random.Generator(np.random.PCG64(1))
    sds = {("beta", 0): 1.0, ("var_y", 0): 1.0, ("var_x", 0): 1.0}
    acc = Counter()
    draws = []
    for i in range(30_000):
        metropolis_update_regression(chain, sds, rng, acc)
        if i % 5 == 0:
            draws.append(chain.params.var_y_given_x)
    # log-flat prior on var_x: every proposal has ratio 1
    assert acc[("var_x", 0)] == 30_000 and acc[("beta", 0)] == 30_000
    a = vy.strength / 2
    assert kstest(draws, invgamma(a, scale=vy.mean * (a - 1)).cdf).pvalue > 0.001


def test_regression_tiny_steps_always_accepted():
    chain = Chain(_tiny_corpus(), PYP(1.0, 0.5), SamplerConfig(iterations=2))
    rng = np.random.Generator(np.random.PCG64(2))
    sds = {("beta", 0): 1e-12, ("var_y", 0): 1e-12, ("var_x", 0): 1e-12}
    acc = Counter()
    for _ in range(10):
        metropolis_update_regression(chain, sds, rng, acc)
    assert sum(acc.values()) == 30


def test_variance_prior_density():
    vp = VariancePrior(0.01, 10.0)
    # density of log v is the inverse gamma density times v
    for v in (0.003, 0.01, 0.05):
        want = invgamma(5.0, scale=0.04).logpdf(v) + math.log(v)
        got = vp.log_density_log_scale(v)
        assert got - vp.log_density_log_scale(0.01) == pytest.approx(
            want - (invgamma(5.0, scale=0.04).logpdf(0.01) + math.log(0.01)), abs=1e-12)
    assert VariancePrior.from_dict(vp.to_dict()) == vp
    assert VariancePrior.from_dict("log-flat") == VariancePrior()


@pytest.mark.parametrize("kwargs", [
    {"iterations": 0},
    {"iterations": 10, "burn_in": 10},
    {"iterations": 10, "thin": 0},
    {"iterations": 10, "proposal_sd_beta": 0.0},
    {"iterations": 10, "alpha_init": 1.0},
    {"iterations": 10, "alpha_prior": (0.0, 1.0)},
])
def test_config_errors(kwargs):
    with pytest.raises(ConfigError):
        SamplerConfig(**kwargs)


def test_variance_prior_errors():
    with pytest.raises(ConfigError):
        VariancePrior(1.0, None)
    with pytest.raises(ConfigError):
        VariancePrior(1.0, 2.0)


def test_constrained_prior_rejects_non_matching_start():
    spec = builtin_experiment("RL500-bipartite", 0)
    corpus = subset(generate_corpus(spec).corpus, 20)
    labels = tuple([0, 0] + list(range(2, 20)))
    with pytest.raises(Exception):
        Chain(corpus, parse_prior(spec.prior), SamplerConfig(iterations=2, init_labels=labels))
