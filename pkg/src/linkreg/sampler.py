"""Metropolis-within-Gibbs sampler for joint record linkage and regression.

One sweep reallocates every record (Gibbs, compiled kernel), then updates each
distortion probability (random walk on the logit scale) and, in joint mode,
each regression parameter (random walk on beta and on log variances).
"""
from __future__ import annotations

import enum
import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .corpus import Corpus
from .partition import Constraint, LinkageState
from .priors import (
    PYP,
    ConstrainedPYP,
    PartitionPrior,
    UniformLabels,
    UniformPartitions,
    validate_prior,
)
from .regression import JITTER, RegressionParams, record_stats, stats_log_lik

log = logging.getLogger(__name__)

ADAPT_EVERY = 50
TARGET_ACCEPT = (0.25, 0.45)


class Mode(enum.Enum):
    LINKAGE_ONLY = "linkage-only"
    JOINT = "joint"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class VariancePrior:
    """Prior on a variance: flat on the log scale, or inverse gamma with a given mean.

    ``strength`` plays the role of prior degrees of freedom; the inverse gamma
    has shape ``strength / 2`` and scale ``mean * (strength / 2 - 1)``.
    """

    mean: float | None = None
    strength: float | None = None

    def __post_init__(self):
        if (self.mean is None) != (self.strength is None):
            raise ConfigError("variance prior needs both mean and strength, or neither")
        if self.mean is not None and not (self.mean > 0 and self.strength > 2):
            raise ConfigError("variance prior needs mean > 0 and strength > 2")

    @property
    def informative(self) -> bool:
        return self.mean is not None

    def log_density_log_scale(self, v: float) -> float:
        """Log prior density of ``log v`` (Jacobian included)."""
        if not self.informative:
            return 0.0
        a = self.strength / 2.0
        b = self.mean * (a - 1.0)
        return -a * math.log(v) - b / v

    @classmethod
    def from_dict(cls, d) -> "VariancePrior":
        if d is None or d == "log-flat":
            return cls()
        return cls(float(d["mean"]), float(d["strength"]))

    def to_dict(self):
        return "log-flat" if not self.informative else {"mean": self.mean, "strength": self.strength}


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    mode: Mode = Mode.JOINT
    proposal_sd_alpha: float = 0.5
    proposal_sd_beta: float = 0.25
    proposal_sd_logvar: float = 0.5
    var_y_prior: VariancePrior = VariancePrior()
    var_x_prior: VariancePrior = VariancePrior()
    alpha_prior: tuple[float, float] = (1.0, 1.0)
    alpha_init: float = 0.05
    cov_x_true: tuple | None = None
    update_lambda: bool = True
    update_alpha: bool = True
    update_regression: bool = True
    adapt: bool = True
    random_scan: bool = False
    no_within_db_duplicates: bool = False
    check_constraint: bool = True
    init_labels: tuple | None = None
    init_params: RegressionParams | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.iterations < 1:
            raise ConfigError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ConfigError("thin must be positive")
        for name in ("proposal_sd_alpha", "proposal_sd_beta", "proposal_sd_logvar"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        f, g = self.alpha_prior
        if not (f > 0 and g > 0):
            raise ConfigError("alpha prior parameters must be positive")
        if not 0.0 < self.alpha_init < 1.0:
            raise ConfigError("alpha_init must lie in (0, 1)")

    @property
    def n_kept(self) -> int:
        return len(range(self.burn_in + self.thin, self.iterations + 1, self.thin))


@dataclass
class PosteriorSamples:
    """Thinned post-burn-in draws of one chain."""

    iteration: np.ndarray
    labels: np.ndarray
    k: np.ndarray
    t: np.ndarray | None
    alpha: np.ndarray
    beta: np.ndarray | None = None
    var_y: np.ndarray | None = None
    var_x: np.ndarray | None = None
    acceptance: dict = field(default_factory=dict)
    proposal_sd: dict = field(default_factory=dict)
    seed: int = 0
    chain: int = 0

    @property
    def n_kept(self) -> int:
        return self.k.shape[0]

    @property
    def has_regression(self) -> bool:
        return self.beta is not None

    def pair_counts(self) -> Counter:
        """Number of kept draws in which each record pair ``(a, b)``, ``a < b``, co-clusters."""
        counts: Counter = Counter()
        for row in self.labels:
            groups: dict[int, list[int]] = {}
            for r, c in enumerate(row.tolist()):
                groups.setdefault(c, []).append(r)
            for mem in groups.values():
                for i, a in enumerate(mem):
                    for b in mem[i + 1:]:
                        counts[(a, b)] += 1
        return counts

    def pair_probabilities(self) -> dict[tuple[int, int], float]:
        n = self.n_kept
        return {pair: c / n for pair, c in sorted(self.pair_counts().items())}

    def k_mode(self) -> int:
        vals, cnt = np.unique(self.k, return_counts=True)
        return int(vals[np.argmax(cnt)])


def merge_samples(chains: list[PosteriorSamples]) -> PosteriorSamples:
    """Concatenate chains (for pooled summaries)."""
    first = chains[0]

    def cat(name):
        vals = [getattr(c, name) for c in chains]
        return None if vals[0] is None else np.concatenate(vals)

    return PosteriorSamples(
        iteration=cat("iteration"), labels=cat("labels"), k=cat("k"), t=cat("t"),
        alpha=cat("alpha"), beta=cat("beta"), var_y=cat("var_y"), var_x=cat("var_x"),
        acceptance=first.acceptance, proposal_sd=first.proposal_sd, seed=first.seed,
    )


def empirical_cov_x(x: np.ndarray) -> np.ndarray:
    """Pairwise-complete covariance of the observed covariates, diagonal if not SPD."""
    p = x.shape[1]
    cov = np.zeros((p, p))
    for i in range(p):
        for j in range(i, p):
            ok = ~np.isnan(x[:, i]) & ~np.isnan(x[:, j])
            if ok.sum() < 2:
                raise ConfigError("too few observed covariate values to estimate their covariance")
            a, b = x[ok, i], x[ok, j]
            cov[i, j] = cov[j, i] = np.mean((a - a.mean()) * (b - b.mean())) * ok.sum() / (ok.sum() - 1)
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        cov = np.diag(np.diag(cov))
    return cov


def initial_params(corpus: Corpus, cov_x_true: np.ndarray) -> RegressionParams:
    reg = corpus.regression
    p = reg.p
    complete = reg.mask.all(axis=1)
    y_obs = reg.y[~np.isnan(reg.y)]
    var_y = float(np.var(y_obs, ddof=1)) if y_obs.size > 1 else 1.0
    beta = np.zeros(p)
    if complete.sum() >= p + 2:
        xx, yy = reg.x[complete], reg.y[complete]
        beta = np.linalg.lstsq(xx, yy, rcond=None)[0]
        var_y = float(np.var(yy - xx @ beta, ddof=p))
    var_x = 0.01 * np.diag(cov_x_true)
    return RegressionParams(beta, max(var_y, 1e-6), np.diag(var_x), cov_x_true)


class Chain:
    """Sampler state: partition, kernel caches, distortions and regression parameters."""

    def __init__(self, corpus: Corpus, prior: PartitionPrior, config: SamplerConfig, backend=None):
        self.corpus = corpus
        self.prior = prior
        self.config = config
        self.kernel = backend if backend is not None else _kernels.backend
        validate_prior(prior, corpus.db)
        n, p = corpus.codes.shape
        self.n, self.p = n, p
        self.constrained = isinstance(prior, ConstrainedPYP) or config.no_within_db_duplicates
        constraint = Constraint.NO_WITHIN_DB_DUPLICATES if self.constrained else Constraint.UNCONSTRAINED
        labels = None if config.init_labels is None else np.asarray(config.init_labels)
        self.state = LinkageState(corpus.db, labels, constraint)
        if isinstance(prior, ConstrainedPYP) and config.update_lambda:
            for c in self.state.cluster_labels():
                mem = self.state.members(c)
                if len(mem) > 1 and not (len(mem) == 2 and {int(corpus.db[m]) for m in mem} == {1, 2}):
                    raise ConfigError("initial labels are not a bipartite matching")
        self.codes = corpus.codes
        self.theta = corpus.features.theta
        self.logtheta = np.ascontiguousarray(corpus.features.log_theta)
        self.alpha = np.full(p, config.alpha_init)
        self.db = corpus.db
        self.db2_list = np.flatnonzero(corpus.db == 2).astype(np.int64)
        self.db2_pos = np.full(n, -1, dtype=np.int64)
        self.db2_pos[self.db2_list] = np.arange(self.db2_list.shape[0])
        self.n1 = int(np.count_nonzero(corpus.db == 1))
        self._prior_args()
        if isinstance(prior, ConstrainedPYP):
            self.order = self.db2_list.copy()
        else:
            self.order = np.arange(n, dtype=np.int64)
        self.logm = np.zeros((n, p))
        self.logp = np.zeros((n, p))
        self.qshare = np.zeros((n, p))
        self.ibuf = np.zeros(max(n, 1), dtype=np.int64)
        self.cbuf = np.zeros(max(n, 1), dtype=np.int64)
        self.tbuf = np.zeros(n + 1)
        self.wbuf = np.zeros(n + 1)
        self.cand = np.zeros(n + 1, dtype=np.int64)
        self.info = np.zeros(1, dtype=np.int64)
        self._setup_regression()
        self.refresh_all()

    def _prior_args(self):
        pr = self.prior
        self.strength = self.discount = 0.0
        self.n_pop = 0.0
        if isinstance(pr, UniformLabels):
            self.prior_kind, self.n_pop = 0, float(pr.n_pop)
        elif isinstance(pr, UniformPartitions):
            self.prior_kind, self.n_pop = 1, float(pr.n_pop)
        elif isinstance(pr, PYP):
            self.prior_kind, self.strength, self.discount = 2, pr.strength, pr.discount
        elif isinstance(pr, ConstrainedPYP):
            self.prior_kind, self.strength, self.discount = 3, pr.strength, pr.discount
        else:
            raise ConfigError(f"unsupported prior {pr!r}")

    def _setup_regression(self):
        cfg, corpus = self.config, self.corpus
        self.use_reg = cfg.mode is Mode.JOINT and corpus.has_regression()
        if not self.use_reg:
            self.params = None
            self.rec_lam = np.zeros((1, 1, 1))
            self.rec_eta = np.zeros((1, 1))
            self.rec_c = np.zeros(1)
            self.rec_d = np.zeros(1, dtype=np.int64)
            self.cl_lam, self.cl_eta = self.rec_lam.copy(), self.rec_eta.copy()
            self.cl_c, self.cl_d, self.cl_ll = np.zeros(1), np.zeros(1, dtype=np.int64), np.zeros(1)
            self.sx_inv = np.eye(1)
            self.logdet_sx = 0.0
            return
        reg = corpus.regression
        if reg.p > 8:
            raise ConfigError("at most 8 regression covariates are supported")
        if cfg.init_params is not None:
            self.params = cfg.init_params.copy()
        else:
            sx = np.atleast_2d(cfg.cov_x_true) if cfg.cov_x_true is not None else empirical_cov_x(reg.x)
            self.params = initial_params(corpus, np.asarray(sx, dtype=np.float64))
        self.z = np.nan_to_num(reg.z)
        self.mask = reg.mask
        n, q = self.n, reg.p
        self.sx_inv = np.ascontiguousarray(np.linalg.inv(self.params.cov_x_true))
        self.logdet_sx = float(np.linalg.slogdet(self.params.cov_x_true)[1])
        self.cl_lam = np.zeros((n, q, q))
        self.cl_eta = np.zeros((n, q))
        self.cl_c = np.zeros(n)
        self.cl_d = np.zeros(n, dtype=np.int64)
        self.cl_ll = np.zeros(n)
        self._set_record_stats(self._record_stats(self.params))

    def _record_stats(self, params):
        return record_stats(self.z, self.mask, params, JITTER)

    def _set_record_stats(self, st):
        self.rec_lam = np.ascontiguousarray(st.lam)
        self.rec_eta = np.ascontiguousarray(st.eta)
        self.rec_c = np.ascontiguousarray(st.c)
        self.rec_d = np.ascontiguousarray(st.d, dtype=np.int64)

    # -- cache maintenance -------------------------------------------------

    def refresh_all(self):
        s, kern = self.state, self.kernel
        self.logm[:] = 0.0
        self.logp[:] = 0.0
        self.qshare[:] = 0.0
        for c in s.cluster_labels():
            kern.refresh_cluster(c, self.codes, self.theta, self.logtheta, self.alpha, s.head, s.nxt,
                                 self.logm, self.logp, self.qshare, self.ibuf, self.cbuf, self.tbuf)
        if self.use_reg:
            self._refresh_regression()

    def _refresh_regression(self):
        self.cl_lam[:] = 0.0
        self.cl_eta[:] = 0.0
        self.cl_c[:] = 0.0
        self.cl_d[:] = 0
        self.cl_ll[:] = 0.0
        s = self.state
        self.kernel.reg_refresh_all(s.sizes, s.head, s.nxt, self.rec_lam, self.rec_eta, self.rec_c,
                                    self.rec_d, self.cl_lam, self.cl_eta, self.cl_c, self.cl_d,
                                    self.cl_ll, self.sx_inv, self.logdet_sx)

    # -- updates -------------------------------------------------------------

    def sweep_lambda(self, order: np.ndarray, uniforms: np.ndarray) -> None:
        s = self.state
        s.k = int(self.kernel.gibbs_sweep(
            order, uniforms, self.codes, self.theta, self.logtheta, self.alpha,
            s.labels, s.sizes, s.head, s.nxt, s.prv, self.logm, self.logp, self.qshare, self.db,
            self.prior_kind, self.strength, self.discount, self.n_pop, self.constrained,
            self.db2_list, self.db2_pos, self.n1,
            self.use_reg, self.rec_lam, self.rec_eta, self.rec_c, self.rec_d,
            self.cl_lam, self.cl_eta, self.cl_c, self.cl_d, self.cl_ll, self.sx_inv, self.logdet_sx,
            s.k, self.ibuf, self.cbuf, self.tbuf, self.wbuf, self.cand, self.info))

    def last_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """Candidate labels (-1 = new) and normalised probabilities of the last reallocation."""
        m = int(self.info[0])
        w = self.wbuf[:m]
        prob = np.exp(w - w.max())
        return self.cand[:m].copy(), prob / prob.sum()

    def alpha_log_target(self, l: int, a: float, out_logm=None, out_q=None) -> float:
        f, g = self.config.alpha_prior
        s = self.state
        if out_logm is None:
            out_logm = np.zeros(self.n)
            out_q = np.zeros(self.n)
        total = self.kernel.feature_refresh(l, a, self.codes, self.theta, self.logtheta, s.sizes,
                                            s.head, s.nxt, out_logm, out_q, self.ibuf, self.cbuf,
                                            self.tbuf)
        return total + (f - 1.0) * math.log(a) + (g - 1.0) * math.log1p(-a)

    def regression_log_lik(self, params: RegressionParams) -> float:
        """Corpus regression log likelihood under ``params`` for the current partition."""
        st = self._record_stats(params)
        return self._stats_total(st)

    def _stats_total(self, st) -> float:
        labels = self.state.labels
        q = self.params.p
        lam = np.zeros((self.n, q, q))
        eta = np.zeros((self.n, q))
        c = np.zeros(self.n)
        d = np.zeros(self.n, dtype=np.int64)
        np.add.at(lam, labels, st.lam)
        np.add.at(eta, labels, st.eta)
        np.add.at(c, labels, st.c)
        np.add.at(d, labels, st.d)
        used = d > 0
        if not used.any():
            return 0.0
        try:
            ll = stats_log_lik(lam[used], eta[used], c[used], d[used], self.sx_inv, self.logdet_sx)
        except np.linalg.LinAlgError:
            return -math.inf
        return float(ll.sum())

    def set_params(self, params: RegressionParams) -> None:
        self.params = params
        self._set_record_stats(self._record_stats(params))
        self._refresh_regression()


def gibbs_update_lambda(chain: Chain, r: int, rng: np.random.Generator) -> int:
    """Reallocate record ``r``; returns its new label."""
    chain.sweep_lambda(np.array([r], dtype=np.int64), rng.random(1))
    return int(chain.state.labels[r])


def metropolis_update_alpha(chain: Chain, l: int, sd: float, rng: np.random.Generator) -> bool:
    """Random walk on logit(alpha_l) with the Jacobian term; returns acceptance."""
    a = float(chain.alpha[l])
    eps = rng.normal()
    u = rng.random()
    logit = math.log(a) - math.log1p(-a) + sd * eps
    a_new = 1.0 / (1.0 + math.exp(-logit))
    if not 0.0 < a_new < 1.0:
        return False
    cur = chain.alpha_log_target(l, a)
    new_logm = chain.logm[:, l].copy()
    new_q = chain.qshare[:, l].copy()
    prop = chain.alpha_log_target(l, a_new, new_logm, new_q)
    log_ratio = prop - cur + math.log(a_new * (1.0 - a_new)) - math.log(a * (1.0 - a))
    if math.log(u) < log_ratio:
        chain.alpha[l] = a_new
        chain.logm[:, l] = new_logm
        chain.qshare[:, l] = new_q
        return True
    return False


def _reg_components(params: RegressionParams):
    """Names of the walked coordinates: beta_j, var_y and the diagonal of Sigma_x."""
    q = params.p
    return [("beta", j) for j in range(q)] + [("var_y", 0)] + [("var_x", j) for j in range(q)]


def _propose(params: RegressionParams, kind: str, j: int, step: float):
    new = params.copy()
    if kind == "beta":
        new.beta[j] += step
        return new
    if kind == "var_y":
        v = params.var_y_given_x * math.exp(step)
        return RegressionParams(new.beta, v, new.cov_x_given_x, new.cov_x_true)
    cx = new.cov_x_given_x.copy()
    cx[j, j] *= math.exp(step)
    return RegressionParams(new.beta, new.var_y_given_x, cx, new.cov_x_true)


def _log_prior(params: RegressionParams, cfg: SamplerConfig) -> float:
    out = cfg.var_y_prior.log_density_log_scale(params.var_y_given_x)
    for v in np.diag(params.cov_x_given_x):
        out += cfg.var_x_prior.log_density_log_scale(float(v))
    return out


def metropolis_update_regression(chain: Chain, sds: dict, rng: np.random.Generator,
                                 accepted: Counter) -> None:
    """One component-wise random-walk pass over beta, log var_y and log diag(Sigma_x).

    The target is the corpus regression likelihood plus the log-scale priors,
    so the log-variance walks need no further Jacobian.
    """
    cfg = chain.config
    params = chain.params
    cur = chain.regression_log_lik(params) + _log_prior(params, cfg)
    for kind, j in _reg_components(params):
        eps = rng.normal()
        u = rng.random()
        prop = _propose(params, kind, j, sds[(kind, j)] * eps)
        try:
            new = chain.regression_log_lik(prop) + _log_prior(prop, cfg)
        except np.linalg.LinAlgError:
            new = -math.inf
        if math.log(u) < new - cur:
            params, cur = prop, new
            accepted[(kind, j)] += 1
    chain.set_params(params)


def _bipartite_t(state: LinkageState, db: np.ndarray) -> int:
    sizes = state.sizes[state.labels]
    pairs = db[(sizes == 2) & (db == 2)]
    return int(pairs.shape[0])


def _check_constraint(state: LinkageState, n_db: int) -> None:
    key = state.labels * (n_db + 1) + state.db
    if np.unique(key).shape[0] != key.shape[0]:
        raise AssertionError("sampler visited a state with two records of one database in a cluster")


def _adapt(sd: float, rate: float) -> float:
    lo, hi = TARGET_ACCEPT
    if rate < lo:
        return sd * 0.7
    if rate > hi:
        return sd * 1.4
    return sd


def run_chain(corpus: Corpus, prior: PartitionPrior, config: SamplerConfig, backend=None,
              chain_index: int = 0, progress=None) -> PosteriorSamples:
    """Run one chain and return its thinned post-burn-in draws."""
    chain = Chain(corpus, prior, config, backend)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    n, p = chain.n, chain.p
    n_keep = config.n_kept
    track_t = chain.constrained and set(np.unique(corpus.db).tolist()) <= {1, 2}
    q = chain.params.p if chain.use_reg else 0
    out_iter = np.zeros(n_keep, dtype=np.int64)
    out_labels = np.zeros((n_keep, n), dtype=np.int64)
    out_k = np.zeros(n_keep, dtype=np.int64)
    out_t = np.zeros(n_keep, dtype=np.int64) if track_t else None
    out_alpha = np.zeros((n_keep, p))
    out_beta = np.zeros((n_keep, q)) if q else None
    out_vy = np.zeros(n_keep) if q else None
    out_vx = np.zeros((n_keep, q)) if q else None

    sd_alpha = [config.proposal_sd_alpha] * p
    sds = {}
    if chain.use_reg:
        for kind, j in _reg_components(chain.params):
            sds[(kind, j)] = config.proposal_sd_beta if kind == "beta" else config.proposal_sd_logvar
    acc_alpha = Counter()
    acc_reg = Counter()
    win_alpha, win_reg = Counter(), Counter()
    tries = 0
    window = 0
    n_db = int(corpus.db.max()) if n else 0
    kept = 0
    do_alpha = config.update_alpha and p > 0
    do_reg = chain.use_reg and config.update_regression
    for it in range(1, config.iterations + 1):
        if config.update_lambda and chain.order.shape[0]:
            order = rng.permutation(chain.order) if config.random_scan else chain.order
            chain.sweep_lambda(order, rng.random(order.shape[0]))
            if chain.constrained and config.check_constraint:
                _check_constraint(chain.state, n_db)
        if do_alpha:
            for l in range(p):
                if metropolis_update_alpha(chain, l, sd_alpha[l], rng):
                    win_alpha[l] += 1
                    if it > config.burn_in:
                        acc_alpha[l] += 1
        if do_reg:
            before = Counter(win_reg)
            metropolis_update_regression(chain, sds, rng, win_reg)
            if it > config.burn_in:
                acc_reg.update(win_reg - before)
        window += 1
        if it > config.burn_in:
            tries += 1
        elif config.adapt and window == ADAPT_EVERY:
            for l in range(p):
                sd_alpha[l] = _adapt(sd_alpha[l], win_alpha[l] / window)
            for key in sds:
                sds[key] = _adapt(sds[key], win_reg[key] / window)
            win_alpha.clear()
            win_reg.clear()
            window = 0
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            s = chain.state
            out_iter[kept] = it
            out_labels[kept] = s.labels
            out_k[kept] = s.k
            if track_t:
                out_t[kept] = _bipartite_t(s, corpus.db)
            out_alpha[kept] = chain.alpha
            if q:
                out_beta[kept] = chain.params.beta
                out_vy[kept] = chain.params.var_y_given_x
                out_vx[kept] = np.diag(chain.params.cov_x_given_x)
            kept += 1
        if progress is not None:
            progress(it)
    acceptance = {}
    if tries:
        for l in range(p if do_alpha else 0):
            acceptance[f"alpha{l + 1}"] = acc_alpha[l] / tries
        for kind, j in sds:
            acceptance[_component_name(kind, j)] = acc_reg[(kind, j)] / tries
    proposal_sd = {f"alpha{l + 1}": sd_alpha[l] for l in range(p)}
    proposal_sd.update({_component_name(kind, j): v for (kind, j), v in sds.items()})
    return PosteriorSamples(out_iter, out_labels, out_k, out_t, out_alpha, out_beta, out_vy, out_vx,
                            acceptance, proposal_sd, config.seed, chain_index)


def _component_name(kind: str, j: int) -> str:
    if kind == "var_y":
        return "var_y"
    return f"{kind}{j + 1}"


def _run_indexed(args):
    corpus, prior, config, i = args
    return run_chain(corpus, prior, config, chain_index=i)


def run_chains(corpus: Corpus, prior: PartitionPrior, config: SamplerConfig, n_chains: int = 1,
               workers: int = 1) -> list[PosteriorSamples]:
    """Independent chains with seeds ``seed, seed+1, ...``; optionally in worker processes."""
    jobs = [(corpus, prior, replace(config, seed=config.seed + i), i) for i in range(n_chains)]
    if workers > 1 and n_chains > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_indexed, jobs))
    return [_run_indexed(j) for j in jobs]
