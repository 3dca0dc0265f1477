"""Partition priors for the linkage structure.

Four regimes are supported: uniform labels over a finite population, uniform
partitions, the two-parameter Pitman-Yor process (PYP) and the PYP restricted
to bipartite matchings between two duplicate-free databases.  Everything is
computed in log space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import gammaln

from .partition import NEW, Constraint, LinkageState


class PriorError(ValueError):
    pass


@dataclass(frozen=True)
class UniformLabels:
    n_pop: int

    def __post_init__(self):
        if int(self.n_pop) != self.n_pop or self.n_pop < 1:
            raise PriorError("n_pop must be a positive integer")


@dataclass(frozen=True)
class UniformPartitions:
    n_pop: int

    def __post_init__(self):
        if int(self.n_pop) != self.n_pop or self.n_pop < 1:
            raise PriorError("n_pop must be a positive integer")


def _check_pyp(strength: float, discount: float) -> None:
    if 0.0 <= discount < 1.0:
        if not strength > -discount:
            raise PriorError(f"PYP needs strength > -discount, got ({strength}, {discount})")
    elif discount < 0.0:
        m = strength / abs(discount)
        if m < 0.5 or abs(m - round(m)) > 1e-9:
            raise PriorError("with negative discount the strength must be m*|discount|, m a positive integer")
    else:
        raise PriorError(f"PYP discount must be < 1, got {discount}")


@dataclass(frozen=True)
class PYP:
    strength: float
    discount: float

    def __post_init__(self):
        _check_pyp(self.strength, self.discount)


@dataclass(frozen=True)
class ConstrainedPYP:
    """PYP restricted to one-to-one links between database 1 and database 2."""

    strength: float
    discount: float

    def __post_init__(self):
        _check_pyp(self.strength, self.discount)


PartitionPrior = Union[UniformLabels, UniformPartitions, PYP, ConstrainedPYP]


@dataclass(frozen=True)
class PypMoments:
    expected_k: float
    var_k: float


def parse_prior(text: str) -> PartitionPrior:
    """Parse ``pyp:0.4,0.98``, ``cpyp:1,0.725``, ``uniform-labels:600`` or ``uniform-partitions:600``."""
    name, _, args = text.partition(":")
    vals = [v for v in args.split(",") if v.strip()]
    name = name.strip().lower()
    try:
        if name == "pyp":
            return PYP(float(vals[0]), float(vals[1]))
        if name in ("cpyp", "constrained-pyp"):
            return ConstrainedPYP(float(vals[0]), float(vals[1]))
        if name == "uniform-labels":
            return UniformLabels(int(vals[0]))
        if name == "uniform-partitions":
            return UniformPartitions(int(vals[0]))
    except (IndexError, ValueError) as exc:
        raise PriorError(f"bad prior specification {text!r}: {exc}") from None
    raise PriorError(f"unknown prior {name!r}")


def format_prior(prior: PartitionPrior) -> str:
    if isinstance(prior, PYP):
        return f"pyp:{prior.strength!r},{prior.discount!r}"
    if isinstance(prior, ConstrainedPYP):
        return f"cpyp:{prior.strength!r},{prior.discount!r}"
    if isinstance(prior, UniformLabels):
        return f"uniform-labels:{prior.n_pop}"
    return f"uniform-partitions:{prior.n_pop}"


def validate_prior(prior: PartitionPrior, db: np.ndarray) -> None:
    """Check that ``prior`` can be used on a corpus with database indices ``db``."""
    n = len(db)
    if isinstance(prior, (UniformLabels, UniformPartitions)) and prior.n_pop < n:
        raise PriorError(f"n_pop={prior.n_pop} is smaller than the number of records {n}")
    if isinstance(prior, ConstrainedPYP) and not set(np.unique(db).tolist()) <= {1, 2}:
        raise PriorError("the constrained PYP prior needs exactly two databases")


def log_falling(n: float, k: int) -> float:
    """log of n (n-1) ... (n-k+1); -inf when the product vanishes."""
    if k > n:
        return -math.inf
    return float(gammaln(n + 1) - gammaln(n - k + 1))


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def _db2_layout(state: LinkageState):
    db2 = np.flatnonzero(state.db == 2)
    n1 = int(np.count_nonzero(state.db == 1))
    return n1, db2


def constrained_new_log_weight(prior: ConstrainedPYP, state: LinkageState, r: int) -> tuple[float, int]:
    """Unnormalised log prior weight of opening a new cluster for DB2 record ``r``.

    Also returns ``k`` computed without ``r``.
    """
    n1, db2 = _db2_layout(state)
    s, th = prior.discount, prior.strength
    own = int(state.labels[r])
    k_minus = state.k - (1 if state.sizes[own] == 1 else 0)
    singleton = state.sizes[state.labels[db2]] == 1
    pos = int(np.searchsorted(db2, r))
    logw = _log(k_minus * s + th)
    # k_{2l}: DB1 clusters plus DB2 singletons among the first l DB2 records, r excluded
    k2l = n1
    for l in range(1, len(db2)):
        if l - 1 != pos and singleton[l - 1]:
            k2l += 1
        if l > pos:
            base = k2l - l * (1.0 - s) + th
            logw += _log(base) - _log(base + 1.0)
    return logw, k_minus


def predictive_alloc(prior: PartitionPrior, state: LinkageState, r: int) -> list[tuple[int, float]]:
    """Prior allocation weights for record ``r`` given everybody else.

    Returns ``(label, weight)`` for every cluster that remains non-empty once
    ``r`` is taken out (ascending label order), followed by ``(NEW, weight)``.
    Under a no-duplicates constraint clusters holding a record of ``r``'s
    database get weight 0.
    """
    own = int(state.labels[r])
    n = state.n_records
    k_minus = state.k - (1 if state.sizes[own] == 1 else 0)
    constrained = (
        state.constraint is Constraint.NO_WITHIN_DB_DUPLICATES or isinstance(prior, ConstrainedPYP)
    )
    targets = []
    for c in state.cluster_labels():
        members = [m for m in state.members(c) if m != r]
        if members:
            targets.append((c, members))

    def blocked(members):
        return constrained and any(state.db[m] == state.db[r] for m in members)

    out = []
    if isinstance(prior, UniformLabels):
        for c, members in targets:
            out.append((c, 0.0 if blocked(members) else 1.0 / prior.n_pop))
        out.append((NEW, max(prior.n_pop - k_minus, 0) / prior.n_pop))
    elif isinstance(prior, UniformPartitions):
        w_old = math.exp(-log_falling(prior.n_pop, k_minus))
        w_new = (prior.n_pop - k_minus) * math.exp(-log_falling(prior.n_pop, k_minus + 1)) \
            if k_minus < prior.n_pop else 0.0
        for c, members in targets:
            out.append((c, 0.0 if blocked(members) else w_old))
        out.append((NEW, w_new))
    elif isinstance(prior, PYP):
        s, th = prior.discount, prior.strength
        denom = n - 1 + th
        for c, members in targets:
            out.append((c, 0.0 if blocked(members) else (len(members) - s) / denom))
        out.append((NEW, max(k_minus * s + th, 0.0) / denom))
    elif isinstance(prior, ConstrainedPYP):
        if state.db[r] != 2:
            raise PriorError("under the constrained PYP only database-2 records are reallocated")
        s = prior.discount
        for c, members in targets:
            ok = len(members) == 1 and state.db[members[0]] == 1
            out.append((c, (1.0 - s) if ok else 0.0))
        logw, _ = constrained_new_log_weight(prior, state, r)
        out.append((NEW, math.exp(logw)))
    else:
        raise PriorError(f"unsupported prior {prior!r}")
    return out


def _log_rising_step(x: float, n: int, step: float) -> float:
    """log of x (x+step) ... (x+(n-1) step) for positive factors; -inf if one is zero."""
    # a direct sum: the log-Gamma form cancels badly when x / step is huge
    if n <= 0:
        return 0.0
    terms = []
    for i in range(n):
        v = x + i * step
        if v <= 0:
            return -math.inf
        terms.append(math.log(v))
    return math.fsum(terms)


def pyp_eppf_log_prob(prior: PYP, sizes) -> float:
    """Log probability of a partition with block sizes ``sizes`` under the PYP."""
    if not isinstance(prior, PYP):
        raise PriorError("the EPPF is defined for the unconstrained PYP only")
    sizes = [int(s) for s in sizes]
    if not sizes or min(sizes) < 1:
        raise ValueError("sizes must be a non-empty collection of positive integers")
    s, th = prior.discount, prior.strength
    k, n = len(sizes), sum(sizes)
    out = _log_rising_step(th + s, k - 1, s) if s != 0 else (k - 1) * _log(th)
    out -= _log_rising_step(th + 1.0, n - 1, 1.0)
    for ng in sizes:
        out += _log_rising_step(1.0 - s, ng - 1, 1.0)
    return out


def _log_poch(x: float, n: int) -> tuple[float, float]:
    """(sign, log|.|) of Gamma(x+n)/Gamma(x)."""
    if x > 0:
        return 1.0, float(gammaln(x + n) - gammaln(x))
    sign, total = 1.0, 0.0
    for i in range(n):
        v = x + i
        if v == 0:
            return 0.0, -math.inf
        sign *= math.copysign(1.0, v)
        total += math.log(abs(v))
    return sign, total


def pyp_moments(prior: PYP, n: int) -> PypMoments:
    """Prior mean and variance of the number of clusters among ``n`` records."""
    s, th = prior.discount, prior.strength
    if s == 0:
        raise PriorError("discount 0 (the Chinese restaurant limit) is not supported")
    sg0, l0 = _log_poch(th, n)
    sg1, l1 = _log_poch(th + s, n)
    sg2, l2 = _log_poch(th + 2 * s, n)
    r1 = sg1 * sg0 * math.exp(l1 - l0)
    r2 = sg2 * sg0 * math.exp(l2 - l0)
    mean = th / s * (r1 - 1.0)
    var = th * (th + s) / s**2 * r2 - (th / s) ** 2 * r1**2 - th / s * r1
    return PypMoments(expected_k=mean, var_k=max(var, 0.0))


def _log_binom(n: int, k: int) -> float:
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))


def hypergeometric_t_log_pmf(n_pop: int, n1: int, n2: int, t: int) -> float:
    """Log pmf of the number of units shared by two simple random samples."""
    if n_pop < max(n1, n2):
        raise PriorError("n_pop must be at least the size of each database")
    if t < max(0, n1 + n2 - n_pop) or t > min(n1, n2):
        return -math.inf
    return _log_binom(n1, t) + _log_binom(n_pop - n1, n2 - t) - _log_binom(n_pop, n2)


def constrained_pyp_forward_alloc(prior: ConstrainedPYP, n1: int, k: int, l: int) -> tuple[float, float]:
    """Sequential allocation probabilities for DB2 record ``l+1``.

    ``k`` is the number of clusters formed by database 1 and the first ``l``
    records of database 2.  Returns (probability of joining one particular
    free DB1 singleton, probability of a new cluster).
    """
    s, th = prior.discount, prior.strength
    denom = k - l * (1.0 - s) + th
    return (1.0 - s) / denom, (k * s + th) / denom


def constrained_pyp_joint_log_prob(prior: ConstrainedPYP, state: LinkageState) -> float:
    """Log p(labels of database 2 | labels of database 1), closed form.

    Database-2 records are taken in corpus order; the value depends on that
    order because the restricted labels are not exchangeable.
    """
    n1, db2 = _db2_layout(state)
    if not set(np.unique(state.db).tolist()) <= {1, 2}:
        raise PriorError("the constrained PYP needs exactly two databases")
    for c in state.cluster_labels():
        dbs = [int(state.db[m]) for m in state.members(c)]
        if len(dbs) != len(set(dbs)):
            raise PriorError("state violates the no-duplicates constraint")
    s, th = prior.discount, prior.strength
    n2 = len(db2)
    if n2 == 0:
        return 0.0
    # running cluster counts k_{2,l} for l = 0..N2-1
    k = n1
    log_denom = 0.0
    for l, r in enumerate(db2):
        log_denom += _log(k - l * (1.0 - s) + th)
        if state.sizes[state.labels[r]] == 1:
            k += 1
    matches = n1 + n2 - k
    out = matches * _log(1.0 - s)
    for l in range(n1 + 1, k + 1):
        out += _log(s * (l - 1) + th)
    return out - log_denom


def simulate_pyp_k(prior: PYP, n: int, n_draws: int, rng: np.random.Generator) -> np.ndarray:
    """Number of clusters in ``n_draws`` independent sequential PYP draws."""
    s, th = prior.discount, prior.strength
    k = np.ones(n_draws)
    for m in range(1, n):
        k += rng.random(n_draws) < (k * s + th) / (m + th)
    return k.astype(np.int64)


def simulate_constrained_matches(
    prior: ConstrainedPYP, n1: int, n2: int, n_draws: int, rng: np.random.Generator
) -> np.ndarray:
    """Number of cross-database matches T in draws from the constrained PYP."""
    s, th = prior.discount, prior.strength
    k = np.full(n_draws, float(n1))
    t = np.zeros(n_draws)
    for l in range(n2):
        p_match = (n1 - t) * (1.0 - s) / (k - l * (1.0 - s) + th)
        hit = rng.random(n_draws) < p_match
        t += hit
        k += ~hit
    return t.astype(np.int64)


def partition_log_prior(prior: PartitionPrior, state: LinkageState) -> float:
    """Log prior probability of the partition held by ``state``.

    For the constrained PYP this is the probability of the database-2 labels
    given database 1, as in :func:`constrained_pyp_joint_log_prob`.
    """
    k, n = state.k, state.n_records
    if isinstance(prior, PYP):
        return pyp_eppf_log_prob(prior, [int(s) for s in state.sizes if s > 0])
    if isinstance(prior, ConstrainedPYP):
        return constrained_pyp_joint_log_prob(prior, state)
    if isinstance(prior, UniformLabels):
        return log_falling(prior.n_pop, k) - n * math.log(prior.n_pop)
    if isinstance(prior, UniformPartitions):
        # uniform over label vectors weighted by 1/(n_pop)_k: every partition with k <= n_pop equally likely
        return 0.0 if k <= prior.n_pop else -math.inf
    raise PriorError(f"unsupported prior {prior!r}")
