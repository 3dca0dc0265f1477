"""Hit-and-miss measurement model for categorical fields.

A record copies the true value of its entity with probability ``1 - alpha``
and otherwise redraws from the field frequencies ``theta``.  With the true
values integrated out, a cluster's likelihood for one field is

    m(C) = sum_s theta_s prod_{r in C} [(1 - alpha) 1{v_r = s} + alpha theta_{v_r}]

which only depends on the distinct codes present in ``C``.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

THETA_FLOOR = 1e-9


@dataclass
class FeatureSpec:
    """Category frequencies of every field, padded to a rectangular array.

    ``theta[l, s]`` is the frequency of code ``s`` in field ``l``; entries
    beyond ``supports[l]`` are zero.
    """

    theta: np.ndarray
    supports: np.ndarray
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        self.supports = np.asarray(self.supports, dtype=np.int64)
        if self.theta.ndim != 2 or self.theta.shape[0] != len(self.supports):
            raise ValueError("theta must be (n_fields, max_support)")
        for l, m in enumerate(self.supports):
            if m < 2:
                raise ValueError(f"field {l} needs at least two categories")
            row = self.theta[l, :m]
            if np.any(row <= 0) or abs(row.sum() - 1.0) > 1e-12:
                raise ValueError(f"frequencies of field {l} must be positive and sum to 1")
            if np.any(self.theta[l, m:] != 0):
                raise ValueError(f"padding of field {l} must be zero")
        if not self.names:
            self.names = [f"f{l + 1}" for l in range(self.n_fields)]
        with np.errstate(divide="ignore"):
            self.log_theta = np.log(self.theta)

    @property
    def n_fields(self) -> int:
        return self.theta.shape[0]

    @classmethod
    def from_rows(cls, rows, names=None) -> "FeatureSpec":
        supports = [len(r) for r in rows]
        theta = np.zeros((len(rows), max(supports) if supports else 0))
        for l, r in enumerate(rows):
            theta[l, : len(r)] = r
        return cls(theta, supports, list(names or []))

    @classmethod
    def empirical(cls, codes: np.ndarray, supports, names=None, floor: float = THETA_FLOOR) -> "FeatureSpec":
        """Relative frequencies of the pooled records, floored and renormalised."""
        rows = []
        for l, m in enumerate(supports):
            counts = np.bincount(codes[:, l], minlength=m)[:m].astype(float)
            freq = np.maximum(counts / max(counts.sum(), 1.0), floor)
            rows.append(freq / freq.sum())
        return cls.from_rows(rows, names)

    def check_codes(self, codes: np.ndarray) -> None:
        codes = np.asarray(codes)
        if codes.ndim != 2 or codes.shape[1] != self.n_fields:
            raise ValueError("codes must be (n_records, n_fields)")
        if codes.size and (codes.min() < 0 or np.any(codes >= self.supports[None, :])):
            raise ValueError("category code outside the field support")


def _log_terms(values, alpha: float, theta_row: np.ndarray):
    """Per-code log terms of the split sum, without the common factor prod theta_{v_r}."""
    counts = Counter(int(v) for v in values)
    n = len(values)
    log_a = math.log(alpha) if alpha > 0 else -math.inf
    terms = []
    covered = 0.0
    for s, c in counts.items():
        th = float(theta_row[s])
        covered += th
        t = (1 - c) * math.log(th) + c * math.log(1.0 - alpha + alpha * th)
        if n > c:
            t += (n - c) * log_a
        terms.append(t)
    rest = 1.0 - covered
    if rest > 0:
        terms.append(n * log_a + math.log(rest))
    return terms


def _logsumexp(terms) -> float:
    top = max(terms)
    if top == -math.inf:
        return -math.inf
    return top + math.log(math.fsum(math.exp(t - top) for t in terms))


def feature_log_marginal(values, alpha: float, theta_row: np.ndarray) -> float:
    """log of :func:`cluster_feature_marginal`, evaluated in O(distinct codes)."""
    if len(values) == 0:
        raise ValueError("empty cluster")
    log_p = math.fsum(math.log(float(theta_row[int(v)])) for v in values)
    return log_p + _logsumexp(_log_terms(values, alpha, theta_row))


def cluster_feature_marginal(values, alpha: float, theta_row: np.ndarray) -> float:
    """Marginal probability of one field's codes in a cluster, true value integrated out."""
    return math.exp(feature_log_marginal(values, alpha, theta_row))


def cluster_feature_marginal_naive(values, alpha: float, theta_row: np.ndarray) -> float:
    """Same quantity by the O(M) sum over every candidate true value."""
    if len(values) == 0:
        raise ValueError("empty cluster")
    total = 0.0
    for s, th in enumerate(theta_row):
        if th <= 0:
            continue
        prod = th
        for v in values:
            prod *= (1.0 - alpha) * (v == s) + alpha * theta_row[v]
        total += prod
    return total


def cluster_log_marginal(cluster, codes: np.ndarray, alpha, spec: FeatureSpec) -> float:
    """Sum over fields of the per-field log marginals of the records in ``cluster``."""
    cluster = list(cluster)
    if not cluster:
        raise ValueError("empty cluster")
    return sum(
        feature_log_marginal(codes[cluster, l], float(alpha[l]), spec.theta[l])
        for l in range(spec.n_fields)
    )


def log_ratio_add_record(base, r: int, codes: np.ndarray, alpha, spec: FeatureSpec) -> float:
    """log m(base + r) - log m(base); the new-cluster weight when ``base`` is empty."""
    base = list(base)
    out = 0.0
    for l in range(spec.n_fields):
        v = int(codes[r, l])
        th = float(spec.theta[l, v])
        if not base:
            out += math.log(th)
            continue
        a = float(alpha[l])
        vals = codes[base, l]
        n = len(vals)
        c = int(np.count_nonzero(vals == v))
        log_p = math.fsum(math.log(float(spec.theta[l, int(x)])) for x in vals)
        log_m = log_p + _logsumexp(_log_terms(vals, a, spec.theta[l]))
        # prod_{h in base} [(1-a) 1{v_h = v} + a theta_{v_h}]
        log_g = c * math.log(1.0 - a + a * th) + log_p - c * math.log(th)
        if n > c:
            log_g += (n - c) * (math.log(a) if a > 0 else -math.inf)
        out += math.log(th) + math.log(a + (1.0 - a) * math.exp(log_g - log_m))
    return out


def alpha_conditional_log_density(l: int, alpha_l: float, clusters, codes: np.ndarray,
                                  spec: FeatureSpec, beta_prior=(1.0, 1.0)) -> float:
    """Unnormalised log full conditional of the distortion probability of field ``l``."""
    if not 0.0 <= alpha_l <= 1.0:
        return -math.inf
    f, g = beta_prior
    out = 0.0
    for members in clusters:
        out += feature_log_marginal(codes[list(members), l], alpha_l, spec.theta[l])
    for expo, base in ((f - 1.0, alpha_l), (g - 1.0, 1.0 - alpha_l)):
        if expo != 0:
            out += expo * math.log(base) if base > 0 else -math.inf * np.sign(expo)
    return out
