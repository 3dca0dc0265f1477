"""Cluster-wise Gaussian likelihood of the downstream linear regression.

Records of one cluster share a latent covariate vector ``xt ~ N(0, Sx)``.
Given ``xt`` each record's block ``(y, x_1..x_p)`` is independent
``N(A xt, D)`` with ``A = [beta^T; I]`` and ``D = diag(var_y, Sigma_x)``, so
the cluster block is zero-mean normal with covariance
``I_n (x) D + J_n (x) A Sx A^T``.  Missing components are dropped, which is
exact Gaussian marginalisation.

Two evaluations are provided: a dense one that builds the covariance, and an
information-form one where every record contributes additive statistics and
only a ``p x p`` system is factorised per cluster.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

JITTER = 1e-10
LOG_2PI = math.log(2.0 * math.pi)


class RegressionError(ValueError):
    pass


def _require_spd(name: str, m: np.ndarray) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise RegressionError(f"{name} must be square")
    if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
        raise RegressionError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise RegressionError(f"{name} must be positive definite") from None


@dataclass
class RegressionParams:
    beta: np.ndarray
    var_y_given_x: float
    cov_x_given_x: np.ndarray
    cov_x_true: np.ndarray

    def __post_init__(self):
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=np.float64))
        p = self.beta.shape[0]
        self.cov_x_given_x = np.atleast_2d(np.asarray(self.cov_x_given_x, dtype=np.float64))
        self.cov_x_true = np.atleast_2d(np.asarray(self.cov_x_true, dtype=np.float64))
        if self.cov_x_given_x.shape != (p, p) or self.cov_x_true.shape != (p, p):
            raise RegressionError("covariance blocks must be p_reg x p_reg")
        if not self.var_y_given_x > 0:
            raise RegressionError("var_y_given_x must be positive")
        _require_spd("cov_x_given_x", self.cov_x_given_x)
        _require_spd("cov_x_true", self.cov_x_true)

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    def loading(self) -> np.ndarray:
        return np.vstack([self.beta[None, :], np.eye(self.p)])

    def noise_cov(self, jitter: float = 0.0) -> np.ndarray:
        d = np.zeros((self.p + 1, self.p + 1))
        d[0, 0] = self.var_y_given_x
        d[1:, 1:] = self.cov_x_given_x
        return d + jitter * np.eye(self.p + 1)

    def signal_cov(self) -> np.ndarray:
        a = self.loading()
        return a @ self.cov_x_true @ a.T

    def copy(self) -> "RegressionParams":
        return RegressionParams(self.beta.copy(), self.var_y_given_x,
                                self.cov_x_given_x.copy(), self.cov_x_true.copy())


@dataclass
class RegressionData:
    """Per-record regression columns; NaN marks a missing value."""

    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        if self.x.shape[0] != self.y.shape[0]:
            raise RegressionError("y and x must have one row per record")
        self.z = np.column_stack([self.y, self.x])
        self.mask = ~np.isnan(self.z)

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def n_records(self) -> int:
        return self.y.shape[0]

    def any_observed(self) -> bool:
        return bool(self.mask.any())


def build_full_covariance(n: int, params: RegressionParams, jitter: float = 0.0) -> np.ndarray:
    """Covariance of the stacked blocks ``(y_1, x_1, ..., y_n, x_n)`` of an n-record cluster."""
    if n < 1:
        raise RegressionError("cluster size must be at least 1")
    return np.kron(np.eye(n), params.noise_cov(jitter)) + np.kron(np.ones((n, n)), params.signal_cov())


def _dense_log_lik(z: np.ndarray, params: RegressionParams, jitter: float) -> float:
    n = z.shape[0]
    flat = z.reshape(-1)
    obs = ~np.isnan(flat)
    if not obs.any():
        return 0.0
    cov = build_full_covariance(n, params, jitter)[np.ix_(obs, obs)]
    try:
        chol = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        cond = np.linalg.cond(cov)
        raise RegressionError(f"restricted covariance is not positive definite (condition number {cond:.3g})") from None
    w = linalg.solve_triangular(chol, flat[obs], lower=True)
    return float(-0.5 * (obs.sum() * LOG_2PI + w @ w) - np.log(np.diag(chol)).sum())


@dataclass
class RecordStats:
    """Additive per-record statistics of the information-form likelihood.

    For observed components ``O`` of a record: ``lam = A_O^T D_O^-1 A_O``,
    ``eta = A_O^T D_O^-1 z_O``, ``c = z_O^T D_O^-1 z_O + |O| log 2 pi + log|D_O|``
    and ``d = |O|``.
    """

    lam: np.ndarray
    eta: np.ndarray
    c: np.ndarray
    d: np.ndarray


def record_stats(z: np.ndarray, mask: np.ndarray, params: RegressionParams,
                 jitter: float = JITTER) -> RecordStats:
    n, q = z.shape
    p = q - 1
    lam = np.zeros((n, p, p))
    eta = np.zeros((n, p))
    c = np.zeros(n)
    d = mask.sum(axis=1).astype(np.int64)
    a = params.loading()
    noise = params.noise_cov(jitter)
    patterns, inverse = np.unique(mask, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    for k, pat in enumerate(patterns):
        if not pat.any():
            continue
        rows = np.flatnonzero(inverse == k)
        d_o = noise[np.ix_(pat, pat)]
        a_o = a[pat]
        chol = np.linalg.cholesky(d_o)
        prec = np.linalg.inv(d_o)
        zo = z[np.ix_(rows, np.flatnonzero(pat))]
        lam[rows] = a_o.T @ prec @ a_o
        eta[rows] = zo @ prec @ a_o
        c[rows] = (np.einsum("ij,jk,ik->i", zo, prec, zo)
                   + pat.sum() * LOG_2PI + 2.0 * np.log(np.diag(chol)).sum())
    return RecordStats(lam, eta, c, d)


def stats_log_lik(lam, eta, c, d, sx_inv: np.ndarray, logdet_sx: float) -> np.ndarray:
    """Cluster log likelihoods from summed statistics (leading axis = cluster)."""
    lam = np.asarray(lam)
    prec = sx_inv[None] + lam
    chol = np.linalg.cholesky(prec)
    w = np.linalg.solve(chol, np.asarray(eta)[..., None])[..., 0]
    logdet = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
    out = -0.5 * (np.asarray(c) + logdet_sx + logdet - (w * w).sum(axis=1))
    return np.where(np.asarray(d) > 0, out, 0.0)


def _structured_log_lik(z: np.ndarray, params: RegressionParams, jitter: float) -> float:
    mask = ~np.isnan(z)
    if not mask.any():
        return 0.0
    st = record_stats(np.nan_to_num(z), mask, params, jitter)
    sx_inv = np.linalg.inv(params.cov_x_true)
    logdet_sx = np.linalg.slogdet(params.cov_x_true)[1]
    try:
        return float(stats_log_lik(st.lam.sum(0)[None], st.eta.sum(0)[None], [st.c.sum()],
                                   [st.d.sum()], sx_inv, logdet_sx)[0])
    except np.linalg.LinAlgError:
        raise RegressionError("cluster precision matrix is not positive definite") from None


def cluster_regression_log_lik(z, params: RegressionParams, threshold: int = 3,
                               jitter: float = JITTER) -> float:
    """Log density of the observed regression values of one cluster.

    ``z`` has one row ``(y, x_1..x_p)`` per record, NaN where missing.  Clusters
    with fewer than ``threshold`` records are evaluated through the dense
    covariance, larger ones through the information form.
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.shape[0] == 0:
        raise RegressionError("empty cluster")
    if z.shape[1] != params.p + 1:
        raise RegressionError("rows must hold (y, x_1..x_p)")
    if z.shape[0] < threshold:
        return _dense_log_lik(z, params, jitter)
    return _structured_log_lik(z, params, jitter)


def corpus_regression_log_lik(state, data: RegressionData, params: RegressionParams,
                              threshold: int = 3, jitter: float = JITTER) -> float:
    total = 0.0
    for members in state.clusters().values():
        rows = data.z[members]
        if np.isnan(rows).all():
            continue
        total += cluster_regression_log_lik(rows, params, threshold, jitter)
    return total


def log_ratio_move_regression(state, r: int, target: int, data: RegressionData,
                              params: RegressionParams, threshold: int = 3,
                              jitter: float = JITTER) -> float:
    """Change of the corpus log likelihood when ``r`` moves to ``target`` (label or NEW)."""
    if not data.mask[r].any():
        return 0.0
    source = int(state.labels[r])
    if target == source:
        return 0.0
    old = [m for m in state.members(source)]
    rest = [m for m in old if m != r]
    dest = [] if target < 0 else state.members(target)
    if not rest and not dest:
        return 0.0

    def ll(members):
        if not members:
            return 0.0
        return cluster_regression_log_lik(data.z[members], params, threshold, jitter)

    return ll(rest) + ll(dest + [r]) - ll(old) - ll(dest)
