"""Linkage quality metrics, posterior summaries and the plug-in comparator.

FNR and FDR are pairwise: a pair of records is a true match when both carry
the same entity id, and declared when they share a cluster.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .corpus import Corpus
from .partition import Constraint, LinkageState
from .priors import PartitionPrior
from .sampler import Mode, PosteriorSamples, SamplerConfig, run_chain


@dataclass(frozen=True)
class LinkageMetrics:
    fnr: float
    fdr: float
    true_pairs: int
    declared_pairs: int
    true_positive_pairs: int


def pairs_from_labels(labels) -> set[tuple[int, int]]:
    groups: dict[int, list[int]] = {}
    for r, c in enumerate(np.asarray(labels).tolist()):
        groups.setdefault(c, []).append(r)
    out = set()
    for mem in groups.values():
        for i, a in enumerate(mem):
            for b in mem[i + 1:]:
                out.add((a, b))
    return out


def compute_metrics(estimate, truth) -> LinkageMetrics:
    """Pairwise FNR and FDR of ``estimate`` (a state, a label vector or a pair set)."""
    if isinstance(estimate, LinkageState):
        declared = pairs_from_labels(estimate.labels)
    elif isinstance(estimate, (set, frozenset)):
        declared = {tuple(sorted(p)) for p in estimate}
    else:
        declared = pairs_from_labels(estimate)
    true = pairs_from_labels(truth)
    tp = len(declared & true)
    fnr = 1.0 - tp / len(true) if true else 0.0
    fdr = (len(declared) - tp) / len(declared) if declared else 0.0
    return LinkageMetrics(fnr, fdr, len(true), len(declared), tp)


def posterior_metric_trace(samples: PosteriorSamples, truth) -> np.ndarray:
    """``(n_kept, 2)`` array of per-draw (FNR, FDR)."""
    truth = np.asarray(truth)
    out = np.zeros((samples.n_kept, 2))
    for i, row in enumerate(samples.labels):
        m = compute_metrics(row, truth)
        out[i] = m.fnr, m.fdr
    return out


def point_estimate_linkage(samples: PosteriorSamples, db, threshold: float = 0.5,
                           constraint: Constraint = Constraint.UNCONSTRAINED) -> LinkageState:
    """Link pairs with posterior probability above ``threshold`` and close transitively.

    Under the no-duplicates constraint, links are added from the most to the
    least probable and a link is dropped when it would merge two records of
    one database.
    """
    return point_estimate_from_probabilities(samples.pair_probabilities(), db, threshold, constraint)


def point_estimate_from_probabilities(probs: dict, db, threshold: float = 0.5,
                                      constraint: Constraint = Constraint.UNCONSTRAINED) -> LinkageState:
    db = np.asarray(db)
    n = db.shape[0]
    links = [(p, a, b) for (a, b), p in probs.items() if p > threshold]
    if constraint is not Constraint.NO_WITHIN_DB_DUPLICATES:
        if links:
            a = np.array([l[1] for l in links])
            b = np.array([l[2] for l in links])
            graph = coo_matrix((np.ones(len(links)), (a, b)), shape=(n, n))
            _, labels = connected_components(graph, directed=False)
        else:
            labels = np.arange(n)
        return LinkageState(db, labels, constraint)
    parent = list(range(n))
    dbs = [{int(db[r])} for r in range(n)]

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for p, a, b in sorted(links, key=lambda t: (-t[0], t[1], t[2])):
        ra, rb = find(a), find(b)
        if ra == rb or dbs[ra] & dbs[rb]:
            continue
        parent[rb] = ra
        dbs[ra] |= dbs[rb]
    labels = np.array([find(r) for r in range(n)])
    return LinkageState(db, labels, constraint)


def plugin_regression(corpus: Corpus, labels, prior: PartitionPrior,
                      config: SamplerConfig) -> PosteriorSamples:
    """Regression posterior with the linkage frozen at ``labels``."""
    dense = np.unique(np.asarray(labels), return_inverse=True)[1]
    cfg = replace(config, mode=Mode.JOINT, update_lambda=False, update_alpha=False,
                  init_labels=tuple(int(v) for v in dense))
    return run_chain(corpus, prior, cfg)


def summarize(samples: PosteriorSamples, truth=None) -> dict:
    """JSON-ready summary: posterior mode of k, means and quantiles of traced quantities."""

    def stats(v):
        v = np.asarray(v, dtype=float)
        q = np.quantile(v, [0.025, 0.5, 0.975])
        return {"mean": float(v.mean()), "q025": float(q[0]), "median": float(q[1]),
                "q975": float(q[2])}

    out = {"n_kept": int(samples.n_kept), "k_mode": samples.k_mode(), "k": stats(samples.k)}
    if samples.t is not None:
        vals, cnt = np.unique(samples.t, return_counts=True)
        out["t_mode"] = int(vals[np.argmax(cnt)])
        out["t"] = stats(samples.t)
    for l in range(samples.alpha.shape[1]):
        out[f"alpha{l + 1}"] = stats(samples.alpha[:, l])
    if samples.has_regression:
        for j in range(samples.beta.shape[1]):
            out[f"beta{j + 1}"] = stats(samples.beta[:, j])
            out[f"var_x{j + 1}"] = stats(samples.var_x[:, j])
        out["var_y"] = stats(samples.var_y)
    if samples.acceptance:
        out["acceptance"] = dict(samples.acceptance)
    if truth is not None:
        m = posterior_metric_trace(samples, truth)
        out["fnr"] = stats(m[:, 0])
        out["fdr"] = stats(m[:, 1])
    return out
