"""Linkage structure bookkeeping.

Records are addressed by a dense index ``0..N-1`` (corpus order, database
major).  Cluster labels also live in ``0..N-1``; a label is in use iff its
size is positive.  Membership is kept as intrusive doubly linked lists so the
compiled Gibbs kernel can mutate the very same arrays.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

NEW = -1
"""Target token for :meth:`LinkageState.move_record` meaning "open a new cluster"."""


class Constraint(enum.Enum):
    UNCONSTRAINED = "unconstrained"
    NO_WITHIN_DB_DUPLICATES = "no-within-db-duplicates"


class RecordId(NamedTuple):
    db_index: int
    within_index: int

    def __str__(self) -> str:
        return f"{self.db_index}:{self.within_index}"


class ConstraintViolation(ValueError):
    """A move would put two records of one database in the same cluster."""


@dataclass(frozen=True)
class PartitionSummary:
    k: int
    cluster_sizes: tuple[int, ...]
    t: int | None = None


class LinkageState:
    """Mutable partition of ``N`` records with incremental cluster bookkeeping.

    Parameters
    ----------
    db : array of int
        Database index (1-based) of every record.
    labels : array of int, optional
        Initial cluster label of every record; defaults to all singletons.
    constraint : Constraint
        When ``NO_WITHIN_DB_DUPLICATES`` no two records of one database may
        share a cluster.
    """

    def __init__(self, db, labels=None, constraint=Constraint.UNCONSTRAINED):
        self.db = np.ascontiguousarray(db, dtype=np.int32)
        n = self.db.shape[0]
        self.constraint = Constraint(constraint)
        if labels is None:
            labels = np.arange(n)
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (n,):
            raise ValueError("labels must have one entry per record")
        if n and (labels.min() < 0 or labels.max() >= n):
            raise ValueError("labels must lie in 0..N-1")
        self.labels = np.empty(n, dtype=np.int64)
        self.sizes = np.zeros(n, dtype=np.int64)
        self.head = np.full(n, -1, dtype=np.int64)
        self.nxt = np.full(n, -1, dtype=np.int64)
        self.prv = np.full(n, -1, dtype=np.int64)
        self.k = 0
        for r in range(n):
            self._link(r, int(labels[r]))
        if self.constraint is Constraint.NO_WITHIN_DB_DUPLICATES:
            for c in self.cluster_labels():
                dbs = [int(self.db[r]) for r in self.members(c)]
                if len(set(dbs)) != len(dbs):
                    raise ConstraintViolation(f"cluster {c} holds two records of one database")

    @property
    def n_records(self) -> int:
        return self.labels.shape[0]

    def _link(self, r: int, c: int) -> None:
        h = self.head[c]
        self.nxt[r] = h
        self.prv[r] = -1
        if h >= 0:
            self.prv[h] = r
        self.head[c] = r
        self.labels[r] = c
        if self.sizes[c] == 0:
            self.k += 1
        self.sizes[c] += 1

    def _unlink(self, r: int) -> int:
        c = int(self.labels[r])
        p, q = self.prv[r], self.nxt[r]
        if p >= 0:
            self.nxt[p] = q
        else:
            self.head[c] = q
        if q >= 0:
            self.prv[q] = p
        self.nxt[r] = self.prv[r] = -1
        self.sizes[c] -= 1
        if self.sizes[c] == 0:
            self.k -= 1
        return c

    def members(self, c: int) -> list[int]:
        out = []
        r = self.head[c]
        while r >= 0:
            out.append(int(r))
            r = self.nxt[r]
        return out

    def cluster_labels(self) -> list[int]:
        return [int(c) for c in np.flatnonzero(self.sizes)]

    def clusters(self) -> dict[int, list[int]]:
        return {c: self.members(c) for c in self.cluster_labels()}

    def free_label(self) -> int:
        """Smallest label not in use."""
        return int(np.flatnonzero(self.sizes == 0)[0])

    def move_record(self, r: int, target: int) -> int:
        """Move record ``r`` into cluster ``target`` (or :data:`NEW`).

        Returns the label ``r`` ends up with.  Raises
        :class:`ConstraintViolation` if the target already holds a record of
        ``r``'s database, ``KeyError`` for an unknown label.
        """
        current = int(self.labels[r])
        if target != NEW:
            if not (0 <= target < self.n_records) or self.sizes[target] == 0:
                raise KeyError(f"no cluster labelled {target}")
            if target == current:
                return current
            if self.constraint is Constraint.NO_WITHIN_DB_DUPLICATES:
                d = self.db[r]
                if any(self.db[m] == d for m in self.members(target)):
                    raise ConstraintViolation(
                        f"record {r} cannot join cluster {target}: same database"
                    )
        self._unlink(r)
        if target == NEW:
            target = self.free_label()
        self._link(r, target)
        return target

    def copy(self) -> "LinkageState":
        out = LinkageState.__new__(LinkageState)
        out.db = self.db
        out.constraint = self.constraint
        for name in ("labels", "sizes", "head", "nxt", "prv"):
            setattr(out, name, getattr(self, name).copy())
        out.k = self.k
        return out

    def canonical_labels(self) -> np.ndarray:
        """Labels renumbered by first appearance; equal for equal partitions."""
        _, first, inv = np.unique(self.labels, return_index=True, return_inverse=True)
        order = np.argsort(np.argsort(first))
        return order[inv]

    def check_consistency(self) -> None:
        """Compare incremental bookkeeping against a rebuild from ``labels``."""
        fresh = LinkageState(self.db, self.labels, Constraint.UNCONSTRAINED)
        if not np.array_equal(fresh.sizes, self.sizes):
            raise AssertionError("cluster sizes drifted from labels")
        if fresh.k != self.k or self.k != int(np.count_nonzero(self.sizes)):
            raise AssertionError("k drifted from labels")
        for c in self.cluster_labels():
            if sorted(self.members(c)) != sorted(fresh.members(c)):
                raise AssertionError(f"membership of cluster {c} drifted")
            if self.constraint is Constraint.NO_WITHIN_DB_DUPLICATES:
                dbs = [int(self.db[m]) for m in self.members(c)]
                if len(dbs) != len(set(dbs)):
                    raise AssertionError(f"cluster {c} violates the no-duplicates constraint")
        for c in np.flatnonzero(self.sizes == 0):
            if self.head[c] != -1:
                raise AssertionError(f"empty cluster {c} still has members")


def pairwise_links(state: LinkageState) -> set[tuple[int, int]]:
    """All unordered record pairs sharing a cluster, as ``(a, b)`` with ``a < b``."""
    links = set()
    for c in state.cluster_labels():
        if state.sizes[c] < 2:
            continue
        mem = sorted(state.members(c))
        for i, a in enumerate(mem):
            for b in mem[i + 1:]:
                links.add((a, b))
    return links


def summary(state: LinkageState) -> PartitionSummary:
    sizes = tuple(sorted((int(s) for s in state.sizes if s > 0), reverse=True))
    t = None
    dbs = set(int(d) for d in state.db)
    if state.constraint is Constraint.NO_WITHIN_DB_DUPLICATES and dbs <= {1, 2}:
        t = 0
        for c in state.cluster_labels():
            if state.sizes[c] == 2:
                a, b = state.members(c)
                if state.db[a] != state.db[b]:
                    t += 1
    return PartitionSummary(k=state.k, cluster_sizes=sizes, t=t)
