"""Synthetic corpora with known linkage truth and optional regression columns.

Entities draw true categorical values from the field frequencies; every record
of an entity copies them, replacing each one independently with a fresh draw
from the frequencies with probability ``alpha_gen`` (the hit-and-miss
mechanism itself).  Regression values follow the latent-covariate model: one
``xt ~ N(0, Sx)`` per entity, ``x = xt + noise`` and ``y = beta . xt + noise``
per record.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus
from .hitmiss import FeatureSpec
from .regression import RegressionData, RegressionParams


class RegressionPlan(enum.Enum):
    NONE = "none"
    COMPLETE_SIMPLE = "complete-simple"
    BROKEN_SIMPLE = "broken-simple"
    BROKEN_MULTIPLE = "broken-multiple"


class GenerationError(ValueError):
    pass


DEFAULT_SUPPORTS = (1000, 1000, 100, 31)
DEFAULT_NAMES = ("fname", "lname", "byear", "bday")


def zipf_frequencies(m: int, exponent: float) -> np.ndarray:
    w = 1.0 / np.arange(1, m + 1) ** exponent
    return w / w.sum()


@dataclass(frozen=True)
class GenSpec:
    """Recipe for one synthetic corpus.

    ``placements`` lists ``(databases, count)``: ``count`` entities, each with
    one record in every database of the tuple (a database may repeat, giving a
    within-database duplicate).  ``lookalikes`` pairs of distinct singleton
    entities share every true value but one, mimicking relatives with the
    same surname and birth date; they are drawn across databases when there
    are several.
    """

    name: str
    placements: tuple[tuple[tuple[int, ...], int], ...]
    supports: tuple[int, ...] = DEFAULT_SUPPORTS
    zipf_exponent: float = 0.5
    alpha_gen: tuple[float, ...] = (0.01, 0.01, 0.01, 0.01)
    lookalikes: int = 0
    regression: RegressionPlan = RegressionPlan.NONE
    beta: tuple[float, ...] = (3.0,)
    var_y: float = 4.0
    var_x: tuple[float, ...] = (0.01,)
    var_x_true: tuple[float, ...] = (9.0,)
    no_within_db_duplicates: bool = False
    prior: str = "pyp:0.4,0.98"
    seed: int = 0
    feature_names: tuple[str, ...] = DEFAULT_NAMES

    def __post_init__(self):
        if len(self.alpha_gen) != len(self.supports):
            raise GenerationError("one alpha_gen per feature is required")
        if any(not 0.0 <= a <= 1.0 for a in self.alpha_gen):
            raise GenerationError("alpha_gen values must lie in [0, 1]")
        if self.lookalikes < 0:
            raise GenerationError("lookalikes must be non-negative")
        for dbs, count in self.placements:
            if count < 0 or not dbs or min(dbs) < 1:
                raise GenerationError(f"bad placement {(dbs, count)!r}")
            if self.no_within_db_duplicates and len(set(dbs)) != len(dbs):
                raise GenerationError(f"placement {dbs} puts two records in one database")
        q = len(self.beta)
        if self.regression is not RegressionPlan.NONE:
            if len(self.var_x) != q or len(self.var_x_true) != q:
                raise GenerationError("beta, var_x and var_x_true must have equal length")
            if self.regression is not RegressionPlan.BROKEN_MULTIPLE and q != 1:
                raise GenerationError("simple regression plans take a single covariate")

    @property
    def n_entities(self) -> int:
        return sum(c for _, c in self.placements)

    @property
    def n_records(self) -> int:
        return sum(len(d) * c for d, c in self.placements)

    def db_sizes(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for dbs, count in self.placements:
            for d in dbs:
                out[d] = out.get(d, 0) + count
        return dict(sorted(out.items()))

    def features(self) -> FeatureSpec:
        rows = [zipf_frequencies(m, self.zipf_exponent) for m in self.supports]
        return FeatureSpec.from_rows(rows, list(self.feature_names[: len(rows)]))

    def regression_params(self) -> RegressionParams:
        return RegressionParams(np.array(self.beta), self.var_y, np.diag(self.var_x),
                                np.diag(self.var_x_true))

    def cluster_size_multiset(self) -> list[int]:
        return sorted((len(d) for d, c in self.placements for _ in range(c)), reverse=True)


@dataclass
class Generated:
    corpus: Corpus
    entity: np.ndarray
    spec: GenSpec
    true_x: np.ndarray | None = field(default=None, repr=False)


def generate_corpus(spec: GenSpec, seed: int | None = None) -> Generated:
    """Draw a corpus; records are shuffled within each database."""
    rng = np.random.Generator(np.random.PCG64(spec.seed if seed is None else seed))
    features = spec.features()
    ent_of_rec, db_of_rec = [], []
    e = 0
    for dbs, count in spec.placements:
        for _ in range(count):
            for d in dbs:
                ent_of_rec.append(e)
                db_of_rec.append(d)
            e += 1
    n_ent = e
    ent_of_rec = np.array(ent_of_rec, dtype=np.int64)
    db_of_rec = np.array(db_of_rec, dtype=np.int64)
    n = ent_of_rec.shape[0]
    if n == 0:
        raise GenerationError("the plan has no records")

    true_vals = np.column_stack([
        rng.choice(m, size=n_ent, p=features.theta[l, :m]) for l, m in enumerate(spec.supports)
    ])
    _plant_lookalikes(spec, true_vals, features, rng)
    codes = true_vals[ent_of_rec].copy()
    for l, m in enumerate(spec.supports):
        hit = rng.random(n) < spec.alpha_gen[l]
        codes[hit, l] = rng.choice(m, size=int(hit.sum()), p=features.theta[l, :m])

    regression = None
    xt = None
    if spec.regression is not RegressionPlan.NONE:
        prm = spec.regression_params()
        q = prm.p
        xt = rng.multivariate_normal(np.zeros(q), prm.cov_x_true, size=n_ent)
        x = xt[ent_of_rec] + rng.multivariate_normal(np.zeros(q), prm.cov_x_given_x, size=n)
        y = xt[ent_of_rec] @ prm.beta + rng.normal(0.0, np.sqrt(prm.var_y_given_x), size=n)
        if spec.regression is not RegressionPlan.COMPLETE_SIMPLE:
            y[db_of_rec != 1] = np.nan
            x[db_of_rec == 1] = np.nan
        regression = (y, x)

    # shuffle within databases, then sort database-major
    perm = rng.permutation(n)
    order = perm[np.argsort(db_of_rec[perm], kind="stable")]
    db_sorted = db_of_rec[order]
    rec = np.zeros(n, dtype=np.int64)
    for d in np.unique(db_sorted):
        idx = np.flatnonzero(db_sorted == d)
        rec[idx] = np.arange(1, idx.shape[0] + 1)
    reg_data = None
    if regression is not None:
        reg_data = RegressionData(regression[0][order], regression[1][order])
    entity = ent_of_rec[order] + 1
    corpus = Corpus(db_sorted, rec, codes[order], features, reg_data, entity)
    return Generated(corpus, entity, spec, None if xt is None else xt[ent_of_rec[order]])


def _plant_lookalikes(spec: GenSpec, true_vals: np.ndarray, features: FeatureSpec, rng) -> None:
    if not spec.lookalikes:
        return
    by_db: dict[int, list[int]] = {}
    e = 0
    for dbs, count in spec.placements:
        for _ in range(count):
            if len(dbs) == 1:
                by_db.setdefault(dbs[0], []).append(e)
            e += 1
    dbs = sorted(by_db)
    if len(dbs) >= 2:
        first = rng.permutation(by_db[dbs[0]])
        second = rng.permutation(by_db[dbs[1]])
    else:
        pool = rng.permutation(by_db.get(dbs[0], []) if dbs else [])
        half = len(pool) // 2
        first, second = pool[:half], pool[half:2 * half]
    if min(len(first), len(second)) < spec.lookalikes:
        raise GenerationError("not enough singleton entities for the requested lookalikes")
    for a, b in zip(first[: spec.lookalikes], second[: spec.lookalikes]):
        true_vals[b] = true_vals[a]
        l = int(rng.integers(features.n_fields))
        m = int(spec.supports[l])
        true_vals[b, l] = rng.choice(m, p=features.theta[l, :m])


_DEDUP = (((1, 2), 28), ((1, 1), 9), ((2, 2), 13), ((1,), 204), ((2,), 196))
_BIPARTITE = (((1, 2), 50), ((1,), 200), ((2,), 200))
_SINGLE = (((1, 1), 50), ((1,), 400))

LOOKALIKES = 4
BUILTIN = ("RL500-dedup", "RL500-bipartite", "ExpI", "ExpII", "ExpIII")


def builtin_experiment(name: str, seed: int = 0) -> GenSpec:
    """Canonical corpus designs of the record-linkage and regression experiments.

    Lookalike entities are planted in the two-database designs only.
    """
    two_db = {"lookalikes": LOOKALIKES, "seed": seed}
    bipartite = {"no_within_db_duplicates": True, "prior": "cpyp:1,0.725"}
    if name == "RL500-dedup":
        return GenSpec(name, _DEDUP, **two_db)
    if name == "RL500-bipartite":
        return GenSpec(name, _BIPARTITE, **two_db, **bipartite)
    if name == "ExpI":
        return GenSpec(name, _SINGLE, regression=RegressionPlan.COMPLETE_SIMPLE, seed=seed)
    if name == "ExpII":
        return GenSpec(name, _DEDUP, regression=RegressionPlan.BROKEN_SIMPLE, **two_db)
    if name == "ExpIII":
        return GenSpec(name, _BIPARTITE, regression=RegressionPlan.BROKEN_MULTIPLE,
                       beta=(2.0, 4.0), var_x=(0.01, 0.01), var_x_true=(9.0, 9.0),
                       **two_db, **bipartite)
    raise GenerationError(f"unknown experiment {name!r}; choose from {', '.join(BUILTIN)}")
