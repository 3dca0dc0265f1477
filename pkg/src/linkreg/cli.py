"""Command line: ``linkreg generate | run | eval``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import BACKEND_NAME, __version__
from .corpus import CorpusError, fmt_real, read_corpus, read_truth, write_corpus, write_schema, write_truth
from .datagen import BUILTIN, GenerationError, builtin_experiment, generate_corpus
from .evaluation import (
    compute_metrics,
    point_estimate_from_probabilities,
    summarize,
)
from .partition import Constraint
from .priors import ConstrainedPYP, PriorError, format_prior, parse_prior
from .regression import RegressionError
from .sampler import (
    ConfigError,
    Mode,
    PosteriorSamples,
    SamplerConfig,
    VariancePrior,
    merge_samples,
    run_chains,
)

log = logging.getLogger("linkreg")

EXIT_RUNTIME = 1
EXIT_USAGE = 2

# config keys that map one-to-one onto SamplerConfig fields
SAMPLER_KEYS = ("iterations", "burn_in", "thin", "seed", "proposal_sd_alpha", "proposal_sd_beta",
                "proposal_sd_logvar", "alpha_init", "adapt", "random_scan",
                "no_within_db_duplicates")


class UsageError(Exception):
    pass


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return fmt_real(float(v))
    return str(v)


# ---------------------------------------------------------------- generate

def cmd_generate(args) -> int:
    try:
        spec = builtin_experiment(args.experiment, args.seed)
    except GenerationError as exc:
        raise UsageError(str(exc)) from None
    gen = generate_corpus(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = gen.corpus
    covariates = None
    if corpus.regression is not None:
        covariates = [f"x{i + 1}" for i in range(corpus.regression.p)]
    write_corpus(out / "corpus.csv", corpus, covariates=covariates, with_entity=False)
    write_schema(out / "schema.json", corpus.features, "y" if covariates else None, covariates or ())
    write_truth(out / "truth.csv", corpus, gen.entity)
    sizes = np.bincount(np.unique(gen.entity, return_counts=True)[1])
    print(f"{spec.name}: {corpus.n_records} records in {corpus.n_databases} database(s), "
          f"{spec.n_entities} entities, {int(sizes[2:].sum()) if sizes.size > 2 else 0} duplicated; "
          f"suggested prior {spec.prior}")
    return 0


# ---------------------------------------------------------------- run

def _merge_config(args) -> dict:
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
    for key, val in vars(args).items():
        if key in ("func", "config", "verbose") or val is None:
            continue
        cfg[key] = val
    for req in ("corpus", "schema", "out"):
        if not cfg.get(req):
            raise UsageError(f"--{req} is required (flag or config key)")
    return cfg


def _sampler_config(cfg: dict, mode: Mode) -> SamplerConfig:
    kw = {k: cfg[k] for k in SAMPLER_KEYS if k in cfg}
    kw.setdefault("iterations", 1000)
    kw.setdefault("burn_in", kw["iterations"] // 4)
    if "alpha_prior" in cfg:
        kw["alpha_prior"] = tuple(float(v) for v in cfg["alpha_prior"])
    if "cov_x_true" in cfg:
        kw["cov_x_true"] = tuple(map(tuple, np.atleast_2d(cfg["cov_x_true"]).tolist()))
    for key in ("var_y_prior", "var_x_prior"):
        if key in cfg:
            val = cfg[key]
            if isinstance(val, str) and val != "log-flat":
                mean, strength = (float(v) for v in val.split(","))
                val = {"mean": mean, "strength": strength}
            kw[key] = VariancePrior.from_dict(val)
    return SamplerConfig(mode=mode, **kw)


def _trace_rows(chains: list[PosteriorSamples]):
    first = chains[0]
    header = ["chain", "iteration", "k", "t"]
    header += [f"alpha{l + 1}" for l in range(first.alpha.shape[1])]
    q = first.beta.shape[1] if first.has_regression else 0
    header += [f"beta{j + 1}" for j in range(q)] + (["var_y"] if q else [])
    header += [f"var_x{j + 1}" for j in range(q)]
    rows = []
    for s in chains:
        for i in range(s.n_kept):
            row = [s.chain, int(s.iteration[i]), int(s.k[i]), "" if s.t is None else int(s.t[i])]
            row += [_cell(v) for v in s.alpha[i]]
            if q:
                row += [_cell(v) for v in s.beta[i]] + [_cell(s.var_y[i])]
                row += [_cell(v) for v in s.var_x[i]]
            rows.append(row)
    return header, rows


def _read_linkage(cfg, corpus, constraint):
    """Frozen labels for plug-in mode: a truth file or a previous run's pair probabilities."""
    if cfg.get("linkage_truth"):
        return np.unique(read_truth(cfg["linkage_truth"], corpus), return_inverse=True)[1]
    src = cfg.get("linkage_from")
    if not src:
        raise UsageError("plugin mode needs --linkage-from RUN_DIR or --linkage-truth TRUTH_CSV")
    index = {str(rid): i for i, rid in enumerate(corpus.record_ids)}
    probs = {}
    try:
        with open(Path(src) / "pairs.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                a, b = index[row["rec_a"]], index[row["rec_b"]]
                probs[(min(a, b), max(a, b))] = float(row["probability"])
    except (OSError, KeyError) as exc:
        raise UsageError(f"cannot read linkage from {src}: {exc}") from None
    return point_estimate_from_probabilities(probs, corpus.db, 0.5, constraint).labels


def cmd_run(args) -> int:
    cfg = _merge_config(args)
    mode_name = cfg.get("mode", "joint")
    if mode_name not in ("joint", "linkage-only", "plugin"):
        raise UsageError(f"unknown mode {mode_name!r}")
    try:
        corpus, warnings = read_corpus(cfg["corpus"], cfg["schema"])
        prior = parse_prior(cfg.get("prior", "pyp:0.4,0.98"))
        mode = Mode.LINKAGE_ONLY if mode_name == "linkage-only" else Mode.JOINT
        sconf = _sampler_config(cfg, mode)
        truth = read_truth(cfg["truth"], corpus) if cfg.get("truth") else None
    except (CorpusError, PriorError, ConfigError, RegressionError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    for w in warnings:
        log.warning(w)
    if mode is Mode.LINKAGE_ONLY and corpus.has_regression():
        log.warning("linkage-only mode: regression columns are ignored")
    if mode_name == "plugin" and not corpus.has_regression():
        raise UsageError("plugin mode needs regression columns in the corpus")
    if mode_name == "joint" and not corpus.has_regression():
        log.warning("joint mode without regression columns samples the linkage model only")
    constraint = Constraint.UNCONSTRAINED
    if isinstance(prior, ConstrainedPYP) or sconf.no_within_db_duplicates:
        constraint = Constraint.NO_WITHIN_DB_DUPLICATES
    if mode_name == "plugin":
        labels = _read_linkage(cfg, corpus, constraint)
        sconf = replace(sconf, update_lambda=False, update_alpha=False,
                        init_labels=tuple(int(v) for v in labels))
    n_chains = int(cfg.get("chains", 1))
    if n_chains < 1:
        raise UsageError("--chains must be positive")

    out = Path(cfg["out"])
    existed = out.exists()
    out.mkdir(parents=True, exist_ok=True)
    produced = [out / n for n in ("trace.csv", "pairs.csv", "labels.csv", "summary.json")]
    start = time.time()
    try:
        chains = run_chains(corpus, prior, sconf, n_chains, int(cfg.get("workers", 1)))
        _write_run(out, corpus, chains, cfg, prior, mode_name, truth, time.time() - start)
    except BaseException:
        for p in produced:
            p.unlink(missing_ok=True)
        if not existed:
            shutil.rmtree(out, ignore_errors=True)
        raise
    pooled = merge_samples(chains)
    print(f"{mode_name}: {pooled.n_kept} draws from {n_chains} chain(s); "
          f"posterior mode of k = {pooled.k_mode()}; outputs in {out}")
    return 0


def _write_run(out, corpus, chains, cfg, prior, mode_name, truth, elapsed) -> None:
    header, rows = _trace_rows(chains)
    _write_csv(out / "trace.csv", header, rows)
    pooled = merge_samples(chains)
    ids = [str(r) for r in corpus.record_ids]
    pair_rows = [[ids[a], ids[b], _cell(p)] for (a, b), p in pooled.pair_probabilities().items()]
    _write_csv(out / "pairs.csv", ["rec_a", "rec_b", "probability"], pair_rows)
    label_rows = []
    for s in chains:
        for i in range(s.n_kept):
            label_rows.append([s.chain, int(s.iteration[i]), *s.labels[i].tolist()])
    _write_csv(out / "labels.csv", ["chain", "iteration", *ids], label_rows)
    doc = {
        "mode": mode_name,
        "prior": format_prior(prior),
        "backend": BACKEND_NAME,
        "version": __version__,
        "chains": len(chains),
        "seeds": [s.seed for s in chains],
        "n_records": corpus.n_records,
        "posterior": summarize(pooled, truth),
        "per_chain": [summarize(s, truth) for s in chains],
        "runtime_seconds": round(elapsed, 3),
    }
    doc["k_mode"] = doc["posterior"]["k_mode"]
    (out / "summary.json").write_text(json.dumps(doc, indent=1))


# ---------------------------------------------------------------- eval

def _read_labels(run: Path):
    try:
        with open(run / "labels.csv", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [list(map(int, r)) for r in reader]
    except (OSError, StopIteration, ValueError) as exc:
        raise UsageError(f"cannot read labels of run {run}: {exc}") from None
    arr = np.array(rows, dtype=np.int64).reshape(len(rows), len(header))
    return header[2:], arr


def _read_truth_table(path) -> dict[str, int]:
    try:
        with open(path, newline="") as fh:
            return {f"{r['db_id']}:{r['rec_id']}": int(r["entity_id"]) for r in csv.DictReader(fh)}
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot read truth {path}: {exc}") from None


def _read_trace(run: Path) -> dict[str, np.ndarray]:
    with open(run / "trace.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    cols = {}
    for key in (rows[0].keys() if rows else []):
        vals = [r[key] for r in rows]
        if all(v != "" for v in vals):
            cols[key] = np.array([float(v) for v in vals])
    return cols


def _histogram_rows(name, values, bins):
    values = np.asarray(values, dtype=float)
    if np.all(values == np.round(values)) and np.ptp(values) <= 200:
        lo, hi = int(values.min()), int(values.max())
        edges = np.arange(lo, hi + 2) - 0.5
    else:
        edges = np.histogram_bin_edges(values, bins=bins)
    counts, edges = np.histogram(values, bins=edges)
    return [[name, _cell(edges[i]), _cell(edges[i + 1]), int(counts[i])] for i in range(len(counts))]


def cmd_eval(args) -> int:
    run = Path(args.run)
    ids, labels = _read_labels(run)
    table = _read_truth_table(args.truth)
    if set(ids) != set(table):
        raise UsageError("truth and run list different records")
    truth = np.array([table[i] for i in ids])
    out = Path(args.out) if args.out else run
    out.mkdir(parents=True, exist_ok=True)

    metric_rows = []
    fnr, fdr = [], []
    for row in labels:
        m = compute_metrics(row[2:], truth)
        fnr.append(m.fnr)
        fdr.append(m.fdr)
        metric_rows.append([int(row[0]), int(row[1]), _cell(m.fnr), _cell(m.fdr)])
    _write_csv(out / "metrics.csv", ["chain", "iteration", "fnr", "fdr"], metric_rows)

    trace = _read_trace(run)
    hist = []
    for name, vals in trace.items():
        if name in ("chain", "iteration"):
            continue
        hist += _histogram_rows(name, vals, args.bins)
    if fnr:
        hist += _histogram_rows("fnr", fnr, args.bins) + _histogram_rows("fdr", fdr, args.bins)
    _write_csv(out / "histograms.csv", ["quantity", "bin_low", "bin_high", "count"], hist)

    comparison = {"available": False}
    if args.plugin:
        other = _read_trace(Path(args.plugin))
        shared = sorted(k for k in trace if k in other and k.startswith(("beta", "var_")))
        if shared:
            comparison = {"available": True, "parameters": {}}
            for k in shared:
                a, b = float(trace[k].mean()), float(other[k].mean())
                comparison["parameters"][k] = {"joint_mean": a, "plugin_mean": b,
                                               "plugin_minus_joint": b - a}
    (out / "comparison.json").write_text(json.dumps(comparison, indent=1))
    print(f"posterior mean FNR {np.mean(fnr):.4f}, FDR {np.mean(fdr):.4f} over {len(fnr)} draws")
    return 0


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="linkreg", description="Bayesian record linkage with regression")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic corpus")
    g.add_argument("--experiment", required=True, help=", ".join(BUILTIN))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="sample the posterior")
    r.add_argument("--config", help="JSON file with the same keys as the flags (flags win)")
    r.add_argument("--corpus")
    r.add_argument("--schema")
    r.add_argument("--truth")
    r.add_argument("--out")
    r.add_argument("--mode", choices=("joint", "linkage-only", "plugin"))
    r.add_argument("--prior", help="pyp:S,D | cpyp:S,D | uniform-labels:N | uniform-partitions:N")
    r.add_argument("--iterations", type=int)
    r.add_argument("--burn-in", dest="burn_in", type=int)
    r.add_argument("--thin", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--chains", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--var-y-prior", dest="var_y_prior", help="log-flat or MEAN,STRENGTH")
    r.add_argument("--var-x-prior", dest="var_x_prior", help="log-flat or MEAN,STRENGTH")
    r.add_argument("--no-within-db-duplicates", dest="no_within_db_duplicates",
                   action="store_true", default=None)
    r.add_argument("--linkage-from", dest="linkage_from", help="run directory whose pairs.csv fixes the linkage")
    r.add_argument("--linkage-truth", dest="linkage_truth", help="truth CSV that fixes the linkage")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="linkage metrics and histograms of a run")
    e.add_argument("--run", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--plugin", help="run directory of a plug-in fit to compare against")
    e.add_argument("--out")
    e.add_argument("--bins", type=int, default=30)
    e.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"linkreg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, OSError, RegressionError, AssertionError) as exc:
        print(f"linkreg: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
