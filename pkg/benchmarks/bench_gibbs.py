"""Time full sampler sweeps with the compiled and pure-Python kernels.

    python3 benchmarks/bench_gibbs.py --experiment ExpII --sweeps 20
"""
import argparse
import time

from linkreg import _kernels
from linkreg.datagen import BUILTIN, builtin_experiment, generate_corpus
from linkreg.priors import parse_prior
from linkreg.sampler import Mode, SamplerConfig, run_chain


def time_backend(corpus, prior, cfg, name, repeats):
    kern = _kernels.get_backend(name)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        samples = run_chain(corpus, prior, cfg, backend=kern)
        best = min(best, time.perf_counter() - t0)
    return best, samples


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--experiment", default="ExpII", choices=BUILTIN)
    ap.add_argument("--sweeps", type=int, default=20)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--linkage-only", action="store_true")
    args = ap.parse_args()

    spec = builtin_experiment(args.experiment, 0)
    corpus = generate_corpus(spec).corpus
    prior = parse_prior(spec.prior)
    mode = Mode.LINKAGE_ONLY if args.linkage_only or not corpus.has_regression() else Mode.JOINT
    cfg = SamplerConfig(iterations=args.sweeps, seed=0, mode=mode)

    backends = ["python"] + (["compiled"] if _kernels.compiled_backend is not None else [])
    results = {}
    for name in backends:
        results[name] = time_backend(corpus, prior, cfg, name, args.repeats)
        secs = results[name][0]
        print(f"{name:>9}: {secs:8.3f} s for {args.sweeps} sweeps ({1e3 * secs / args.sweeps:7.2f} ms/sweep)")
    if len(results) == 2:
        (tp, sp), (tc, sc) = results["python"], results["compiled"]
        same = (sp.labels == sc.labels).all() and (sp.alpha == sc.alpha).all()
        print(f"  speed-up: {tp / tc:.1f}x; identical draws: {bool(same)}")
    else:
        print("compiled kernel not built; only the Python backend was timed")


if __name__ == "__main__":
    main()
