"""Compare the compiled and pure-Python alias kernels.

    python benchmarks/bench_kernels.py [--actions 128000] [--draws 131072] [--repeat 5]

Reports the best-of-``repeat`` wall time for building the table, drawing,
and one full simulation step (build + draw + gradient) per backend.
"""

import argparse
import time

import numpy as np

from rlvr_dynamics import kernels
from rlvr_dynamics.categorical import init_anchor_policy, softmax, surrogate_gradient


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_backend(name, p, u, reward, repeat):
    be = kernels.get_backend(name)
    prob, alias = be.build_alias_table(p)

    def step():
        pr, al = be.build_alias_table(p)
        idx = be.alias_draw(pr, al, u)
        r = reward[idx]
        return surrogate_gradient(p, idx, r - r.mean(), "logprob")

    return {
        "build": best_of(lambda: be.build_alias_table(p), repeat),
        "draw": best_of(lambda: be.alias_draw(prob, alias, u), repeat),
        "step": best_of(step, repeat),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--actions", type=int, default=128_000)
    ap.add_argument("--correct", type=int, default=10_000)
    ap.add_argument("--draws", type=int, default=131_072)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    policy = init_anchor_policy(args.actions, args.correct)
    # perturb so the table is not built from three distinct values only
    rng = np.random.default_rng(0)
    p = softmax(policy.logits + rng.normal(0, 0.1, args.actions))
    u = rng.random(args.draws)
    reward = np.where(policy.correct_mask, 1.0, -1.0)

    results = {name: bench_backend(name, p, u, reward, args.repeat) for name in kernels.available_backends()}
    print(f"{args.actions} actions, {args.draws} draws, best of {args.repeat}")
    print(f"{'backend':<10}{'build ms':>12}{'draw ms':>12}{'step ms':>12}")
    for name, r in results.items():
        print(f"{name:<10}{r['build'] * 1e3:>12.2f}{r['draw'] * 1e3:>12.2f}{r['step'] * 1e3:>12.2f}")
    if "compiled" in results:
        c, py = results["compiled"], results["python"]
        print(f"speedup   {py['build'] / c['build']:>11.1f}x{py['draw'] / c['draw']:>11.1f}x{py['step'] / c['step']:>11.1f}x")


if __name__ == "__main__":
    main()
