"""Command-line entry point: ``rlvr-dynamics <command> [flags]``.

Exit codes: 0 success, 1 domain/usage error, 2 numerical-consistency or
verification failure, 3 I/O error. Data goes to stdout, diagnostics to stderr.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from rlvr_dynamics import analytic, harness, oracle
from rlvr_dynamics.categorical import run_simulation
from rlvr_dynamics.core import RewardConfig
from rlvr_dynamics.errors import DomainError, NumericalConsistencyError

OUTPUT_ENV = "RLVR_DYNAMICS_OUTPUT_DIR"

log = logging.getLogger("rlvr_dynamics")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _num(x, full):
    return format(float(x), ".17g" if full else ".7g")


def _add_precision(p):
    p.add_argument("--full-precision", action="store_true", help="print 17 significant digits instead of 7")


def build_parser():
    parser = _Parser(prog="rlvr-dynamics", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("tailmiss", help="probability a group is active yet misses the rare-correct region")
    p.add_argument("--mu", type=float, help="success probability mu_pos")
    p.add_argument("--tau", type=float, help="rare-correct mass tau (0 <= tau <= mu)")
    p.add_argument("--n", type=int, help="group size N")
    p.add_argument("--grid-output", help="write a (mu, rho) x N grid CSV here instead ('-' for stdout)")
    p.add_argument("--mu-values", type=float, nargs="+", default=[0.8, 0.5, 0.2], help="grid: mu_pos panels")
    p.add_argument("--rho-values", type=float, nargs="+", default=[0.5, 0.1, 0.01, 0.001], help="grid: rho = tau/mu curves")
    p.add_argument("--n-max", type=int, default=10**6, help="grid: largest N")
    _add_precision(p)

    p = sub.add_parser("peak", help="group size maximising the tail-miss probability")
    p.add_argument("--mu", type=float, required=True, help="success probability mu_pos")
    p.add_argument("--tau", type=float, required=True, help="rare-correct mass tau")
    p.add_argument("--n-max", type=int, default=10**6, help="largest N scanned")
    _add_precision(p)

    def sim_flags(p):
        p.add_argument("--config", help="YAML sweep config (fields as in SweepConfig)")
        p.add_argument("--small", action="store_true", help="1280 actions / 100 correct preset")
        p.add_argument("--eta", type=float, help="learning rate (default 1e-2 full scale)")
        p.add_argument("--steps", type=int, help="training steps T (default 1000)")
        p.add_argument("--objective", choices=["prob", "logprob"], help="surrogate differentiated w.r.t. logits")
        p.add_argument("--optimizer", choices=["sgd", "adam"], help="update rule for the logits")
        p.add_argument("--log-every", type=int, help="metric row cadence (default 10)")

    p = sub.add_parser("simulate", help="one categorical policy simulation run")
    sim_flags(p)
    p.add_argument("--n", type=int, default=1024, help="group size N")
    p.add_argument("--gamma", type=float, default=0.0, help="focal exponent gamma")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.add_argument("--output", help="metrics CSV path (default stdout)")

    p = sub.add_parser("sweep", help="N x gamma x seed sweep of the simulation")
    sim_flags(p)
    p.add_argument("--group-sizes", type=int, nargs="+", help="override the N grid")
    p.add_argument("--gammas", type=float, nargs="+", help="override the gamma grid")
    p.add_argument("--seed", type=int, nargs="+", dest="seeds", help="seeds (default 0 1 2 3)")
    p.add_argument("--output-dir", help=f"sweep directory (default ${OUTPUT_ENV}/sweep)")
    p.add_argument("--parallelism", type=int, default=os.cpu_count() or 1, help="worker processes")

    p = sub.add_parser("focal-curve", help="focal-scaled advantage magnitude versus success probability")
    p.add_argument("--gamma", type=float, nargs="+", default=[0.0, 0.5, 1.0, 2.0], help="focal exponents")
    p.add_argument("--points", type=int, default=99, help="interior grid points")
    p.add_argument("--output", help="CSV path (default stdout)")

    p = sub.add_parser("passk", help="unbiased pass@k of a 0/1 correctness CSV")
    p.add_argument("--input", required=True, help="CSV: one row per problem, 0/1 cells")
    p.add_argument("--k", type=int, nargs="+", required=True, help="k values")
    _add_precision(p)

    p = sub.add_parser("sigtest", help="paired m-out-of-n subsampling test on pass@k")
    p.add_argument("--a", required=True, help="baseline correctness CSV")
    p.add_argument("--b", required=True, help="candidate correctness CSV")
    p.add_argument("--m", type=int, default=256, help="subsample size")
    p.add_argument("--k", type=int, nargs="+", default=[1, 256], help="k values")
    p.add_argument("--iterations", type=int, default=50_000, help="subsampling iterations")
    p.add_argument("--alpha", type=float, default=0.05, help="significance level")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.add_argument("--unpaired", action="store_true", help="draw independent column indices for a and b")
    _add_precision(p)

    p = sub.add_parser("verify", help="run the oracle suite")
    p.add_argument("--all", action="store_true", help="run every check (default)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.add_argument("--trials", type=int, default=10**6, help="Monte Carlo trials per check")
    return parser


def _sweep_config(args):
    if args.config:
        config = harness.load_config(args.config)
    elif args.small:
        config = harness.SweepConfig.small()
    else:
        config = harness.SweepConfig.full()
    overrides = {
        k: v
        for k, v in {
            "eta": args.eta,
            "steps": args.steps,
            "objective": args.objective,
            "optimizer": args.optimizer,
            "log_every": args.log_every,
            "group_sizes": getattr(args, "group_sizes", None),
            "gammas": getattr(args, "gammas", None),
            "seeds": getattr(args, "seeds", None),
        }.items()
        if v is not None
    }
    return harness.config_with(config, **overrides) if overrides else config


def cmd_tailmiss(args, out):
    if args.grid_output:
        target = out if args.grid_output == "-" else args.grid_output
        harness.emit_tailmiss_grid(args.mu_values, args.rho_values, args.n_max, target)
        return 0
    if args.mu is None or args.tau is None or args.n is None:
        raise DomainError("tailmiss needs --mu, --tau and --n (or --grid-output)")
    stats = analytic.PromptStats(args.mu, args.tau, args.n)
    print(_num(analytic.tail_miss_probability(stats), args.full_precision), file=out)
    return 0


def cmd_peak(args, out):
    n_star, value = analytic.tail_miss_peak(args.mu, args.tau, args.n_max)
    print(f"{n_star},{_num(value, args.full_precision)}", file=out)
    return 0


def cmd_simulate(args, out):
    config = _sweep_config(args)
    rows = run_simulation(config.spec(args.n, args.gamma, args.seed))
    record = harness.RunRecord(args.n, args.gamma, args.seed, rows)
    text = record.to_csv()
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    return 0


def cmd_sweep(args, out):
    config = _sweep_config(args)
    out_dir = args.output_dir or os.path.join(os.environ.get(OUTPUT_ENV, "."), "sweep")
    total = len(config.group_sizes) * len(config.gammas) * len(config.seeds)
    done = []

    def progress(path):
        done.append(path)
        log.info("[%d/%d] %s", len(done), total, path)

    summary = harness.run_sweep(config, out_dir, parallelism=args.parallelism, progress=progress)
    harness._write_csv(summary, harness.SUMMARY_COLUMNS, out)
    return 0


def cmd_focal_curve(args, out):
    harness.emit_focal_curve(args.gamma, args.points, args.output or out)
    return 0


def cmd_passk(args, out):
    matrix = analytic.CorrectnessMatrix.from_csv(args.input)
    for k in args.k:
        value = _num(analytic.pass_at_k(matrix, k), args.full_precision)
        print(value if len(args.k) == 1 else f"{k},{value}", file=out)
    return 0


def cmd_sigtest(args, out):
    a = analytic.CorrectnessMatrix.from_csv(args.a)
    b = analytic.CorrectnessMatrix.from_csv(args.b)
    print("k,mean_diff,p_value,significant,ci_low,ci_high", file=out)
    for k in args.k:
        res = analytic.paired_subsample_test(
            a, b, args.m, k, args.iterations, args.alpha, args.seed, paired=not args.unpaired
        )
        f = args.full_precision
        print(
            f"{k},{_num(res.mean_diff, f)},{_num(res.p_value, f)},{int(res.significant)},"
            f"{_num(res.ci_low, f)},{_num(res.ci_high, f)}",
            file=out,
        )
    return 0


def verification_suite(seed=0, trials=10**6):
    """Oracle checks against the closed forms; yields OracleReport objects."""
    from rlvr_dynamics import categorical as cat

    rng = np.random.default_rng(seed)
    for mu, tau, n in ((0.5, 0.05, 8), (0.64, 6.3e-5, 4096), (0.3, 0.0, 5), (0.8, 0.2, 1)):
        ref = analytic.tail_miss_probability(analytic.PromptStats(mu, tau, n))
        yield oracle.mc_tail_miss(mu, tau, n, trials, (seed, 1, n), ref)

    masses = [0.3, 0.1]
    dist = analytic.ConditionalDist.from_masses(masses)
    for k in (0, 1, 2, 5):
        ref = analytic.expected_sampled_mass_given_k(dist, k)
        yield oracle.mc_conditional_mass(masses, k, min(trials, 200_000), (seed, 2, k), ref)

    pos, neg = [0.3, 0.1], [0.6]
    cfg = RewardConfig(1.0, -1.0)
    ref = analytic.expected_baseline_given_k(
        analytic.ConditionalDist.from_masses(pos), analytic.ConditionalDist.from_masses(neg), 1, 2, cfg
    )
    yield oracle.mc_conditional_baseline(pos, neg, 1, 2, 1.0, -1.0, min(trials, 200_000), (seed, 3), ref)

    cfg = RewardConfig(1.0, 0.0)
    for i in range(5):
        size = int(rng.integers(4, 33))
        policy = cat.CategoricalPolicy(rng.normal(0, 1.5, size), np.arange(size) < size // 2)
        batch = cat.sample_batch(policy, int(rng.integers(1, 9)), rng)
        d = cat.decompose_batch(policy, batch, cfg)
        nb = len(batch)

        def predict(eta, d=d, nb=nb):
            return cat.predicted_delta_qpos(d, cfg, eta, nb), cat.predicted_delta_qupos(d, cfg, eta, nb)

        report, _ = oracle.first_order_check(
            policy.logits, policy.correct_mask, batch.sampled_mask, 1.0, 0.0, nb,
            (1e-3, 5e-4), predict=predict, name=f"first_order[{i}]",
        )
        yield report

    for n in range(1, 13):
        for c in range(n + 1):
            for k in range(1, n + 1):
                exact = oracle.exhaustive_pass_at_k(n, c, k)
                got = analytic.pass_at_k_single(n, c, k)
                if got != float(exact):
                    yield oracle.OracleReport(f"pass_at_k(n={n},c={c},k={k})", got, float(exact), 0.0, False, 1)
                    return
    yield oracle.OracleReport("pass_at_k_exhaustive(n<=12)", 1.0, 1.0, 0.0, True, 1)


def cmd_verify(args, out):
    failures = 0
    for report in verification_suite(args.seed, args.trials):
        print(report.row(), file=out)
        failures += not report.passed
    if failures:
        print(f"{failures} check(s) failed", file=sys.stderr)
        return 2
    return 0


COMMANDS = {
    "tailmiss": cmd_tailmiss,
    "peak": cmd_peak,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "focal-curve": cmd_focal_curve,
    "passk": cmd_passk,
    "sigtest": cmd_sigtest,
    "verify": cmd_verify,
}


def main(argv=None, out=None):
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr, end="")
        return 1
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args, out)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalConsistencyError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
