"""Sweeps of the categorical simulation and CSV emitters for analytic curves.

Layout of a sweep directory::

    config.snapshot          # the SweepConfig as YAML
    n{N}_gamma{G}/seed{S}.csv
    summary.csv              # seed-averaged finals per (N, gamma)

A run's CSV is written to a temporary name and renamed when complete, so a
present ``seed*.csv`` is always a finished run; on resume those are skipped
and leftover ``*.tmp`` files are removed.
"""

import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from rlvr_dynamics import analytic, core
from rlvr_dynamics.categorical import (
    METRIC_COLUMNS,
    OBJECTIVES,
    OPTIMIZERS,
    SimulationSpec,
    run_simulation,
)
from rlvr_dynamics.core import RewardConfig
from rlvr_dynamics.errors import DomainError

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = (
    "n",
    "gamma",
    "n_seeds",
    "final_step",
    "q_pos_mean",
    "q_pos_std",
    "retained_mass_mean",
    "retained_mass_std",
    "entropy_mean",
    "entropy_std",
    "min_logged_retained_mass",
    "concentration_zone",
)


def fmt(x):
    """17 significant digits; integers stay integers."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


@dataclass(frozen=True)
class SweepConfig:
    n_actions: int = 128_000
    n_correct: int = 10_000
    z_anchor: float = 5.0
    z_correct: float = 3.0
    z_incorrect: float = 0.0
    eta: float = 1e-2
    steps: int = 1000
    group_sizes: tuple = tuple(2**i for i in range(1, 18))
    gammas: tuple = (0.0, 1.0)
    seeds: tuple = (0, 1, 2, 3)
    rewards: RewardConfig = field(default_factory=lambda: RewardConfig(1.0, -1.0))
    log_every: int = 10
    objective: str = "logprob"
    optimizer: str = "adam"

    def __post_init__(self):
        for name in ("group_sizes", "gammas", "seeds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if not getattr(self, name):
                raise DomainError(f"{name} must be non-empty")
        if self.steps < 1 or self.log_every < 1:
            raise DomainError("steps and log_every must be >= 1")
        if any(int(n) != n or n < 1 for n in self.group_sizes):
            raise DomainError("group sizes must be positive integers")
        if any(g < 0 for g in self.gammas):
            raise DomainError("gammas must be >= 0")
        if not 1 <= self.n_correct < self.n_actions:
            raise DomainError("need 1 <= n_correct < n_actions")
        if not self.eta > 0:
            raise DomainError("eta must be > 0")
        if self.objective not in OBJECTIVES:
            raise DomainError(f"objective must be one of {OBJECTIVES}")
        if self.optimizer not in OPTIMIZERS:
            raise DomainError(f"optimizer must be one of {OPTIMIZERS}")
        if isinstance(self.rewards, dict):
            object.__setattr__(self, "rewards", RewardConfig(**self.rewards))

    @classmethod
    def full(cls):
        """128k actions / 10k correct, eta 1e-2, T=1000, N = 2..131072, gamma in {0, 1}, 4 seeds."""
        return cls()

    @classmethod
    def small(cls):
        """Scaled-down preset: 1280 actions / 100 correct, N = 2..8192.

        The learning rate is lowered to 7e-3: with 100x fewer actions each
        correct action holds ~100x more mass, and at 1e-2 the N=2 runs
        already drift.
        """
        return cls(n_actions=1280, n_correct=100, eta=7e-3, group_sizes=tuple(2**i for i in range(1, 14)))

    def spec(self, n, gamma, seed):
        return SimulationSpec(
            n_actions=self.n_actions,
            n_correct=self.n_correct,
            z_anchor=self.z_anchor,
            z_correct=self.z_correct,
            z_incorrect=self.z_incorrect,
            eta=self.eta,
            steps=self.steps,
            group_size=int(n),
            gamma=float(gamma),
            seed=int(seed),
            rewards=self.rewards,
            log_every=self.log_every,
            objective=self.objective,
            optimizer=self.optimizer,
        )

    def to_dict(self):
        d = asdict(self)
        d["group_sizes"] = [int(n) for n in self.group_sizes]
        d["gammas"] = [float(g) for g in self.gammas]
        d["seeds"] = [int(s) for s in self.seeds]
        return d

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise DomainError(f"unknown config fields: {sorted(unknown)}")
        data = dict(data)
        if "rewards" in data:
            data["rewards"] = RewardConfig(**data["rewards"])
        return cls(**data)

    def dump(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise DomainError(f"{path}: config must be a mapping")
    preset = data.pop("preset", None)
    base = {"full": SweepConfig.full, "small": SweepConfig.small, None: SweepConfig}[preset]()
    merged = base.to_dict()
    merged.update(data)
    return SweepConfig.from_dict(merged)


@dataclass
class RunRecord:
    n: int
    gamma: float
    seed: int
    rows: list

    @property
    def final(self):
        return self.rows[-1]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in self.rows:
            w.writerow([fmt(getattr(r, c)) for c in METRIC_COLUMNS])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, path, n, gamma, seed):
        from rlvr_dynamics.categorical import MetricRow

        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            rows = [
                MetricRow(int(r["step"]), *(float(r[c]) for c in METRIC_COLUMNS[1:]))
                for r in reader
            ]
        return cls(n, gamma, seed, rows)


def run_dir_name(n, gamma):
    return f"n{int(n)}_gamma{fmt(float(gamma))}"


def execute_run(spec):
    return RunRecord(spec.group_size, spec.gamma, spec.seed, run_simulation(spec))


def _run_and_write(args):
    spec, path = args
    record = execute_run(spec)
    tmp = path.with_suffix(".csv.tmp")
    tmp.write_text(record.to_csv(), encoding="utf-8")
    os.replace(tmp, path)
    return str(path)


def run_sweep(config, output_dir, parallelism=1, progress=None):
    """Run every (N, gamma, seed) cell, write records and ``summary.csv``.

    Existing complete record files are reused. Returns the summary rows.
    """
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc

    snapshot = out / "config.snapshot"
    text = config.dump()
    if snapshot.exists() and snapshot.read_text(encoding="utf-8") != text:
        raise DomainError(f"{out} holds a sweep with a different config; use a fresh directory")
    snapshot.write_text(text, encoding="utf-8")

    for stale in out.glob("*/*.tmp"):
        stale.unlink()

    pending = []
    for n in config.group_sizes:
        for gamma in config.gammas:
            d = out / run_dir_name(n, gamma)
            d.mkdir(exist_ok=True)
            for seed in config.seeds:
                path = d / f"seed{int(seed)}.csv"
                if not path.exists():
                    pending.append((config.spec(n, gamma, seed), path))
    log.info("sweep: %d runs pending, parallelism %d", len(pending), parallelism)

    if parallelism <= 1 or len(pending) <= 1:
        for item in pending:
            done = _run_and_write(item)
            if progress:
                progress(done)
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            for done in pool.map(_run_and_write, pending):
                if progress:
                    progress(done)

    summary = summarize_sweep(config, out)
    write_summary(summary, out / "summary.csv")
    return summary


def load_records(config, output_dir):
    out = Path(output_dir)
    records = {}
    for n in config.group_sizes:
        for gamma in config.gammas:
            for seed in config.seeds:
                path = out / run_dir_name(n, gamma) / f"seed{int(seed)}.csv"
                records[(n, gamma, seed)] = RunRecord.from_csv(path, n, gamma, seed)
    return records


def summarize_sweep(config, output_dir):
    records = load_records(config, output_dir)
    rows = []
    for n in config.group_sizes:
        for gamma in config.gammas:
            recs = [records[(n, gamma, s)] for s in config.seeds]
            q = np.array([r.final.q_pos for r in recs])
            m = np.array([r.final.retained_mass for r in recs])
            h = np.array([r.final.entropy for r in recs])
            min_m = min(row.retained_mass for r in recs for row in r.rows)
            m_mean = float(np.mean(m))
            rows.append(
                {
                    "n": int(n),
                    "gamma": float(gamma),
                    "n_seeds": len(recs),
                    "final_step": recs[0].final.step,
                    "q_pos_mean": float(np.mean(q)),
                    "q_pos_std": float(np.std(q)),
                    "retained_mass_mean": m_mean,
                    "retained_mass_std": float(np.std(m)),
                    "entropy_mean": float(np.mean(h)),
                    "entropy_std": float(np.std(h)),
                    "min_logged_retained_mass": float(min_m),
                    "concentration_zone": m_mean < 0.5,
                }
            )
    return rows


def write_summary(rows, path):
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([fmt(r[c]) for c in SUMMARY_COLUMNS])
    os.replace(tmp, path)


def read_summary(path):
    with open(path, newline="", encoding="utf-8") as fh:
        out = []
        for r in csv.DictReader(fh):
            row = {c: float(r[c]) for c in SUMMARY_COLUMNS}
            row["n"] = int(row["n"])
            row["concentration_zone"] = bool(row["concentration_zone"])
            out.append(row)
    return out


def concentration_zone(summary, gamma=0.0):
    """(N_lo, N_hi) bounding the group sizes whose seed-mean retained mass is < 0.5, or None."""
    ns = sorted(r["n"] for r in summary if r["gamma"] == gamma and r["concentration_zone"])
    return (ns[0], ns[-1]) if ns else None


def emit_tailmiss_grid(mu_values, rho_values, n_max, output=None, points=200):
    """Tail-miss and activity probabilities over log-spaced N, one curve per (mu, rho).

    Each curve also gets its exact peak row (``is_peak`` = 1) and always
    contains N=8. Returns the rows; writes CSV when ``output`` is given.
    """
    if int(n_max) != n_max or n_max < 1:
        raise DomainError("n_max must be a positive integer")
    grid = np.unique(np.rint(np.logspace(0, math.log10(n_max), points)).astype(np.int64))
    grid = np.union1d(grid, [n for n in (1, 2, 8) if n <= n_max])
    rows = []
    for mu in mu_values:
        for rho in rho_values:
            if not (0 < mu < 1 and 0 < rho <= 1):
                raise DomainError(f"need mu in (0,1) and rho in (0,1], got {mu}, {rho}")
            tau = mu * rho
            btau = analytic.tail_miss_curve(mu, tau, grid)
            act = analytic.activity_curve(mu, grid)
            for n, b, a in zip(grid.tolist(), btau.tolist(), act.tolist()):
                rows.append({"mu": mu, "rho": rho, "tau": tau, "n": n, "pr_btau": b, "pr_active": a, "is_peak": False})
            if tau < mu:
                n_star, v = analytic.tail_miss_peak(mu, tau, n_max)
            else:
                # no non-rare correct region: the curve is identically zero
                n_star, v = 1, 0.0
            rows.append(
                {
                    "mu": mu, "rho": rho, "tau": tau, "n": n_star, "pr_btau": v,
                    "pr_active": float(analytic.activity_curve(mu, n_star)), "is_peak": True,
                }
            )
    if output is not None:
        _write_rows(rows, ("mu", "rho", "tau", "n", "pr_btau", "pr_active", "is_peak"), output)
    return rows


def emit_focal_curve(gamma_values, grid_points=99, output=None):
    """Focal-scaled advantage magnitudes on an open grid of success probabilities."""
    if grid_points < 2:
        raise DomainError("grid_points must be >= 2")
    mu = np.arange(1, grid_points + 1) / (grid_points + 1)
    rows = []
    for gamma in gamma_values:
        mc, mw = core.advantage_magnitude_curve(mu, gamma)
        for a, b, c in zip(mu.tolist(), mc.tolist(), mw.tolist()):
            rows.append({"mu": a, "gamma": float(gamma), "mag_correct": b, "mag_incorrect": c})
    if output is not None:
        _write_rows(rows, ("mu", "gamma", "mag_correct", "mag_incorrect"), output)
    return rows


def _write_rows(rows, columns, output):
    if hasattr(output, "write"):
        _write_csv(rows, columns, output)
        return
    with open(output, "w", newline="", encoding="utf-8") as fh:
        _write_csv(rows, columns, fh)


def _write_csv(rows, columns, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r[c]) for c in columns])


def config_with(config, **changes):
    return replace(config, **changes)
