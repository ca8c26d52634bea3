import csv
import io
import math
import os

import numpy as np
import pytest

from rlvr_dynamics.core import RewardConfig
from rlvr_dynamics.errors import DomainError
from rlvr_dynamics.harness import (
    SUMMARY_COLUMNS,
    SweepConfig,
    concentration_zone,
    config_with,
    emit_focal_curve,
    emit_tailmiss_grid,
    fmt,
    load_config,
    load_records,
    read_summary,
    run_dir_name,
    run_sweep,
)

TINY = SweepConfig(
    n_actions=300, n_correct=30, steps=12, group_sizes=(2, 16), gammas=(0.0, 1.0),
    seeds=(0, 1), log_every=5,
)


def snapshot_files(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestConfig:
    def test_full_defaults(self):
        c = SweepConfig.full()
        assert c.group_sizes[0] == 2 and c.group_sizes[-1] == 131072 and len(c.group_sizes) == 17
        assert c.seeds == (0, 1, 2, 3) and c.eta == 1e-2 and c.steps == 1000
        assert c.rewards == RewardConfig(1.0, -1.0)

    def test_small_preset(self):
        c = SweepConfig.small()
        assert (c.n_actions, c.n_correct, max(c.group_sizes)) == (1280, 100, 8192)

    @pytest.mark.parametrize("change", [{"seeds": ()}, {"steps": 0}, {"log_every": 0}, {"gammas": (-1.0,)}])
    def test_invalid(self, change):
        with pytest.raises(DomainError):
            config_with(TINY, **change)

    def test_yaml_round_trip(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text(TINY.dump())
        assert load_config(p) == TINY

    def test_preset_key(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("preset: small\nsteps: 7\nseeds: [5]\n")
        c = load_config(p)
        assert c.n_actions == 1280 and c.steps == 7 and c.seeds == (5,)

    def test_unknown_field(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("stepz: 3\n")
        with pytest.raises(DomainError):
            load_config(p)


class TestSweep:
    def test_single_cell(self, tmp_path):
        cfg = SweepConfig(n_actions=50, n_correct=5, steps=1, group_sizes=(2,), gammas=(0.0,), seeds=(0,))
        summary = run_sweep(cfg, tmp_path)
        records = load_records(cfg, tmp_path)
        assert len(records) == 1
        (rec,) = records.values()
        assert [r.step for r in rec.rows] == [0, 1]
        assert len(summary) == 1 and summary[0]["final_step"] == 1

    def test_byte_identical_reruns(self, tmp_path):
        run_sweep(TINY, tmp_path / "a")
        run_sweep(TINY, tmp_path / "b")
        assert snapshot_files(tmp_path / "a") == snapshot_files(tmp_path / "b")

    def test_parallelism_invariant(self, tmp_path):
        run_sweep(TINY, tmp_path / "serial", parallelism=1)
        run_sweep(TINY, tmp_path / "pool", parallelism=2)
        assert snapshot_files(tmp_path / "serial") == snapshot_files(tmp_path / "pool")

    def test_resume_skips_complete_and_drops_partial(self, tmp_path):
        run_sweep(TINY, tmp_path / "ref")
        out = tmp_path / "resumed"
        run_sweep(TINY, out)
        keep = out / run_dir_name(2, 0.0) / "seed0.csv"
        redo = out / run_dir_name(16, 1.0) / "seed1.csv"
        os.utime(keep, ns=(1, 1))
        redo.unlink()
        partial = redo.with_suffix(".csv.tmp")
        partial.write_text("step,q_pos\n0,")
        seen = []
        run_sweep(TINY, out, progress=seen.append)
        assert seen == [str(redo)]
        assert keep.stat().st_mtime_ns == 1
        assert not partial.exists()
        assert redo.read_bytes() == (tmp_path / "ref" / redo.relative_to(out)).read_bytes()

    def test_config_mismatch(self, tmp_path):
        run_sweep(config_with(TINY, steps=2), tmp_path)
        with pytest.raises(DomainError):
            run_sweep(config_with(TINY, steps=3), tmp_path)

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError):
            run_sweep(TINY, blocker / "sub")

    def test_seed_averaging_and_summary_file(self, tmp_path):
        summary = run_sweep(TINY, tmp_path)
        records = load_records(TINY, tmp_path)
        for row in summary:
            finals = [records[(row["n"], row["gamma"], s)].final for s in TINY.seeds]
            assert row["q_pos_mean"] == pytest.approx(np.mean([f.q_pos for f in finals]), abs=1e-12)
            assert row["retained_mass_mean"] == pytest.approx(
                sum(f.retained_mass for f in finals) / len(finals), abs=1e-12
            )
        on_disk = read_summary(tmp_path / "summary.csv")
        assert len(on_disk) == len(summary)
        for a, b in zip(on_disk, summary):
            assert a["q_pos_mean"] == b["q_pos_mean"]
        header = (tmp_path / "summary.csv").read_text().splitlines()[0]
        assert header == ",".join(SUMMARY_COLUMNS)

    def test_record_rows_increasing(self, tmp_path):
        run_sweep(TINY, tmp_path)
        for rec in load_records(TINY, tmp_path).values():
            steps = [r.step for r in rec.rows]
            assert steps == sorted(set(steps)) and steps[-1] == TINY.steps
            assert rec.rows[0].retained_mass == 1.0


def test_concentration_zone():
    summary = [
        {"n": n, "gamma": 0.0, "concentration_zone": m < 0.5}
        for n, m in [(2, 0.95), (4, 0.4), (8, 0.3), (16, 0.7)]
    ]
    assert concentration_zone(summary) == (4, 8)
    assert concentration_zone(summary, gamma=1.0) is None


def test_fmt():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(3) == "3" and fmt(True) == "1"
    assert float(fmt(math.pi)) == math.pi


class TestTailMissGrid:
    def test_reference_row(self):
        rows = emit_tailmiss_grid([0.5], [0.1], 1000)
        (row,) = [r for r in rows if r["n"] == 8 and not r["is_peak"]]
        assert row["pr_btau"] == pytest.approx(0.6578327, abs=5e-8)

    def test_rho_one_is_zero(self):
        rows = emit_tailmiss_grid([0.3], [1.0], 5000)
        assert all(r["pr_btau"] == 0.0 for r in rows)

    def test_peak_dominates(self):
        rows = emit_tailmiss_grid([0.8, 0.5, 0.2], [0.5, 0.1, 0.01], 10**5)
        for mu in (0.8, 0.5, 0.2):
            for rho in (0.5, 0.1, 0.01):
                curve = [r for r in rows if r["mu"] == mu and r["rho"] == rho]
                (peak,) = [r for r in curve if r["is_peak"]]
                assert all(peak["pr_btau"] >= r["pr_btau"] for r in curve)

    def test_csv_output(self, tmp_path):
        p = tmp_path / "grid.csv"
        emit_tailmiss_grid([0.5], [0.1], 100, output=p)
        rows = list(csv.DictReader(p.open()))
        assert rows[0].keys() >= {"mu", "rho", "n", "pr_btau", "pr_active"}

    def test_invalid(self):
        with pytest.raises(DomainError):
            emit_tailmiss_grid([1.0], [0.1], 10)


class TestFocalCurve:
    def test_values(self):
        rows = emit_focal_curve([0.0, 2.0])
        half = [r for r in rows if r["gamma"] == 0.0 and r["mu"] == 0.5][0]
        assert half["mag_correct"] == 1.0 and half["mag_incorrect"] == 1.0
        hi = [r for r in rows if r["gamma"] == 2.0 and abs(r["mu"] - 0.9) < 1e-12][0]
        assert hi["mag_correct"] == pytest.approx(0.0033333, abs=1e-7)

    @pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0, 4.0])
    def test_monotone(self, gamma):
        mags = [r["mag_correct"] for r in emit_focal_curve([gamma], 200)]
        assert all(b <= a for a, b in zip(mags, mags[1:]))

    def test_open_grid_and_csv(self):
        buf = io.StringIO()
        rows = emit_focal_curve([1.0], 4, output=buf)
        assert [r["mu"] for r in rows] == [0.2, 0.4, 0.6, 0.8]
        assert buf.getvalue().splitlines()[0] == "mu,gamma,mag_correct,mag_incorrect"

    def test_grid_points(self):
        with pytest.raises(DomainError):
            emit_focal_curve([1.0], 1)
