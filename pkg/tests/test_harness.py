import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from interpolatron.cli import main as cli_main
from interpolatron.config import ConfigError, parse_config
from interpolatron.harness import (
    run_certify,
    run_compare,
    run_single,
    run_sweep,
    run_toy,
)

MLP_COMPARE = """
problem:
  kind: mlp_blobs
  n: 60
schedule:
  beta0: 0.1
  decay_epochs: [5]
run:
  epochs: 8
  batch_size: 20
  seeds: [1, 2]
optimizers:
  - name: sgd
    kind: sgd
  - name: interp1
    kind: interpolatron
    alphas: [1.0]
  - name: anderson
    kind: anderson
    k: 2
    history_init: truncated_normal
"""

TOY_FLAT = """
problem:
  kind: flat_region
run:
  log_iterates: true
optimizers:
  - name: interp
    kind: interpolatron
    alphas: [0.05, 0.95]
"""

TOY_WELL = """
problem:
  kind: narrow_well
optimizers:
  - name: interp
    kind: interpolatron
    alphas: [0.05, 0.95]
"""

CERTIFY = """
problem:
  kind: quadratic
run:
  steps: 2000
optimizers:
  - name: interp
    kind: interpolatron
    alphas: [0.5, 0.5]
certify:
  alphas: [0.5, 0.5]
  beta: 1.0
"""


class TestParseConfig:
    def test_table_style_interpolation_row(self):
        cfg = parse_config(
            """
problem: {kind: mlp_blobs}
schedule: {beta0: 0.1}
optimizers:
  - {name: interp2, kind: interpolatron, alphas: [0.05, 0.95]}
"""
        )
        opt = cfg.optimizers[0]
        assert opt.spec.kind == "interpolatron"
        assert opt.spec.alphas.alphas == (0.05, 0.95)
        assert cfg.schedule.beta0 == 0.1

    def test_alpha_sum_error_names_key(self):
        with pytest.raises(ConfigError, match="alphas must sum to 1"):
            parse_config(
                "problem: {kind: mlp_blobs}\n"
                "optimizers: [{name: x, kind: interpolatron, alphas: [0.5, 0.6]}]\n"
            )

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError, match="unknown optimizer kind"):
            parse_config(
                "problem: {kind: mlp_blobs}\noptimizers: [{name: x, kind: sgdd}]\n"
            )

    def test_negative_beta_rejected(self):
        with pytest.raises(ConfigError, match="schedule.beta0"):
            parse_config(
                "problem: {kind: mlp_blobs}\nschedule: {beta0: -0.1}\n"
                "optimizers: [{name: x, kind: sgd}]\n"
            )

    def test_missing_problem_rejected(self):
        with pytest.raises(ConfigError, match="problem"):
            parse_config("optimizers: [{name: x, kind: sgd}]\n")

    def test_duplicate_names_rejected(self):
        with pytest.raises(ConfigError, match="unique"):
            parse_config(
                "problem: {kind: mlp_blobs}\n"
                "optimizers: [{name: x, kind: sgd}, {name: x, kind: adam}]\n"
            )

    def test_defaults_materialized(self):
        cfg = parse_config(
            "problem: {kind: mlp_blobs}\noptimizers: [{name: x, kind: sgd}]\n"
        )
        assert cfg.problem["spread"] == 1.0
        assert cfg.batch_size == 32
        assert cfg.steps == 200 * 10  # 200 epochs x ceil(300/32)
        assert cfg.optimizers[0].spec.history_init == "replicate_zero"
        assert cfg.seeds == (0,)

    def test_epoch_to_step_conversion(self):
        cfg = parse_config(
            "problem: {kind: mlp_blobs, n: 60}\n"
            "run: {epochs: 8, batch_size: 20}\n"
            "optimizers: [{name: x, kind: sgd}]\n"
        )
        assert cfg.steps == 8 * 3

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config(
                "problem: {kind: mlp_blobs, widht: 3}\n"
                "optimizers: [{name: x, kind: sgd}]\n"
            )


class TestRunCompare:
    def test_outputs_and_reduction(self, tmp_path):
        cfg = parse_config(MLP_COMPARE)
        report = run_compare(cfg, tmp_path, quiet=True)
        assert (tmp_path / "config.resolved").exists()
        assert (tmp_path / "summary.csv").exists()
        # 3 optimizers x 2 seeds traces
        assert len(list(tmp_path.glob("trace_*.csv"))) == 6
        # reduction: k=1 interpolation trace bytes equal the plain ones
        for seed in (1, 2):
            a = (tmp_path / f"trace_sgd_s{seed}.csv").read_bytes()
            b = (tmp_path / f"trace_interp1_s{seed}.csv").read_bytes()
            assert a == b
        assert not report.all_diverged

    def test_byte_determinism_across_invocations(self, tmp_path):
        cfg = parse_config(MLP_COMPARE)
        run_compare(cfg, tmp_path / "a", quiet=True)
        run_compare(cfg, tmp_path / "b", quiet=True)
        for f in sorted((tmp_path / "a").iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name

    def test_row_counts_match_steps(self, tmp_path):
        cfg = parse_config(MLP_COMPARE)
        run_compare(cfg, tmp_path, quiet=True)
        for f in tmp_path.glob("trace_*.csv"):
            rows = f.read_text().splitlines()
            assert len(rows) - 1 == cfg.steps

    def test_alpha_fraction_matches_recount(self, tmp_path):
        cfg = parse_config(MLP_COMPARE)
        run_compare(cfg, tmp_path, quiet=True)
        summary = (tmp_path / "summary.csv").read_text().splitlines()
        header = summary[0].split(",")
        for line in summary[1:]:
            row = dict(zip(header, line.split(",")))
            if row["name"] != "anderson":
                assert row["alpha_in_unit_fraction"] == ""
                continue
            trace_lines = (
                (tmp_path / f"trace_anderson_s{row['seed']}.csv")
                .read_text()
                .splitlines()[1:]
            )
            inside = total = 0
            for tl in trace_lines:
                alpha_cell = tl.split(",")[5]
                if not alpha_cell:
                    continue
                total += 1
                parts = [float(v) for v in alpha_cell.split(";")]
                inside += all(0.0 <= a <= 1.0 for a in parts)
            frac = float(row["alpha_in_unit_fraction"])
            assert 0.0 <= frac <= 1.0
            assert frac == pytest.approx(inside / total, abs=1e-12)

    def test_divergence_recorded_not_fatal(self, tmp_path):
        cfg = parse_config(
            """
problem: {kind: quadratic, eigenvalues: [1.0]}
schedule: {beta0: 25.0}
run: {steps: 40, seeds: [0]}
optimizers:
  - {name: wild, kind: sgd}
  - {name: tame, kind: sgd, beta0: 0.5}
"""
        )
        report = run_compare(cfg, tmp_path, quiet=True)
        assert not report.all_diverged
        summary = (tmp_path / "summary.csv").read_text()
        assert "wild,0" in summary and "true" in summary
        wild = [r for r in report.records if r.name == "wild"][0]
        assert wild.result.diverged
        # trace ends at the recorded divergence step
        rows = (tmp_path / "trace_wild_s0.csv").read_text().splitlines()
        assert len(rows) - 1 == wild.result.diverged_at


class TestRunSingle:
    def test_requires_one_optimizer(self, tmp_path):
        cfg = parse_config(MLP_COMPARE)
        with pytest.raises(ValueError):
            run_single(cfg, tmp_path)

    def test_writes_trace(self, tmp_path):
        cfg = parse_config(
            "problem: {kind: mlp_blobs, n: 60}\n"
            "run: {epochs: 2, batch_size: 20, seeds: [3]}\n"
            "optimizers: [{name: solo, kind: sgd}]\n"
        )
        records = run_single(cfg, tmp_path, quiet=True)
        assert len(records) == 1
        assert (tmp_path / "trace_solo_s3.csv").exists()


class TestRunToy:
    def test_flat_region_report(self, tmp_path):
        report = run_toy(parse_config(TOY_FLAT), tmp_path, quiet=True)
        assert report.kind == "flat_region"
        assert len(report.points) == 12
        assert report.interp_median < report.momentum_median
        assert report.interp_escape_share >= 0.8
        assert (tmp_path / "toy_grid.csv").exists()
        assert (tmp_path / "toy_trace_momentum.csv").exists()
        assert (tmp_path / "curve.csv").exists()

    def test_well_report(self, tmp_path):
        report = run_toy(parse_config(TOY_WELL), tmp_path, quiet=True)
        assert report.kind == "narrow_well"
        for p in report.points:
            assert p.interp_metric < p.momentum_metric
        assert report.monotone_points >= 1

    def test_degenerate_grid_of_one_point(self, tmp_path):
        text = TOY_WELL + "toy: {betas: [0.25], taus: [0.9], alpha1s: [0.5]}\n"
        report = run_toy(parse_config(text), tmp_path, quiet=True)
        assert len(report.points) == 1  # one momentum + one interpolation run
        grid = (tmp_path / "toy_grid.csv").read_text().splitlines()
        assert len(grid) == 2

    def test_rejects_non_toy_problem(self, tmp_path):
        cfg = parse_config(MLP_COMPARE)
        with pytest.raises(ValueError):
            run_toy(cfg, tmp_path)


class TestRunCertify:
    def test_certified_case(self, tmp_path):
        report = run_certify(parse_config(CERTIFY), tmp_path, quiet=True)
        assert report.certified
        assert report.theta == pytest.approx(0.9, abs=1e-12)
        assert report.rate_ok and report.bound_ok
        assert report.xi_hat <= report.spectral_radius + 0.02

    def test_no_certificate_branch_still_runs(self, tmp_path):
        text = CERTIFY.replace("beta: 1.0", "beta: 2.5")
        report = run_certify(parse_config(text), tmp_path, quiet=True)
        assert not report.certified
        assert report.theta >= 1.0
        assert "no certificate" in report.report_path.read_text()
        assert math.isfinite(report.xi_hat) or report.xi_hat > 1.0

    def test_exact_one_step_case(self, tmp_path):
        text = """
problem: {kind: quadratic, eigenvalues: [1.0, 1.0, 1.0], start: ones}
run: {steps: 40, seeds: [0]}
optimizers: [{name: i, kind: interpolatron, alphas: [0.5, 0.5]}]
certify: {alphas: [0.5, 0.5], beta: 1.0}
"""
        # mu = eta = 1 and beta = 1: radius 0, trajectory collapses fast;
        # the fit has too few usable entries, which is reported as an error
        with pytest.raises(ValueError, match="usable distance entries"):
            run_certify(parse_config(text), tmp_path, quiet=True)


class TestRunSweep:
    def test_weights_matter_less_than_rate(self, tmp_path):
        cfg = parse_config(
            "problem: {kind: mlp_blobs, n: 60}\n"
            "run: {epochs: 10, batch_size: 20, seeds: [1]}\n"
            "optimizers: [{name: i, kind: interpolatron, alphas: [0.05, 0.95]}]\n"
        )
        report = run_sweep(cfg, tmp_path, quiet=True)
        assert report.alpha_spread < report.beta_spread
        assert (tmp_path / "sweep_summary.csv").exists()


class TestCli:
    def test_compare_roundtrip_and_exit_codes(self, tmp_path):
        cfg_path = tmp_path / "c.yaml"
        cfg_path.write_text(MLP_COMPARE)
        out = tmp_path / "out"
        assert cli_main(["compare", "--config", str(cfg_path), "--out", str(out), "--quiet"]) == 0
        assert (out / "summary.csv").exists()

    def test_config_error_exit_code(self, tmp_path):
        cfg_path = tmp_path / "bad.yaml"
        cfg_path.write_text("problem: {kind: nope}\noptimizers: [{name: x, kind: sgd}]\n")
        assert cli_main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 1

    def test_missing_config_file(self, tmp_path):
        assert cli_main(["run", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 1

    def test_all_diverged_exit_code(self, tmp_path):
        cfg_path = tmp_path / "d.yaml"
        cfg_path.write_text(
            "problem: {kind: quadratic, eigenvalues: [1.0]}\n"
            "schedule: {beta0: 25.0}\n"
            "run: {steps: 30, seeds: [0]}\n"
            "optimizers: [{name: sgd, kind: sgd}]\n"
        )
        assert cli_main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "o"), "--quiet"]) == 2

    def test_seed_override(self, tmp_path):
        cfg_path = tmp_path / "c.yaml"
        cfg_path.write_text(
            "problem: {kind: mlp_blobs, n: 60}\n"
            "run: {epochs: 2, batch_size: 20, seeds: [1, 2]}\n"
            "optimizers: [{name: solo, kind: sgd}]\n"
        )
        out = tmp_path / "out"
        assert cli_main(["run", "--config", str(cfg_path), "--out", str(out), "--seed", "9", "--quiet"]) == 0
        assert (out / "trace_solo_s9.csv").exists()
        assert not (out / "trace_solo_s1.csv").exists()
        resolved = yaml.safe_load((out / "config.resolved").read_text())
        assert resolved["run"]["seeds"] == [9]

    def test_resolved_config_echoes_defaults(self, tmp_path):
        cfg_path = tmp_path / "c.yaml"
        cfg_path.write_text(
            "problem: {kind: mlp_blobs}\noptimizers: [{name: x, kind: sgd}]\n"
        )
        out = tmp_path / "out"
        # 200 default epochs would be slow; override steps
        cfg_path.write_text(
            "problem: {kind: mlp_blobs, n: 60}\n"
            "run: {steps: 5, batch_size: 20}\n"
            "optimizers: [{name: x, kind: sgd}]\n"
        )
        assert cli_main(["run", "--config", str(cfg_path), "--out", str(out), "--quiet"]) == 0
        resolved = yaml.safe_load((out / "config.resolved").read_text())
        assert resolved["optimizers"][0]["history_init"] == "replicate_zero"
        assert resolved["problem"]["spread"] == 1.0
        assert resolved["schedule"]["factor"] == 0.1
