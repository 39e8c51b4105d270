import os
import subprocess
import sys

import numpy as np
import pytest

from rainopt import (
    NoiseModel,
    Point,
    StochasticOracle,
    epoch_seg,
    gen_scsc_quadratic,
    grad_norm,
    load_problem,
    parse_config,
    run_checks,
    run_experiment,
    split_stream,
)
from rainopt.cli import main as cli_main
from rainopt.harness import CSV_HEADER, config_text
from rainopt.reference import exact_saddle

BASE_CONFIG = """
# epoch-seg smoke experiment
problem = scsc
d_x = 2
d_y = 2
mu = 1
L = 4
problem_seed = 3
solver = epoch_seg
N = 2
K = 1
sigma = 0
eps = 0.5
replications = 1
master_seed = 11
z0_distance = 1
select = last
output = {out}
"""


def write_config(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def strip_wall(text: str):
    # drop the wall-clock column (the only nondeterministic field) and
    # comment lines for row-content comparisons
    rows = []
    for line in text.splitlines():
        if line.startswith("#"):
            rows.append(line)
            continue
        rows.append(",".join(line.split(",")[:-1]))
    return rows


class TestConfigParsing:
    def test_full_roundtrip(self, tmp_path):
        cfg = parse_config(BASE_CONFIG.format(out=tmp_path / "o.csv"))
        assert cfg.solver == "epoch_seg"
        assert cfg.N == 2 and cfg.K == 1
        assert cfg.sigma == 0.0
        assert cfg.select == "last"
        # canonical echo parses back to the same config
        again = parse_config(config_text(cfg))
        assert again == cfg

    def test_unknown_key_rejected(self, tmp_path):
        text = BASE_CONFIG.format(out=tmp_path / "o.csv") + "turbo = yes\n"
        with pytest.raises(ValueError, match="unknown key 'turbo'"):
            parse_config(text)

    def test_duplicate_key_rejected(self, tmp_path):
        text = BASE_CONFIG.format(out=tmp_path / "o.csv") + "sigma = 1\n"
        with pytest.raises(ValueError, match="duplicate key"):
            parse_config(text)

    def test_missing_required_key(self):
        with pytest.raises(ValueError, match="missing required"):
            parse_config("problem = scsc\n")

    def test_malformed_line(self, tmp_path):
        text = BASE_CONFIG.format(out=tmp_path / "o.csv") + "just words\n"
        with pytest.raises(ValueError, match="expected 'key = value'"):
            parse_config(text)

    def test_unparsable_value(self, tmp_path):
        text = BASE_CONFIG.format(out=tmp_path / "o.csv").replace("sigma = 0", "sigma = lots")
        with pytest.raises(ValueError, match="cannot parse"):
            parse_config(text)

    @pytest.mark.parametrize(
        "patch,msg",
        [
            ("solver = epoch_seg", "requires keys N and K"),
            ("eta = 0.5\nT = 3\nsolver = seg", "eta"),
            ("solver = rain", "requires eps"),
            ("replications = 0", "replications"),
            ("mu = 0", "0 < mu <= L"),
        ],
    )
    def test_precondition_violations_named(self, tmp_path, patch, msg):
        lines = []
        patch_keys = {p.split("=")[0].strip() for p in patch.splitlines()}
        for line in BASE_CONFIG.format(out=tmp_path / "o.csv").splitlines():
            key = line.split("=")[0].strip() if "=" in line else None
            if key in patch_keys:
                continue
            if key in ("N", "K") and "solver" in patch_keys:
                continue
            if key == "eps" and "solver = rain" in patch:
                continue
            lines.append(line)
        text = "\n".join(lines) + "\n" + patch + "\n"
        with pytest.raises(ValueError, match=msg):
            parse_config(text)

    def test_bilinear_requires_zero_mu(self, tmp_path):
        text = BASE_CONFIG.format(out=tmp_path / "o.csv").replace(
            "problem = scsc", "problem = bilinear"
        )
        with pytest.raises(ValueError, match="bilinear"):
            parse_config(text)


class TestRunExperiment:
    def test_single_replication_consistency(self, tmp_path):
        out = tmp_path / "single.csv"
        cfg = parse_config(BASE_CONFIG.format(out=out))
        result = run_experiment(cfg)
        assert len(result.rows) == 1
        row = result.rows[0]

        # replay the replication by hand and compare the reported numbers
        problem = gen_scsc_quadratic(2, 2, 1.0, 4.0, 3)
        z_star = exact_saddle(problem)
        rng = np.random.default_rng([3, 1])
        u = rng.standard_normal(4)
        z0 = Point(z_star.data + u / np.linalg.norm(u), 2)
        oracle = StochasticOracle(NoiseModel(0.0), split_stream(11, 0))
        final, _ = epoch_seg(oracle, problem, z0, 1.0, 4.0, 2, 1, select_rng=None)
        assert row.grad_norm_final == grad_norm(problem, final)
        assert row.sfo_total == oracle.calls
        assert row.dist2_final == float(np.sum((final.data - z_star.data) ** 2))

    def test_csv_layout(self, tmp_path):
        out = tmp_path / "layout.csv"
        cfg = parse_config(BASE_CONFIG.format(out=out).replace("replications = 1",
                                                               "replications = 3"))
        result = run_experiment(cfg)
        lines = out.read_text().splitlines()
        meta = [l for l in lines if l.startswith("#")]
        data = [l for l in lines if not l.startswith("#")]
        assert any("stream = philox" in l for l in meta)
        assert any(l.startswith("# cfg problem = scsc") for l in meta)
        assert data[0] == CSV_HEADER
        assert len(data) == 1 + 3 + 1  # header, three replications, summary row
        rep_ids = [int(l.split(",")[3]) for l in data[1:]]
        assert rep_ids == [0, 1, 2, -1]
        # 17-significant-digit float fields parse back exactly to the stored values
        grad_field = data[1].split(",")[5]
        assert float(format(float(grad_field), ".17g")) == float(grad_field)
        assert result.run_id == data[1].split(",")[0]

    def test_summary_matches_rows(self, tmp_path):
        out = tmp_path / "summary.csv"
        text = BASE_CONFIG.format(out=out).replace("replications = 1", "replications = 4")
        text = text.replace("sigma = 0", "sigma = 0.5").replace("select = last",
                                                                "select = uniform")
        result = run_experiment(parse_config(text))
        grads = [r.grad_norm_final for r in result.rows]
        assert result.summary["grad_norm_final"]["mean"] == pytest.approx(np.mean(grads))
        assert result.summary["grad_norm_final"]["min"] == min(grads)
        assert result.summary["grad_norm_final"]["max"] == max(grads)
        se = np.std(grads, ddof=1) / np.sqrt(len(grads))
        assert result.summary["grad_norm_final"]["se"] == pytest.approx(se)

    def test_byte_identical_rerun_modulo_wall(self, tmp_path):
        out = tmp_path / "det.csv"
        text = BASE_CONFIG.format(out=out).replace("replications = 1", "replications = 2")
        text = text.replace("sigma = 0", "sigma = 1").replace("select = last",
                                                              "select = uniform")
        run_experiment(parse_config(text))
        first = out.read_text()
        run_experiment(parse_config(text))
        second = out.read_text()
        assert strip_wall(first) == strip_wall(second)

    def test_row_content_independent_of_workers(self, tmp_path):
        out = tmp_path / "workers.csv"
        text = BASE_CONFIG.format(out=out).replace("replications = 1",
                                                   "replications = 3")
        text = text.replace("sigma = 0", "sigma = 0.7").replace("select = last",
                                                                "select = uniform")
        old = os.environ.get("RAINOPT_WORKERS")
        try:
            os.environ["RAINOPT_WORKERS"] = "1"
            run_experiment(parse_config(text))
            rows_serial = strip_wall(out.read_text())
            os.environ["RAINOPT_WORKERS"] = "2"
            run_experiment(parse_config(text))
            rows_pooled = strip_wall(out.read_text())
        finally:
            if old is None:
                os.environ.pop("RAINOPT_WORKERS", None)
            else:
                os.environ["RAINOPT_WORKERS"] = old
        assert rows_serial == rows_pooled

    def test_rain_smoke_run(self, tmp_path):
        out = tmp_path / "rain.csv"
        text = f"""
problem = scsc
d_x = 2
d_y = 2
mu = 1
L = 8
problem_seed = 5
solver = rain
sigma = 0
eps = 0.5
replications = 1
master_seed = 7
output = {out}
"""
        result = run_experiment(parse_config(text))
        assert result.rows[0].grad_norm_final <= 0.5

    def test_dist_bound_override_loosens_schedule(self, tmp_path):
        base = f"""
problem = scsc
d_x = 2
d_y = 2
mu = 1
L = 8
problem_seed = 5
solver = rain
sigma = 0
eps = 0.5
replications = 1
master_seed = 7
output = {tmp_path / 'd.csv'}
"""
        tight = run_experiment(parse_config(base))
        loose = run_experiment(parse_config(base + "dist_bound = 64\n"))
        # a looser distance bound inflates the warm-up epoch count, hence calls
        assert loose.rows[0].sfo_total > tight.rows[0].sfo_total
        assert loose.rows[0].grad_norm_final <= 0.5


class TestRunChecks:
    def test_all_suites_pass(self, capsys):
        status = run_checks("all", seed=0)
        printed = capsys.readouterr().out
        assert status == 0
        lines = [l for l in printed.splitlines() if l.startswith("check ")]
        assert len(lines) >= 10
        assert all(l.endswith("pass") for l in lines)

    def test_unknown_suite_rejected(self):
        with pytest.raises(ValueError):
            run_checks("everything", seed=0)


class TestCli:
    def test_run_and_gen(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path, BASE_CONFIG.format(out=tmp_path / "cli.csv"))
        assert cli_main(["run", str(cfg_path)]) == 0
        assert (tmp_path / "cli.csv").exists()
        assert "replications" in capsys.readouterr().out

        problem_path = tmp_path / "prob.txt"
        assert cli_main([
            "gen", "--family", "scsc", "--d-x", "2", "--d-y", "2", "--mu", "1",
            "-L", "8", "--seed", "42", "--out", str(problem_path),
        ]) == 0
        reloaded = load_problem(problem_path)
        reference = gen_scsc_quadratic(2, 2, 1.0, 8.0, 42)
        np.testing.assert_array_equal(reloaded.M, reference.M)
        np.testing.assert_array_equal(reloaded.q, reference.q)

    def test_run_output_override(self, tmp_path):
        cfg_path = write_config(tmp_path, BASE_CONFIG.format(out=tmp_path / "a.csv"))
        target = tmp_path / "b.csv"
        assert cli_main(["run", str(cfg_path), "--output", str(target)]) == 0
        assert target.exists()

    def test_bad_config_is_diagnosed(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path, "problem = scsc\n")
        assert cli_main(["run", str(cfg_path)]) == 2
        assert "missing required" in capsys.readouterr().err

    def test_check_subcommand_exit_status(self):
        assert cli_main(["check", "schedule", "--seed", "1"]) == 0

    def test_console_script_installed(self):
        proc = subprocess.run(
            [sys.executable, "-m", "rainopt.cli", "check", "schedule"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "pass" in proc.stdout
