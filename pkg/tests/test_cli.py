import csv
import io
import json
import subprocess
import sys

import pytest

from microsplit import cli
from microsplit.decomposition import Best, Worst, analyze, build_chain, verify_improvement
from microsplit.queueing import Discipline


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestAnalyze:
    def test_worst_mm1(self, capsys):
        code, out, _ = run(capsys, "analyze", "--case", "worst", "--discipline", "mm1", "--n", "2",
                           "--lambda", "1", "--mu", "18", "--epsilon", "2")
        assert code == 0
        (row,) = rows(out)
        assert float(row["micro_total"]) == pytest.approx(0.558824, abs=1e-6)
        assert float(row["monolith"]) == pytest.approx(0.636364, abs=1e-6)
        assert set(row) >= {"stage_1", "stage_2", "absolute_improvement", "speedup"}

    def test_best_md1_json(self, capsys):
        code, out, _ = run(capsys, "analyze", "--case", "best", "--discipline", "md1", "--n", "2",
                           "--lambda", "1", "--mu", "2.5", "--format", "json")
        assert code == 0
        data = json.loads(out)
        assert data["micro_total"] == pytest.approx(0.45, rel=1e-9)
        assert data["monolith"] == pytest.approx(0.5333333333, rel=1e-9)
        assert [s["stage"] for s in data["stages"]] == [1, 2]
        assert data["improved"] is True

    def test_unstable_monolith_exits_2(self, capsys):
        code, _, err = run(capsys, "analyze", "--case", "worst", "--discipline", "mm1", "--n", "2",
                           "--lambda", "5", "--mu", "6", "--epsilon", "0.1")
        assert code == 2
        assert "UnstableMonolith" in err

    @pytest.mark.parametrize(
        "extra",
        [
            ["--case", "worst", "--n", "2", "--mu", "18"],          # missing epsilon
            ["--case", "best", "--n", "0", "--mu", "18"],            # n out of range
            ["--case", "best", "--n", "2", "--mu", "18", "--epsilon", "1"],
            ["--case", "custom"],
        ],
    )
    def test_usage_errors(self, capsys, extra):
        code, _, err = run(capsys, "analyze", "--discipline", "mm1", "--lambda", "1", *extra)
        assert code == 2 and err

    def test_short_flags_rejected(self, capsys):
        code, _, _ = run(capsys, "analyze", "--case", "best", "--discipline", "mm1", "--n", "2",
                         "--lam", "1", "--mu", "2.5")
        assert code == 2

    def test_custom_split(self, capsys):
        code, out, _ = run(capsys, "analyze", "--case", "custom", "--discipline", "mm1",
                           "--lambda", "1", "--stage-rates", "3,18", "--monolith-rate", str(18 / 7))
        assert code == 0
        assert float(rows(out)[0]["micro_total"]) == pytest.approx(0.5 + 1 / 17)


class TestSweep:
    def test_default_grid(self, capsys):
        code, out, _ = run(capsys, "sweep", "--case", "best", "--discipline", "mm1", "--n", "2", "--mu", "2.5")
        assert code == 0
        table = rows(out)
        assert len(table) == 64
        assert list(table[0]) == ["lambda", "stage_1", "stage_2", "micro_total", "monolith"]
        assert all(float(r["monolith"]) > float(r["micro_total"]) for r in table)

    def test_explicit_grid_matches_analyze(self, capsys):
        code, out, _ = run(capsys, "sweep", "--case", "worst", "--discipline", "md1", "--n", "2", "--mu", "18",
                           "--epsilon", "2", "--lambda-min", "1", "--lambda-max", "5", "--steps", "5")
        assert code == 0
        table = rows(out)
        assert [float(r["lambda"]) for r in table] == [1, 2, 3, 4, 5]
        assert float(table[0]["micro_total"]) == pytest.approx(0.473856209150327, rel=1e-9)
        assert float(table[0]["monolith"]) == pytest.approx(7 / 18 + 49 / 396, rel=1e-9)

    def test_infeasible_grid(self, capsys):
        code, _, err = run(capsys, "sweep", "--case", "best", "--discipline", "mm1", "--n", "2", "--mu", "2.5",
                           "--lambda-max", "100")
        assert code == 2 and "InfeasibleGridPoint" in err and "100.0" in err

    def test_lenient(self, capsys):
        code, out, err = run(capsys, "sweep", "--case", "best", "--discipline", "mm1", "--n", "2", "--mu", "2.5",
                             "--lambda-min", "1", "--lambda-max", "3", "--steps", "5", "--lenient")
        assert code == 0
        assert [float(r["lambda"]) for r in rows(out)] == [1.0, 1.5, 2.0]
        assert "skipped 2" in err

    @pytest.mark.parametrize("case", [["--case", "best"], ["--case", "worst", "--epsilon", "2"]])
    @pytest.mark.parametrize("disc", ["mm1", "md1"])
    def test_csv_round_trip(self, capsys, case, disc):
        mu = "2.5" if case[1] == "best" else "18"
        code, out, _ = run(capsys, "sweep", *case, "--discipline", disc, "--n", "3", "--mu", mu)
        assert code == 0
        split = Best() if case[1] == "best" else Worst(2.0)
        for r in rows(out):
            result = analyze(build_chain(split, 3, float(r["lambda"]), float(mu), disc))
            assert float(r["micro_total"]) == result.micro_total_time
            assert float(r["monolith"]) == result.monolith_time
            assert [float(r[f"stage_{i}"]) for i in (1, 2, 3)] == [m.sojourn_time for m in result.per_stage]


SIM = ["simulate", "--case", "best", "--discipline", "mm1", "--n", "2", "--lambda", "1", "--mu", "2.5",
       "--feed", "tandem", "--seed", "7", "--jobs", "200000", "--reps", "10"]


class TestSimulate:
    def test_tandem_mm1(self, capsys):
        code, out, _ = run(capsys, *SIM)
        assert code == 0
        (row,) = rows(out)
        assert float(row["mean_sojourn"]) == pytest.approx(0.5, rel=0.02)
        assert float(row["analytic"]) == pytest.approx(0.5, rel=1e-12)
        assert abs(float(row["relative_error"])) < 0.02

    def test_worst_md1_independent(self, capsys):
        code, out, _ = run(capsys, "simulate", "--case", "worst", "--discipline", "md1", "--n", "2",
                           "--lambda", "1", "--mu", "18", "--epsilon", "2", "--feed", "independent", "--seed", "7")
        assert code == 0
        assert float(rows(out)[0]["mean_sojourn"]) == pytest.approx(0.473856, rel=0.02)

    def test_repeatable(self, capsys):
        small = [a for a in SIM]
        small[small.index("200000")] = "20000"
        _, first, _ = run(capsys, *small)
        _, second, _ = run(capsys, *small)
        _, threaded, _ = run(capsys, *small, "--workers", "4")
        assert first == second == threaded

    def test_invalid_config(self, capsys):
        code, _, err = run(capsys, *SIM[:-4], "--jobs", "0", "--reps", "10")
        assert code == 2 and "InvalidConfig" in err

    def test_unstable(self, capsys):
        code, _, _ = run(capsys, "simulate", "--case", "best", "--discipline", "mm1", "--n", "2",
                         "--lambda", "3", "--mu", "2.5")
        assert code == 2

    def test_trace_file(self, capsys, tmp_path):
        trace = tmp_path / "trace.csv"
        code, _, _ = run(capsys, *SIM[:-4], "--jobs", "100", "--reps", "2", "--trace", str(trace))
        assert code == 0
        lines = trace.read_text().splitlines()
        assert lines[0] == "job_id,stage,arrival,service_start,departure"
        assert len(lines) == 1 + 200


class TestVerify:
    def test_smoke(self, capsys):
        code, out, _ = run(capsys, "verify", "--trials", "1", "--seed", "1")
        assert code == 0
        assert [int(r["passed"]) for r in rows(out)] == [1, 1, 1, 1]

    def test_injected_fault(self, capsys, monkeypatch):
        monkeypatch.setattr(cli, "_theorem_check", lambda r: not verify_improvement(r))
        code, _, err = run(capsys, "verify", "--trials", "3", "--seed", "1")
        assert code == 1
        assert "counterexample" in err and "lambda=" in err

    def test_bad_trials(self, capsys):
        code, _, _ = run(capsys, "verify", "--trials", "0")
        assert code == 2


class TestManifest:
    def test_sidecar_and_rerun(self, capsys, tmp_path):
        out = tmp_path / "sim.csv"
        argv = [*SIM[:-4], "--jobs", "5000", "--reps", "3", "--output", str(out)]
        assert cli.main(argv) == 0
        manifest = json.loads((tmp_path / "sim.csv.manifest.json").read_text())
        assert manifest["seed"] == 7
        assert manifest["version"] and manifest["timestamp"]
        assert manifest["parameters"]["jobs"] == 5000
        first = out.read_bytes()
        out.unlink()
        assert cli.main(manifest["command"][1:]) == 0
        assert out.read_bytes() == first

    def test_from_file_arguments(self, capsys, tmp_path):
        args = tmp_path / "args.txt"
        args.write_text("analyze\n--case\nbest\n--discipline\nmm1\n--n\n2\n--lambda\n1\n--mu\n2.5\n")
        code, out, _ = run(capsys, f"@{args}")
        assert code == 0 and float(rows(out)[0]["micro_total"]) == 0.5


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "microsplit", "analyze", "--case", "best", "--discipline", "md1",
         "--n", "2", "--lambda", "1", "--mu", "2.5"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert "micro_total" in proc.stdout
