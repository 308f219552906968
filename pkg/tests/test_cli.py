import json
import subprocess
import sys

import numpy as np
import pytest

from smoa import matrix_io
from smoa.cli import main


@pytest.fixture
def diag_matrix(tmp_path):
    path = tmp_path / "w.smoa"
    matrix_io.write_matrix(np.diag([3.0, 2.0, 1.0]), path)
    return path


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_analyze_prints_partition(capsys, diag_matrix):
    code, out, err = run_cli(capsys, "analyze", "--input", str(diag_matrix), "--k", "2")
    assert code == 0
    assert "I_1 = {1} (share 0.500)" in out
    assert "I_2 = {2,3} (share 0.500)" in out
    assert err == ""


def test_analyze_single_subspace(capsys, diag_matrix):
    code, out, _ = run_cli(capsys, "analyze", "--input", str(diag_matrix), "--k", "1")
    assert code == 0
    assert "I_1 = {1,2,3} (share 1.000)" in out


def test_analyze_k_above_p_exits_1(capsys, diag_matrix):
    code, _, err = run_cli(capsys, "analyze", "--input", str(diag_matrix), "--k", "4")
    assert code == 1
    assert "K must be ≤ 3" in err


def test_analyze_missing_input_exits_3(capsys, tmp_path):
    code, _, err = run_cli(capsys, "analyze", "--input", str(tmp_path / "nope.smoa"),
                           "--k", "2")
    assert code == 3
    assert "i/o error" in err


def test_analyze_empty_subspace_diagnostic(capsys, tmp_path):
    path = tmp_path / "spike.smoa"
    matrix_io.write_matrix(np.diag([100.0, 1.0, 1.0]), path)
    code, out, _ = run_cli(capsys, "analyze", "--input", str(path), "--k", "3")
    assert code == 0
    assert "diagnostic: empty subspaces: I_1, I_2" in out


def test_analyze_json_dump(capsys, diag_matrix, tmp_path):
    out_json = tmp_path / "part.json"
    code, _, _ = run_cli(capsys, "analyze", "--input", str(diag_matrix), "--k", "2",
                         "--json", str(out_json))
    assert code == 0
    payload = json.loads(out_json.read_text())
    assert payload["K"] == 2
    assert payload["index_sets"] == [[1], [2, 3]]
    assert payload["empty_subspaces"] == []


def write_sweep_config(tmp_path, **overrides):
    cfg = {"methods": ["lora"], "d": 64, "r_values": [4], "K_values": [1], "n_seeds": 5}
    cfg.update(overrides)
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(cfg))
    return path


def test_rank_bench_writes_report(capsys, tmp_path):
    cfg = write_sweep_config(tmp_path)
    out_csv = tmp_path / "report.csv"
    code, out, _ = run_cli(capsys, "rank-bench", "--config", str(cfg), "--out", str(out_csv))
    assert code == 0
    lines = out_csv.read_text().splitlines()
    assert lines[0] == matrix_io.REPORT_HEADER
    assert len(lines) == 6
    assert all(line.split(",")[6] == "4" for line in lines[1:])
    assert "lora,4,1,4" in out
    assert (tmp_path / "report.csv.meta.json").exists()


def test_rank_bench_no_methods_writes_header_only(capsys, tmp_path):
    cfg = write_sweep_config(tmp_path, methods=[])
    out_csv = tmp_path / "report.csv"
    code, _, _ = run_cli(capsys, "rank-bench", "--config", str(cfg), "--out", str(out_csv))
    assert code == 0
    assert out_csv.read_text() == matrix_io.REPORT_HEADER + "\n"


def test_rank_bench_all_cells_invalid_exits_1(capsys, tmp_path):
    cfg = write_sweep_config(tmp_path, methods=["smoa"], r_values=[2], K_values=[4])
    code, _, err = run_cli(capsys, "rank-bench", "--config", str(cfg),
                           "--out", str(tmp_path / "r.csv"))
    assert code == 1
    assert "r must be ≥ K" in err


def test_rank_bench_unknown_field_exits_1(capsys, tmp_path):
    cfg = write_sweep_config(tmp_path, extra_field=1)
    code, _, err = run_cli(capsys, "rank-bench", "--config", str(cfg),
                           "--out", str(tmp_path / "r.csv"))
    assert code == 1
    assert "unknown sweep config" in err


def test_rank_bench_missing_config_exits_3(capsys, tmp_path):
    code, _, err = run_cli(capsys, "rank-bench", "--config", str(tmp_path / "nope.json"),
                           "--out", str(tmp_path / "r.csv"))
    assert code == 3


def test_rank_bench_is_idempotent(capsys, tmp_path):
    cfg = write_sweep_config(tmp_path, methods=["lora", "smoa"], r_values=[4],
                             K_values=[2], n_seeds=3, d=32)
    first_csv = tmp_path / "a.csv"
    second_csv = tmp_path / "b.csv"
    code_a, out_a, _ = run_cli(capsys, "rank-bench", "--config", str(cfg),
                               "--out", str(first_csv))
    code_b, out_b, _ = run_cli(capsys, "rank-bench", "--config", str(cfg),
                               "--out", str(second_csv))
    assert code_a == code_b == 0
    assert first_csv.read_bytes() == second_csv.read_bytes()
    assert out_a.replace("a.csv", "") == out_b.replace("b.csv", "")


def write_train_config(tmp_path, **overrides):
    cfg = {"d": 16, "target_rank": 2, "n_samples": 32, "seed": 3,
           "r": 4, "K": 2, "steps": 200}
    cfg.update(overrides)
    path = tmp_path / "train.json"
    path.write_text(json.dumps(cfg))
    return path


def test_train_writes_trace_and_adapter(capsys, tmp_path):
    cfg = write_train_config(tmp_path)
    prefix = tmp_path / "run"
    code, out, _ = run_cli(capsys, "train", "--config", str(cfg), "--method", "lora",
                           "--out-prefix", str(prefix))
    assert code == 0
    trace = (tmp_path / "run.seed3.loss.csv").read_text().splitlines()
    assert trace[0] == "step,loss"
    assert len(trace) == 202
    assert (tmp_path / "run.seed3.manifest.json").exists()
    assert "trainable parameters: 128" in out
    first = float(trace[1].split(",")[1])
    last = float(trace[-1].split(",")[1])
    assert last < first


def test_train_is_deterministic(capsys, tmp_path):
    cfg = write_train_config(tmp_path)
    run_cli(capsys, "train", "--config", str(cfg), "--method", "smoa",
            "--out-prefix", str(tmp_path / "one"))
    run_cli(capsys, "train", "--config", str(cfg), "--method", "smoa",
            "--out-prefix", str(tmp_path / "two"))
    assert ((tmp_path / "one.seed3.loss.csv").read_bytes()
            == (tmp_path / "two.seed3.loss.csv").read_bytes())


def test_train_multiple_seeds_prints_medians(capsys, tmp_path):
    cfg = write_train_config(tmp_path, steps=50)
    code, out, _ = run_cli(capsys, "train", "--config", str(cfg), "--method", "lora",
                           "--out-prefix", str(tmp_path / "multi"), "--seeds", "3")
    assert code == 0
    assert "median final loss" in out
    assert (tmp_path / "multi.seed5.loss.csv").exists()


def test_gradcheck_passes(capsys):
    code, out, err = run_cli(capsys, "gradcheck", "--d", "8", "--k", "2", "--r", "4",
                             "--method", "smoa", "--seed", "0")
    assert code == 0
    assert "max relative error" in out
    assert err == ""


@pytest.mark.parametrize("method", ["lora", "block_lora", "hadamard_w0"])
def test_gradcheck_passes_all_baselines(capsys, method):
    code, _, _ = run_cli(capsys, "gradcheck", "--d", "8", "--k", "2", "--r", "4",
                         "--method", method)
    assert code == 0


def test_gradcheck_corruption_exits_2(capsys):
    code, _, err = run_cli(capsys, "gradcheck", "--d", "8", "--k", "2", "--r", "4",
                           "--method", "smoa", "--inject-corruption")
    assert code == 2
    assert "gradient check failed" in err


def test_module_entry_point(tmp_path):
    result = subprocess.run(
        [sys.executable, "-m", "smoa", "gradcheck", "--d", "8", "--k", "2", "--r", "4",
         "--method", "lora"],
        capture_output=True, text=True,
    )
    assert result.returncode == 0
    assert "max relative error" in result.stdout
