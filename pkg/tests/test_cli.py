import csv
import json
import math

import numpy as np
import pytest
import yaml

from gsmf.cli import TRACE_HEADER, main
from gsmf.data import DatasetRecipe, gen_data, load_matrix, save_matrix


def base_config(**overrides):
    cfg = {
        "dataset": {"source": "synthetic", "n": 20, "m": 3, "seed": 7,
                    "noise_t": 0.0},
        "problem": {"rank": 3, "lambda": 1.0,
                    "psi": {"kind": "nonneg"}, "phi": {"kind": "nonneg"}},
        "relaxation": {"alpha": 0.6},
        "solver": {"tol": 1e-14, "max_iters": 10000, "seed": 0},
    }
    for key, value in overrides.items():
        section, _, field = key.partition(".")
        if field:
            cfg.setdefault(section, {})[field] = value
        else:
            cfg[section] = value
    return cfg


def write_config(tmp_path, cfg, name="config.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


# --------------------------------------------------------------------------
# dataset recipe
# --------------------------------------------------------------------------


def test_gen_data_normalization_peak_is_one():
    M = gen_data(DatasetRecipe(source="synthetic", n=15, m=4, seed=3, noise_t=0.0))
    assert M.shape == (15, 15)
    assert M.max() == 1.0
    assert np.all(M >= 0.0)


def test_gen_data_identity_factor_file(tmp_path):
    path = tmp_path / "N.csv"
    save_matrix(path, np.eye(4))
    M = gen_data(DatasetRecipe(source="file", path=str(path), noise_t=0.0))
    assert np.array_equal(M, np.eye(4))


def test_gen_data_deterministic_with_noise():
    recipe = DatasetRecipe(source="synthetic", n=10, m=3, seed=11, noise_t=0.01)
    M1 = gen_data(recipe)
    M2 = gen_data(recipe)
    assert np.array_equal(M1, M2)
    base = gen_data(DatasetRecipe(source="synthetic", n=10, m=3, seed=11,
                                  noise_t=0.0))
    assert np.all(M1 >= base - 1e-15)  # noise is nonnegative


def test_gen_data_symmetrize_noise_flag():
    recipe = DatasetRecipe(source="synthetic", n=8, m=3, seed=5, noise_t=0.05,
                           symmetrize_noise=True)
    M = gen_data(recipe)
    assert np.allclose(M, M.T, atol=1e-15)


def test_matrix_roundtrip_csv_and_mtx(tmp_path):
    rng = np.random.default_rng(0)
    A = rng.uniform(size=(5, 3))
    for name in ("a.csv", "a.mtx"):
        path = tmp_path / name
        save_matrix(path, A)
        back = load_matrix(path)
        assert np.allclose(back, A, rtol=0, atol=1e-12)


def test_recipe_validation():
    with pytest.raises(ValueError, match="source"):
        DatasetRecipe(source="url")
    with pytest.raises(ValueError, match="noise_t"):
        DatasetRecipe(source="synthetic", n=3, m=3, noise_t=-1.0)
    with pytest.raises(ValueError, match="path"):
        DatasetRecipe(source="file")


# --------------------------------------------------------------------------
# gen-data subcommand
# --------------------------------------------------------------------------


def test_cli_gen_data_writes_deterministic_matrix(tmp_path, capsys):
    cfg_path = write_config(tmp_path, base_config(**{"dataset.noise_t": 0.01}))
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["gen-data", "--config", cfg_path, "--out", str(out1)]) == 0
    assert main(["gen-data", "--config", cfg_path, "--out", str(out2)]) == 0
    assert (out1 / "M.csv").read_bytes() == (out2 / "M.csv").read_bytes()


# --------------------------------------------------------------------------
# solve subcommand
# --------------------------------------------------------------------------


def test_cli_solve_planted_instance(tmp_path, capsys):
    cfg_path = write_config(tmp_path, base_config())
    out = tmp_path / "out"
    code = main(["solve", "--config", cfg_path, "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "run_summary.json").read_text())
    assert summary["status"] == "Converged"
    assert summary["relobj"] <= 1e-6

    lines = (out / "run_trace.csv").read_text().splitlines()
    assert lines[0] == TRACE_HEADER
    assert len(lines) - 1 == summary["iters"]
    last = dict(zip(lines[0].split(","), lines[-1].split(",")))
    assert int(last["iter"]) == summary["iters"]
    assert float(last["f_value"]) == summary["f_value"]
    assert float(last["relobj"]) == summary["relobj"]
    assert float(last["sym_gap"]) == summary["sym_gap"]


def test_cli_solve_missing_rank_names_field(tmp_path, capsys):
    cfg = base_config()
    del cfg["problem"]["rank"]
    cfg_path = write_config(tmp_path, cfg)
    code = main(["solve", "--config", cfg_path, "--out", str(tmp_path / "o")])
    assert code == 1
    assert "rank" in capsys.readouterr().err


def test_cli_solve_time_limit_zero(tmp_path, capsys):
    cfg_path = write_config(tmp_path, base_config(**{"solver.max_time_sec": 0.0}))
    out = tmp_path / "out"
    code = main(["solve", "--config", cfg_path, "--out", str(out)])
    assert code == 2
    summary = json.loads((out / "run_summary.json").read_text())
    assert summary["status"] == "TimeLimit"
    lines = (out / "run_trace.csv").read_text().splitlines()
    assert len(lines) - 1 <= 1


def test_cli_solve_traces_are_byte_identical(tmp_path, capsys):
    cfg_path = write_config(tmp_path, base_config(**{"solver.max_iters": 50,
                                                     "solver.tol": 1e-16}))
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    main(["solve", "--config", cfg_path, "--out", str(out1)])
    main(["solve", "--config", cfg_path, "--out", str(out2)])
    assert (out1 / "run_trace.csv").read_bytes() == (out2 / "run_trace.csv").read_bytes()


def test_cli_solve_unknown_solver_field(tmp_path, capsys):
    cfg_path = write_config(tmp_path, base_config(**{"solver.step_size": 0.1}))
    code = main(["solve", "--config", cfg_path, "--out", str(tmp_path / "o")])
    assert code == 1
    assert "step_size" in capsys.readouterr().err


def test_cli_solve_sampling_map(tmp_path, capsys):
    from gsmf.operators import random_symmetric_omega

    omega = random_symmetric_omega(20, 0.6, np.random.default_rng(1))
    omega_path = tmp_path / "omega.csv"
    omega_path.write_text("".join(f"{i},{j}\n" for i, j in omega))
    cfg = base_config()
    cfg["problem"]["map"] = {"kind": "sampling", "omega_csv": str(omega_path)}
    cfg_path = write_config(tmp_path, cfg)
    code = main(["solve", "--config", cfg_path, "--out", str(tmp_path / "o")])
    assert code == 0


# --------------------------------------------------------------------------
# sweep subcommand
# --------------------------------------------------------------------------


def read_sweep(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_cli_sweep_alpha(tmp_path, capsys):
    cfg = base_config(**{"solver.max_iters": 4000, "solver.tol": 1e-12})
    cfg["sweep"] = {"alpha": [0.2, 0.6, 2.0], "reps": 1}
    cfg_path = write_config(tmp_path, cfg)
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", cfg_path, "--out", str(out), "--jobs", "2"]) == 0
    rows = read_sweep(out / "sweep.csv")
    assert [r["point"] for r in rows] == ["alpha=0.2", "alpha=0.6", "alpha=2.0"]
    assert all(r["failed"] == "0" for r in rows)
    relobjs = [float(r["mean_relobj"]) for r in rows]
    assert all(v <= 1e-5 for v in relobjs)


def test_cli_sweep_empty_axis_is_an_error(tmp_path, capsys):
    cfg = base_config()
    cfg["sweep"] = {"lambda": []}
    cfg_path = write_config(tmp_path, cfg)
    code = main(["sweep", "--config", cfg_path, "--out", str(tmp_path / "o")])
    assert code == 1
    assert "lambda" in capsys.readouterr().err


def test_cli_sweep_survives_failing_point(tmp_path, capsys):
    cfg = base_config()
    # alpha = 1 is inadmissible (beta undefined); the sweep must continue
    cfg["sweep"] = {"alpha": [1.0, 0.6]}
    cfg_path = write_config(tmp_path, cfg)
    out = tmp_path / "o"
    assert main(["sweep", "--config", cfg_path, "--out", str(out)]) == 0
    rows = read_sweep(out / "sweep.csv")
    assert rows[0]["failed"] == "1"
    assert rows[1]["failed"] == "0"


def test_cli_sweep_noise_rank_grid(tmp_path, capsys):
    cfg = base_config(**{"solver.max_iters": 500, "solver.tol": 1e-9})
    cfg["sweep"] = {"noise_t": [0.0, 0.01], "rank": [2, 3]}
    cfg_path = write_config(tmp_path, cfg)
    out = tmp_path / "o"
    assert main(["sweep", "--config", cfg_path, "--out", str(out)]) == 0
    rows = read_sweep(out / "sweep.csv")
    assert len(rows) == 4


# --------------------------------------------------------------------------
# check subcommand
# --------------------------------------------------------------------------


def test_cli_check_passes_on_fresh_config(tmp_path, capsys):
    cfg = base_config(**{"solver.max_iters": 100})
    cfg_path = write_config(tmp_path, cfg)
    out = tmp_path / "o"
    assert main(["check", "--config", cfg_path, "--out", str(out)]) == 0
    report = json.loads((out / "check.json").read_text())
    assert report["all_passed"]
    names = {item["name"] for item in report["items"]}
    assert {"operator_identities", "relaxation_identity", "descent_audit"} <= names


def test_cli_check_flags_inadmissible_relaxation(tmp_path, capsys):
    cfg = base_config()
    cfg["relaxation"] = {"alpha": 0.6, "beta": 2.0}  # 1/a + 1/b != 1
    cfg_path = write_config(tmp_path, cfg)
    code = main(["check", "--config", cfg_path])
    assert code == 1
    report = json.loads(capsys.readouterr().out)
    failed = {i["name"] for i in report["items"] if not i["passed"]}
    assert "relaxation_params" in failed


def test_cli_missing_config_file_is_an_error(tmp_path, capsys):
    code = main(["solve", "--config", str(tmp_path / "nope.yaml")])
    assert code == 1
