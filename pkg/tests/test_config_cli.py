import json
import os

import numpy as np
import pytest

from cmestream import (ConfigError, ConstantStep, FiniteSpaceModel, Kernel,
                       PolynomialStep, QuadraticBudget, ZeroBudget)
from cmestream.cli import main
from cmestream.config import (CONFIG_SCHEMA, build_learner_config, build_stream,
                              load_config, read_stream_csv, validate_config,
                              write_stream_csv)


def duffing_config(n_traj=4, steps=3, seed=7, budget=None, checkpoints=None,
                   lam=0.01):
    cfg = {
        "kernel": {"family": "gaussian", "bandwidth": 0.3},
        "learner": {
            "lambda": lam,
            "step": {"kind": "constant", "eta": 0.2},
            "budget": budget or {"kind": "zero"},
        },
        "stream": {
            "source": {"kind": "duffing", "n_traj": n_traj,
                       "steps_per_traj": steps, "seed": seed},
        },
    }
    if checkpoints:
        cfg["analysis"] = {"checkpoints": checkpoints}
    return cfg


class TestConfigValidation:
    def test_valid_config_passes(self):
        validate_config(duffing_config())

    def test_unknown_key_rejected_with_name(self):
        cfg = duffing_config()
        cfg["learner"]["stepsize"] = 0.1
        with pytest.raises(ConfigError, match="stepsize"):
            validate_config(cfg)

    def test_unknown_top_level_key(self):
        cfg = duffing_config()
        cfg["extra_section"] = {}
        with pytest.raises(ConfigError, match="extra_section"):
            validate_config(cfg)

    def test_bad_enum_value(self):
        cfg = duffing_config()
        cfg["kernel"]["family"] = "laplacian"
        with pytest.raises(ConfigError, match="kernel"):
            validate_config(cfg)

    def test_source_keys_must_match_kind(self):
        cfg = duffing_config()
        cfg["stream"]["source"]["model_path"] = "x.json"
        with pytest.raises(ConfigError, match="model_path"):
            validate_config(cfg)

    def test_missing_required_section(self):
        cfg = duffing_config()
        del cfg["learner"]
        with pytest.raises(ConfigError):
            validate_config(cfg)

    def test_schema_is_json_serializable(self):
        json.dumps(CONFIG_SCHEMA)


class TestBuilders:
    def test_learner_config_constant(self):
        cfg = build_learner_config(duffing_config(lam=0.5))
        assert cfg.lam == 0.5
        assert cfg.step_schedule == ConstantStep(0.2)
        assert cfg.budget_schedule == ZeroBudget()
        assert cfg.kernel_x == Kernel.gaussian(0.3)

    def test_learner_config_polynomial_quadratic(self):
        raw = duffing_config(budget={"kind": "quadratic", "b_cmp": 1.0})
        raw["learner"]["step"] = {"kind": "polynomial", "eta0": 0.2, "t0": 50, "p": 1.0}
        cfg = build_learner_config(raw)
        assert cfg.step_schedule == PolynomialStep(0.2, 50, 1.0)
        assert cfg.budget_schedule == QuadraticBudget(1.0)

    def test_budget_squared_override(self):
        cfg = build_learner_config(duffing_config(), budget_squared=True)
        assert cfg.budget_squared

    def test_stream_seed_override(self, tmp_path):
        raw = duffing_config(seed=1)
        a = build_stream(raw, seed=2)
        b = build_stream({**raw}, seed=2)
        c = build_stream(raw)           # seed from config
        assert np.array_equal(a[0], b[0])
        assert not np.array_equal(a[0], c[0])

    def test_stream_csv_round_trip(self, tmp_path, rng):
        xs = rng.uniform(-1, 1, (7, 2))
        ys = rng.uniform(-1, 1, (7, 2))
        path = tmp_path / "stream.csv"
        write_stream_csv(path, xs, ys)
        xs2, ys2 = read_stream_csv(path, 2, 2)
        assert np.array_equal(xs, xs2) and np.array_equal(ys, ys2)


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture
def duffing_cfg_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(duffing_config(n_traj=4, steps=3, seed=7,
                                              checkpoints=[2, 6])))
    return path


class TestCliSimulate:
    def test_writes_stream(self, duffing_cfg_file, tmp_path, capsys):
        out = tmp_path / "out"
        assert run_cli("simulate", "--config", duffing_cfg_file, "--out", out) == 0
        rows = (out / "stream.csv").read_text().strip().splitlines()
        assert len(rows) == 12
        assert len(rows[0].split(",")) == 4

    def test_byte_identical_across_runs(self, duffing_cfg_file, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        run_cli("simulate", "--config", duffing_cfg_file, "--out", out1)
        run_cli("simulate", "--config", duffing_cfg_file, "--out", out2)
        assert (out1 / "stream.csv").read_bytes() == (out2 / "stream.csv").read_bytes()

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        cfg = duffing_config()
        cfg["learner"]["unknown_knob"] = 1
        bad.write_text(json.dumps(cfg))
        assert run_cli("simulate", "--config", bad) == 2
        assert "unknown_knob" in capsys.readouterr().err


class TestCliLearn:
    def test_learn_outputs(self, duffing_cfg_file, tmp_path):
        out = tmp_path / "run"
        assert run_cli("learn", "--config", duffing_cfg_file, "--out", out) == 0
        trace = (out / "trace.csv").read_text().strip().splitlines()
        assert trace[0] == "t,accepted,delta,eps_t,eta_t,dict_size,hs_norm"
        assert len(trace) == 13
        model = json.loads((out / "model.json").read_text())
        assert len(model["dict"]) == 12      # zero budget admits everything
        assert (out / "checkpoint_2.json").exists()
        assert (out / "checkpoint_6.json").exists()

    def test_learn_deterministic(self, duffing_cfg_file, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        run_cli("learn", "--config", duffing_cfg_file, "--out", out1)
        run_cli("learn", "--config", duffing_cfg_file, "--out", out2)
        assert (out1 / "trace.csv").read_bytes() == (out2 / "trace.csv").read_bytes()
        assert (out1 / "model.json").read_bytes() == (out2 / "model.json").read_bytes()

    def test_learn_from_csv_stream(self, tmp_path, rng):
        xs = rng.uniform(-1, 1, (5, 2))
        write_stream_csv(tmp_path / "s.csv", xs, xs)
        cfg = duffing_config()
        cfg["stream"]["source"] = {"kind": "csv", "path": "s.csv",
                                   "dim_x": 2, "dim_y": 2}
        (tmp_path / "cfg.json").write_text(json.dumps(cfg))
        out = tmp_path / "out"
        assert run_cli("learn", "--config", tmp_path / "cfg.json", "--out", out) == 0
        assert len((out / "trace.csv").read_text().strip().splitlines()) == 6

    def test_budget_squared_flag_changes_decisions(self, tmp_path):
        cfg = duffing_config(n_traj=2, steps=10,
                             budget={"kind": "constant", "eps": 0.05})
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        out_sqrt, out_sq = tmp_path / "sqrt", tmp_path / "sq"
        run_cli("learn", "--config", path, "--out", out_sqrt)
        run_cli("learn", "--config", path, "--out", out_sq, "--budget-squared")
        n_sqrt = json.loads((out_sqrt / "model.json").read_text())["dict"]
        n_sq = json.loads((out_sq / "model.json").read_text())["dict"]
        assert len(n_sq) != len(n_sqrt)


class TestCliKoopman:
    def test_spectrum_and_fields(self, duffing_cfg_file, tmp_path):
        out = tmp_path / "run"
        run_cli("learn", "--config", duffing_cfg_file, "--out", out)
        assert run_cli("koopman", "--model", out / "model.json", "--k", 3,
                       "--grid-min=-2,-2", "--grid-max", "2,2",
                       "--grid-counts", "5,5", "--fields", "0") == 0
        spec = json.loads((out / "spectrum.json").read_text())
        assert len(spec["eigenvalues"]) == 3
        assert not spec["degenerate"]
        assert max(spec["residuals"]) <= 1e-6
        field = (out / "eigfield_0.csv").read_text().strip().splitlines()
        assert field[0] == "x1,x2,re,im"
        assert len(field) == 26

    def test_zero_model_degenerate_flag(self, tmp_path, gauss03, rng):
        from cmestream import Dictionary, OperatorRep, save_rep
        xs = rng.uniform(-1, 1, (3, 2))
        rep = OperatorRep(dict=Dictionary(xs, xs.copy()), W=np.zeros((3, 3)),
                          kernel_x=gauss03, kernel_y=gauss03)
        save_rep(rep, tmp_path / "model.json")
        assert run_cli("koopman", "--model", tmp_path / "model.json", "--k", 2,
                       "--out", tmp_path) == 0
        spec = json.loads((tmp_path / "spectrum.json").read_text())
        assert spec["degenerate"]
        assert not (tmp_path / "eigfield_0.csv").exists()

    def test_dim_mismatch_is_input_error(self, tmp_path, gauss03, rng):
        from cmestream import Dictionary, OperatorRep, save_rep
        rep = OperatorRep(dict=Dictionary(rng.uniform(size=(2, 2)),
                                          rng.uniform(size=(2, 3))),
                          W=np.zeros((2, 2)), kernel_x=gauss03, kernel_y=gauss03)
        save_rep(rep, tmp_path / "model.json")
        assert run_cli("koopman", "--model", tmp_path / "model.json") == 2


class TestCliCompare:
    def test_batch_oracle(self, duffing_cfg_file, tmp_path):
        out = tmp_path / "run"
        run_cli("learn", "--config", duffing_cfg_file, "--out", out)
        run_cli("simulate", "--config", duffing_cfg_file, "--out", out)
        assert run_cli("compare", "--run-dir", out, "--oracle", "batch",
                       "--stream", out / "stream.csv", "--lambda", "0.01") == 0
        rows = (out / "convergence.csv").read_text().strip().splitlines()
        assert rows[0] == "t,hs_distance"
        assert len(rows) == 3
        ts = [int(r.split(",")[0]) for r in rows[1:]]
        assert ts == [2, 6]

    def test_exact_oracle(self, tmp_path):
        pi = np.array([0.5, 0.3, 0.2])
        P = 0.5 * np.outer(np.ones(3), pi) + 0.5 * np.eye(3)
        model = FiniteSpaceModel.from_chain(np.array([[0.], [1.], [2.]]), P)
        model.save(tmp_path / "chain.json")
        cfg = {
            "kernel": {"family": "gaussian", "bandwidth": 0.5},
            "learner": {"lambda": 0.1,
                        "step": {"kind": "constant", "eta": 0.1},
                        "budget": {"kind": "zero"}},
            "stream": {"source": {"kind": "finite_chain", "model_path": "chain.json",
                                  "n_samples": 60, "burn_in": 0, "seed": 3}},
            "analysis": {"checkpoints": [10, 60]},
        }
        (tmp_path / "cfg.json").write_text(json.dumps(cfg))
        out = tmp_path / "run"
        assert run_cli("learn", "--config", tmp_path / "cfg.json", "--out", out) == 0
        assert run_cli("compare", "--run-dir", out, "--oracle", "exact",
                       "--model-json", tmp_path / "chain.json",
                       "--lambda", "0.1") == 0
        rows = (out / "convergence.csv").read_text().strip().splitlines()
        d10, d60 = (float(r.split(",")[1]) for r in rows[1:])
        assert d60 < d10        # learning reduces oracle distance

    def test_missing_checkpoints_error(self, tmp_path, gauss03, rng):
        from cmestream import Dictionary, OperatorRep, save_rep
        os.makedirs(tmp_path / "empty", exist_ok=True)
        xs = rng.uniform(size=(2, 2))
        rep = OperatorRep(dict=Dictionary(xs, xs.copy()), W=np.zeros((2, 2)),
                          kernel_x=gauss03, kernel_y=gauss03)
        save_rep(rep, tmp_path / "empty" / "model.json")
        assert run_cli("compare", "--run-dir", tmp_path / "empty",
                       "--oracle", "exact", "--model-json", "x.json",
                       "--lambda", "0.1") == 2


class TestCliSchema:
    def test_schema_subcommand(self, capsys):
        assert run_cli("schema") == 0
        out = capsys.readouterr().out
        parsed = json.loads(out)
        assert parsed["title"].startswith("cmestream")
