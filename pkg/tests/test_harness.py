import json

import numpy as np
import pytest

from cogneq.equilibrium import RunTrace, TraceRow
from cogneq.harness import (ConfigError, load_config, loads_config,
                            run_experiment, save_config)
from cogneq.harness.cli import main as cli_main
from cogneq.harness.experiment import emit_trace

MINIMAL = '{"scenario": {"Q": 2, "N": 4, "seed": 3}}'


class TestConfig:
    def test_minimal_fills_defaults(self):
        cfg = loads_config(MINIMAL)
        assert cfg.scenario["Q"] == 2
        assert cfg.scenario["alpha"] == 0.5
        assert cfg.scenario["beta"] == 0.5
        assert cfg.scenario["c"] == 100.0
        assert cfg.algorithm["tol"] == 1e-6
        assert cfg.model["f"] == 1.0

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key 'scenario.bogus'"):
            loads_config('{"scenario": {"bogus": 1}}')

    def test_negative_noise_named(self):
        with pytest.raises(ConfigError, match="scenario.noise"):
            loads_config('{"scenario": {"noise": -1.0}}')

    def test_alpha_range(self):
        with pytest.raises(ConfigError, match="alpha"):
            loads_config('{"scenario": {"alpha": 0.7}}')

    def test_bad_algorithm_name(self):
        with pytest.raises(ConfigError, match="algorithm.name"):
            loads_config('{"algorithm": {"name": "algo9"}}')

    def test_round_trip(self, tmp_path):
        cfg = loads_config(MINIMAL)
        path = tmp_path / "cfg.json"
        save_config(cfg, path)
        cfg2 = load_config(path)
        assert cfg.to_dict() == cfg2.to_dict()

    def test_parse_error_has_line(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"scenario": }')
        with pytest.raises(ConfigError, match="line"):
            load_config(path)

    def test_build_deterministic(self):
        cfg = loads_config(MINIMAL)
        s1, m1 = cfg.build()
        s2, m2 = cfg.build()
        assert np.array_equal(s1.H, s2.H)
        assert np.array_equal(m1.mu1, m2.mu1)


class TestTraceEmission:
    def test_empty_trace_header_only(self, tmp_path):
        path = emit_trace(RunTrace(), tmp_path / "t.csv")
        assert path.read_text() == RunTrace.HEADER + "\n"

    def test_row_format(self, tmp_path):
        tr = RunTrace()
        tr.append(TraceRow(iter=0, player=1, tau=1.0 / 3.0, tau_hat=0.5,
                           pfa=0.25, throughput=1.23456789012345,
                           i_local=-0.5, i_global=-1.0, price=0.0, lam=0.0,
                           residual=1e-7, consensus_msgs=9))
        (tmp_path / "t.csv").write_text(tr.to_csv())
        text = (tmp_path / "t.csv").read_text()
        line = text.splitlines()[1]
        assert line.startswith("0,1,0.333333333333,")  # 12 significant digits
        assert ",9" in line

    def test_byte_identical_reruns(self, tmp_path):
        from conftest import make_model, make_scenario
        from cogneq.equilibrium import run_algorithm1
        scn = make_scenario(4)
        model = make_model(scn)
        outs = []
        for _ in range(2):
            _, trace, _ = run_algorithm1(scn, model, centralized=True,
                                         tol=1e-6, max_iters=10)
            outs.append(trace.to_csv())
        assert outs[0] == outs[1]


@pytest.fixture(scope="module")
def fast_cfg_text():
    # small, fast instance for artifact tests
    return json.dumps({
        "scenario": {"Q": 2, "N": 4, "seed": 5, "dist_ratio": 10.0,
                     "pu_gain": 1e-3, "los_factor": 5.0, "c": 1.0,
                     "Imax_local": 0.5},
        "algorithm": {"tol": 1e-6, "max_iters": 120},
        "model": {},
        "output": {},
    })


class TestRunExperiment:
    def test_plain_run_artifacts(self, tmp_path, fast_cfg_text):
        cfg = loads_config(fast_cfg_text)
        code, out = run_experiment(cfg, out_dir=tmp_path / "a",
                                   centralized=True)
        assert code == 0
        for name in ("config.json", "conditions.json", "run.csv",
                     "certificate.json", "summary.json"):
            assert (out / name).exists(), name
        summary = json.loads((out / "summary.json").read_text())
        assert summary["converged"] and summary["ne_certified"]

    def test_deterministic_artifacts(self, tmp_path, fast_cfg_text):
        cfg = loads_config(fast_cfg_text)
        _, out1 = run_experiment(cfg, out_dir=tmp_path / "r1",
                                 centralized=True)
        _, out2 = run_experiment(cfg, out_dir=tmp_path / "r2",
                                 centralized=True)
        assert (out1 / "run.csv").read_bytes() == (out2 / "run.csv").read_bytes()
        assert (out1 / "summary.json").read_bytes() == \
            (out2 / "summary.json").read_bytes()

    def test_budget_exhaustion_exit_code(self, tmp_path, fast_cfg_text):
        cfg = loads_config(fast_cfg_text)
        cfg.algorithm["max_iters"] = 2
        cfg.algorithm["tol"] = 1e-14
        code, out = run_experiment(cfg, out_dir=tmp_path / "b",
                                   centralized=True)
        assert code == 3

    def test_uncertified_conditions_tagged(self, tmp_path):
        cfg = loads_config(json.dumps({
            "scenario": {"Q": 2, "N": 4, "seed": 5, "pu_gain": 5.0,
                         "Imax_local": 0.02, "los_factor": 5.0, "c": 1.0},
            "algorithm": {"max_iters": 150},
        }))
        code, out = run_experiment(cfg, out_dir=tmp_path / "u",
                                   centralized=True)
        summary = json.loads((out / "summary.json").read_text())
        assert summary["tag"] == "uncertified"
        conditions = json.loads((out / "conditions.json").read_text())
        assert not conditions["certified"]

    def test_convergence_preset(self, tmp_path, fast_cfg_text):
        cfg = loads_config(fast_cfg_text)
        code, out = run_experiment(cfg, out_dir=tmp_path / "c",
                                   preset="convergence", centralized=True)
        assert code == 0
        comp = json.loads((out / "comparison.json").read_text())
        assert comp["profile_gap"] <= 1e-4
        assert (out / "run_jacobi.csv").exists()
        assert (out / "run_gauss-seidel.csv").exists()

    def test_sensing_sweep_preset(self, tmp_path, fast_cfg_text):
        cfg = loads_config(fast_cfg_text)
        cfg.scenario["c"] = 1.0
        code, out = run_experiment(cfg, out_dir=tmp_path / "s",
                                   preset="sensing-sweep", centralized=True)
        sweep = json.loads((out / "sweep.json").read_text())
        assert len(sweep["tau_grid"]) == len(sweep["sum_throughput"])
        assert (out / "sweep.csv").exists()

    def test_failure_marker(self, tmp_path):
        cfg = loads_config(MINIMAL)
        cfg.scenario["Q"] = 0      # invalid: generator will raise
        with pytest.raises(Exception):
            run_experiment(cfg, out_dir=tmp_path / "f")
        assert (tmp_path / "f" / "FAILED").exists()


class TestCli:
    def test_check_command(self, tmp_path, fast_cfg_text, capsys):
        path = tmp_path / "cfg.json"
        path.write_text(fast_cfg_text)
        code = cli_main(["check", "--config", str(path)])
        out = capsys.readouterr().out
        assert code in (0, 2)
        report = json.loads(out)
        assert "lambda_max" in report

    def test_run_command(self, tmp_path, fast_cfg_text):
        path = tmp_path / "cfg.json"
        path.write_text(fast_cfg_text)
        code = cli_main(["run", "--config", str(path), "--out",
                         str(tmp_path / "out"), "--centralized"])
        assert code == 0

    def test_consensus_demo(self, capsys):
        code = cli_main(["consensus-demo", "--nodes", "4", "--graph",
                         "complete", "--seed", "1"])
        out = capsys.readouterr().out
        assert code == 0
        assert "consensus value" in out

    def test_config_error_exit(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{"scenario": {"noise": -2}}')
        code = cli_main(["check", "--config", str(path)])
        assert code == 1
        assert "config error" in capsys.readouterr().err


class TestGlobalConstraintPreset:
    def test_artifacts_and_violation_summary(self, tmp_path, fast_cfg_text):
        cfg = loads_config(fast_cfg_text)
        cfg.algorithm["prox_gain"] = 0.2
        cfg.algorithm["tol"] = 1e-10
        cfg.algorithm["max_iters"] = 2000
        code, out = run_experiment(cfg, out_dir=tmp_path / "g",
                                   preset="global-constraints",
                                   centralized=True)
        assert code in (0, 2)
        v = json.loads((out / "violations.json").read_text())
        assert v["final_violation"] <= 1e-5


class TestExplicitConfig:
    def test_explicit_scenario_and_model(self, tmp_path):
        # a 1x1 hand-built instance runs end to end through the config path
        tree = {
            "scenario": {"explicit": {
                "H": [[[1.0]]], "G": [[0.1]], "noise": [[1.0]],
                "Pbudget": [1.0], "pmax": [[1.0]], "Imax_local": [1.0],
                "Imax_global": 1.0, "alpha": [[0.5]], "beta": [0.5],
                "tau_min": [0.25], "tau_max": [4.0], "c": 0.0,
            }},
            "model": {"explicit": {
                "mu0": [[1.0]], "mu1": [[2.0]], "sigma0": [[1.0]],
                "sigma1": [[2.0]], "f": [1.0], "T": [10.0],
            }},
            "algorithm": {"max_iters": 60},
        }
        cfg = loads_config(json.dumps(tree))
        scn, model = cfg.build()
        assert scn.Q == 1 and scn.N == 1
        assert model.mu1[0, 0] == 2.0
        code, out = run_experiment(cfg, out_dir=tmp_path / "x",
                                   centralized=True)
        assert code == 0

    def test_shape_mismatch_rejected(self):
        tree = {
            "scenario": {"Q": 2, "N": 4},
            "model": {"explicit": {
                "mu0": [[1.0]], "mu1": [[2.0]], "sigma0": [[1.0]],
                "sigma1": [[2.0]], "f": [1.0], "T": [10.0],
            }},
        }
        cfg = loads_config(json.dumps(tree))
        with pytest.raises(ConfigError, match="shape"):
            cfg.build()

    def test_explicit_must_be_object(self):
        with pytest.raises(ConfigError, match="scenario.explicit"):
            loads_config('{"scenario": {"explicit": 5}}')
