import json
import os

import numpy as np
import pytest

from gntk.cli import main
from gntk.config import ConfigError, load_config, resolve_config
from gntk.runner import run_experiment

TINY_GRAPH = {"n": 8, "edges": [[i, (i + 1) % 8] for i in range(8)] + [[i, i] for i in range(8)],
              "normalization": "none"}


def tiny_config(out_dir, **overrides):
    cfg = {
        "graph": TINY_GRAPH,
        "architecture": "gcn",
        "hyper": {"sigma_w2": 1.5, "sigma_b2": 0.2, "n_layers": 2, "activation": "relu"},
        "schemes": [{"name": "none"}, {"name": "layer_without_replacement", "q": 0.5}],
        "split": {"train_idx": [0, 3, 6], "y_b": [1.0, -1.0, 0.5]},
        "eta": 0.5,
        "time_grid": [0.0, 0.1, 1.0],
        "epsilon": 1e-4,
        "seed": 3,
        "n_paths": 2,
        "finite_gcn": {"widths": [8, 16, 1], "n_trials": 2, "eta": 0.01, "max_steps": 50},
        "oracles": None,
        "out_dir": str(out_dir),
    }
    cfg.update(overrides)
    return cfg


class TestConfigValidation:
    def test_preset_resolves(self):
        config = load_config(None, preset="figure1")
        assert config.eta == 0.1
        assert config.hyper.sigma_w2 == 32.0
        assert config.hyper.n_layers == 2

    def test_unknown_preset(self):
        with pytest.raises(ConfigError) as err:
            load_config(None, preset="figure2")
        assert err.value.code == "bad_config"

    def test_missing_graph_file(self, tmp_path):
        cfg = tiny_config(tmp_path, graph={"file": "missing.json"})
        config = resolve_config(cfg, config_dir=str(tmp_path))
        with pytest.raises(ConfigError) as err:
            config.build_graph()
        assert err.value.code == "graph_not_found"

    def test_invalid_sampling_prob(self, tmp_path):
        cfg = tiny_config(tmp_path, schemes=[{"name": "layer_without_replacement", "q": 0.0}])
        with pytest.raises(ConfigError) as err:
            resolve_config(cfg)
        assert err.value.code == "invalid_sampling_prob"

    def test_invalid_time_grid(self, tmp_path):
        cfg = tiny_config(tmp_path, time_grid=[0.5, 1.0])
        with pytest.raises(ConfigError) as err:
            resolve_config(cfg)
        assert err.value.code == "invalid_time_grid"
        cfg = tiny_config(tmp_path, time_grid=[0.0, 1.0, 1.0])
        with pytest.raises(ConfigError):
            resolve_config(cfg)

    def test_unsupported_scheme_for_graphsage(self, tmp_path):
        cfg = tiny_config(
            tmp_path,
            architecture="graphsage",
            schemes=[{"name": "layer_without_replacement", "q": 0.5}],
        )
        with pytest.raises(ConfigError) as err:
            resolve_config(cfg)
        assert err.value.code == "unsupported_scheme"

    def test_unknown_architecture(self, tmp_path):
        with pytest.raises(ConfigError) as err:
            resolve_config(tiny_config(tmp_path, architecture="gat"))
        assert err.value.code == "invalid_architecture"

    def test_duplicate_labels_disambiguated(self, tmp_path):
        cfg = tiny_config(
            tmp_path,
            schemes=[
                {"name": "layer_without_replacement", "q": 0.5},
                {"name": "layer_without_replacement", "q": 0.9},
            ],
        )
        config = resolve_config(cfg)
        labels = [s.label for s in config.schemes]
        assert len(set(labels)) == 2


class TestCliCommands:
    def test_check_echoes_resolved_values(self, tmp_path, capsys):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(tiny_config(tmp_path / "out")))
        assert main(["check", str(path)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["valid"] is True
        assert payload["eta"] == 0.5
        assert payload["hyper"]["sigma_w2"] == 1.5

    def test_check_preset_reports_paper_values(self, capsys):
        assert main(["check", "--preset", "figure1"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["eta"] == 0.1
        assert payload["hyper"]["sigma_w2"] == 32.0

    def test_error_is_machine_readable(self, tmp_path, capsys):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(tiny_config(tmp_path, schemes=[{"name": "node_wise", "fanout": 0}])))
        code = main(["check", str(path)])
        captured = capsys.readouterr()
        assert code == 2
        err = json.loads(captured.err)
        assert err["error"] == "invalid_sampling_prob"

    def test_missing_config_and_preset(self, capsys):
        assert main(["run"]) == 2
        assert json.loads(capsys.readouterr().err)["error"] == "bad_config"

    def test_run_writes_artifacts(self, tmp_path, capsys):
        out = tmp_path / "out"
        path = tmp_path / "config.json"
        path.write_text(json.dumps(tiny_config(out)))
        assert main(["run", str(path)]) == 0
        for name in ("kernels.json", "evolution.csv", "paths.csv", "oracle_report.json", "summary.json"):
            assert (out / name).exists()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["checks"]["prior_t0_exact"] is True
        assert summary["checks"]["posterior_final_matches_targets_1e-4"] is True

    def test_rerun_is_byte_identical(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        path = tmp_path / "config.json"
        path.write_text(json.dumps(tiny_config(out1)))
        assert main(["run", str(path)]) == 0
        assert main(["run", str(path), "--out", str(out2)]) == 0
        for name in ("kernels.json", "evolution.csv", "paths.csv", "oracle_report.json", "summary.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_seed_override_changes_paths(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        path = tmp_path / "config.json"
        path.write_text(json.dumps(tiny_config(out1)))
        main(["run", str(path)])
        main(["run", str(path), "--out", str(out2), "--seed", "99"])
        assert (out1 / "paths.csv").read_bytes() != (out2 / "paths.csv").read_bytes()

    def test_time_grid_zero_reports_zero_deviation(self, tmp_path, capsys):
        out = tmp_path / "out"
        cfg = tiny_config(out, time_grid=[0.0], append_limit_time=True, n_paths=0,
                          finite_gcn=None)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cfg))
        assert main(["run", str(path)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        for scheme in summary["schemes"]:
            assert scheme["prior_t0_max_dev_from_kernel"] == 0.0


class TestRunnerVariants:
    def test_graphsage_run(self, tmp_path):
        cfg = tiny_config(
            tmp_path / "out",
            architecture="graphsage",
            schemes=[{"name": "none"}, {"name": "node_wise", "fanout": 2}],
            finite_gcn=None,
        )
        config = resolve_config(cfg)
        summary = run_experiment(config)
        assert len(summary["schemes"]) == 2
        assert summary["checks"]["posterior_final_matches_targets_1e-4"] is True

    def test_program_architecture_run(self, tmp_path):
        program = [
            {"op": "input"},
            {"op": "weight", "sigma_w2": 1.5},
            {"op": "graph_conv"},
            {"op": "bias", "sigma_b2": 0.2},
            {"op": "activation", "kind": "relu"},
            {"op": "weight", "sigma_w2": 1.5},
            {"op": "graph_conv"},
            {"op": "bias", "sigma_b2": 0.2},
        ]
        cfg = tiny_config(
            tmp_path / "out",
            architecture={"program": program},
            schemes=[{"name": "none"}],
            finite_gcn=None,
        )
        summary = run_experiment(resolve_config(cfg))
        assert len(summary["schemes"]) == 1

    def test_program_architecture_matches_gcn(self, tmp_path):
        program = [
            {"op": "input"},
            {"op": "weight", "sigma_w2": 1.5},
            {"op": "graph_conv"},
            {"op": "bias", "sigma_b2": 0.2},
            {"op": "activation", "kind": "relu"},
            {"op": "weight", "sigma_w2": 1.5},
            {"op": "graph_conv"},
            {"op": "bias", "sigma_b2": 0.2},
        ]
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        run_experiment(resolve_config(tiny_config(out_a, schemes=[{"name": "none"}], finite_gcn=None)))
        run_experiment(
            resolve_config(
                tiny_config(out_b, architecture={"program": program},
                            schemes=[{"name": "none"}], finite_gcn=None)
            )
        )
        ka = json.loads((out_a / "kernels.json").read_text())["none"]
        kb = json.loads((out_b / "kernels.json").read_text())["none"]
        assert np.allclose(np.array(ka["k"]), np.array(kb["k"]), atol=1e-12)

    def test_thread_env_cap(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GNTK_THREADS", "1")
        cfg = tiny_config(tmp_path / "out", finite_gcn=None)
        summary = run_experiment(resolve_config(cfg))
        assert len(summary["schemes"]) == 2

    def test_fastgcn_probability_scheme(self, tmp_path):
        cfg = tiny_config(
            tmp_path / "out",
            schemes=[{"name": "layer_with_replacement", "p": "fastgcn", "n_samples": 4}],
            finite_gcn=None,
        )
        summary = run_experiment(resolve_config(cfg))
        assert summary["schemes"][0]["label"] == "layer_with_replacement"
