import json
import os

import numpy as np
import pytest

from siltlab.cli import (
    ConfigError,
    determinism_check,
    main,
    validate_config,
)


def write_config(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


MODEL_CFG = {"command": "model", "seed": 7,
             "params": {"d": 1, "alpha": 0.5, "q": 2.0, "K": 500, "R": 8}}


class TestValidation:
    def test_accepts_good_config(self):
        validate_config(MODEL_CFG)

    def test_reports_every_violation(self):
        bad = {"command": "model", "seed": -1, "bogus": 1,
               "params": {"d": 0, "alpha": 3.0, "q": 0.5, "K": 500}}
        with pytest.raises(ConfigError) as err:
            validate_config(bad)
        msg = str(err.value)
        for needle in ("bogus", "seed", "alpha", "q", "d"):
            assert needle in msg

    def test_unknown_param_keys_rejected(self):
        bad = dict(MODEL_CFG, params={**MODEL_CFG["params"], "mystery": 1})
        with pytest.raises(ConfigError, match="mystery"):
            validate_config(bad)

    def test_unknown_command_rejected(self):
        with pytest.raises(ConfigError):
            validate_config({"command": "explode", "seed": 0, "params": {}})


class TestCommands:
    def test_model_emits_summary_and_symbol(self, tmp_path):
        cfg = write_config(tmp_path, MODEL_CFG)
        out = tmp_path / "out"
        assert main(["--config", cfg, "--out", str(out)]) == 0
        doc = json.loads((out / "model.json").read_text())
        assert doc["regime"] == "critical"
        assert abs(doc["ball_mass"] + doc["tail_mass"] - 1.0) < 1e-10
        lines = (out / "symbol.csv").read_text().strip().splitlines()
        assert lines[0] == "k0,psi_R"
        assert len(lines) == 9
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 7 and manifest["command"] == "model"

    def test_malformed_config_exit_code(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {
            "command": "model", "seed": 1,
            "params": {"d": 1, "alpha": 3.0, "q": 2.0, "K": 500}})
        assert main(["--config", cfg]) == 2
        assert "alpha" in capsys.readouterr().err

    def test_seed_overrides(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path, MODEL_CFG)
        out = tmp_path / "o1"
        monkeypatch.setenv("SILTLAB_SEED", "99")
        main(["--config", cfg, "--out", str(out)])
        assert json.loads((out / "manifest.json").read_text())["seed"] == 99
        out2 = tmp_path / "o2"
        main(["--config", cfg, "--out", str(out2), "--seed", "123"])
        assert json.loads((out2 / "manifest.json").read_text())["seed"] == 123

    def test_simulate_replica_csv(self, tmp_path):
        cfg = write_config(tmp_path, {
            "command": "simulate", "seed": 3,
            "params": {"d": 1, "alpha": 0.5, "q": 2.0, "K": 500, "R": 8, "n": 50,
                       "stop": {"kind": "fixed", "T": 10.0}, "with_mutual": True}})
        out = tmp_path / "out"
        assert main(["--config", cfg, "--out", str(out)]) == 0
        lines = (out / "replicas.csv").read_text().strip().splitlines()
        assert lines[0] == "replica,horizon,n_jumps,n_sites,I_T,Q_T"
        assert len(lines) == 51
        first = lines[1].split(",")
        assert float(first[1]) == 10.0
        assert first[5] != ""  # mutual intersection column filled

    def test_green_and_regimes(self, tmp_path):
        cfg = write_config(tmp_path, {
            "command": "green", "seed": 5,
            "params": {"d": 1, "alpha": 0.5, "q": 2.0, "K": 500, "R": 8, "lam": 0.5}})
        out = tmp_path / "g"
        assert main(["--config", cfg, "--out", str(out)]) == 0
        lines = (out / "green_torus.csv").read_text().strip().splitlines()
        vals = [float(l.split(",")[1]) for l in lines[1:]]
        assert abs(sum(vals) - 2.0) < 1e-9  # row sum = 1/lam

        cfg2 = write_config(tmp_path, {
            "command": "regimes", "seed": 5,
            "params": {"cases": [{"d": 1, "alpha": 0.5, "q": 2.0},
                                 {"d": 3, "alpha": 2.0, "q": 2.0, "T": 1e4, "b_T": 1e2}]}},
            name="r.json")
        out2 = tmp_path / "r"
        assert main(["--config", cfg2, "--out", str(out2)]) == 0
        doc = json.loads((out2 / "regimes.json").read_text())
        assert doc["cases"][0]["regime"] == "critical"
        assert doc["cases"][1]["R_star"] == pytest.approx(100.0 ** (2 / 3))

    def test_variational_artifacts(self, tmp_path):
        cfg = write_config(tmp_path, {
            "command": "variational", "seed": 2,
            "params": {"d": 1, "alpha": 0.5, "q": 2.0, "K": 500,
                       "problem": "rho1", "R": 8, "lam": 0.5}})
        out = tmp_path / "v"
        assert main(["--config", cfg, "--out", str(out)]) == 0
        doc = json.loads((out / "rho1.json").read_text())
        assert doc["converged"] is True
        assert (out / "rho1_optimizer.csv").exists()
        assert (out / "rho1_trace.csv").exists()


class TestDeterminism:
    def test_artifact_pipeline_reruns_identically(self, tmp_path):
        mism, n = determinism_check(str(tmp_path), 42)
        assert n >= 10
        assert mism == []

    def test_different_seeds_differ(self, tmp_path):
        from siltlab.cli import emit_artifact_pipeline

        a = emit_artifact_pipeline(str(tmp_path / "a"), 1)
        b = emit_artifact_pipeline(str(tmp_path / "b"), 2)
        replicas_a = [f for f in a if f.endswith("replicas.csv")][0]
        replicas_b = [f for f in b if f.endswith("replicas.csv")][0]
        assert open(replicas_a).read() != open(replicas_b).read()
