import csv
import json
import subprocess
import sys

import pytest

from meanfield_cascade.cli import main
from meanfield_cascade.presets import PRESETS

SMALL = ["--set", "horizon=0.5", "--set", "replications=4", "--N", "10"]


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


class TestExitCodes:
    def test_missing_beta(self, tmp_path, capsys):
        assert main(["simulate", "--out", str(tmp_path)] + SMALL) == 2
        assert "beta" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path, capsys):
        assert main(["simulate", "--beta", "0.1", "--set", "colour=red", "--out", str(tmp_path)]) == 2
        assert "colour" in capsys.readouterr().err

    def test_unknown_nested_key(self, tmp_path):
        assert main(["simulate", "--beta", "0.1", "--set", "strategy.speed=3", "--out", str(tmp_path)]) == 2

    def test_bad_value(self, tmp_path):
        assert main(["simulate", "--beta", "0.1", "--set", "replications=abc", "--out", str(tmp_path)]) == 2

    def test_domain_error(self, tmp_path):
        assert main(["simulate", "--beta", "0.1", "--set", "initial.z0=-1", "--out", str(tmp_path)] + SMALL) == 2

    def test_bad_config_file(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text("{not json")
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
        assert main(["simulate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2

    def test_preset_command_mismatch(self, tmp_path):
        assert main(["solve-mkv", "--preset", "single-particle", "--out", str(tmp_path)]) == 2

    def test_runtime_error(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert main(["simulate", "--beta", "0.1", "--out", str(blocker / "sub")] + SMALL) == 3

    def test_bad_command(self):
        assert main(["explode"]) == 2


class TestOutputs:
    def test_simulate_outputs_and_manifest(self, tmp_path):
        assert main(["simulate", "--beta", "0.2", "--alpha", "0.5", "--seed", "7", "--out", str(tmp_path)] + SMALL) == 0
        rows = read_csv(tmp_path / "loss_curve.csv")
        assert rows[0] == ["t", "value", "stderr"] and len(rows) == 52
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["seed"] == 7 and man["config"]["alpha"] == 0.5
        assert set(man["versions"]) >= {"numpy", "scipy", "python"}
        assert "loss_curve.csv" in man["outputs"]
        plot = json.loads((tmp_path / "plot_loss_curve.json").read_text())
        assert len(plot["x"]) == len(plot["y"]) == 51

    def test_repeat_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        args = ["simulate", "--beta", "0.2", "--alpha", "0.5", "--seed", "3"] + SMALL
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b), "--workers", "2"]) == 0
        for name in ("loss_curve.csv", "survivors.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_precedence(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"beta": 0.3, "alpha": 0.2, "N": 12}))
        out = tmp_path / "o"
        assert main(["simulate", "--preset", "single-particle", "--config", str(cfg), "--alpha", "0.4",
                     "--set", "alpha=0.6", "--set", "horizon=0.2", "--set", "replications=3",
                     "--out", str(out)]) == 0
        man = json.loads((out / "manifest.json").read_text())
        assert man["config"]["beta"] == 0.3 and man["config"]["alpha"] == 0.6 and man["config"]["N"] == 12

    def test_dotted_set(self, tmp_path):
        assert main(["simulate", "--beta", "0.1", "--set", "strategy.kind=threshold", "--set", "strategy.theta=1.5",
                     "--out", str(tmp_path)] + SMALL) == 0
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["config"]["strategy"] == {"kind": "threshold", "theta": 1.5}

    def test_scaling(self, tmp_path):
        assert main(["scaling", "--regime", "negative", "--beta", "-0.5", "--alpha", "1", "--N", "10,20",
                     "--set", "replications=3", "--set", "horizon=2", "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "scaling.csv")
        assert rows[0] == ["N", "S_lower", "S_mid", "S_upper", "stderr", "reference"]
        assert [r[0] for r in rows[1:]] == ["10", "20"]
        assert float(rows[1][5]) == 4.0

    def test_scaling_needs_regime(self, tmp_path):
        assert main(["scaling", "--beta", "-0.5", "--out", str(tmp_path)]) == 2

    def test_solve_mkv_and_sweep(self, tmp_path):
        common = ["--beta", "0.5", "--alpha", "0.5", "--set", "horizon=1", "--set", "mc_paths=2000",
                  "--set", "tol=0"]
        assert main(["solve-mkv", "--out", str(tmp_path / "m")] + common) == 0
        rep = json.loads((tmp_path / "m" / "picard_report.json").read_text())
        assert rep["converged"]
        assert main(["sweep-eps", "--set", "epsilons=[0.1,0.01]", "--out", str(tmp_path / "s")] + common) == 0
        rep = json.loads((tmp_path / "s" / "sweep_report.json").read_text())
        assert rep["monotone"] and len(rep["gaps_to_minimal"]) == 2
        assert (tmp_path / "s" / "loss_curve_eps_0.01.csv").exists()
        assert main(["solve-reg", "--set", "epsilon=0.05", "--out", str(tmp_path / "r")] + common) == 0

    def test_analytics_without_beta(self, tmp_path):
        assert main(["analytics", "--alpha", "0.5", "--set", "eps=0.25", "--out", str(tmp_path)]) == 0
        doc = json.loads((tmp_path / "analytics.json").read_text())
        assert doc["scaling_constants"]["theta_star"] == pytest.approx(1.2616696, abs=1e-6)
        assert "T_alpha_eps" in doc


def test_presets_listed(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    for name in PRESETS:
        assert name in out


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_resolve(name):
    from meanfield_cascade.cli import build_parser, resolve_config

    cmd = PRESETS[name][0]
    args = build_parser().parse_args([cmd, "--preset", name])
    cfg = resolve_config(cmd, args)
    assert cfg["beta"] is not None or cmd == "analytics"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "meanfield_cascade", "analytics", "--alpha", "0",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["alpha"] == 0.0
