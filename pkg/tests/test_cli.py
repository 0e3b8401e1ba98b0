import json

import pytest

from spurgap.cli import main

TINY = {
    "mu1": [0.5, 1.0],
    "mu2": [0.5, 1.0],
    "zeta": [0.95],
    "eps_inf": [0.01],
    "threat": ["linf", "l2"],
    "pipeline": ["theory"],
}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(TINY))
    return path


class TestSolveCommand:
    def test_emits_solution_json(self, capsys):
        code = main(["solve", "--mu1", "1.0", "--mu2", "1.0",
                     "--zeta", "0.95", "--eps", "0.01", "--threat", "linf"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["tau"]["value"] == pytest.approx(0.757729964918072, abs=1e-12)
        assert payload["tau"]["residual"] <= 1e-10
        assert payload["c"]["residual"] <= 1e-10
        assert payload["eps_applied"] == 0.01
        assert "gap" in payload and "candidates" in payload["c"]

    def test_l2_budget_scaling_reported(self, capsys):
        main(["solve", "--mu1", "1.0", "--mu2", "1.0", "--zeta", "0.9",
              "--eps", "0.01", "--threat", "l2"])
        payload = json.loads(capsys.readouterr().out)
        assert payload["eps_applied"] == pytest.approx(0.01 * 2**0.5)

    def test_invalid_point_is_config_error(self, capsys):
        code = main(["solve", "--mu1", "-1.0", "--mu2", "1.0", "--zeta", "0.9"])
        assert code == 2


class TestSweepCommand:
    def test_writes_grids_and_manifest(self, tiny_config, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["sweep", "--config", str(tiny_config), "--out", str(out)])
        assert code == 0
        assert (out / "manifest.json").exists()
        assert len(list(out.glob("gap_theory_*.csv"))) == 2
        assert "wrote 2 grid files" in capsys.readouterr().out

    def test_overrides(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        code = main(["sweep", "--config", str(tiny_config), "--out", str(out),
                     "--threat", "linf", "--seed", "9", "--jobs", "2"])
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert [f["threat"] for f in manifest["files"]] == ["linf"]
        assert manifest["config"]["seed"] == 9

    def test_missing_config_file(self, tmp_path, capsys):
        code = main(["sweep", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "out")])
        assert code == 2
        assert "configuration error" in capsys.readouterr().err

    def test_bad_config_contents(self, tmp_path, capsys):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"mu1": []}))
        code = main(["sweep", "--config", str(path),
                     "--out", str(tmp_path / "out")])
        assert code == 2

    def test_unknown_pipeline_override(self, tiny_config, tmp_path):
        code = main(["sweep", "--config", str(tiny_config),
                     "--out", str(tmp_path / "out"), "--pipeline", "magic"])
        assert code == 2


class TestRenderCommand:
    def test_renders_svg(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        main(["sweep", "--config", str(tiny_config), "--out", str(out)])
        csv_path = next(out.glob("gap_theory_*.csv"))
        code = main(["render", str(csv_path)])
        assert code == 0
        svg = csv_path.with_suffix(".svg")
        assert svg.exists()
        head = svg.read_text()[:600]
        assert "<svg" in head

    def test_render_to_directory(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        main(["sweep", "--config", str(tiny_config), "--out", str(out)])
        figures = tmp_path / "figs"
        csvs = sorted(out.glob("gap_theory_*.csv"))
        code = main(["render", *map(str, csvs), "--out", str(figures)])
        assert code == 0
        assert len(list(figures.glob("*.svg"))) == 2

    def test_render_missing_file(self, tmp_path, capsys):
        code = main(["render", str(tmp_path / "missing.csv")])
        assert code == 1


class TestValidateCommand:
    def test_quick_pass(self, tmp_path, capsys):
        out = tmp_path / "report"
        code = main(["validate", "--configs", "3", "--samples", "50000",
                     "--seed", "1", "--out", str(out)])
        assert code == 0
        output = capsys.readouterr().out
        assert "RESULT: PASS" in output
        report = (out / "agreement_report.csv").read_text().splitlines()
        assert report[0].startswith("kind,family,detail,closed")
        assert len(report) > 200  # comparisons + consistency rows

    def test_corrupted_phi_fails(self, monkeypatch, capsys):
        import spurgap.theory as theory

        real_phi = theory.phi

        def flipped(c, m1, m2, eps=0.0, n1=0.0, n2=0.0, n3=0.0):
            return -real_phi(c, m1, m2, eps, n1, n2, n3)

        monkeypatch.setattr(theory, "phi", flipped)
        code = main(["validate", "--configs", "3", "--samples", "50000",
                     "--seed", "1"])
        assert code == 1
        assert "FAIL" in capsys.readouterr().out
