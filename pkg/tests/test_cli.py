import csv
import json
import subprocess
import sys

import numpy as np
import pytest

import kinkstats.scaling as scaling
from kinkstats import SweepTable, __version__, scaling_cumulant_ratio
from kinkstats.cli import main, parse_grid
from kinkstats.scaling import SweepRow


def read_csv(path):
    text = path.read_text()
    lines = text.split("\n")
    assert lines[0] == f"# kinkstats {__version__}"
    config = json.loads(lines[1].removeprefix("# config: "))
    rows = list(csv.reader(lines[2:-1]))
    return text, config, rows


class TestDistribution:
    def test_files_and_header(self, tmp_path, capsys):
        assert main(["distribution", "--n", "40", "--tau", "1", "10", "--out", str(tmp_path)]) == 0
        text, config, rows = read_csv(tmp_path / "distribution_N40_tau10.csv")
        assert rows[0] == ["n", "P_exact", "P_normal"]
        assert [int(r[0]) for r in rows[1:]] == list(range(41))
        assert config["n"] == 40 and config["tau"] == [1.0, 10.0]
        assert "\r" not in text
        side = json.loads((tmp_path / "distribution_N40_tau10.json").read_text())
        assert {"kappa1", "kappa2", "tv_distance", "regime", "flags", "version"} <= set(side)
        assert sum(float(r[1]) for r in rows[1:]) == pytest.approx(1.0, abs=1e-12)
        assert "kappa1=" in capsys.readouterr().out

    def test_rerun_is_byte_identical(self, tmp_path):
        argv = ["distribution", "--n", "20", "--tau", "3", "--out", str(tmp_path)]
        assert main(argv) == 0
        first = [(p.name, p.read_bytes()) for p in sorted(tmp_path.iterdir())]
        assert main(argv) == 0
        assert [(p.name, p.read_bytes()) for p in sorted(tmp_path.iterdir())] == first

    def test_default_quench_times(self, tmp_path, capsys):
        assert main(["distribution", "--method", "lz", "--out", str(tmp_path)]) == 0
        names = sorted(p.name for p in tmp_path.glob("*.csv"))
        assert names == ["distribution_N400_tau10.csv", "distribution_N400_tau100.csv",
                         "distribution_N400_tau1000.csv"]
        slow = json.loads((tmp_path / "distribution_N400_tau1000.json").read_text())
        assert slow["regime"] == "near-onset" and slow["flags"]
        assert "warning" in capsys.readouterr().err

    def test_paired(self, tmp_path):
        assert main(["distribution", "--n", "20", "--tau", "1", "--pairing", "paired",
                     "--method", "lz", "--out", str(tmp_path)]) == 0
        _, _, rows = read_csv(tmp_path / "distribution_N20_tau1.csv")
        assert all(float(r[1]) == 0 for r in rows[1:] if int(r[0]) % 2)


class TestSweep:
    def test_sweep_and_cache_resume(self, tmp_path, monkeypatch):
        cache = tmp_path / "cache"
        argv = ["sweep", "--n", "40", "--tau-grid", "1:100:6", "--qmax", "3",
                "--cache-dir", str(cache), "--out", str(tmp_path)]
        assert main(argv) == 0
        out = tmp_path / "sweep_N40_ode.csv"
        first = SweepTable.from_csv(out.read_text())
        assert len(first) == 6 and first.qmax == 3
        for path in sorted(cache.glob("*.json"))[:3]:
            path.unlink()
        calls = []
        real = scaling.compute_cell
        monkeypatch.setattr(scaling, "compute_cell",
                            lambda *a: calls.append(a[1]) or real(*a))
        assert main(argv) == 0
        assert len(calls) == 3
        again = SweepTable.from_csv(out.read_text())
        assert [r.kappa for r in again.rows] == [r.kappa for r in first.rows]

    def test_cache_dir_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("KINKSTATS_CACHE_DIR", str(tmp_path / "env-cache"))
        assert main(["sweep", "--n", "8", "--tau", "1", "2", "--method", "lz",
                     "--out", str(tmp_path)]) == 0
        assert len(list((tmp_path / "env-cache").glob("*.json"))) == 2

    def test_methods_diverge_at_fast_quench(self, tmp_path):
        for method in ("lz", "ode"):
            assert main(["sweep", "--n", "100", "--tau", "0.2", "100", "--method", method,
                         "--out", str(tmp_path)]) == 0
        lz = SweepTable.from_csv((tmp_path / "sweep_N100_lz.csv").read_text()).kappa(1)
        ode = SweepTable.from_csv((tmp_path / "sweep_N100_ode.csv").read_text()).kappa(1)
        assert abs(lz[0] / ode[0] - 1) > 0.05
        assert abs(lz[1] / ode[1] - 1) < 0.01

    def test_failure_exit_code(self, tmp_path, monkeypatch, capsys):
        def broken(*args):
            raise ArithmeticError("synthetic fault")

        monkeypatch.setattr(scaling, "compute_cell", broken)
        assert main(["sweep", "--n", "8", "--tau", "1", "--method", "lz",
                     "--out", str(tmp_path)]) == 1
        assert "synthetic fault" in capsys.readouterr().err


class TestFit:
    def write_table(self, path, taus, alpha=0.5):
        table = SweepTable()
        for tau in taus:
            table.add(SweepRow(400, float(tau), "ode", (2.0 * tau ** -alpha, tau ** -0.9)))
        path.write_text(table.to_csv({"synthetic": True}))

    def test_exact_power_law(self, tmp_path):
        src = tmp_path / "in.csv"
        self.write_table(src, np.geomspace(1, 1000, 10))
        assert main(["fit", "--input", str(src), "--out", str(tmp_path)]) == 0
        fit = json.loads((tmp_path / "fit_q1.json").read_text())
        assert fit["alpha"] == pytest.approx(0.5, abs=1e-12)
        assert fit["r_squared"] == pytest.approx(1.0, abs=1e-12)
        assert json.loads((tmp_path / "fit_q2.json").read_text())["alpha"] == \
            pytest.approx(0.9, abs=1e-12)
        assert fit["version"] == __version__ and "config" in fit

    def test_tau_range_filter(self, tmp_path):
        src = tmp_path / "in.csv"
        self.write_table(src, np.geomspace(0.5, 2000, 25))
        assert main(["fit", "--input", str(src), "--q", "1", "--tau-range", "2:200",
                     "--out", str(tmp_path)]) == 0
        fit = json.loads((tmp_path / "fit_q1.json").read_text())
        assert 2 <= fit["tau_range"][0] and fit["tau_range"][1] <= 200
        assert fit["n_points"] == sum(1 for t in np.geomspace(0.5, 2000, 25) if 2 <= t <= 200)

    def test_malformed_rejected_with_line(self, tmp_path, capsys):
        src = tmp_path / "in.csv"
        self.write_table(src, np.geomspace(1, 10, 6))
        lines = src.read_text().split("\n")
        lines[5] = "400,oops,ode,1,2,0"
        src.write_text("\n".join(lines))
        assert main(["fit", "--input", str(src), "--out", str(tmp_path)]) == 1
        assert "line 6" in capsys.readouterr().err

    def test_too_few_points(self, tmp_path, capsys):
        src = tmp_path / "in.csv"
        self.write_table(src, [1.0, 2.0])
        assert main(["fit", "--input", str(src), "--out", str(tmp_path)]) == 1
        assert "at least 5" in capsys.readouterr().err

    def test_missing_input(self, tmp_path, capsys):
        assert main(["fit", "--out", str(tmp_path)]) == 1
        assert "--input" in capsys.readouterr().err


class TestTheory:
    def test_values(self, tmp_path):
        assert main(["theory", "--out", str(tmp_path)]) == 0
        data = json.loads((tmp_path / "theory.json").read_text())
        assert data["adiabatic_onset"] == pytest.approx(2026.4, abs=0.05)
        entry = data["entries"][0]
        assert entry["mean"] == pytest.approx(4.5016, abs=5e-5)
        ratios = {int(q): v for q, v in entry["scaling_ratios"].items()}
        assert sorted(ratios) == list(range(1, 11))
        assert abs(ratios[10] - 0.01761) <= 5e-6
        assert abs(ratios[4] + 0.02154) <= 5e-6
        assert ratios[3] == scaling_cumulant_ratio(3)
        assert entry["binomial"]["p"] == pytest.approx(0.6960, abs=1e-4)

    def test_beyond_ten_rejected(self, tmp_path, capsys):
        assert main(["theory", "--qmax", "11", "--out", str(tmp_path)]) == 1
        assert "unsupported beyond q=10" in capsys.readouterr().err
        assert not (tmp_path / "theory.json").exists()


class TestModes:
    def test_dump(self, tmp_path):
        assert main(["modes", "--n", "12", "--tau", "5", "--method", "lz",
                     "--out", str(tmp_path)]) == 0
        _, _, rows = read_csv(tmp_path / "modes_N12_tau5_lz.csv")
        assert rows[0] == ["l", "k", "p"]
        assert [int(r[0]) for r in rows[1:]] == list(range(1, 7))
        assert float(rows[1][1]) == pytest.approx(np.pi / 12, rel=1e-16)


class TestConfig:
    def test_precedence(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"n": 20, "tau": [4.0], "method": "lz", "qmax": 2}))
        assert main(["sweep", "--config", str(cfg), "--n", "30", "--out", str(tmp_path)]) == 0
        _, config, rows = read_csv(tmp_path / "sweep_N30_lz.csv")
        assert config["n"] == 30 and config["tau"] == [4.0] and config["qmax"] == 2
        assert config["tau_grid"] is None
        assert rows[0] == ["N", "tau_Q", "method", "kappa1", "kappa2", "wall_time"]

    def test_unknown_key(self, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"spins": 20}))
        assert main(["theory", "--config", str(cfg), "--out", str(tmp_path)]) == 1
        assert "unknown config keys" in capsys.readouterr().err

    def test_both_tau_forms_rejected(self, tmp_path, capsys):
        assert main(["theory", "--tau", "1", "--tau-grid", "1:2:3", "--out", str(tmp_path)]) == 1
        assert "either" in capsys.readouterr().err

    @pytest.mark.parametrize("argv", [
        ["theory", "--n", "3"],
        ["theory", "--tau-grid", "1:2"],
        ["theory", "--tau", "-1"],
        ["sweep", "--tau", "1", "--abs-tol", "0.1"],
    ])
    def test_invalid_parameters(self, tmp_path, capsys, argv):
        assert main(argv + ["--out", str(tmp_path)]) == 1
        assert "error" in capsys.readouterr().err

    def test_grid(self):
        grid = parse_grid("2:200:25")
        assert len(grid) == 25 and grid[0] == 2.0 and grid[-1] == pytest.approx(200.0)
        np.testing.assert_allclose(np.diff(np.log(grid)), np.log(100) / 24)


def test_module_entry_point(tmp_path):
    result = subprocess.run([sys.executable, "-m", "kinkstats", "theory", "--n", "40",
                             "--out", str(tmp_path)], capture_output=True, text=True)
    assert result.returncode == 0, result.stderr
    assert (tmp_path / "theory.json").exists()
    version = subprocess.run([sys.executable, "-m", "kinkstats", "--version"],
                             capture_output=True, text=True)
    assert version.stdout.strip() == f"kinkstats {__version__}"
