import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from speedscale import ConfigError, arrival_pmf, mixture_for_variance
from speedscale.cli import main
from speedscale.harness import (
    DEFAULTS,
    coupled_bernoulli_levels,
    coupling_parameters,
    parse_config_text,
    read_long_csv,
    render_svg,
    resolve_config,
    run_experiment,
    write_long_csv,
    write_summary,
)


class TestConfig:
    def test_defaults(self):
        cfg = resolve_config()
        assert cfg["x_max"] == 60.0 and cfg["stages"] == 4 and cfg["replications"] == 100
        assert cfg["delta"] == pytest.approx(1 / 24)

    def test_full_scale(self):
        assert resolve_config(None, "variance-study", full=True)["replications"] == 1000
        assert resolve_config(None, "tdpia-run", full=True)["stages"] == 20

    def test_key_value_text(self):
        data = parse_config_text("# comment\nx_max = 30\nkappas = 1, 2,4\ndelta=1/24\n")
        cfg = resolve_config(data)
        assert cfg["x_max"] == 30.0 and cfg["kappas"] == [1.0, 2.0, 4.0]
        assert cfg["delta"] == pytest.approx(1 / 24)

    def test_json_text(self):
        cfg = resolve_config(parse_config_text('{"stages": 2, "mc_points": [5]}'))
        assert cfg["stages"] == 2 and cfg["mc_points"] == [5.0]

    @pytest.mark.parametrize("text", ["{not json", "[1, 2]", "x_max 30"])
    def test_bad_text(self, text):
        with pytest.raises(ConfigError):
            parse_config_text(text)

    @pytest.mark.parametrize("over", [{"bogus": 1}, {"stages": 1.5}, {"x_max": "abc"}, {"x_max": -1}])
    def test_bad_values(self, over):
        with pytest.raises(ConfigError):
            resolve_config(over)

    def test_defaults_not_mutated(self):
        cfg = resolve_config({"kappas": [1, 2]})
        cfg["kappas"].append(3.0)
        assert DEFAULTS["kappas"][:2] == [1.0, 2.0] and len(DEFAULTS["kappas"]) == 8


class TestCoupling:
    def test_single_level(self):
        order, rz, rho = coupling_parameters([1.0])
        assert rz[0] == pytest.approx(0.5, abs=1e-15) and rho[0] == rz[0]

    def test_two_levels(self):
        order, rz, rho = coupling_parameters([1.0, 32.0])
        assert list(order) == [1, 0]
        r1 = 9 / 328
        assert rho[0] == pytest.approx(r1, abs=1e-15)
        assert rho[1] == pytest.approx((0.5 - r1) / (1 - r1), abs=1e-15)

    def test_marginals_are_exact(self):
        kappas = DEFAULTS["kappas"]
        order, rz, rho = coupling_parameters(kappas)
        # P{Z_j = 1} = 1 - prod_{i <= j} (1 - rho_i)
        marg = 1.0 - np.cumprod(1.0 - rho)
        np.testing.assert_allclose(marg, rz, atol=1e-12, rtol=0)
        for j, i in enumerate(order):
            assert rz[j] == pytest.approx(mixture_for_variance(kappas[i]).rho_z, abs=1e-15)

    @pytest.mark.parametrize("kappas", [[], [0.5, 2.0], [2.0, 1.0], [1.0, 1.0]])
    def test_rejects_bad_levels(self, kappas):
        with pytest.raises(ConfigError):
            coupling_parameters(kappas)

    def test_monotone_and_shared(self):
        cd = coupled_bernoulli_levels(DEFAULTS["kappas"], np.random.default_rng(1), 20_000)
        assert cd.monotone()
        z = cd.z[cd.order].astype(int)
        assert np.all(z[1:] >= z[:-1])
        a = [cd.arrivals(i) for i in range(len(cd.kappas))]
        same = ~cd.b
        for row in a[1:]:
            np.testing.assert_array_equal(row[same], a[0][same])

    def test_marginal_variances(self):
        kappas = DEFAULTS["kappas"]
        n = 1_000_000
        cd = coupled_bernoulli_levels(kappas, np.random.default_rng(2024), n)
        for i, k in enumerate(kappas):
            a = cd.arrivals(i)
            target = mixture_for_variance(k).variance
            # standard error of the sample variance from the fourth central moment
            d = a - a.mean()
            se = math.sqrt((np.mean(d**4) - np.mean(d**2) ** 2) / n)
            assert abs(a.var(ddof=1) - target) <= 3 * se, (k, a.var(), target, se)

    def test_indices_on_level_lattice(self):
        kappas = [1.0, 2.0]
        cd = coupled_bernoulli_levels(kappas, np.random.default_rng(3), 1000)
        for i, k in enumerate(kappas):
            pmf = arrival_pmf(mixture_for_variance(k))
            np.testing.assert_allclose(cd.arrival_idx(i, pmf) * pmf.delta, cd.arrivals(i), rtol=1e-12)


class TestOutput:
    def test_csv_roundtrip(self, tmp_path):
        p = tmp_path / "a.csv"
        write_long_csv(p, [(0.0, 1.5, "s"), (1.0, 1e-20, "s"), (0.5, -2.0, "t")])
        text = p.read_text()
        assert text.splitlines()[0] == "x,value,series"
        data = read_long_csv(p)
        np.testing.assert_array_equal(data["s"][1], [1.5, 1e-20])

    def test_summary_types(self, tmp_path):
        p = tmp_path / "s.csv"
        write_summary(p, {"n": np.int64(3), "ok": True, "v": 0.25, "name": "x"})
        assert p.read_text().splitlines() == ["key,value", "n,3", "ok,1", "v,0.25", "name,x"]

    def test_svg(self, tmp_path):
        p = tmp_path / "a.csv"
        write_long_csv(p, [(i, i * i, "sq") for i in range(5)] + [(i, -i, "neg") for i in range(5)])
        render_svg(p, tmp_path / "a.svg", title="t")
        svg = (tmp_path / "a.svg").read_text()
        assert svg.startswith("<svg") and svg.count("<polyline") == 2


class TestRunExperiment:
    def test_fluid_eval_outputs(self, tmp_path):
        m = run_experiment("fluid-eval", {"x_max": 4.0}, 0, str(tmp_path), svg=True)
        assert set(os.listdir(tmp_path)) == {"manifest.json", "fluid_eval.csv", "summary.csv", "fluid_eval.svg"}
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["experiment"] == "fluid-eval" and man["master_seed"] == 0
        assert man["config"]["x_max"] == 4.0 and m.outputs == man["outputs"]
        data = read_long_csv(tmp_path / "fluid_eval.csv")
        x, v = data["K_star"]
        assert v[x == 4.0][0] == pytest.approx(38 / 3, rel=1e-15)

    def test_unknown_experiment(self, tmp_path):
        with pytest.raises(ConfigError):
            run_experiment("nope", None, 0, str(tmp_path))

    def test_via_convergence_traces(self, tmp_path):
        run_experiment("via-convergence", {"trace_iters": 30}, 0, str(tmp_path))
        data = read_long_csv(tmp_path / "via_convergence.csv")
        assert set(data) == {"V0=0", "V0=K*"}
        assert len(data["V0=0"][0]) <= 30

    def test_small_variance_study_deterministic(self, tmp_path):
        cfg = {"replications": 3, "stages": 2, "steps_per_stage": 2000, "kappas": [1, 4], "x_max": 10}
        run_experiment("variance-study", cfg, 11, str(tmp_path / "a"), threads=1)
        run_experiment("variance-study", cfg, 11, str(tmp_path / "b"), threads=2)
        for f in ("variance_study.csv", "summary.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


class TestCli:
    def test_success(self, tmp_path, capsys):
        assert main(["fluid-eval", "--out", str(tmp_path), "--config", _write(tmp_path, "x_max=2")]) == 0
        assert "fluid-eval" in capsys.readouterr().out

    def test_config_error_exit_2(self, tmp_path):
        assert main(["fluid-eval", "--out", str(tmp_path), "--config", _write(tmp_path, "nope=1")]) == 2
        assert main(["fluid-eval", "--out", str(tmp_path), "--config", str(tmp_path / "missing")]) == 2

    def test_usage_error_exit_2(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["not-an-experiment", "--out", str(tmp_path)])
        assert exc.value.code == 2
        with pytest.raises(SystemExit) as exc:
            main(["fluid-eval", "--out", str(tmp_path), "--seed", "-1"])
        assert exc.value.code == 2

    def test_numeric_failure_exit_1(self, tmp_path):
        # ground-truth value iteration capped at two sweeps cannot converge
        cfg = _write(tmp_path, "via_max_iters=2")
        assert main(["policy-compare", "--out", str(tmp_path / "o"), "--config", cfg]) == 1

    def test_console_script(self, tmp_path):
        r = subprocess.run([sys.executable, "-m", "speedscale.cli", "fluid-eval", "--out", str(tmp_path),
                            "--seed", "0x10"], capture_output=True, text=True)
        assert r.returncode == 0, r.stderr
        assert json.loads((tmp_path / "manifest.json").read_text())["master_seed"] == 16


def _write(tmp_path, text):
    p = tmp_path / "cfg.txt"
    p.write_text(text)
    return str(p)
