import json
import os
from dataclasses import replace

import numpy as np
import pytest

from lnaepi import ConfigError
from lnaepi.cli import (cmd_compare, cmd_fit, cmd_simulate, main, read_chain,
                        summary_from_chain_file)
from lnaepi.config import PRESETS, load_config, parse_config_text, read_data

D1_TEXT = """\
[run]
label = tiny
seed = 7

[model]
name = sir
npop = 120
x0 = 119, 1
beta = 0.00091
gamma = 0.082

[obs]
kind = binomial
lambda = 0.8

[priors]
beta = gamma(10, 1e4)
gamma = gamma(10, 100)
lam = uniform(0, 1)

[inference]
scheme = ffmh
iterations = 150

[simulate]
t_end = 80
grid = 10
"""


def small(name, iterations=150):
    return replace(load_config(name), iterations=iterations)


class TestPresets:
    def test_d1(self):
        cfg = load_config("d1")
        assert cfg.x0 == (119, 1) and cfg.npop == 120
        assert (cfg.beta, cfg.gamma, cfg.lam) == (0.00091, 0.082, 0.8)
        assert (cfg.t_end, cfg.grid) == (80, 10)

    def test_d2(self):
        cfg = load_config("d2")
        assert cfg.x0 == (359, 1) and cfg.gamma == 0.246

    def test_d3(self):
        cfg = load_config("d3")
        assert cfg.x0 == (1180, 20)
        assert (cfg.beta, cfg.gamma) == (0.00018, 0.164)

    def test_opm_data(self):
        cfg = load_config("opm-sirs-bin")
        t, y = read_data(cfg.data_path)
        np.testing.assert_array_equal(t, np.arange(1, 9))
        np.testing.assert_array_equal(y, [1024, 1414, 958, 540, 594, 557, 587, 1029])
        assert cfg.unit == "year"

    @pytest.mark.parametrize("name", [p for p in PRESETS if p.startswith("opm")])
    def test_opm_constants_and_priors(self, name):
        cfg = load_config(name)
        assert cfg.npop == 40_000 and cfg.x0 == (38600, 1400) and cfg.log_beta0 == -10
        pri = cfg.prior_spec()
        assert (pri["gamma"].mean, pri["gamma"].sd) == (0.0, 0.5)
        assert (pri["sigma_beta"].mean, pri["sigma_beta"].sd) == (1.0, 1.0)
        assert (pri["lam"].lo, pri["lam"].hi) == (0.0, 1.0)
        if "sirs" in name:
            assert (pri["kappa"].mean, pri["kappa"].sd) == (0.0, 1.0)
        else:
            assert "kappa" not in pri
        if "negbin" in name:
            assert (pri["phi"].mean, pri["phi"].sd) == (0.0, 1.0)

    @pytest.mark.parametrize("name", PRESETS)
    def test_all_presets_parse(self, name):
        cfg = load_config(name)
        assert cfg.label == name
        cfg.params()


class TestConfigValidation:
    def test_round_trip_text(self):
        cfg = parse_config_text(D1_TEXT)
        again = parse_config_text(cfg.to_text())
        assert again.to_dict() | {"source": None} == cfg.to_dict() | {"source": None}

    def test_error_has_line_number(self):
        bad = D1_TEXT.replace("npop = 120", "npop = lots")
        with pytest.raises(ConfigError, match=r"my\.cfg:7: \[model\] npop"):
            parse_config_text(bad, source="my.cfg")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match=":9:"):
            parse_config_text(D1_TEXT.replace("x0 = 119, 1", "x0 = 119, 1\ncolour = red"))

    def test_rho_only_with_cpmmh(self):
        with pytest.raises(ConfigError, match="rho"):
            parse_config_text(D1_TEXT.replace("iterations = 150", "iterations = 150\nrho = 0.9"))

    def test_particles_only_with_pseudo_marginal(self):
        with pytest.raises(ConfigError, match="particles"):
            parse_config_text(D1_TEXT.replace("iterations = 150",
                                              "iterations = 150\nparticles = 10"))

    def test_cpmmh_needs_rho(self):
        with pytest.raises(ConfigError, match="rho"):
            parse_config_text(D1_TEXT.replace("scheme = ffmh", "scheme = cpmmh\nparticles = 10"))

    def test_missing_data_file(self, tmp_path):
        text = D1_TEXT.split("[simulate]")[0] + "[data]\npath = nowhere.csv\n"
        with pytest.raises(ConfigError, match="not found"):
            parse_config_text(text, base_dir=str(tmp_path))

    def test_data_xor_simulate(self):
        with pytest.raises(ConfigError, match="exactly one"):
            parse_config_text(D1_TEXT.split("[simulate]")[0])

    def test_grid_must_divide(self):
        with pytest.raises(ConfigError, match="divide"):
            parse_config_text(D1_TEXT.replace("grid = 10", "grid = 7"))

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            load_config("d9")

    def test_bad_data_files(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("time,count\n1,2\n")
        with pytest.raises(ConfigError, match="header"):
            read_data(str(p))
        p.write_text("t,y\n1,2\n3,4\n")
        with pytest.raises(ConfigError, match="equally spaced"):
            read_data(str(p))


class TestCommands:
    def test_simulate_outputs(self, tmp_path):
        cfg = load_config("d1")
        y = cmd_simulate(cfg, str(tmp_path), seed=3)
        t, y_file = read_data(str(tmp_path / "data.csv"))
        np.testing.assert_array_equal(y_file, y)
        truth = np.loadtxt(tmp_path / "truth.csv", delimiter=",", skiprows=1)
        assert truth.shape == (8, 5)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["seed"] == 3 and manifest["command"] == "simulate"

    def test_fit_summary_rows(self, tmp_path):
        cmd_fit(small("d1"), str(tmp_path), seed=1)
        rows = (tmp_path / "summary.csv").read_text().strip().splitlines()
        assert [r.split(",")[0] for r in rows[1:]] == ["beta", "gamma", "lam", "R0"]

    def test_chain_file_round_trip(self, tmp_path):
        cmd_fit(small("d1"), str(tmp_path), seed=1)
        names, values = read_chain(str(tmp_path / "draws.csv"))
        assert names == ["beta", "gamma", "lam", "R0"]
        elapsed = float(1.0)
        again = summary_from_chain_file(str(tmp_path / "draws.csv"), elapsed)
        # summary.csv used the chain's own elapsed time, so compare mean, sd, ess
        written = np.genfromtxt(tmp_path / "summary.csv", delimiter=",", skip_header=1,
                                usecols=(1, 2, 3))
        np.testing.assert_array_equal(np.array([r[1:4] for r in again]), written)

    def test_manifest_rerun_is_bit_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir(), b.mkdir()
        cmd_fit(small("d1"), str(a), seed=5)
        cmd_fit(load_config(str(a / "manifest.json")), str(b), seed=5)
        assert (a / "draws.csv").read_bytes() == (b / "draws.csv").read_bytes()

    def test_fit_with_paths_writes_bands(self, tmp_path):
        cfg = replace(small("d1", 100), sample_paths=True, path_thin=10)
        cmd_fit(cfg, str(tmp_path), seed=2)
        header = (tmp_path / "bands.csv").read_text().splitlines()[0].split(",")
        assert header == ["t", "S_mean", "S_lo", "S_hi", "I_mean", "I_lo", "I_hi"]

    def test_compare_single(self, tmp_path):
        results, best = cmd_compare([small("d1")], str(tmp_path), seed=1)
        assert best == "d1" and len(results) == 1
        rows = (tmp_path / "dic.csv").read_text().strip().splitlines()
        assert len(rows) == 2 and rows[1].endswith(",1")

    def test_compare_identical_configs(self, tmp_path):
        a = small("d1")
        results, _ = cmd_compare([a, replace(a, label="d1-again")], str(tmp_path), seed=4)
        assert results[0]["dic"] == results[1]["dic"]

    def test_compare_needs_distinct_labels(self, tmp_path):
        with pytest.raises(ConfigError):
            cmd_compare([small("d1"), small("d1")], str(tmp_path), seed=1)


class TestMain:
    def test_fit_exit_zero(self, tmp_path, capsys):
        code = main(["fit", "--config", "d1", "--iterations", "50", "--seed", "1",
                     "--out", str(tmp_path)])
        assert code == 0
        assert json.loads(capsys.readouterr().out)["iterations"] == 50

    def test_config_error_exit_two(self, tmp_path, capsys):
        p = tmp_path / "bad.cfg"
        p.write_text(D1_TEXT.replace("scheme = ffmh", "scheme = gibbs"))
        assert main(["fit", "--config", str(p), "--out", str(tmp_path)]) == 2
        assert "bad.cfg:" in capsys.readouterr().err

    def test_numerical_failure_exit_three(self, tmp_path, capsys):
        text = D1_TEXT.replace("[model]\nname = sir\nnpop = 120\nx0 = 119, 1\nbeta = 0.00091\n",
                               "[model]\nname = sir-tvbeta\nnpop = 1000000\nx0 = 900000, 100000\n"
                               "log_beta0 = 700\nsigma_beta = 1\n")
        text = text.replace("beta = gamma(10, 1e4)\n", "").replace("lam = uniform(0, 1)\n", "")
        p = tmp_path / "blowup.cfg"
        p.write_text(text)
        assert main(["fit", "--config", str(p), "--out", str(tmp_path)]) == 3
        assert "numerical failure" in capsys.readouterr().err

    def test_pf_variance(self, tmp_path, capsys):
        code = main(["pf-variance", "--config", "d1", "--particles", "10", "40", "--reps", "20",
                     "--seed", "3", "--out", str(tmp_path)])
        assert code == 0
        rows = np.genfromtxt(tmp_path / "pf_variance.csv", delimiter=",", skip_header=1)
        assert rows.shape == (2, 4)
        assert rows[0, 3] > rows[1, 3]

    def test_simulate_subcommand(self, tmp_path):
        assert main(["simulate", "--config", "d3", "--seed", "1", "--out", str(tmp_path)]) == 0
        assert os.path.exists(tmp_path / "events.csv")

    def test_bad_seed(self, tmp_path):
        assert main(["fit", "--config", "d1", "--seed", "-1", "--out", str(tmp_path)]) == 2
