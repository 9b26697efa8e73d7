"""Experiment pipeline: configs, task generation, the five-method run,
output files, figure rendering, and the command-line entry point."""

import json
import os

import numpy as np
import pytest

from lgdkit import (
    DiagonalGaussian,
    ExperimentConfig,
    IsotropicGaussian,
    SoftplusGaussian,
    config_from_dict,
    generate_tasks,
    load_tasks,
    preset_config,
    run_experiment,
)
from lgdkit.cli import main
from lgdkit.harness import (
    METHODS,
    config_to_dict,
    read_results_csv,
    write_results_csv,
    MethodRow,
)
from lgdkit.metalearn import CurvePoint
from lgdkit.svg import render_curves

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


def _tiny_overrides() -> dict:
    return {
        "d_x": 3,
        "n_tasks": 6,
        "train_tasks": 3,
        "n_total": 30,
        "n_train_grid": [2, 8],
        "burn": 30,
        "keep": 60,
        "meta_steps": 3,
    }


class TestPresets:
    def test_isotropic(self):
        cfg = preset_config("isotropic")
        assert isinstance(cfg.prior, IsotropicGaussian)
        assert cfg.prior.sigma2 == 0.1
        assert (cfg.burn, cfg.keep, cfg.eta) == (500, 5000, 9e-4)
        assert cfg.eta_clamp == (1e-7, 1.2e-3)
        assert cfg.input_scale == 1.0
        assert cfg.n_train_grid == (1, 2, 5, 10, 20, 50, 100)
        assert cfg.n_v == 400

    def test_softplus(self):
        cfg = preset_config("softplus")
        assert isinstance(cfg.prior, SoftplusGaussian)
        assert (cfg.prior.alpha, cfg.prior.beta, cfg.prior.gamma) == (1.0, 10.0, 0.1)
        assert cfg.input_scale == 10.0
        assert (cfg.burn, cfg.keep, cfg.eta) == (5000, 50000, 1e-4)
        assert cfg.eta_clamp == (1e-7, 1e-4)

    def test_diagonal_variances_sampled_from_seed(self):
        a = preset_config("diagonal", base_seed=3)
        b = preset_config("diagonal", base_seed=3)
        c = preset_config("diagonal", base_seed=4)
        assert isinstance(a.prior, DiagonalGaussian)
        np.testing.assert_array_equal(a.prior.variances, b.prior.variances)
        assert not np.array_equal(a.prior.variances, c.prior.variances)
        assert a.prior.variances.shape == (10,)
        assert np.all(a.prior.variances >= 0.05) and np.all(a.prior.variances <= 0.5)

    def test_unknown_preset(self):
        with pytest.raises(ValueError, match="unknown experiment preset"):
            config_from_dict({"experiment": "laplace"})


class TestConfigFromDict:
    def test_overrides_win_over_preset(self):
        cfg = config_from_dict({"experiment": "isotropic", "keep": 123, "n_tasks": 9, "train_tasks": 4})
        assert cfg.keep == 123 and cfg.n_tasks == 9 and cfg.train_tasks == 4
        assert cfg.burn == 500  # untouched preset value

    def test_explicit_prior_without_preset(self):
        cfg = config_from_dict(
            {"prior": {"kind": "isotropic", "sigma2": 0.25}, "d_x": 4, "n_total": 40, "n_train_grid": [1, 5]}
        )
        assert cfg.prior.sigma2 == 0.25 and cfg.d_x == 4

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            config_from_dict({"experiment": "isotropic", "bogus": 1, "wat": 2})

    def test_prior_required(self):
        with pytest.raises(ValueError, match='"prior"'):
            config_from_dict({"n_tasks": 5})

    def test_diagonal_variances_must_match_dimension(self):
        with pytest.raises(ValueError, match="variances but d_x"):
            config_from_dict(
                {"prior": {"kind": "diagonal", "variances": [0.1, 0.2]}, "d_x": 3}
            )

    def test_round_trip_through_dict(self):
        cfg = preset_config("diagonal", base_seed=7, **_tiny_overrides())
        back = config_from_dict(config_to_dict(cfg))
        assert back == cfg

    def test_validation(self):
        base = {"prior": {"kind": "isotropic", "sigma2": 0.1}}
        with pytest.raises(ValueError, match="strictly increasing"):
            config_from_dict({**base, "n_train_grid": [5, 2]})
        with pytest.raises(ValueError, match="leaves no validation rows"):
            config_from_dict({**base, "n_total": 50, "n_train_grid": [1, 50]})
        with pytest.raises(ValueError, match="train_tasks"):
            config_from_dict({**base, "n_tasks": 5, "train_tasks": 5})
        with pytest.raises(ValueError, match="unknown methods"):
            config_from_dict({**base, "methods": ["plain_gd", "sgld"]})
        with pytest.raises(ValueError, match="meta_lgd requires"):
            config_from_dict({**base, "train_tasks": 0})
        config_from_dict({**base, "train_tasks": 0, "methods": ["plain_gd"]})

    def test_fast_variant(self):
        cfg = preset_config("isotropic")
        fast = cfg.fast_variant()
        assert fast.keep == cfg.keep // 5
        assert fast.n_tasks == cfg.train_tasks + min(cfg.eval_tasks, 50)
        assert fast.burn == cfg.burn


class TestGenerateTasks:
    def test_shapes_and_split(self):
        cfg = preset_config("isotropic", n_tasks=3, train_tasks=1, n_total=120)
        tasks = generate_tasks(cfg)
        assert len(tasks) == 3
        for t in tasks:
            assert t.X.shape == (100, 10) and t.Xv.shape == (20, 10)
            assert t.ground_truth.shape == (10,)

    def test_prefix_stability(self):
        cfg = preset_config("isotropic", base_seed=5, n_tasks=5, train_tasks=1, n_total=110)
        five = generate_tasks(cfg, count=5)
        three = generate_tasks(cfg, count=3)
        for a, b in zip(three, five):
            np.testing.assert_array_equal(a.X, b.X)
            np.testing.assert_array_equal(a.y, b.y)
            np.testing.assert_array_equal(a.Xv, b.Xv)
            np.testing.assert_array_equal(a.yv, b.yv)
            np.testing.assert_array_equal(a.ground_truth, b.ground_truth)

    def test_seed_changes_tasks(self):
        a = generate_tasks(preset_config("isotropic", base_seed=1, n_tasks=2, train_tasks=1))
        b = generate_tasks(preset_config("isotropic", base_seed=2, n_tasks=2, train_tasks=1))
        assert not np.array_equal(a[0].X, b[0].X)

    def test_ground_truth_variance_matches_prior(self):
        # 250 tasks x 10 coordinates of N(0, 0.1) draws: the pooled sample
        # variance concentrates within 10% (about 3.5 sigma)
        cfg = preset_config("isotropic", base_seed=0, n_tasks=250)
        W = np.stack([t.ground_truth for t in generate_tasks(cfg)])
        pooled = float(W.ravel().var(ddof=1))
        assert abs(pooled / 0.1 - 1.0) <= 0.10

    def test_linear_relation_with_noise(self):
        cfg = preset_config("isotropic", base_seed=2, n_tasks=2, train_tasks=1, noise_std=0.0)
        for t in generate_tasks(cfg):
            np.testing.assert_allclose(t.y, t.X @ t.ground_truth, rtol=1e-12)
            np.testing.assert_allclose(t.yv, t.Xv @ t.ground_truth, rtol=1e-12)


class TestRunExperiment:
    def test_tiny_run_outputs(self, tmp_path):
        cfg = preset_config("isotropic", base_seed=1, **_tiny_overrides())
        out = tmp_path / "exp"
        result = run_experiment(cfg, out_dir=str(out))
        assert [r.method for r in result.rows] == list(METHODS)
        for row in result.rows:
            assert [p.n_train for p in row.points] == [2, 8]
            assert all(p.n_tasks == 3 for p in row.points)
        assert sorted(result.meta_results) == [2, 8]
        for name in ("results.csv", "config.json", "tasks.json", "curves.svg",
                     "meta_trace_n2.csv", "meta_trace_n8.csv"):
            assert (out / name).is_file(), name
        rows = read_results_csv(str(out / "results.csv"))
        assert len(rows) == len(METHODS) * 2
        with open(out / "config.json") as f:
            assert config_from_dict(json.load(f)) == cfg
        assert len(load_tasks(str(out / "tasks.json"))) == cfg.n_tasks

    def test_threads_do_not_change_csv(self, tmp_path):
        cfg = preset_config("isotropic", base_seed=3, **_tiny_overrides())
        a, b = tmp_path / "a", tmp_path / "b"
        run_experiment(cfg, out_dir=str(a), threads=1)
        run_experiment(cfg, out_dir=str(b), threads=4)
        assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
        assert (a / "curves.svg").read_bytes() == (b / "curves.svg").read_bytes()

    def test_fast_flag_shrinks_budget(self):
        cfg = preset_config("isotropic", base_seed=1, **_tiny_overrides())
        result = run_experiment(cfg, fast=True, out_dir=None)
        assert result.config.keep == cfg.keep // 5
        assert result.config.n_tasks == cfg.n_tasks

    def test_method_subset(self):
        cfg = preset_config(
            "isotropic", base_seed=1, methods=["plain_gd", "oracle_gd"], **_tiny_overrides()
        )
        result = run_experiment(cfg)
        assert [r.method for r in result.rows] == ["plain_gd", "oracle_gd"]
        assert result.meta_results == {}

    def test_bad_threads(self):
        cfg = preset_config("isotropic", **_tiny_overrides())
        with pytest.raises(ValueError, match="threads"):
            run_experiment(cfg, threads=0)


class TestResultsCsv:
    def _rows(self):
        pts = [
            CurvePoint(1, 2.5, 0.25, 4, 0, np.array([2.0, 3.0, 2.5, 2.5])),
            CurvePoint(10, 1.25, 0.125, 4, 1, np.array([1.0, 1.5, 1.25, 1.25])),
        ]
        return [MethodRow(method="plain_gd", points=pts)]

    def test_round_trip(self, tmp_path):
        path = tmp_path / "r.csv"
        write_results_csv(str(path), self._rows())
        rows = read_results_csv(str(path))
        assert rows[0] == {
            "method": "plain_gd", "n_train": 1, "mean_mse": 2.5,
            "stderr": 0.25, "n_tasks": 4, "diverged_count": 0,
        }
        assert rows[1]["diverged_count"] == 1

    def test_error_reporting_with_line_numbers(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        with pytest.raises(ValueError, match="empty CSV"):
            read_results_csv(str(empty))

        badhdr = tmp_path / "badhdr.csv"
        badhdr.write_text("a,b,c\n")
        with pytest.raises(ValueError, match="unexpected header"):
            read_results_csv(str(badhdr))

        short = tmp_path / "short.csv"
        short.write_text("method,n_train,mean_mse,stderr,n_tasks,diverged_count\nplain_gd,1,2.0\n")
        with pytest.raises(ValueError, match=r"short\.csv:2"):
            read_results_csv(str(short))

        badval = tmp_path / "badval.csv"
        badval.write_text(
            "method,n_train,mean_mse,stderr,n_tasks,diverged_count\n"
            "plain_gd,1,2.0,0.1,4,0\n"
            "plain_gd,x,2.0,0.1,4,0\n"
        )
        with pytest.raises(ValueError, match=r"badval\.csv:3"):
            read_results_csv(str(badval))

        nodata = tmp_path / "nodata.csv"
        nodata.write_text("method,n_train,mean_mse,stderr,n_tasks,diverged_count\n")
        with pytest.raises(ValueError, match="no data rows"):
            read_results_csv(str(nodata))


class TestSvg:
    GOLDEN_ROWS = [
        {"method": "plain_gd", "n_train": 1, "mean_mse": 4.0, "stderr": 0.8},
        {"method": "plain_gd", "n_train": 10, "mean_mse": 1.6, "stderr": 0.2},
        {"method": "plain_gd", "n_train": 100, "mean_mse": 1.08, "stderr": 0.04},
        {"method": "oracle_lgd", "n_train": 1, "mean_mse": 1.9, "stderr": 0.3},
        {"method": "oracle_lgd", "n_train": 10, "mean_mse": 1.25, "stderr": 0.1},
        {"method": "oracle_lgd", "n_train": 100, "mean_mse": 1.02, "stderr": 0.03},
        {"method": "custom_method", "n_train": 1, "mean_mse": 2.5, "stderr": 0.0},
        {"method": "custom_method", "n_train": 10, "mean_mse": 1.4, "stderr": 0.0},
        {"method": "custom_method", "n_train": 100, "mean_mse": 1.05, "stderr": 0.0},
    ]

    def test_matches_golden_bytes(self):
        svg = render_curves(self.GOLDEN_ROWS, title="golden fixture")
        with open(os.path.join(DATA_DIR, "curves_golden.svg"), encoding="utf-8") as f:
            assert svg == f.read()

    def test_known_labels_and_fallback_colors(self):
        svg = render_curves(self.GOLDEN_ROWS)
        assert "oracle LGD" in svg
        assert "custom_method" in svg  # label falls back to the raw name
        assert "#ff7f0e" in svg  # first fallback palette entry

    def test_non_positive_loss_rejected(self):
        rows = [{"method": "plain_gd", "n_train": 1, "mean_mse": 0.0, "stderr": 0.1}]
        with pytest.raises(ValueError, match="non-positive"):
            render_curves(rows)
        with pytest.raises(ValueError, match="no rows"):
            render_curves([])


class TestCli:
    def _write_config(self, tmp_path, **extra) -> str:
        cfg = {"experiment": "isotropic", **_tiny_overrides(), **extra}
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cfg))
        return str(path)

    def test_generate_and_evaluate(self, tmp_path, capsys):
        cfg_path = self._write_config(tmp_path)
        tasks_path = str(tmp_path / "tasks.json")
        assert main(["generate", "--config", cfg_path, "--out", tasks_path]) == 0
        assert len(load_tasks(tasks_path)) == 6
        out = str(tmp_path / "eval")
        code = main(
            ["evaluate", "--config", cfg_path, "--tasks", tasks_path, "--out", out]
        )
        assert code == 0
        rows = read_results_csv(os.path.join(out, "results.csv"))
        # no hyperparams file, so the meta row is dropped
        assert sorted({r["method"] for r in rows}) == [
            "oracle_gd", "oracle_lgd", "oracle_lgd_long", "plain_gd",
        ]
        assert os.path.isfile(os.path.join(out, "curves.svg"))
        capsys.readouterr()

    def test_generate_count_override(self, tmp_path, capsys):
        cfg_path = self._write_config(tmp_path)
        tasks_path = str(tmp_path / "two.json")
        assert main(["generate", "--config", cfg_path, "--out", tasks_path, "--count", "2"]) == 0
        assert len(load_tasks(tasks_path)) == 2
        capsys.readouterr()

    def test_run_pipeline(self, tmp_path, capsys):
        cfg_path = self._write_config(tmp_path, methods=["plain_gd", "oracle_lgd", "meta_lgd"])
        out = str(tmp_path / "run")
        assert main(["run", "--config", cfg_path, "--out", out]) == 0
        rows = read_results_csv(os.path.join(out, "results.csv"))
        assert {r["method"] for r in rows} == {"plain_gd", "oracle_lgd", "meta_lgd"}
        capsys.readouterr()

    def test_meta_train_writes_hyperparams(self, tmp_path, capsys):
        cfg_path = self._write_config(tmp_path)
        out = str(tmp_path / "meta")
        assert main(["meta-train", "--config", cfg_path, "--out", out, "--n-train", "4"]) == 0
        with open(os.path.join(out, "hyperparams.json")) as f:
            obj = json.load(f)
        assert float(obj["eta"]) > 0
        assert len(obj["theta"]) == 1
        assert obj["n_train"] == 4
        assert os.path.isfile(os.path.join(out, "meta_trace.csv"))
        capsys.readouterr()

    def test_meta_train_all_diverged_is_runtime_failure(self, tmp_path, capsys):
        # keep is generous: at eta = 0.5 a chain grows a few hundred-fold per
        # step at most, and the divergence flag only trips once an iterate
        # actually overflows, several hundred steps in
        cfg_path = self._write_config(
            tmp_path, burn=50, keep=5000, meta_steps=2, eta_clamp=[0.5, 0.5]
        )
        code = main(["meta-train", "--config", cfg_path, "--out", str(tmp_path / "m")])
        assert code == 2
        assert "diverged" in capsys.readouterr().err

    def test_evaluate_with_hyperparams_file(self, tmp_path, capsys):
        cfg_path = self._write_config(tmp_path, methods=["meta_lgd"])
        hp_path = tmp_path / "hp.json"
        hp_path.write_text(json.dumps({"theta": ["10.0"], "eta": "0.0009"}))
        out = str(tmp_path / "ev")
        code = main(
            ["evaluate", "--config", cfg_path, "--hyperparams", str(hp_path), "--out", out]
        )
        assert code == 0
        rows = read_results_csv(os.path.join(out, "results.csv"))
        assert {r["method"] for r in rows} == {"meta_lgd"}
        capsys.readouterr()

    def test_bounds_request(self, tmp_path, capsys):
        req = tmp_path / "req.json"
        req.write_text(json.dumps({"formula": "hoeffding", "inputs": {"C": 1.0, "delta": 0.05, "N": 100}}))
        assert main(["bounds", "--request", str(req)]) == 0
        out = json.loads(capsys.readouterr().out)
        import math

        assert out["value"] == pytest.approx(math.sqrt(math.log(20.0) / 200.0), rel=1e-12)

    def test_bounds_writes_out_file(self, tmp_path, capsys):
        req = tmp_path / "req.json"
        req.write_text(
            json.dumps({"formula": "ula_params", "inputs": {"m": 1, "L": 1, "eps": 0.5, "delta": 0.05, "d": 1}})
        )
        out_path = tmp_path / "bound.json"
        assert main(["bounds", "--request", str(req), "--out", str(out_path)]) == 0
        with open(out_path) as f:
            obj = json.load(f)
        assert obj == {"eta": 0.015625, "burn": 354, "keep": 98165}
        capsys.readouterr()

    def test_bounds_error_paths(self, tmp_path, capsys):
        req = tmp_path / "req.json"
        req.write_text(json.dumps({"formula": "nope", "inputs": {}}))
        assert main(["bounds", "--request", str(req)]) == 1
        req.write_text(json.dumps({"formula": "hoeffding", "inputs": {"C": 1.0, "delta": 0.05, "N": 100, "junk": 1}}))
        assert main(["bounds", "--request", str(req)]) == 1
        assert "junk" in capsys.readouterr().err

    def test_plot_command(self, tmp_path, capsys):
        csv_path = tmp_path / "r.csv"
        pts = [CurvePoint(1, 2.0, 0.1, 3, 0, np.zeros(3)), CurvePoint(5, 1.0, 0.1, 3, 0, np.zeros(3))]
        write_results_csv(str(csv_path), [MethodRow("plain_gd", pts)])
        svg_path = tmp_path / "out.svg"
        assert main(["plot", "--csv", str(csv_path), "--out", str(svg_path), "--title", "t"]) == 0
        assert svg_path.read_text().startswith("<svg")
        assert main(["plot", "--csv", str(tmp_path / "missing.csv"), "--out", str(svg_path)]) == 1
        capsys.readouterr()

    def test_configuration_errors_exit_one(self, tmp_path, capsys):
        assert main(["generate", "--out", str(tmp_path / "t.json")]) == 1  # no --config
        cfg_path = self._write_config(tmp_path)
        assert main(["generate", "--config", cfg_path]) == 1  # no --out
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["generate", "--config", str(bad), "--out", str(tmp_path / "t.json")]) == 1
        assert main(["generate", "--config", str(tmp_path / "missing.json"), "--out", "x"]) == 1
        wrong = tmp_path / "wrong.json"
        wrong.write_text(json.dumps({"experiment": "isotropic", "zzz": 1}))
        assert main(["generate", "--config", str(wrong), "--out", "x"]) == 1
        assert main(["frobnicate"]) == 1  # unknown subcommand
        capsys.readouterr()

    def test_seed_override_changes_tasks(self, tmp_path, capsys):
        cfg_path = self._write_config(tmp_path)
        a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        main(["generate", "--config", cfg_path, "--out", a, "--seed", "7"])
        main(["generate", "--config", cfg_path, "--out", b, "--seed", "8"])
        ta, tb = load_tasks(a), load_tasks(b)
        assert not np.array_equal(ta[0].X, tb[0].X)
        capsys.readouterr()
