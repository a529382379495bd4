"""Sweep orchestration, CSV schema, scaling fits, plots, CLI."""

import json
import os

import numpy as np
import pandas as pd
import pytest

import mhlab
from mhlab import bounds as bd
from mhlab import cli
from mhlab import harness as hn


@pytest.fixture(scope="module")
def small_sweep(tmp_path_factory):
    config = hn.SweepConfig(target_families=["uniform", "gaussian"],
                            eps_over_L=[0.25, 0.125], L_values=[1.0],
                            n=128, seed=42)
    rows, tv_rows = hn.run_sweep(config)
    out = tmp_path_factory.mktemp("sweep")
    csv = out / "sweep.csv"
    hn.write_sweep_csv(rows, csv)
    hn.write_tv_csv(tv_rows, out / "tv_curves.csv")
    return config, rows, out


class TestSweepConfig:
    def test_ratio_above_one_rejected(self):
        with pytest.raises(ValueError, match="0 < eps <= L"):
            hn.SweepConfig(["uniform"], [1.5], seed=1).validate()

    def test_empty_eps_grid_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            hn.SweepConfig(["uniform"], [], seed=1).validate()

    def test_missing_seed_rejected(self):
        with pytest.raises(ValueError, match="seed"):
            hn.SweepConfig(["uniform"], [0.25]).validate()

    def test_oversized_n_rejected(self):
        with pytest.raises(ValueError, match="outside"):
            hn.SweepConfig(["uniform"], [0.25], n=10_000, seed=1).validate()

    def test_from_dict(self):
        cfg = hn.SweepConfig.from_dict({
            "seed": 5,
            "sweep": {"target_families": ["tent"], "eps_over_L": [0.1], "n": 64},
            "calibration": {"C_mixing": 3.0},
        })
        assert cfg.seed == 5 and cfg.n == 64
        assert cfg.calibration.C_mixing == 3.0 and cfg.calibration.C_gap == 1.0


class TestRunSweep:
    def test_rows_complete_and_finite(self, small_sweep):
        _, rows, _ = small_sweep
        assert len(rows) == 4
        for row in rows:
            assert set(hn.SWEEP_COLUMNS) <= set(row)
            assert row["exact_tau"] is not None
            assert row["exact_gap"] > 0
            assert row["path_bound_valid"]
            assert row["near_uniform_pass"]

    def test_calibrated_rerun_dominates(self, small_sweep):
        config, rows, _ = small_sweep
        constants = bd.calibrate_constants(rows)
        recal = hn.SweepConfig(target_families=["uniform", "gaussian"],
                               eps_over_L=[0.25, 0.125], L_values=[1.0],
                               n=128, seed=42, calibration=constants)
        rows2, _ = hn.run_sweep(recal)
        assert all(r["mixing_bound_dominates"] and r["gap_bound_dominates"] for r in rows2)

    def test_byte_identical_reruns(self, small_sweep, tmp_path):
        config, _, out = small_sweep
        rows, tv_rows = hn.run_sweep(config)
        hn.write_sweep_csv(rows, tmp_path / "again.csv")
        hn.write_tv_csv(tv_rows, tmp_path / "tv.csv")
        assert (tmp_path / "again.csv").read_bytes() == (out / "sweep.csv").read_bytes()
        assert (tmp_path / "tv.csv").read_bytes() == (out / "tv_curves.csv").read_bytes()

    def test_threaded_workers_match_serial(self):
        base = dict(target_families=["uniform"], eps_over_L=[0.25, 0.125],
                    L_values=[1.0], n=64, seed=9)
        serial, _ = hn.run_sweep(hn.SweepConfig(**base))
        threaded, _ = hn.run_sweep(hn.SweepConfig(**base, workers=4))
        assert serial == threaded

    def test_dominance_flags_recomputable_from_csv(self, small_sweep):
        # pandas parses the lowercase true/false cells straight to booleans
        _, _, out = small_sweep
        frame = hn.read_sweep_csv(out / "sweep.csv")
        for _, r in frame.iterrows():
            assert bool(r.mixing_bound_dominates) == (r.mixing_time_bound >= r.exact_tau)
            assert bool(r.gap_bound_dominates) == (r.congestion_gap_lower <= r.exact_gap)
            assert bool(r.path_bound_valid) == (r.path_gap_bound <= r.exact_gap + 1e-12)

    def test_schema_header(self, small_sweep):
        _, _, out = small_sweep
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "# mhlab-sweep-csv schema=1"
        assert lines[1].split(",") == hn.SWEEP_COLUMNS


class TestFitScaling:
    @staticmethod
    def synth_frame():
        eps = np.array([0.4, 0.2, 0.1, 0.05, 0.025])
        return pd.DataFrame({"eps": eps, "y": 7.0 * eps ** -3.0})

    def test_noiseless_cubic_exponent(self):
        fit = hn.fit_scaling(self.synth_frame(), "y", ["eps"])
        exponent, se = fit["eps"]
        assert exponent == pytest.approx(-3.0, abs=1e-10)
        assert se < 1e-10

    def test_single_regressor_value_rejected(self):
        frame = pd.DataFrame({"eps": [0.1, 0.1, 0.1, 0.1], "y": [1, 2, 3, 4]})
        with pytest.raises(ValueError, match="distinct"):
            hn.fit_scaling(frame, "y", ["eps"])

    def test_nonpositive_response_rejected(self):
        frame = self.synth_frame()
        frame.loc[0, "y"] = 0.0
        with pytest.raises(ValueError, match="positive"):
            hn.fit_scaling(frame, "y", ["eps"])

    def test_empirical_tau_scaling_is_diffusive(self):
        # random-walk scaling: tau grows roughly like eps^-2, well inside the
        # eps^-3-type envelope the dominance flags already check
        config = hn.SweepConfig(target_families=["uniform"],
                                eps_over_L=[0.25, 0.125, 0.0625, 0.03125],
                                L_values=[1.0], n=256, seed=13)
        rows, _ = hn.run_sweep(config)
        frame = pd.DataFrame({"eps": [r["eps"] for r in rows],
                              "exact_tau": [float(r["exact_tau"]) for r in rows]})
        exponent, se = hn.fit_scaling(frame, "exact_tau", ["eps"])["eps"]
        assert abs(exponent) <= 4.0 + 0.2
        assert exponent == pytest.approx(-2.0, abs=0.3)


class TestEmitPlots:
    def test_panels_from_sweep(self, small_sweep, tmp_path):
        _, _, out = small_sweep
        written = hn.emit_plots(out / "sweep.csv", tmp_path,
                                tv_csv=out / "tv_curves.csv")
        names = {os.path.basename(p) for p in written}
        assert {"tau_vs_eps.svg", "tau_vs_L.svg", "gap_vs_eps.svg",
                "tv_decay.svg"} <= names
        for p in written:
            text = open(p).read()
            assert text.lstrip().startswith("<?xml")
            assert "<svg" in text and "</svg>" in text
            assert text.count("<g id=") > 3
        tau_panel = open(tmp_path / "tau_vs_eps.svg").read()
        assert "step scale epsilon" in tau_panel
        assert "mixing time" in tau_panel
        assert "legend" in tau_panel

    def test_single_row_csv(self, tmp_path):
        config = hn.SweepConfig(target_families=["uniform"], eps_over_L=[0.25],
                                L_values=[1.0], n=64, seed=3)
        rows, _ = hn.run_sweep(config)
        csv = tmp_path / "one.csv"
        hn.write_sweep_csv(rows, csv)
        written = hn.emit_plots(csv, tmp_path)
        assert len(written) == 3
        assert open(written[0]).read().lstrip().startswith("<?xml")

    def test_empty_csv_rejected(self, tmp_path):
        csv = tmp_path / "empty.csv"
        csv.write_text("# mhlab-sweep-csv schema=1\n" + ",".join(hn.SWEEP_COLUMNS) + "\n")
        with pytest.raises(ValueError, match="no sweep rows"):
            hn.emit_plots(csv, tmp_path)

    def test_missing_out_dir_rejected(self, small_sweep, tmp_path):
        _, _, out = small_sweep
        with pytest.raises(OSError):
            hn.emit_plots(out / "sweep.csv", tmp_path / "nope")

    def test_byte_identical_svg(self, small_sweep, tmp_path):
        _, _, out = small_sweep
        a = tmp_path / "a"
        b = tmp_path / "b"
        a.mkdir()
        b.mkdir()
        hn.emit_plots(out / "sweep.csv", a)
        hn.emit_plots(out / "sweep.csv", b)
        assert (a / "gap_vs_eps.svg").read_bytes() == (b / "gap_vs_eps.svg").read_bytes()


class TestCli:
    @staticmethod
    def write_config(path, **extra):
        cfg = {
            "seed": 7,
            "target": {"family": "gaussian", "params": {"sigma": 0.6},
                       "support": [-1.0, 1.0], "L": 1.1},
            "proposal": {"family": "uniform-ball", "epsilon": 0.1},
            "sweep": {"target_families": ["uniform"], "eps_over_L": [0.25],
                      "L": [1.0], "n": 64},
            "coupling": {"start": 0.5, "n_runs": 200, "k_max": 3},
        }
        cfg.update(extra)
        path.write_text(json.dumps(cfg))
        return str(path)

    def test_check_ok(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path / "c.json")
        assert cli.main(["check", "--config", cfg]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["unimodal"]["pass"] and out["envelope"]["pass"]

    def test_bad_family_exits_1(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path / "c.json",
                                target={"family": "cauchy", "support": [-1, 1]})
        assert cli.main(["check", "--config", cfg]) == 1

    def test_self_calibration_directive(self, tmp_path):
        cfg = self.write_config(tmp_path / "c.json", calibration="calibrate")
        out = tmp_path / "out"
        assert cli.main(["sweep", "--config", cfg, "--out-dir", str(out)]) == 0
        frame = hn.read_sweep_csv(out / "sweep.csv")
        assert (frame["C_mixing"] > 1.0).all() or (frame["C_mixing"] < 1.0).all()
        assert frame["mixing_bound_dominates"].all()
        assert frame["gap_bound_dominates"].all()

    def test_violated_calibration_exits_2(self, tmp_path):
        # deliberately hopeless constants: the mixing bound cannot dominate
        cfg = self.write_config(tmp_path / "c.json",
                                calibration={"C_mixing": 1e-9, "C_gap": 1e9})
        assert cli.main(["sweep", "--config", cfg, "--out-dir", str(tmp_path)]) == 2

    def test_empty_eps_grid_exits_1(self, tmp_path):
        cfg = self.write_config(tmp_path / "c.json",
                                sweep={"target_families": ["uniform"],
                                       "eps_over_L": [], "n": 64})
        assert cli.main(["sweep", "--config", cfg, "--out-dir", str(tmp_path)]) == 1

    def test_sweep_couple_calibrate_plot_pipeline(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path / "c.json")
        out = tmp_path / "out"
        assert cli.main(["sweep", "--config", cfg, "--out-dir", str(out)]) == 0
        assert cli.main(["calibrate", "--csv", str(out / "sweep.csv"),
                         "--out", str(tmp_path / "cal.json")]) == 0
        assert cli.main(["couple", "--config", cfg, "--out-dir", str(out)]) == 0
        assert cli.main(["plot", "--csv", str(out / "sweep.csv"),
                         "--out-dir", str(out),
                         "--tv-csv", str(out / "tv_curves.csv"),
                         "--tails-csv", str(out / "tails.csv")]) == 0
        assert (out / "hitting_tail.svg").exists()
        constants = json.loads((tmp_path / "cal.json").read_text())
        assert constants["C_mixing"] > 0

    def test_discretize_roundtrip_and_config_overrides_flags(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path / "c.json")
        chain_path = tmp_path / "chain.txt"
        # the config carries sweep.n = 64, which wins over the --n flag
        assert cli.main(["discretize", "--config", cfg, "--n", "32",
                         "--out", str(chain_path)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["detailed_balance_error"] < 1e-10
        from mhlab.operator_lab import load_text
        assert load_text(chain_path).n == 64

    def test_bounds_command(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path / "c.json",
                                drift={"gamma": 0.5, "K": 1.0, "tau": 10})
        assert cli.main(["bounds", "--config", cfg]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["escape_prob"] == 0.125
