"""Config validation and CLI dispatch tests."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from nemxopt import ConfigError
from nemxopt.cli import main
from nemxopt.config import parse_config

REPO_CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def minimal_config(**overrides) -> dict:
    cfg = {
        "devices": [{"id": "load", "d_min": 0.0, "d_max": 10.0, "alpha": 1.0, "beta": 0.1}],
        "tariff": {
            "windows": [
                {"start": "00:00", "end": "24:00", "buy_rate": 0.5, "export_rate": 0.1}
            ]
        },
        "interval_minutes": 60,
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path: Path, cfg: dict, name: str = "cfg.json") -> Path:
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


class TestParseConfig:
    def test_minimal_parses(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, minimal_config()))
        assert len(cfg.devices) == 1
        assert cfg.battery is None
        assert cfg.schedule.dt_hours == 1.0

    def test_negative_beta_names_the_field(self, tmp_path):
        bad = minimal_config()
        bad["devices"][0]["beta"] = -0.1
        with pytest.raises(ConfigError) as err:
            parse_config(write_config(tmp_path, bad))
        assert any("devices[0].beta" in v for v in err.value.violations)

    def test_bad_efficiency_message(self, tmp_path):
        bad = minimal_config(battery={"charge_kw": 2.0, "discharge_kw": 2.0, "tau": 1.2})
        with pytest.raises(ConfigError) as err:
            parse_config(write_config(tmp_path, bad))
        assert any(
            "battery.tau" in v and "(0, 1]" in v for v in err.value.violations
        )

    def test_unknown_customer_type(self, tmp_path):
        bad = minimal_config(customer_type="tenant")
        with pytest.raises(ConfigError) as err:
            parse_config(write_config(tmp_path, bad))
        assert any("customer_type" in v for v in err.value.violations)

    def test_unknown_top_level_key(self, tmp_path):
        bad = minimal_config(batery={"charge_kw": 1.0})
        with pytest.raises(ConfigError):
            parse_config(write_config(tmp_path, bad))

    def test_windows_must_partition(self, tmp_path):
        bad = minimal_config()
        bad["tariff"]["windows"] = [
            {"start": "00:00", "end": "20:00", "buy_rate": 0.5, "export_rate": 0.1}
        ]
        with pytest.raises(ConfigError) as err:
            parse_config(write_config(tmp_path, bad))
        assert any("tariff.windows" in v for v in err.value.violations)

    def test_missing_trace_file(self, tmp_path):
        bad = minimal_config(traces={"file": "nope.csv"})
        with pytest.raises(ConfigError) as err:
            parse_config(write_config(tmp_path, bad))
        assert any("does not exist" in v for v in err.value.violations)

    def test_netting_must_divide_horizon(self, tmp_path):
        bad = minimal_config(netting_intervals=7, horizon_intervals=24)
        with pytest.raises(ConfigError) as err:
            parse_config(write_config(tmp_path, bad))
        assert any("does not divide" in v for v in err.value.violations)

    def test_elasticity_form_calibrates(self, tmp_path):
        cfg = minimal_config()
        cfg["devices"] = [
            {"id": "cal", "baseline_kwh": 2.0, "baseline_price": 0.4, "elasticity": -0.21}
        ]
        parsed = parse_config(write_config(tmp_path, cfg))
        dev = parsed.devices[0]
        assert dev.utility.beta == pytest.approx(0.952381, abs=1e-5)
        from nemxopt import device_response

        assert device_response(dev, 0.4) == pytest.approx(2.0, rel=1e-12)

    def test_mixed_device_form_rejected(self, tmp_path):
        cfg = minimal_config()
        cfg["devices"] = [{"id": "x", "alpha": 1.0, "beta": 0.1, "elasticity": -0.2}]
        with pytest.raises(ConfigError) as err:
            parse_config(write_config(tmp_path, cfg))
        assert any("not both" in v for v in err.value.violations)

    def test_monthly_fixed_charge_apportioned(self, tmp_path):
        cfg = minimal_config(netting_intervals=1)
        cfg["tariff"]["fixed_charge_per_month"] = 15.0
        parsed = parse_config(write_config(tmp_path, cfg))
        # hourly windows: 15 $/month over 30*24 billing applications
        rate = parsed.schedule.windows[0].rate
        assert rate.fixed_charge == pytest.approx(15.0 / 720.0)

    def test_shipped_configs_parse(self):
        for name in ("worked_example.json", "household_90d.json"):
            cfg = parse_config(REPO_CONFIGS / name)
            assert cfg.devices


class TestCli:
    def run(self, tmp_path, *argv) -> tuple[int, str, str]:
        import io
        from contextlib import redirect_stderr, redirect_stdout

        out, err = io.StringIO(), io.StringIO()
        with redirect_stdout(out), redirect_stderr(err):
            code = main(list(argv))
        return code, out.getvalue(), err.getvalue()

    @pytest.fixture
    def worked_cfg(self, tmp_path):
        # local copy so artifacts land in tmp_path
        src = (REPO_CONFIGS / "worked_example.json").read_text()
        path = tmp_path / "worked.json"
        path.write_text(src)
        return path

    def test_thresholds_json(self, tmp_path, worked_cfg):
        code, out, _ = self.run(
            tmp_path, "thresholds", "-c", str(worked_cfg), "--out", str(tmp_path / "o")
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["delta_plus"] == pytest.approx(3.0, abs=1e-9)
        assert payload["delta_minus"] == pytest.approx(11.0, abs=1e-9)
        assert (tmp_path / "o" / "thresholds.json").exists()

    def test_decide_json(self, tmp_path, worked_cfg):
        code, out, _ = self.run(
            tmp_path, "decide", "-c", str(worked_cfg), "--g", "7.5",
            "--out", str(tmp_path / "o"),
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["zone"] == "0"
        assert payload["total_consumption"] == pytest.approx(7.5, abs=1e-9)
        assert payload["payment"] == 0.0

    def test_rank_json(self, tmp_path, worked_cfg):
        code, out, _ = self.run(
            tmp_path, "rank", "-c", str(worked_cfg), "--out", str(tmp_path / "o")
        )
        assert code == 0
        classes = json.loads(out)["classes"]
        assert classes[0]["class"] == 1  # entry price 1.0 above the buy rate

    def test_zones_json(self, tmp_path, worked_cfg):
        code, out, _ = self.run(
            tmp_path, "zones", "-c", str(worked_cfg), "--out", str(tmp_path / "o")
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["active_sdg"]["length"] == pytest.approx(8.0, abs=1e-9)
        assert payload["passive_dg"]["length"] == 0.0

    def test_statics_csv(self, tmp_path, worked_cfg):
        out_dir = tmp_path / "o"
        code, out, _ = self.run(
            tmp_path, "statics", "-c", str(worked_cfg), "--out", str(out_dir)
        )
        assert code == 0, out
        text = (out_dir / "statics.csv").read_text()
        assert text.startswith("quantity,zone,parameter,expected,observed,status")
        assert "FAIL" not in text

    def test_verify_passes(self, tmp_path, worked_cfg):
        out_dir = tmp_path / "o"
        code, out, _ = self.run(
            tmp_path, "verify", "-c", str(worked_cfg), "--samples", "15",
            "--resolution", "0.02", "--out", str(out_dir),
        )
        assert code == 0, out
        payload = json.loads((out_dir / "verify.json").read_text())
        assert payload["passed"] is True
        assert payload["max_gap_rel"] <= 1e-4

    def test_simulate_artifacts(self, tmp_path, worked_cfg):
        out_dir = tmp_path / "o"
        code, out, _ = self.run(
            tmp_path, "simulate", "-c", str(worked_cfg), "--out", str(out_dir)
        )
        assert code == 0
        report = json.loads((out_dir / "report.json").read_text())
        assert report["surplus_gain_pct"] is not None
        assert report["surplus_gain_pct"] >= 0.0
        assert "avg_daily_surplus" in report
        assert (out_dir / "timeseries.csv").exists()
        for fig in ("policy_curves.png", "soc.png"):
            data = (out_dir / fig).read_bytes()
            assert data[:8] == b"\x89PNG\r\n\x1a\n"

    def test_seed_flag_overrides_config(self, tmp_path, worked_cfg):
        outs = {}
        for name, seed_args in (("a", []), ("b", ["--seed", "7"])):
            out_dir = tmp_path / name
            code, _, _ = self.run(
                tmp_path, "simulate", "-c", str(worked_cfg),
                "--out", str(out_dir), *seed_args,
            )
            assert code == 0
            outs[name] = (out_dir / "timeseries.csv").read_bytes()
        # a different seed regenerates different synthetic traces
        assert outs["a"] != outs["b"]

    def test_compare_and_sweep_artifacts(self, tmp_path):
        cfg = json.loads((REPO_CONFIGS / "worked_example.json").read_text())
        cfg["sweeps"] = {
            "storage_rates_kw": [1.0, 2.0],
            "nettings": [1, 12],
            "export_rates": [0.1, 0.15],
        }
        path = write_config(tmp_path, cfg)
        out_dir = tmp_path / "o"
        code, _, _ = self.run(tmp_path, "compare", "-c", str(path), "--out", str(out_dir))
        assert code == 0
        compare = (out_dir / "compare.csv").read_text().splitlines()
        assert compare[0].startswith("customer_type,storage_rate_kw,gain_pct_net1")
        assert len(compare) == 1 + 3 + 4  # header, 3 storage-free rows, 2 rates x 2 sdg

        code, _, _ = self.run(
            tmp_path, "sweep", "-c", str(path), "--kind", "export", "--out", str(out_dir)
        )
        assert code == 0
        assert (out_dir / "sweep.csv").exists()
        assert (out_dir / "sweep.png").exists()

    def test_usage_error_exit_64(self, tmp_path):
        code, _, _ = self.run(tmp_path, "frobnicate", "-c", "x.json")
        assert code == 64

    def test_validation_error_exit_1(self, tmp_path):
        bad = write_config(tmp_path, minimal_config(customer_type="tenant"))
        code, _, err = self.run(tmp_path, "thresholds", "-c", str(bad))
        assert code == 1
        assert "customer_type" in err

    def test_statics_probe_failure_exit(self, tmp_path):
        # discharge limit swallows the import zone: no interior point
        cfg = json.loads((REPO_CONFIGS / "worked_example.json").read_text())
        cfg["battery"]["discharge_kw"] = 6.0
        path = write_config(tmp_path, cfg)
        code, _, err = self.run(tmp_path, "statics", "-c", str(path))
        assert code == 1
        assert "zone" in err

    def test_out_dir_env_override(self, tmp_path, worked_cfg, monkeypatch):
        env_dir = tmp_path / "env_out"
        monkeypatch.setenv("NEMX_OUT_DIR", str(env_dir))
        code, _, _ = self.run(
            tmp_path, "thresholds", "-c", str(worked_cfg), "--out", str(tmp_path / "x")
        )
        assert code == 0
        assert (env_dir / "thresholds.json").exists()
        assert not (tmp_path / "x").exists()

    def test_trace_file_and_baseline_demand(self, tmp_path):
        from nemxopt.traces import synthetic_traces, write_trace_csv

        g, base = synthetic_traces(days=1, dt_minutes=60, seed=5)
        write_trace_csv(tmp_path / "traces.csv", g, base, dt_minutes=60)
        cfg = minimal_config(
            customer_type="consumer",
            traces={"file": "traces.csv"},
            use_baseline_demand=True,
        )
        parsed = parse_config(write_config(tmp_path, cfg))
        scenario = parsed.scenario()
        assert scenario.baseline is not None
        from nemxopt.sim import run

        rep = run(scenario)
        # consumer demand comes straight from the trace (within device range)
        assert rep.net == pytest.approx(np.clip(base, 0.0, 10.0), abs=1e-6)

    def test_export_rate_file(self, tmp_path):
        from nemxopt.traces import synthetic_traces, write_trace_csv

        g, base = synthetic_traces(days=1, dt_minutes=60, seed=5)
        write_trace_csv(tmp_path / "traces.csv", g, base, dt_minutes=60)
        lines = "export_rate\n" + "\n".join(["0.05"] * 12 + ["0.02"] * 12) + "\n"
        (tmp_path / "export.csv").write_text(lines)
        cfg = minimal_config(
            customer_type="passive_dg", traces={"file": "traces.csv"}
        )
        cfg["battery"] = {"charge_kw": 1.0, "discharge_kw": 1.0, "salvage": 0.15}
        cfg["tariff"]["export_rate_file"] = "export.csv"
        parsed = parse_config(write_config(tmp_path, cfg))
        scenario = parsed.scenario()
        assert scenario.export_override is not None
        assert scenario.export_override[0] == 0.05
        assert scenario.export_override[-1] == 0.02

    def test_compare_byte_identical(self, tmp_path):
        cfg = json.loads((REPO_CONFIGS / "worked_example.json").read_text())
        cfg["sweeps"] = {"storage_rates_kw": [1.0], "nettings": [1, 8]}
        path = write_config(tmp_path, cfg)
        blobs = []
        for name in ("a", "b"):
            out_dir = tmp_path / name
            code, _, _ = self.run(tmp_path, "compare", "-c", str(path),
                                  "--out", str(out_dir))
            assert code == 0
            blobs.append((out_dir / "compare.csv").read_bytes())
        assert blobs[0] == blobs[1]

    def test_byte_identical_reruns(self, tmp_path, worked_cfg):
        a, b = tmp_path / "a", tmp_path / "b"
        for out_dir in (a, b):
            code, _, _ = self.run(
                tmp_path, "verify", "-c", str(worked_cfg), "--samples", "8",
                "--resolution", "0.05", "--seed", "7", "--out", str(out_dir),
            )
            assert code == 0
        assert (a / "verify.json").read_bytes() == (b / "verify.json").read_bytes()
