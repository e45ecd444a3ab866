"""Command-line driver: exit codes, overrides, outputs, and diagnostics."""

from __future__ import annotations

import json

import numpy as np
import pytest

from lsalab.cli import build_parser, main
from lsalab.experiments import EXPERIMENT_NAMES


def write_config(tmp_path, name="cfg.json", **fields):
    path = tmp_path / name
    path.write_text(json.dumps(fields))
    return str(path)


class TestParser:
    def test_every_experiment_is_a_subcommand(self):
        parser = build_parser()
        for name in EXPERIMENT_NAMES:
            args = parser.parse_args([name, "--seed", "3"])
            assert args.experiment == name
            assert args.seed == 3

    def test_missing_subcommand_exits_with_usage_error(self, capsys):
        with pytest.raises(SystemExit) as info:
            build_parser().parse_args([])
        assert info.value.code == 2


class TestExitCodes:
    def test_clean_run_exits_zero(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path,
            alphas=[0.25], qs=[2], rhos=[0.5], n_traj=3,
            out=str(tmp_path / "r"),
        )
        assert main(["rosenthal", "--config", cfg]) == 0
        out = capsys.readouterr().out
        assert "rosenthal:" in out
        assert "0 failed" in out
        assert str(tmp_path / "r.csv") in out

    def test_config_errors_exit_two_and_list_all(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path,
            junk=True,          # structural: unknown key
            ns=[5],             # semantic: clt takes no ns grid
            workers=0,          # semantic: worker window
            out=str(tmp_path / "r"),
        )
        assert main(["clt", "--config", cfg]) == 2
        err = capsys.readouterr().err
        lines = [l for l in err.splitlines() if l.startswith("config error: ")]
        assert len(lines) >= 3
        assert any("junk" in l for l in lines)

    def test_failed_rows_exit_three(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path,
            alphas=[10.0], ns=[400], n_traj=20,
            out=str(tmp_path / "boom"),
        )
        with np.errstate(all="ignore"):
            assert main(["simulate", "--config", cfg]) == 3
        captured = capsys.readouterr()
        assert "note [" in captured.err
        assert "failed" in captured.out

    def test_unreadable_config_exits_two(self, tmp_path, capsys):
        assert main(["clt", "--config", str(tmp_path / "absent.json")]) == 2
        assert "cannot read config file" in capsys.readouterr().err

    def test_malformed_json_exits_two(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text("{nope")
        assert main(["clt", "--config", str(path)]) == 2
        assert "not valid JSON" in capsys.readouterr().err

    def test_non_object_json_exits_two(self, tmp_path, capsys):
        path = tmp_path / "list.json"
        path.write_text("[1, 2]")
        assert main(["clt", "--config", str(path)]) == 2
        assert "single JSON object" in capsys.readouterr().err

    def test_experiment_mismatch_exits_two(self, tmp_path, capsys):
        cfg = write_config(tmp_path, experiment="clt")
        assert main(["bounds", "--config", cfg]) == 2
        err = capsys.readouterr().err
        assert "experiment='clt'" in err
        assert "'bounds'" in err


class TestOverridesAndOutputs:
    def test_flags_override_file_values(self, tmp_path):
        cfg = write_config(
            tmp_path,
            alphas=[0.1], ns=[20], n_traj=300,
            seed=1, out=str(tmp_path / "file_prefix"), format="csv",
        )
        flag_out = str(tmp_path / "flag_prefix")
        assert (
            main(
                [
                    "wasserstein", "--config", cfg,
                    "--seed", "2", "--out", flag_out, "--format", "json",
                ]
            )
            == 0
        )
        assert not (tmp_path / "file_prefix.csv").exists()
        payload = json.loads((tmp_path / "flag_prefix.json").read_text())
        assert payload["rows"][0]["seed"] >= 2

    def test_config_file_is_optional(self, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert main(["rosenthal", "--workers", "1"]) == 0
        assert (tmp_path / "lsalab_results.csv").exists()

    def test_both_formats_agree_on_rows(self, tmp_path):
        cfg = write_config(
            tmp_path,
            alphas=[0.1], ns=[400], deltas=[0.1],
            out=str(tmp_path / "r"), format="both",
        )
        assert main(["rademacher", "--config", cfg]) == 0
        csv_rows = (tmp_path / "r.csv").read_text().splitlines()[1:]
        payload = json.loads((tmp_path / "r.json").read_text())
        assert len(csv_rows) == len(payload["rows"])
        for line, entry in zip(csv_rows, payload["rows"]):
            assert float(line.split(",")[-6]) == entry["empirical"]

    def test_empty_grid_writes_header_only(self, tmp_path, capsys):
        cfg = write_config(tmp_path, alphas=[], out=str(tmp_path / "none"))
        assert main(["clt", "--config", cfg]) == 0
        body = (tmp_path / "none.csv").read_text()
        assert body.count("\n") == 1
        assert "0 rows, 0 passed, 0 failed" in capsys.readouterr().out

    def test_worker_flag_leaves_bytes_unchanged(self, tmp_path):
        results = {}
        for workers in (1, 8):
            out = str(tmp_path / f"w{workers}")
            cfg = write_config(
                tmp_path, name=f"cfg{workers}.json",
                alphas=[0.1], ns=[10, 50], ps=[2.0], n_traj=2000,
                seed=3, out=out,
            )
            assert main(["bounds", "--config", cfg, "--workers", str(workers)]) == 0
            results[workers] = (tmp_path / f"w{workers}.csv").read_bytes()
        assert results[1] == results[8]
