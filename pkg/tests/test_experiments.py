"""Experiment driver: config pipeline, unit scheduling, verdict rows,
serialization, and scheduling-independence of results."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from lsalab.experiments import (
    EXPERIMENT_NAMES,
    PARAM_KEYS,
    ConfigError,
    ExperimentConfig,
    ResultRow,
    config_from_dict,
    config_hash,
    csv_text,
    json_text,
    output_paths,
    resolve,
    run,
    run_unit,
    unit_count,
    validate,
    write_outputs,
)


def tiny_config(experiment: str, **kw) -> ExperimentConfig:
    """Smallest-effort config per experiment, for fast driver tests."""
    small = {
        "lyapunov": dict(n_traj=3),
        "bounds": dict(alphas=(0.1,), ns=(10,), ps=(2.0,), n_traj=2000),
        "simulate": dict(alphas=(0.1,), ns=(50,), n_traj=20),
        "rademacher": dict(alphas=(0.1,), ns=(400,), deltas=(0.1,)),
        "clt": dict(alphas=(0.1,), n_traj=2000),
        "wasserstein": dict(alphas=(0.1,), ns=(20,), n_traj=300),
        "rosenthal": dict(alphas=(0.25,), qs=(2,), rhos=(0.5,), n_traj=3),
    }
    base = dict(small[experiment])
    base.update(kw)
    return ExperimentConfig(experiment=experiment, **base)


class TestConfigFromDict:
    def test_collects_every_structural_error(self):
        cfg, errors = config_from_dict(
            {
                "experiment": "bounds",
                "bogus_key": 1,
                "alphas": [0.1, "x"],
                "ns": [3.5],
                "n_traj": True,
                "out": 7,
            }
        )
        joined = "\n".join(errors)
        assert "unknown config key 'bogus_key'" in joined
        assert "alphas[1]" in joined
        assert "ns[0]" in joined
        assert "n_traj" in joined
        assert "out must be a string" in joined
        # broken fields fall back to defaults so the config is still usable
        assert cfg.experiment == "bounds"
        assert cfg.n_traj == 1000

    def test_integral_floats_accepted_in_int_grids(self):
        cfg, errors = config_from_dict({"experiment": "bounds", "ns": [10.0, 50]})
        assert errors == []
        assert cfg.ns == (10, 50)

    def test_booleans_never_pass_as_numbers(self):
        _, errors = config_from_dict({"experiment": "bounds", "alphas": [True]})
        assert any("alphas[0]" in e for e in errors)

    def test_missing_experiment_reported(self):
        _, errors = config_from_dict({"alphas": [0.1]})
        assert any("must name an experiment" in e for e in errors)

    def test_scalar_passthrough(self):
        cfg, errors = config_from_dict(
            {
                "experiment": "clt",
                "seed": 9,
                "workers": 4,
                "se_mult": 5.0,
                "ks_tol": 0.05,
                "format": "both",
                "out": "here",
            }
        )
        assert errors == []
        assert (cfg.seed, cfg.workers, cfg.se_mult, cfg.ks_tol) == (9, 4, 5.0, 0.05)
        assert (cfg.format, cfg.out) == ("both", "here")


class TestResolve:
    def test_fills_documented_defaults(self):
        cfg = resolve(ExperimentConfig(experiment="rademacher"))
        assert cfg.alphas == (0.1,)
        assert cfg.ns == (400, 1000)
        assert cfg.deltas == (0.1, 0.05)
        assert cfg.model == {"kind": "biased_rademacher", "q_a": 0.75}

    def test_explicit_empty_grid_stays_empty(self):
        cfg = resolve(ExperimentConfig(experiment="rademacher", alphas=()))
        assert cfg.alphas == ()

    def test_idempotent(self):
        cfg = resolve(ExperimentConfig(experiment="clt"))
        assert resolve(cfg) == cfg

    def test_unknown_experiment_resolves_trivially(self):
        cfg = ExperimentConfig(experiment="nope")
        assert resolve(cfg) == cfg


class TestValidate:
    def test_clean_defaults_validate_everywhere(self):
        for name in EXPERIMENT_NAMES:
            cfg = resolve(ExperimentConfig(experiment=name))
            assert validate(cfg) == [], name

    def test_unknown_experiment(self):
        errors = validate(ExperimentConfig(experiment="zzz"))
        assert len(errors) == 1
        assert "unknown experiment" in errors[0]

    def test_scalar_field_errors(self):
        cfg = resolve(
            tiny_config(
                "simulate", n_traj=1, workers=0, se_mult=0.0, ks_tol=-1.0,
                format="xml", out="",
            )
        )
        joined = "\n".join(validate(cfg))
        for frag in ("format", "workers", "n_traj", "se_mult", "ks_tol", "out"):
            assert frag in joined

    def test_unused_grid_is_an_error(self):
        cfg = resolve(tiny_config("clt", ns=(5,)))
        assert any("does not use" in e or "ns" in e for e in validate(cfg))

    def test_grid_element_windows(self):
        cfg = resolve(tiny_config("bounds", alphas=(-0.1,), ps=(1.0,)))
        joined = "\n".join(validate(cfg))
        assert "alphas" in joined
        assert "ps" in joined

    def test_bounds_requires_sign_flip_model(self):
        cfg = resolve(
            tiny_config(
                "bounds",
                model={
                    "kind": "bounded_factor", "abar": [[1.0]], "bbar": [0.0],
                    "m": [[1.0]], "eta": 0.5, "sigma": 1.0,
                },
            )
        )
        assert any("biased_rademacher" in e for e in validate(cfg))

    def test_clt_needs_scalar_model(self):
        cfg = resolve(
            tiny_config(
                "clt",
                model={
                    "kind": "bounded_factor",
                    "abar": [[1.0, 0.0], [0.0, 2.0]],
                    "bbar": [0.0, 0.0],
                    "m": [[1.0, 0.0], [0.0, 1.0]],
                    "eta": 0.1,
                    "sigma": 1.0,
                },
            )
        )
        assert any("one-dimensional" in e or "dim" in e for e in validate(cfg))

    def test_rademacher_window_errors_name_the_grid_point(self):
        cfg = resolve(tiny_config("rademacher", ns=(10,), deltas=(0.1,)))
        errors = validate(cfg)
        assert errors
        assert any("n=10" in e or "window" in e for e in errors)

    def test_rosenthal_needs_fractional_alpha(self):
        cfg = resolve(tiny_config("rosenthal", alphas=(1.5,)))
        assert any("alpha" in e for e in validate(cfg))

    def test_broken_model_spec_reported(self):
        cfg = resolve(tiny_config("simulate", model={"kind": "martian"}))
        assert any("model" in e for e in validate(cfg))


class TestRun:
    @pytest.mark.parametrize("name", EXPERIMENT_NAMES)
    def test_small_run_passes_and_matches_schema(self, name):
        cfg = tiny_config(name)
        rows = run(cfg)
        assert rows
        keys = PARAM_KEYS[name]
        for row in rows:
            assert isinstance(row, ResultRow)
            assert row.experiment == name
            assert tuple(k for k, _ in row.params) == keys
            assert row.passed, (row.params, row.note)
            assert 0 <= row.seed < 2**64

    def test_invalid_config_raises_with_full_list(self):
        cfg = tiny_config("clt", ns=(5,), workers=0)
        with pytest.raises(ConfigError) as info:
            run(cfg)
        assert len(info.value.errors) >= 2

    def test_worker_count_does_not_change_rows(self):
        base = tiny_config("rademacher", seed=5)
        rows_serial = run(base)
        rows_parallel = run(
            ExperimentConfig(**{**base.__dict__, "workers": 4})
        )
        assert rows_serial == rows_parallel

    def test_seed_moves_every_unit_stream(self):
        a = run(tiny_config("wasserstein", seed=1))
        b = run(tiny_config("wasserstein", seed=2))
        assert [r.seed for r in a] != [r.seed for r in b]
        assert any(
            ra.empirical != rb.empirical for ra, rb in zip(a, b)
        )

    def test_unit_failure_becomes_failed_rows_not_crash(self):
        # a stepsize this large blows the trajectory up; the unit reports
        # planned rows with nan empiricals and the exception in the note
        cfg = resolve(tiny_config("simulate", alphas=(10.0,), ns=(400,)))
        assert validate(cfg) == []
        with np.errstate(all="ignore"):
            rows = run(cfg)
        assert rows
        for row in rows:
            assert not row.passed
            assert math.isnan(row.empirical)
            assert "TrajectoryBlowup" in row.note or ":" in row.note

    def test_unit_count_matches_grid(self):
        cfg = resolve(tiny_config("bounds", alphas=(0.1,), ns=(10, 50), ps=(2.0,)))
        assert unit_count(cfg) == 2
        rows0 = run_unit(cfg, 0)
        assert rows0[0].param_dict["n"] == 10


class TestCsvText:
    def test_header_and_formats(self):
        row = ResultRow(
            experiment="bounds",
            params=(("alpha", 0.1), ("n", 10), ("p", 2.0)),
            empirical=1 / 3,
            std_err=0.0,
            oracle=None,
            bound=2.0,
            passed=True,
            seed=7,
            note="hidden",
        )
        text = csv_text("bounds", [row])
        lines = text.splitlines()
        assert lines[0] == "experiment,alpha,n,p,empirical,std_err,oracle,bound,pass,seed"
        cells = lines[1].split(",")
        assert cells[0] == "bounds"
        assert cells[1] == format(0.1, ".17g")
        assert cells[2] == "10"
        assert float(cells[4]) == 1 / 3  # 17 significant digits round-trip
        assert cells[6] == ""  # None renders empty
        assert cells[8] == "true"
        assert cells[9] == "7"
        assert "hidden" not in text  # notes are in-memory only

    def test_empty_rows_give_header_only(self):
        text = csv_text("clt", [])
        assert text == "experiment,check,alpha,empirical,std_err,oracle,bound,pass,seed\n"


class TestJsonText:
    def test_mirrors_rows_and_carries_metadata(self):
        cfg = tiny_config("rademacher")
        rows = run(cfg)
        payload = json.loads(json_text("rademacher", rows, cfg, 1.25))
        meta = payload["metadata"]
        assert meta["experiment"] == "rademacher"
        assert meta["wall_time_s"] == 1.25
        assert meta["config_hash"] == config_hash(cfg)
        from lsalab import __version__

        assert meta["version"] == __version__
        assert len(payload["rows"]) == len(rows)
        first = payload["rows"][0]
        assert first["pass"] == rows[0].passed
        assert first["empirical"] == rows[0].empirical
        assert set(first) == {
            "experiment", *PARAM_KEYS["rademacher"],
            "empirical", "std_err", "oracle", "bound", "pass", "seed",
        }

    def test_agreement_with_csv_values(self):
        cfg = tiny_config("bounds")
        rows = run(cfg)
        payload = json.loads(json_text("bounds", rows, cfg, 0.0))
        csv_lines = csv_text("bounds", rows).splitlines()[1:]
        for entry, line in zip(payload["rows"], csv_lines):
            cells = line.split(",")
            assert float(cells[4]) == entry["empirical"]
            assert (cells[9]) == str(entry["seed"])


class TestConfigHash:
    def test_ignores_presentation_fields(self):
        base = tiny_config("clt")
        same = ExperimentConfig(
            **{**base.__dict__, "out": "elsewhere", "format": "both", "workers": 8}
        )
        assert config_hash(base) == config_hash(same)

    def test_sensitive_to_science_fields(self):
        base = tiny_config("clt")
        assert config_hash(base) != config_hash(
            ExperimentConfig(**{**base.__dict__, "seed": 1})
        )
        assert config_hash(base) != config_hash(
            ExperimentConfig(**{**base.__dict__, "alphas": (0.05,)})
        )

    def test_equals_resolved_hash(self):
        sparse = ExperimentConfig(experiment="rademacher")
        assert config_hash(sparse) == config_hash(resolve(sparse))


class TestOutputs:
    def test_paths_strip_known_suffixes(self):
        cfg = tiny_config("clt", out="results.csv", format="both")
        assert output_paths(cfg) == ["results.csv", "results.json"]
        cfg = tiny_config("clt", out="r.json", format="json")
        assert output_paths(cfg) == ["r.json"]

    def test_write_outputs_round_trip(self, tmp_path):
        out = str(tmp_path / "w")
        cfg = tiny_config("wasserstein", out=out, format="both")
        rows = run(cfg)
        written = write_outputs(cfg, rows, 0.5)
        assert written == [out + ".csv", out + ".json"]
        csv_body = (tmp_path / "w.csv").read_text()
        assert csv_body == csv_text("wasserstein", rows)
        payload = json.loads((tmp_path / "w.json").read_text())
        assert len(payload["rows"]) == len(rows)
