"""Command-line interface: config resolution, reproducibility, exit
codes, and the three orchestrated studies."""
import json
import math
import os
import struct
import subprocess
import sys

import numpy as np
import pytest

from glauberlab import cli
from glauberlab.chains import ChainSpec, build_generator, mixing_time
from glauberlab.graph import load_graph, sample_er
from glauberlab.ising import IsingModel
from glauberlab.params import ModelParams
from glauberlab.spectral import comparison_suite
from glauberlab.structure import partition


def run_cli(args):
    return cli.main([str(a) for a in args])


def make_graph(tmp_path, n=10, d=2.5, seed=3):
    path = str(tmp_path / "g.txt")
    assert run_cli(["generate", "--n", n, "--d", d, "--out", path,
                    "--seed", seed]) == 0
    return path


class TestConfigResolution:
    def test_defaults_fill_unset_options(self, capsys):
        schema = {"n": (int, 7, ""), "label": (str, "x", "")}
        ns = cli.build_parser().parse_args(["generate"])
        cfg = cli.resolve_config("demo", schema, ns)
        assert cfg.options == {"n": 7, "label": "x"}
        assert cfg.rng_master_seed == 0

    def test_flag_overrides_config_file(self, tmp_path):
        cfgp = tmp_path / "c.json"
        cfgp.write_text(json.dumps({"n": 5, "seeds": 2, "rng_master_seed": 9}))
        ns = cli.build_parser().parse_args(
            ["compare-suite", "--config", str(cfgp), "--n", "6"])
        cfg = cli.resolve_config("compare-suite",
                                 cli._SCHEMAS["compare-suite"], ns)
        assert cfg.options["n"] == 6
        assert cfg.options["seeds"] == 2
        assert cfg.rng_master_seed == 9

    def test_seed_flag_overrides_config_file(self, tmp_path):
        cfgp = tmp_path / "c.json"
        cfgp.write_text(json.dumps({"n": 5, "rng_master_seed": 9}))
        ns = cli.build_parser().parse_args(
            ["compare-suite", "--config", str(cfgp), "--seed", "4"])
        cfg = cli.resolve_config("compare-suite",
                                 cli._SCHEMAS["compare-suite"], ns)
        assert cfg.rng_master_seed == 4

    def test_unknown_config_key_exits_2(self, tmp_path):
        cfgp = tmp_path / "c.json"
        cfgp.write_text(json.dumps({"n": 6, "bogus": 1}))
        assert run_cli(["compare-suite", "--config", cfgp]) == 2

    def test_malformed_config_file_exits_2(self, tmp_path):
        cfgp = tmp_path / "c.json"
        cfgp.write_text("{not json")
        assert run_cli(["compare-suite", "--config", cfgp]) == 2

    def test_non_object_config_exits_2(self, tmp_path):
        cfgp = tmp_path / "c.json"
        cfgp.write_text("[1, 2]")
        assert run_cli(["compare-suite", "--config", cfgp]) == 2

    def test_effective_config_printed_before_work(self, tmp_path, capsys):
        make_graph(tmp_path)
        err = capsys.readouterr().err
        assert err.startswith("effective config: ")
        parsed = json.loads(err.split("effective config: ", 1)[1])
        assert parsed["command"] == "generate"
        assert parsed["options"]["n"] == 10

    def test_describe_is_sorted_and_round_trips(self):
        cfg = cli.ExperimentConfig("x", 3, {"b": 1, "a": 2})
        text = cfg.describe()
        assert text.index('"a"') < text.index('"b"')
        assert json.loads(text)["rng_master_seed"] == 3


class TestSeedSplitting:
    def test_cell_seed_deterministic(self):
        assert cli._cell_seed(7, 1, 2) == cli._cell_seed(7, 1, 2)

    def test_cell_seed_distinct_across_keys(self):
        seen = {cli._cell_seed(7, i, j) for i in range(8) for j in range(8)}
        assert len(seen) == 64

    def test_cell_seed_distinct_across_masters(self):
        assert cli._cell_seed(1, 0) != cli._cell_seed(2, 0)


class TestCsvFormatting:
    def test_cells(self):
        assert cli._fmt_cell(True) == "1"
        assert cli._fmt_cell(False) == "0"
        assert cli._fmt_cell(np.bool_(True)) == "1"
        assert cli._fmt_cell(0.1) == "0.1"
        assert cli._fmt_cell(np.float64(0.1)) == "0.1"
        assert cli._fmt_cell(7) == "7"
        assert cli._fmt_cell("x") == "x"

    def test_report_writes_header_and_rows(self, tmp_path):
        rep = cli.RunReport(
            command="demo", config=cli.ExperimentConfig("demo", 0, {}),
            columns=["a", "b"], rows=[{"a": 1, "b": 0.5}, {"a": 2}])
        out = tmp_path / "r.csv"
        rep.write_csv(str(out))
        assert out.read_text() == "a,b\n1,0.5\n2,\n"


class TestBasicCommands:
    def test_generate_writes_loadable_graph(self, tmp_path):
        path = make_graph(tmp_path, n=30, d=2.0, seed=5)
        g = load_graph(path)
        assert g.n == 30
        h = sample_er(30, 2.0, 5)
        assert g.m == h.m

    def test_generate_without_out_exits_2(self):
        assert run_cli(["generate", "--n", 5]) == 2

    def test_partition_report(self, tmp_path, capsys):
        path = make_graph(tmp_path, n=40)
        out = tmp_path / "part.json"
        assert run_cli(["partition", "--graph", path, "--out", out]) == 0
        payload = json.loads(out.read_text())
        assert payload["a_count"] + payload["b_count"] == 40
        echoed = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert echoed == payload

    def test_verify_structure_ok(self, tmp_path, capsys):
        path = make_graph(tmp_path, n=40)
        assert run_cli(["verify-structure", "--graph", path]) == 0
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert payload["prop1"] and payload["prop4"]
        assert payload["a1"] is None  # no reference constant supplied

    def test_verify_structure_with_constants_sets_a1(self, tmp_path, capsys):
        path = make_graph(tmp_path, n=40)
        assert run_cli(["verify-structure", "--graph", path,
                        "--reg-c", 50.0, "--reg-c0", 1e-9]) == 0
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert payload["a1"] is True

    def test_saw_count_matches_library(self, tmp_path, capsys):
        path = make_graph(tmp_path)
        assert run_cli(["saw-count", "--graph", path, "--vertex", 0,
                        "--lmax", 5]) == 0
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        from glauberlab.walks import saw_counts_upto
        assert payload["counts"] == saw_counts_upto(load_graph(path), 0, 5)

    def test_nb_analyze_reports(self, tmp_path, capsys):
        path = make_graph(tmp_path, n=40)
        assert run_cli(["nb-analyze", "--graph", path, "--lmax", 4]) == 0
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert len(payload["totals"]) == 4
        assert payload["rank_one"]["applicable"] in (True, False)
        assert payload["saw_sum"]["passed"] is True

    def test_weitz_check_passes_small(self, tmp_path):
        path = make_graph(tmp_path)
        assert run_cli(["weitz-check", "--graph", path, "--v", 0, "--y", 1,
                        "--beta", 0.3]) == 0

    def test_exact_commands_hit_resource_limit(self, tmp_path):
        path = make_graph(tmp_path, n=60, d=2.0)
        assert run_cli(["susceptibility", "--graph", path]) == 3
        assert run_cli(["weitz-check", "--graph", path, "--v", 0,
                        "--y", 1]) == 3

    def test_unknown_chain_kind_exits_2(self, tmp_path):
        path = make_graph(tmp_path)
        assert run_cli(["spectra", "--graph", path, "--kind", "X9"]) == 2


class TestSimulateCommand:
    def test_trajectory_file_replays_to_final_state(self, tmp_path, capsys):
        path = make_graph(tmp_path)
        out = tmp_path / "traj.bin"
        assert run_cli(["simulate", "--graph", path, "--kind", "X1",
                        "--t-end", 4.0, "--out", out, "--seed", 11]) == 0
        raw = out.read_bytes()
        nl = raw.index(b"\n")
        header = json.loads(raw[:nl])
        body = raw[nl + 1:]
        rec = struct.calcsize(header["record"])
        assert len(body) == rec * header["events"]
        sigma = np.array(header["sigma0"], dtype=np.int8)
        last_t = 0.0
        for k in range(header["events"]):
            t, v, s = struct.unpack_from(header["record"], body, k * rec)
            assert t >= last_t
            last_t = t
            sigma[v] = s
        assert list(sigma) == header["final"]
        echoed = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert echoed["events"] == header["events"]

    def test_same_seed_same_trajectory_bytes(self, tmp_path):
        path = make_graph(tmp_path)
        o1, o2 = tmp_path / "a.bin", tmp_path / "b.bin"
        run_cli(["simulate", "--graph", path, "--t-end", 3.0, "--out", o1,
                 "--seed", 2])
        run_cli(["simulate", "--graph", path, "--t-end", 3.0, "--out", o2,
                 "--seed", 2])
        assert o1.read_bytes() == o2.read_bytes()

    def test_frozen_slow_block_kind_runs(self, tmp_path):
        path = make_graph(tmp_path)
        assert run_cli(["simulate", "--graph", path, "--kind", "Y2",
                        "--t-end", 2.0]) == 0

    def test_bad_sigma0_exits_2(self, tmp_path):
        path = make_graph(tmp_path)
        assert run_cli(["simulate", "--graph", path,
                        "--sigma0", "sideways"]) == 2


class TestSpectraCommand:
    def test_spectrum_matches_library(self, tmp_path, capsys):
        path = make_graph(tmp_path, n=8)
        assert run_cli(["spectra", "--graph", path, "--kind", "X1",
                        "--beta", 0.3]) == 0
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        g = load_graph(path)
        p = ModelParams(d=2.5, beta=0.3)
        gen = build_generator(ChainSpec(
            kind="X1", base_model=IsingModel.uniform(g, 0.3),
            partition=partition(g, p), params=p))
        from glauberlab.spectral import spectral_gap
        assert payload["gap"] == pytest.approx(spectral_gap(gen).gap,
                                               abs=1e-12)
        assert payload["states"] == 2**8
        assert payload["reversible"] is True

    def test_composite_kind_reported_nonreversible(self, tmp_path, capsys):
        path = make_graph(tmp_path, n=7)
        assert run_cli(["spectra", "--graph", path, "--kind", "X3"]) == 0
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert payload["reversible"] is False
        assert payload["gap"] > 0


class TestCompareSuiteCommand:
    def test_csv_reproducible_and_green(self, tmp_path):
        c1, c2 = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["compare-suite", "--n", 7, "--seeds", 2, "--seed", 5]
        assert run_cli(args + ["--csv", c1]) == 0
        assert run_cli(args + ["--csv", c2]) == 0
        assert c1.read_bytes() == c2.read_bytes()
        lines = c1.read_text().splitlines()
        assert lines[0].split(",")[:4] == ["seed_index", "seed", "n", "m"]
        assert len(lines) == 3

    def test_master_seed_changes_rows(self, tmp_path):
        c1, c2 = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli(["compare-suite", "--n", 7, "--seeds", 2, "--seed", 5,
                 "--csv", c1])
        run_cli(["compare-suite", "--n", 7, "--seeds", 2, "--seed", 6,
                 "--csv", c2])
        assert c1.read_bytes() != c2.read_bytes()

    def test_canonical_partition_accepted(self, tmp_path):
        assert run_cli(["compare-suite", "--n", 6, "--seeds", 1,
                        "--partition", "canonical", "--seed", 1]) == 0

    def test_unknown_partition_scheme_exits_2(self):
        assert run_cli(["compare-suite", "--n", 6, "--seeds", 1,
                        "--partition", "fancy"]) == 2


class TestChenEldanCommand:
    def test_bound_holds_on_sampled_instance(self, tmp_path, capsys):
        assert run_cli(["chen-eldan", "--n", 9, "--d", 2.0, "--seed", 2,
                        "--lattice-samples", 8, "--gauss-samples", 8]) == 0
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert payload["ok"] is True
        assert payload["actual_gap"] >= payload["bound"]
        assert payload["epsilon_sampled"] is True

    def test_certified_epsilon_passthrough(self, capsys):
        assert run_cli(["chen-eldan", "--n", 6, "--seed", 2,
                        "--epsilon", 1e-6, "--lattice-samples", 4,
                        "--gauss-samples", 4]) == 0
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert payload["epsilon"] == 1e-6
        assert payload["epsilon_sampled"] is False

    def test_large_slow_block_exits_3(self):
        assert run_cli(["chen-eldan", "--n", 16, "--seed", 0]) == 3


class TestScalingStudy:
    def test_exact_mode_values_match_library(self, tmp_path, capsys):
        csv = tmp_path / "s.csv"
        assert run_cli(["scaling-study", "--n-grid", "4,5", "--seeds", 1,
                        "--beta", 0.2, "--csv", csv, "--seed", 3]) == 0
        rows = csv.read_text().splitlines()[1:]
        assert len(rows) == 2
        n, si, seed, beta, mode, value = rows[0].split(",")
        assert mode == "exact-tmix"
        g = sample_er(int(n), 2.0, int(seed))
        p = ModelParams(d=2.0, beta=0.2)
        gen = build_generator(ChainSpec(
            kind="X1", base_model=IsingModel.uniform(g, 0.2),
            partition=partition(g, p), params=p))
        assert float(value) == pytest.approx(mixing_time(gen, 0.25),
                                             rel=1e-12)

    def test_zero_temperature_grid_flat_after_log_division(self, capsys):
        # product chain: t_mix grows like log n, so the raw log-log
        # slope is strongly positive while the divided one is small
        assert run_cli(["scaling-study", "--n-grid", "4,6,8,10,12",
                        "--seeds", 1, "--beta", 0, "--seed", 1]) == 0
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        fits = payload["exponents"]
        assert fits["tmix_vs_n"]["slope"] > 0.2
        assert abs(fits["tmix_over_logn_vs_n"]["slope"]) < \
            abs(fits["tmix_vs_n"]["slope"])
        for key in ("slope", "stderr", "ci95_lo", "ci95_hi", "r2"):
            assert math.isfinite(fits["tmix_over_logn_vs_n"][key])

    def test_parallel_equals_serial(self, tmp_path):
        s1, s2 = tmp_path / "a.csv", tmp_path / "b.csv"
        base = ["scaling-study", "--n-grid", "4,5", "--seeds", 2,
                "--beta", 0.2, "--seed", 3]
        run_cli(base + ["--csv", s1, "--workers", 1])
        run_cli(base + ["--csv", s2, "--workers", 2])
        assert s1.read_bytes() == s2.read_bytes()

    def test_proxy_mode_labeled(self, tmp_path):
        csv = tmp_path / "s.csv"
        assert run_cli(["scaling-study", "--n-grid", "16", "--seeds", 1,
                        "--mode", "proxy", "--proxy-t-end", 10.0,
                        "--proxy-samples", 64, "--csv", csv]) == 0
        assert "proxy-autocorr" in csv.read_text()

    def test_exact_mode_overflow_is_config_error(self, capsys):
        assert run_cli(["scaling-study", "--n-grid", "4,20",
                        "--mode", "exact"]) == 2
        assert "[20]" in capsys.readouterr().err

    def test_empty_grid_is_config_error(self):
        assert run_cli(["scaling-study", "--n-grid", ","]) == 2

    def test_autocorr_time_of_white_noise_near_one(self):
        rng = np.random.default_rng(0)
        tau = cli._autocorr_time(rng.normal(size=4000))
        assert 0.5 < tau < 2.0

    def test_autocorr_time_grows_with_correlation(self):
        rng = np.random.default_rng(1)
        x = np.zeros(4000)
        for i in range(1, 4000):
            x[i] = 0.9 * x[i - 1] + rng.normal()
        assert cli._autocorr_time(x) > 5.0

    def test_magnetization_series_tracks_events(self):
        g = sample_er(4, 2.0, 0)
        p = ModelParams(d=2.0, beta=0.3)
        from glauberlab.chains import simulate
        spec = ChainSpec(kind="X1", base_model=IsingModel.uniform(g, 0.3),
                         partition=partition(g, p), params=p)
        traj = simulate(spec, np.ones(4, dtype=np.int8), 5.0, seed=0)
        series = cli._magnetization_series(traj, 16)
        assert series[0] == 4.0
        assert series[-1] == pytest.approx(traj.final.sum(), abs=2.0 + 4.0)


class TestCalibrate:
    def test_small_instance_feasible(self, tmp_path, capsys):
        csv = tmp_path / "c.csv"
        assert run_cli(["calibrate", "--n", 300, "--seeds", 4,
                        "--csv", csv, "--seed", 4]) == 0
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert payload["feasible"] is True
        grid = payload["grid"]
        for key in ("C", "Cp", "Cpp"):
            assert payload[key] in grid
        assert payload["pass_fraction_props123"] >= 0.95
        assert len(csv.read_text().splitlines()) == 5

    def test_constants_cover_target_fraction_of_rows(self, tmp_path, capsys):
        csv = tmp_path / "c.csv"
        run_cli(["calibrate", "--n", 300, "--seeds", 4, "--csv", csv,
                 "--seed", 4])
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        rows = [r.split(",") for r in csv.read_text().splitlines()[1:]]
        need = math.ceil(0.95 * len(rows))
        assert sum(1 for r in rows
                   if float(r[4]) <= payload["C"]) >= need
        assert sum(1 for r in rows
                   if float(r[5]) <= payload["Cp"]) >= need
        assert sum(1 for r in rows
                   if float(r[6]) <= payload["Cpp"]) >= need

    def test_calibrate_constants_returns_params(self):
        ns = cli.build_parser().parse_args(
            ["calibrate", "--n", "200", "--seeds", "2", "--seed", "1"])
        cfg = cli.resolve_config("calibrate", cli._SCHEMAS["calibrate"], ns)
        params = cli.calibrate_constants(cfg)
        assert isinstance(params, ModelParams)
        assert params.delta == 0.1
        assert params.beta == pytest.approx(math.atanh(0.5))

    def test_edgeless_instance_takes_minimal_grid_point(self):
        master = next(
            m for m in range(200)
            if sample_er(4, 1.1, cli._cell_seed(m, 0)).m == 0
        )
        ns = cli.build_parser().parse_args(
            ["calibrate", "--n", "4", "--d", "1.1", "--seeds", "1",
             "--seed", str(master)])
        cfg = cli.resolve_config("calibrate", cli._SCHEMAS["calibrate"], ns)
        params, report = cli.run_calibration(cfg)
        grid = report.aggregates["grid"]
        assert params is not None
        assert params.C == grid[0]
        assert params.Cp == grid[0]
        assert params.Cpp == grid[0]

    def test_infeasible_grid_reported_and_exits_1(self, capsys):
        rc = run_cli(["calibrate", "--n", 60, "--seeds", 2, "--seed", 0,
                      "--grid-base", 1e-6, "--grid-steps", 1])
        assert rc == 1
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert payload["feasible"] is False
        assert "reason" in payload

    def test_bad_target_exits_2(self):
        assert run_cli(["calibrate", "--n", 50, "--target", 1.5]) == 2

    def test_constants_grow_as_degree_approaches_one(self):
        # branching slows as d -> 1, so the growth cutoff C that admits
        # the fast set must grow; check the trend on two degrees
        needed = {}
        for d in (1.15, 2.0):
            ns = cli.build_parser().parse_args(
                ["calibrate", "--n", "300", "--d", str(d), "--seeds", "3",
                 "--seed", "2"])
            cfg = cli.resolve_config("calibrate",
                                     cli._SCHEMAS["calibrate"], ns)
            params, report = cli.run_calibration(cfg)
            assert params is not None
            needed[d] = max(
                r["needed_Cpp"] for r in report.rows
                if math.isfinite(r["needed_Cpp"])
            )
        assert needed[1.15] > needed[2.0]


class TestBattery:
    def test_default_small_battery_green(self, tmp_path, capsys):
        csv = tmp_path / "b.csv"
        rc = run_cli(["battery", "--seeds", 2, "--structure-n", 300,
                      "--walks-n", 300, "--suite-n", 6, "--suite-seeds", 1,
                      "--csv", csv, "--seed", 12])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert payload["failures"] == 0
        sections = payload["aggregates"]["sections"]
        assert set(sections) == {"structure", "walks", "ising", "chains",
                                 "spectral"}
        assert all(s["hard_fail"] == 0 for s in sections.values())
        assert len(csv.read_text().splitlines()) >= 20

    def test_tiny_C_drops_frequencies_without_failing(self, capsys):
        # C below 1 puts every vertex in the fast set, breaking the
        # with-high-probability structure events; those rows are soft
        rc = run_cli(["battery", "--seeds", 1, "--c", 0.5,
                      "--structure-n", 200, "--walks-n", 120,
                      "--suite-n", 6, "--suite-seeds", 1, "--seed", 3])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        structure = payload["aggregates"]["sections"]["structure"]
        assert structure["pass_fraction"] < 1.0
        assert structure["hard_fail"] == 0

    def test_replay_reproduces_margins(self, tmp_path):
        g = sample_er(7, 2.5, 11)
        p = ModelParams(d=2.5, beta=0.4)
        rep = comparison_suite(g, p, rate_A=3.0)
        dump = {
            "n": g.n,
            "edges": [[int(u), int(v)] for u, v in g.edge_array],
            "beta": 0.4, "d": 2.5, "rate_A": 3.0,
            "in_b": [True] * g.n,
            "margins": rep.margins,
        }
        path = tmp_path / "dump.json"
        path.write_text(json.dumps(dump))
        assert run_cli(["battery", "--replay", path]) == 0
        dump["margins"] = dict(rep.margins)
        dump["margins"]["c_half_gap"] += 1e-6
        path.write_text(json.dumps(dump))
        assert run_cli(["battery", "--replay", path]) == 1

    def test_replay_missing_keys_exits_2(self, tmp_path):
        path = tmp_path / "dump.json"
        path.write_text(json.dumps({"n": 3}))
        assert run_cli(["battery", "--replay", path]) == 2


class TestEntryPoint:
    def test_module_invocation_round_trip(self, tmp_path):
        gp = tmp_path / "g.txt"
        out = subprocess.run(
            [sys.executable, "-m", "glauberlab.cli", "generate", "--n", "12",
             "--d", "2.0", "--out", str(gp), "--seed", "1"],
            capture_output=True, text=True)
        assert out.returncode == 0
        assert json.loads(out.stdout)["n"] == 12
        out = subprocess.run(
            [sys.executable, "-m", "glauberlab.cli", "verify-structure",
             "--graph", str(gp)],
            capture_output=True, text=True)
        assert out.returncode == 0
        assert out.stderr.startswith("effective config: ")

    def test_module_invocation_propagates_failure_code(self, tmp_path):
        out = subprocess.run(
            [sys.executable, "-m", "glauberlab.cli", "calibrate",
             "--n", "40", "--seeds", "1", "--grid-base", "1e-9",
             "--grid-steps", "1"],
            capture_output=True, text=True)
        assert out.returncode == 1
