import csv
import io

import numpy as np
import pytest

from mrsdc.errors import InvalidArgumentError
from mrsdc.harness.cli import main, parse_cli, weights_rows
from mrsdc.harness.config import (
    KEYS,
    MethodSpec,
    build_spec,
    keys_help,
    load_config,
    parse_config_text,
    parse_methods,
)
from mrsdc.harness.io import csv_text, format_value, read_manifest
from mrsdc.harness.studies import (
    contraction_factor,
    fit_order,
    run_order_study,
    run_residual_study,
    run_simulation,
    run_work_precision,
    step_count,
    write_report,
)
from mrsdc.heat2d import stock_interval
from mrsdc.quadrature import make_multirate

SMALL = {"nx": 8, "ny": 4}


def _csv(path):
    return list(csv.DictReader(open(path)))


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "study.cfg"
    path.write_text(
        "# small plate\n"
        "nx = 8\nny = 4\n"
        "methods = mrsdc:3:2, sdc:3  # two methods\n"
        "K = 2\n"
        "t_end = 1\n"
        "dt_list = 0.5, 0.25, 0.125\n"
        f"output_dir = {tmp_path / 'out'}\n"
    )
    return path


class TestConfig:
    def test_parse_text(self):
        values = parse_config_text("nx = 10\n\n# c\ndt_list = 1, 0.5\nmotion = sinusoidal\n")
        assert values == {"nx": 10, "dt_list": (1.0, 0.5), "motion": "sinusoidal"}

    @pytest.mark.parametrize("text", ["bogus = 1", "nx 10", "nx = ten", "nx = 2.5"])
    def test_parse_errors(self, text):
        with pytest.raises(InvalidArgumentError):
            parse_config_text(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidArgumentError):
            load_config(tmp_path / "absent.cfg")

    def test_defaults(self):
        spec = build_spec("order")
        assert spec.problem.nx == 64 and spec.problem.ny == 32
        assert spec.problem.motion.v == -0.1
        assert spec.dt_list == (4.0, 2.0, 1.0)
        assert spec.reference_factor == 64

    def test_overrides_win(self):
        spec = build_spec("order", {"nx": 10}, {"nx": "12", "dt_list": (1.0, 0.5, 0.25)})
        assert spec.problem.nx == 12
        assert spec.dt_list == (1.0, 0.5, 0.25)

    def test_sinusoidal(self):
        spec = build_spec("simulate", {"motion": "sinusoidal", "steps_per_period": 48.0})
        assert spec.problem.motion.center(0.0) == pytest.approx(0.505)
        assert spec.dt == pytest.approx(0.5)

    @pytest.mark.parametrize(
        "values",
        [
            {"dt_list": (0.5, 1.0, 0.25)},
            {"dt_list": (1.0, 0.5)},
            {"motion": "circular"},
            {"K": -1},
            {"methods": "rk4"},
            {"methods": "mrsdc:3"},
            {"steps_per_period": 10.0},
        ],
    )
    def test_invalid_specs(self, values):
        with pytest.raises(InvalidArgumentError):
            build_spec("order", values)

    def test_residual_needs_sdc_methods(self):
        with pytest.raises(InvalidArgumentError):
            build_spec("residual", {"methods": "implicit-euler"})

    def test_parse_methods(self):
        got = parse_methods("mrsdc:5:8, sdc:5, implicit-euler, mrsdc:3:auto")
        assert got == (
            MethodSpec("mrsdc", 5, 8), MethodSpec("sdc", 5, 1),
            MethodSpec("implicit-euler"), MethodSpec("mrsdc", 3, None),
        )
        assert got[0].name == "mrsdc(5,8)"

    def test_auto_embedded_count(self):
        spec = build_spec("simulate", SMALL)
        st = MethodSpec("mrsdc", 2, None).stepper(1, 1e-10, spec.problem, 10.0)
        # 5 s per standard interval at 0.1 m/s over 0.25 m cells
        assert st.P == 2

    def test_help_lists_every_key(self):
        text = keys_help()
        for key in KEYS:
            assert f"  {key} " in text


class TestHelpers:
    def test_step_count(self):
        assert step_count(20.0, 4.0) == 5
        assert step_count(2.5, 0.0390625) == 64
        with pytest.raises(InvalidArgumentError):
            step_count(1.0, 0.3)

    def test_fit_order(self):
        dts = np.array([0.4, 0.2, 0.1])
        assert fit_order(dts, 3.0 * dts**2) == pytest.approx(2.0)
        assert np.isnan(fit_order(dts, [1.0, 0.0, 1.0]))

    def test_contraction_factor(self):
        r = [1.0] + [0.1 * 0.2**k for k in range(8)] + [1e-30] * 3
        # plateau entries near the floor are skipped
        assert contraction_factor(r, floor_factor=1.0) == pytest.approx(0.2, rel=1e-12)
        assert np.isnan(contraction_factor([1.0, 0.5]))

    def test_format_value(self):
        assert format_value(0.1) == "1.0000000000000001e-01"
        assert format_value(3) == "3"
        assert format_value(float("nan")) == "nan"
        assert format_value(None) == ""


class TestCLI:
    def test_weights_output(self, capsys):
        assert main(["weights", "--M", "3", "--P", "2"]) == 0
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        fams = {r["family"] for r in rows}
        assert fams == {"s", "s_hat", "s_tilde", "s_emb"}
        assert len(rows) == 9 + 6 + 18 + 12
        tab = make_multirate(3, 2, 0.0, 1.0)
        got = {(r["m"], r["p"], r["j"]): float(r["value"]) for r in rows if r["family"] == "s_tilde"}
        assert got[("2", "1", "3")] == tab.s_tilde[1, 0, 2]

    def test_weights_rows_indices_one_based(self):
        rows = weights_rows(1, 1)
        assert rows[0] == ("s", 1, "", 1, 1.0)

    def test_weights_invalid(self, capsys):
        assert main(["weights", "--M", "0", "--P", "2"]) == 2

    def test_dt_list_flag(self, cfg_file):
        _, spec = parse_cli(["order", "--config", str(cfg_file), "--dt-list", "1,0.5,0.25"])
        assert spec.dt_list == (1.0, 0.5, 0.25)
        assert spec.kind == "order"
        assert spec.problem.nx == 8

    def test_set_flag(self, cfg_file):
        _, spec = parse_cli(["residual", "--config", str(cfg_file), "--set", "alpha=0.2", "--K", "5"])
        assert spec.problem.alpha == 0.2
        assert spec.K == 5

    @pytest.mark.parametrize(
        "argv",
        [
            ["order", "--config", "/nonexistent/study.cfg"],
            ["order"],
            ["integrate", "--config", "x"],
            ["order", "--config", "CFG", "--bogus"],
            ["order", "--config", "CFG", "--set", "nokey=1"],
            ["order", "--config", "CFG", "--dt-list", "a,b"],
        ],
    )
    def test_usage_errors(self, argv, cfg_file, capsys):
        argv = [str(cfg_file) if a == "CFG" else a for a in argv]
        with pytest.raises(SystemExit) as info:
            main(argv)
        assert info.value.code != 0

    def test_help_documents_keys(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["order", "--help"])
        assert info.value.code == 0
        out = capsys.readouterr().out
        assert "reference_factor" in out and "stock_width" in out

    def test_order_end_to_end(self, cfg_file, tmp_path):
        out = tmp_path / "o"
        assert main(["order", "--config", str(cfg_file), "--output-dir", str(out)]) == 0
        rows = _csv(out / "order.csv")
        assert len(rows) == 2 * 3 * 3
        assert "wall_s" not in rows[0]
        slopes = _csv(out / "order_slopes.csv")
        assert len(slopes) == 6
        manifest = read_manifest(out / "order_manifest.txt")
        assert manifest["study"] == "order"
        assert manifest["config.nx"] == "8"
        assert (out / "order_timings.csv").exists()

    def test_simulate_end_to_end(self, cfg_file, tmp_path):
        out = tmp_path / "sim"
        argv = ["simulate", "--config", str(cfg_file), "--output-dir", str(out), "--set", "snapshot_times=0,0.5"]
        assert main(argv) == 0
        assert (out / "field_final.vtk").exists()
        vtk = (out / "field_final.vtk").read_text().splitlines()
        assert vtk[0].startswith("# vtk DataFile")
        assert "DIMENSIONS 9 5 1" in vtk
        assert len(vtk) == 10 + 45
        field = _csv(out / "field_t00000p500000.csv")
        assert len(field) == 45
        assert read_manifest(out / "simulate_manifest.txt")["status"] == "ok"


class TestResidualStudy:
    def test_zero_rhs(self):
        spec = build_spec("residual", SMALL | {"alpha": 0.0, "methods": "mrsdc:3:2, sdc:3", "K": 3})
        report = run_residual_study(spec)
        assert len(report.rows) == 2 * 3 * 4
        assert max(r.value for r in report.rows) == 0.0

    def test_predictor_only(self):
        spec = build_spec("residual", SMALL | {"K": 0})
        report = run_residual_study(spec)
        assert len(report.rows) == len(spec.methods) * len(spec.dt_list)
        assert all(r.k == 0 for r in report.rows)

    def test_counters_monotone(self):
        spec = build_spec("residual", SMALL | {"K": 3, "dt_list": (1.0,)})
        report = run_residual_study(spec)
        for method in ("mrsdc", "sdc"):
            rows = [r for r in report.rows if r.method == method]
            assert [r.implicit_solves for r in rows] == [5 * (k + 1) for k in range(4)]
            assert all(b.fast_evals > a.fast_evals for a, b in zip(rows, rows[1:]))

    def test_residual_decays(self):
        spec = build_spec("residual", SMALL | {"K": 4, "dt_list": (2.0,)})
        report = run_residual_study(spec)
        for method in ("mrsdc", "sdc"):
            r = [row.value for row in report.rows if row.method == method]
            assert all(b < a for a, b in zip(r, r[1:]))


class TestOrderStudy:
    def test_first_order_predictor_and_deterministic(self, tmp_path):
        values = SMALL | {
            "methods": "mrsdc:3:2, imex-euler", "K": 1, "t_end": 2.0,
            "dt_list": (0.5, 0.25, 0.125), "reference_factor": 16,
        }
        a = run_order_study(build_spec("order", values | {"output_dir": str(tmp_path / "a")}))
        b = run_order_study(build_spec("order", values | {"output_dir": str(tmp_path / "b"), "workers": 2}))
        orders = {(m, k): o for m, _, _, k, o in a.orders}
        assert orders[("mrsdc", 0)] == pytest.approx(1.0, abs=0.2)
        assert orders[("imex-euler", 0)] == pytest.approx(1.0, abs=0.2)
        assert [r.value for r in a.rows] == [r.value for r in b.rows]

    def test_reference_cached(self, tmp_path):
        values = SMALL | {"methods": "sdc:2", "K": 1, "t_end": 1.0, "dt_list": (0.5, 0.25, 0.125),
                          "reference_factor": 4, "output_dir": str(tmp_path)}
        spec = build_spec("order", values)
        run_order_study(spec)
        cached = list(spec.reference_cache.glob("ref-*.npy"))
        assert len(cached) == 1
        mtime = cached[0].stat().st_mtime_ns
        run_order_study(spec)
        assert cached[0].stat().st_mtime_ns == mtime


class TestWorkPrecision:
    def test_counts_and_baseline(self, tmp_path):
        values = SMALL | {
            "methods": "implicit-euler, sdc:3, mrsdc:3:2", "K": 1, "t_end": 2.5,
            "dt_list": (1.25, 0.625, 0.3125), "reference": "mrsdc:3:4", "reference_K": 3,
            "reference_factor": 8, "output_dir": str(tmp_path),
        }
        spec = build_spec("work-precision", values)
        report = run_work_precision(spec)
        rows = {(r.method, r.K, r.dt): r for r in report.rows}
        for dt in spec.dt_list:
            n = step_count(spec.t_end, dt)
            for K in (0, 1):
                assert rows[("mrsdc", K, dt)].implicit_solves == n * 3 * (K + 1)
            # identical implicit work, different fast evaluations
            assert rows[("mrsdc", 0, dt)].implicit_solves == rows[("sdc", 0, dt)].implicit_solves
            assert rows[("mrsdc", 0, dt)].fast_evals != rows[("sdc", 0, dt)].fast_evals
        ie = [rows[("implicit-euler", 0, dt)].value for dt in spec.dt_list]
        assert fit_order(spec.dt_list, ie) == pytest.approx(1.0, abs=0.2)
        files = write_report(report, spec)
        assert "wall_s" in _csv(files[0])[0]


class TestSimulation:
    def test_zero_coupling_keeps_initial_field(self, tmp_path):
        spec = build_spec("simulate", SMALL | {"alpha": 0.0, "T_init": 0.3, "t_end": 2.0, "dt": 0.5,
                                              "methods": "mrsdc:3:2", "output_dir": str(tmp_path)})
        report = run_simulation(spec)
        assert np.all(report.final == 0.3)

    def test_equilibrium(self, tmp_path):
        spec = build_spec("simulate", SMALL | {"T_init": 1.0, "T0": 1.0, "t_end": 2.0, "dt": 0.5,
                                              "methods": "mrsdc:3:2", "output_dir": str(tmp_path)})
        report = run_simulation(spec)
        np.testing.assert_allclose(report.final, 1.0, atol=1e-9)

    def test_heated_tail(self, tmp_path):
        values = {"nx": 32, "ny": 16, "x0": 1.5, "t_end": 10.0, "dt": 0.25, "nu": 1e-3, "alpha": 1e-2,
                  "methods": "mrsdc:3:2", "K": 1, "output_dir": str(tmp_path)}
        spec = build_spec("simulate", values)
        report = run_simulation(spec)
        prob_top = np.arange(33) + 16 * 33
        x = np.linspace(0, 2, 33)
        top = report.final[prob_top]
        xl, xr = stock_interval(spec.problem, spec.t_end)
        start = 1.5 + 0.125
        assert xl <= x[np.argmax(top)] <= start
        # temperatures along the swept path fall off towards the start position
        tail = top[(x >= xr) & (x <= start)]
        assert np.all(np.diff(tail) <= 1e-12)
        assert top[x > start + 0.2].max() < 0.1 * top.max()

    def test_failure_flagged(self, tmp_path):
        spec = build_spec("simulate", SMALL | {"alpha": 1e300, "t_end": 2.0, "dt": 1.0,
                                              "methods": "imex-euler", "output_dir": str(tmp_path),
                                              "snapshot_times": (0.0,)})
        with np.errstate(all="ignore"):
            report = run_simulation(spec)
        assert report.manifest["status"].startswith("failed")
        assert report.final is None
        assert (tmp_path / "field_t00000p000000.csv").exists()


def test_csv_text_header_and_rows():
    text = csv_text(("a", "b"), [(1, 0.5)])
    assert text == "a,b\n1,5.0000000000000000e-01\n"
