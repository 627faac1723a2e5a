import json
import math

import pytest

from qpdyn.harness import cli
from qpdyn.harness.config import (
    ConfigError,
    config_hash,
    load_config,
    parse_config_text,
    parse_value,
)
from qpdyn.harness.recipes import RECIPES, run_experiment, run_sweep

GOLDEN = repr((math.sqrt(5.0) - 1.0) / 2.0)

AMO_MODEL = f"""
model.preset = amo
model.lambda = 3.0
model.alpha = {GOLDEN}
model.phase = 0.3
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestConfigParsing:
    def test_scalars_and_lists(self):
        raw = parse_config_text(
            """
            # comment
            a.b = 2
            a.c = 2.5       # trailing comment
            flag = true
            name = amo
            grid = 1,2,3
            """
        )
        assert raw == {
            "a.b": 2,
            "a.c": 2.5,
            "flag": True,
            "name": "amo",
            "grid": (1, 2, 3),
        }

    def test_linspace_and_logspace(self):
        assert parse_value("linspace:0,1,3") == (0.0, 0.5, 1.0)
        grid = parse_value("logspace:1,100,3")
        assert grid == pytest.approx((1.0, 10.0, 100.0))

    def test_empty_list_token(self):
        assert parse_value(",") == ()

    def test_bad_lines_raise(self):
        with pytest.raises(ConfigError):
            parse_config_text("just some words\n")
        with pytest.raises(ConfigError):
            parse_config_text("grid = linspace:1,2\n")

    def test_hash_ignores_comments_and_order(self):
        a = "x = 1\ny = 2\n"
        b = "y = 2\n# hi\nx = 1   # one\n"
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash("x = 1\ny = 3\n")

    def test_validation_collects_every_issue(self, tmp_path):
        p = write(
            tmp_path,
            "bad.cfg",
            """
            experiment = moment-growth
            model.preset = amo
            moments.p = -1.0
            moments.times = 1,2
            """,
        )
        with pytest.raises(ConfigError) as err:
            run_experiment(load_config(p), tmp_path / "out")
        issues = "\n".join(err.value.issues)
        assert "model.lambda" in issues
        assert "model.alpha" in issues
        assert "positive" in issues

    def test_experiment_mismatch(self, tmp_path):
        p = write(tmp_path, "x.cfg", "experiment = evolve\n")
        with pytest.raises(ConfigError, match="declares"):
            load_config(p, experiment="sublinear")


class TestRecipes:
    def test_evolve_writes_snapshots(self, tmp_path):
        p = write(
            tmp_path,
            "ev.cfg",
            """
            experiment = evolve
            model.preset = free-laplacian
            evolve.times = 0.0,1.0
            evolve.radius = 8
            output.prefix = ev
            """,
        )
        result = run_experiment(load_config(p), tmp_path / "out")
        body = (tmp_path / "out" / "ev_snapshots.csv").read_text().splitlines()
        assert body[0].startswith("experiment,config_hash,t,n0,re,im,prob")
        assert result.row_counts["ev_snapshots.csv"] > 0
        manifest = json.loads((tmp_path / "out" / "ev_manifest.json").read_text())
        assert manifest["config_hash"] == result.config_hash
        assert manifest["row_counts"] == result.row_counts

    def test_empty_grid_is_noop(self, tmp_path):
        p = write(
            tmp_path,
            "ly.cfg",
            f"""
            experiment = lyapunov-map
            {AMO_MODEL}
            lyapunov.energies = ,
            output.prefix = ly
            """,
        )
        result = run_experiment(load_config(p), tmp_path / "out")
        assert result.row_counts == {"ly_lyapunov.csv": 0}
        body = (tmp_path / "out" / "ly_lyapunov.csv").read_text().splitlines()
        assert len(body) == 1  # header only

    def test_moments_and_fit_outputs(self, tmp_path):
        p = write(
            tmp_path,
            "mom.cfg",
            f"""
            experiment = moment-growth
            {AMO_MODEL}
            moments.times = logspace:2,300,12
            moments.radius = 32
            output.prefix = mom
            """,
        )
        result = run_experiment(load_config(p), tmp_path / "out")
        assert result.row_counts["mom_moments.csv"] == 12
        fits = (tmp_path / "out" / "mom_fits.csv").read_text().splitlines()
        assert len(fits) == 2

    def test_scan_columns(self, tmp_path):
        p = write(
            tmp_path,
            "gs.cfg",
            f"""
            experiment = bad-set-scan
            {AMO_MODEL}
            scan.sizes = 6
            scan.sub_size = 2
            scan.energies = 0.0
            scan.horizon = 100.0
            output.prefix = gs
            """,
        )
        result = run_experiment(load_config(p), tmp_path / "out")
        lines = (tmp_path / "out" / "gs_scan.csv").read_text().splitlines()
        assert lines[0] == (
            "experiment,config_hash,N,N1,E,eps,n0,shapeId,norm,"
            "worstPairDecayMargin,good,stronglyGood"
        )
        assert result.row_counts["gs_scan.csv"] == 13  # one shape, 13 centers

    def test_sublinear_requires_three_scales(self, tmp_path):
        p = write(
            tmp_path,
            "sub.cfg",
            f"""
            experiment = sublinear
            {AMO_MODEL}
            scan.sizes = 10,20
            scan.sub_size = 3
            output.prefix = sub
            """,
        )
        with pytest.raises(ConfigError, match="three scales"):
            run_experiment(load_config(p), tmp_path / "out")

    def test_parseval_summary_row(self, tmp_path):
        p = write(
            tmp_path,
            "par.cfg",
            f"""
            experiment = parseval-crosscheck
            {AMO_MODEL}
            parseval.horizons = 5.0
            parseval.radius = 24
            output.prefix = par
            """,
        )
        result = run_experiment(load_config(p), tmp_path / "out")
        summary = (tmp_path / "out" / "par_summary.csv").read_text().splitlines()
        rel = float(summary[1].split(",")[6])
        assert rel < 1e-6
        assert not result.safety_flags

    def test_sublinear_chunking_matches_module_scan(self, tmp_path):
        # the harness splits centers into chunks across workers; the summed
        # counts must equal one unchunked module-level scan
        from qpdyn.greens import ClassificationParams, bad_set
        from qpdyn.operators import almost_mathieu

        p = write(
            tmp_path,
            "sub.cfg",
            f"""
            experiment = sublinear
            {AMO_MODEL}
            scan.sizes = 40,60,80
            scan.sub_size = 3
            scan.energies = 0.0
            scan.horizon = 1000.0
            output.prefix = sub
            """,
        )
        run_experiment(load_config(p), tmp_path / "out", workers=4)
        lines = (tmp_path / "out" / "sub_counts.csv").read_text().splitlines()[1:]
        got = {int(l.split(",")[2]): int(l.split(",")[6]) for l in lines}
        spec = almost_mathieu(3.0, float(GOLDEN), 0.3)
        params = ClassificationParams.for_spec(spec)
        for n in (40, 60, 80):
            assert got[n] == bad_set(spec, n, 3, 1e-3j, params).count

    def test_moments_auto_double_raises_radius(self, tmp_path):
        p = write(
            tmp_path,
            "mom.cfg",
            """
            experiment = moment-growth
            model.preset = free-laplacian
            moments.times = 2.0,10.0
            moments.radius = 16
            moments.auto_double = true
            moments.max_doublings = 3
            output.prefix = mom
            """,
        )
        result = run_experiment(load_config(p), tmp_path / "out")
        rows = (tmp_path / "out" / "mom_moments.csv").read_text().splitlines()[1:]
        radii = {int(r.split(",")[6]) for r in rows}
        assert radii == {64}
        assert not result.safety_flags

    def test_diophantine_row(self, tmp_path):
        p = write(
            tmp_path,
            "dio.cfg",
            """
            experiment = diophantine
            dio.alpha = 0.5
            dio.kappa = 2.0
            dio.tau = 0.001
            dio.kmax = 10
            output.prefix = dio
            """,
        )
        run_experiment(load_config(p), tmp_path / "out")
        line = (tmp_path / "out" / "dio_diophantine.csv").read_text().splitlines()[1]
        cells = line.split(",")
        assert cells[6] == "false" and cells[7] == "2"


SWEEP_CFG = f"""
experiment = lyapunov-map
seed = 9
{AMO_MODEL}
lyapunov.energies = 0.0,0.5,1.0
lyapunov.length = 800
lyapunov.phase_samples = 2
sweep.recipe = lyapunov-map
sweep.axes = model.lambda,lyapunov.length
sweep.values.model.lambda = 2.0,3.0,4.0
sweep.values.lyapunov.length = 400,800,1200
output.prefix = sw
"""


class TestSweep:
    def test_single_point_sweep_matches_direct_run(self, tmp_path):
        direct_cfg = write(
            tmp_path,
            "direct.cfg",
            f"""
            experiment = lyapunov-map
            seed = 9
            {AMO_MODEL}
            lyapunov.energies = 0.0,1.0
            lyapunov.length = 500
            lyapunov.phase_samples = 2
            output.prefix = direct
            """,
        )
        sweep_cfg = write(
            tmp_path,
            "sweep.cfg",
            f"""
            experiment = lyapunov-map
            seed = 9
            {AMO_MODEL}
            lyapunov.energies = 0.0,1.0
            lyapunov.length = 500
            lyapunov.phase_samples = 2
            sweep.recipe = lyapunov-map
            sweep.axes = model.lambda
            sweep.values.model.lambda = 3.0
            output.prefix = onept
            """,
        )
        run_experiment(load_config(direct_cfg), tmp_path / "a")
        run_sweep(load_config(sweep_cfg), tmp_path / "b")
        direct_rows = [
            line.split(",")[2:]
            for line in (tmp_path / "a" / "direct_lyapunov.csv")
            .read_text()
            .splitlines()[1:]
        ]
        sweep_rows = [
            line.split(",")[3:]
            for line in (tmp_path / "b" / "onept_lyapunov.csv")
            .read_text()
            .splitlines()[1:]
        ]
        assert direct_rows == sweep_rows

    def test_grid_order_is_lexicographic(self, tmp_path):
        p = write(tmp_path, "sw.cfg", SWEEP_CFG)
        run_sweep(load_config(p), tmp_path / "out", workers=2)
        lines = (tmp_path / "out" / "sw_lyapunov.csv").read_text().splitlines()[1:]
        combos = [tuple(line.split(",")[:2]) for line in lines]
        expected = [
            (lam, ln)
            for lam in ("2.0", "3.0", "4.0")
            for ln in ("400", "800", "1200")
            for _ in range(3)
        ]
        assert combos == expected

    def test_unknown_axis_rejected(self, tmp_path):
        p = write(
            tmp_path,
            "sw.cfg",
            SWEEP_CFG.replace("sweep.axes = model.lambda,lyapunov.length",
                              "sweep.axes = model.nonsense"),
        )
        with pytest.raises(ConfigError, match="does not exist"):
            run_sweep(load_config(p), tmp_path / "out")

    @pytest.mark.parametrize("workers", [1, 4])
    def test_byte_identical_across_workers(self, tmp_path, workers):
        p = write(tmp_path, "sw.cfg", SWEEP_CFG)
        run_sweep(load_config(p), tmp_path / "ref", workers=1)
        run_sweep(load_config(p), tmp_path / f"w{workers}", workers=workers)
        ref = (tmp_path / "ref" / "sw_lyapunov.csv").read_bytes()
        got = (tmp_path / f"w{workers}" / "sw_lyapunov.csv").read_bytes()
        assert ref == got


class TestCli:
    def test_success_exit_zero(self, tmp_path, capsys):
        p = write(
            tmp_path,
            "dio.cfg",
            """
            experiment = diophantine
            dio.alpha = 0.6180339887498949
            dio.kappa = 1.01
            dio.tau = 0.3
            dio.kmax = 1000
            output.prefix = dio
            """,
        )
        code = cli.main(["diophantine", "--config", str(p), "--out", str(tmp_path / "o")])
        assert code == 0
        assert "wrote" in capsys.readouterr().out

    def test_config_error_exit_two(self, tmp_path, capsys):
        p = write(tmp_path, "bad.cfg", "experiment = moment-growth\n")
        code = cli.main(["moments", "--config", str(p), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "invalid config" in capsys.readouterr().err

    def test_missing_file_exit_two(self, tmp_path):
        code = cli.main(
            ["evolve", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)]
        )
        assert code == 2

    def test_safety_flag_exit_three(self, tmp_path, capsys):
        # ballistic spreading floods a small box, raising the leakage flag
        p = write(
            tmp_path,
            "par.cfg",
            """
            experiment = parseval-crosscheck
            model.preset = free-laplacian
            parseval.horizons = 20.0
            parseval.radius = 24
            output.prefix = par
            """,
        )
        code = cli.main(
            ["parseval-check", "--config", str(p), "--out", str(tmp_path / "o")]
        )
        assert code == 3
        assert "safety" in capsys.readouterr().err

    def test_recipe_names_cover_cli(self):
        assert set(cli.SUBCOMMANDS.values()) - {"sweep"} == set(RECIPES)
