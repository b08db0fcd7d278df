"""Config grammar, artifact stamping, stage caching, and the CLI."""

import dataclasses
import datetime as dt
import json
import os

import numpy as np
import pytest

from pricebench import cli
from pricebench.config import config_hash, load_config, parse_config
from pricebench.evaluation import DmResult, MetricReport
from pricebench.exceptions import ConfigError, DataError, NumericError
from pricebench.pipeline import (
    BenchmarkReport,
    MetricRow,
    _best_flags,
    build_report,
    compare_predictions,
    dm_pairs_for,
    emit_tables,
    load_clean,
    read_stamped,
    read_table,
    run_pipeline,
    stable_salt,
    stage_evaluate,
    stage_ingest,
    stage_train,
    write_table,
)


def write_series_csv(path, seed, n=160, gap_at=(40, 41), zero_at=70):
    """Noisy seasonal series with a calendar gap and one zero-price day."""
    rng = np.random.default_rng(seed)
    start = dt.date(2021, 1, 1)
    lines = ["date,min,max"]
    for i in range(n):
        if i in gap_at:
            continue
        day = start + dt.timedelta(days=i)
        mid = 20.0 + 3.0 * np.sin(2 * np.pi * i / 30.0) + 0.01 * i + rng.normal(0, 0.3)
        lo, hi = (0.0, 0.0) if i == zero_at else (mid - 0.5, mid + 0.5)
        lines.append(f"{day.isoformat()},{lo:.4f},{hi:.4f}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


INI = """\
[run]
output_dir = out
seed = 42
models = naive, sarima

[data]
alpha = data/alpha.csv
beta = data/beta.csv

[windows]
seq_len = 12
horizon = 5

[diagnostics]
period = 14

[dm]
pairs = sarima:naive
"""


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    root = tmp_path_factory.mktemp("world")
    os.makedirs(root / "data")
    write_series_csv(root / "data" / "alpha.csv", seed=1)
    write_series_csv(root / "data" / "beta.csv", seed=2)
    (root / "run.ini").write_text(INI)
    cfg = load_config(str(root / "run.ini"))
    report = run_pipeline(cfg)
    return root, cfg, report


def reconfigure(root, **changes):
    return dataclasses.replace(load_config(str(root / "run.ini")), **changes)


class TestConfigParsing:
    def base(self, tmp_path, extra=""):
        (tmp_path / "a.csv").write_text("date,min,max\n")
        return parse_config("[data]\na = a.csv\n" + extra, str(tmp_path))

    def test_minimal_defaults(self, tmp_path):
        cfg = self.base(tmp_path)
        assert cfg.models == ("naive", "sarima", "bilstm", "transformer",
                              "t2v_transformer")
        assert cfg.seed == 42
        assert cfg.fractions == (0.8, 0.1, 0.1)
        assert (cfg.seq_len, cfg.horizon, cfg.dm_h) == (90, 14, 14)
        assert cfg.interpolate_zeros is False
        assert cfg.data["a"] == os.path.join(str(tmp_path), "a.csv")

    def test_dm_h_follows_horizon(self, tmp_path):
        cfg = self.base(tmp_path, "[windows]\nhorizon = 7\n")
        assert cfg.dm_h == 7

    def test_inline_comments(self, tmp_path):
        cfg = self.base(tmp_path, "[run]\nseed = 7 ; why not\n")
        assert cfg.seed == 7

    def test_interpolate_zeros_flag(self, tmp_path):
        cfg = self.base(tmp_path, "[ingest]\ninterpolate_zeros = true\n")
        assert cfg.interpolate_zeros is True
        with pytest.raises(ConfigError, match="not a boolean"):
            self.base(tmp_path, "[ingest]\ninterpolate_zeros = maybe\n")

    def test_dropout_override_applies(self, tmp_path):
        cfg = self.base(tmp_path, "[dropout]\na = 0.3\n")
        assert cfg.train_config_for("a").dropout == 0.3
        assert cfg.train_config_for("missing").dropout == cfg.train.dropout

    @pytest.mark.parametrize("snippet, pattern", [
        ("[experiment]\nx = 1\n", "unknown config section"),
        ("[run]\nseeed = 1\n", "unknown keys"),
        ("[columns]\nmid = m\nmin = lo\n", "not both"),
        ("[split]\ntrain = 0.9\nval = 0.3\ntest = 0.1\n", "sum to 1"),
        ("[run]\nmodels = naive, prophet\n", "unknown model"),
        ("[run]\nmodels = naive, naive\n", "duplicates"),
        ("[dm]\npairs = naive-sarima\n", "modelA:modelB"),
        ("[dm]\npairs = naive:bilstm\n[run]\nmodels = naive, sarima\n",
         "unselected model"),
        ("[dm]\npairs = naive:naive\n", "itself"),
        ("[dropout]\nghost = 0.2\n", "unknown commodity"),
        ("[dropout]\na = 1.5\n", "in \\[0, 1\\)"),
        ("[run]\njobs = 0\n", "jobs"),
        ("[run]\nseed = many\n", "cannot parse"),
        ("[windows]\nseq_len = 0\n", ">= 1"),
        ("[evaluate]\nzero_policy = drop\n", "zero_policy"),
    ])
    def test_rejects(self, tmp_path, snippet, pattern):
        with pytest.raises(ConfigError, match=pattern):
            self.base(tmp_path, snippet)

    def test_needs_data_section(self, tmp_path):
        with pytest.raises(ConfigError, match="data"):
            parse_config("[run]\nseed = 1\n", str(tmp_path))

    def test_bad_commodity_name(self, tmp_path):
        (tmp_path / "a.csv").write_text("date,min,max\n")
        with pytest.raises(ConfigError, match="lowercase"):
            parse_config("[data]\nBad Name = a.csv\n", str(tmp_path))

    def test_check_files(self, tmp_path):
        cfg = parse_config("[data]\na = missing.csv\n", str(tmp_path))
        with pytest.raises(ConfigError, match="missing data files"):
            cfg.check_files()

    def test_load_config_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "nope.ini"))

    def test_mid_only_schema(self, tmp_path):
        cfg = self.base(tmp_path, "[columns]\nmid = price\n")
        assert cfg.columns.mid_col == "price"
        assert cfg.columns.min_col is None


class TestConfigHash:
    def make(self, tmp_path, extra=""):
        (tmp_path / "a.csv").write_text("date,min,max\n")
        return parse_config("[data]\na = a.csv\n" + extra, str(tmp_path))

    def test_stable_under_formatting(self, tmp_path):
        a = self.make(tmp_path)
        b = self.make(tmp_path, "\n; a comment\n")
        assert config_hash(a) == config_hash(b)
        assert len(config_hash(a)) == 16

    def test_output_dir_excluded(self, tmp_path):
        a = self.make(tmp_path)
        b = self.make(tmp_path, "[run]\noutput_dir = elsewhere\n")
        assert config_hash(a) == config_hash(b)

    @pytest.mark.parametrize("extra", [
        "[run]\nseed = 43\n",
        "[run]\nmodels = naive\n",
        "[windows]\nseq_len = 30\n",
        "[train]\nlr = 2e-3\n",
        "[dropout]\na = 0.25\n",
        "[ingest]\ninterpolate_zeros = on\n",
        "[evaluate]\nzero_policy = epsilon\n",
    ])
    def test_sensitive_to_content(self, tmp_path, extra):
        assert config_hash(self.make(tmp_path)) != \
            config_hash(self.make(tmp_path, extra))

    def test_jobs_excluded(self, tmp_path):
        # parallelism must not invalidate artifacts
        a = self.make(tmp_path)
        b = self.make(tmp_path, "[run]\njobs = 4\n")
        assert config_hash(a) == config_hash(b)


class TestStampedTables:
    def test_round_trip(self, tmp_path):
        path = str(tmp_path / "t.csv")
        write_table(path, [("config", "cafe"), ("grid", "g1")],
                    ["x", "y"], [["1", "a"], ["2", "b"]])
        stamps, header, rows = read_table(path)
        assert stamps == {"config": "cafe", "grid": "g1"}
        assert header == ["x", "y"]
        assert rows == [["1", "a"], ["2", "b"]]

    def test_read_stamped_rejects_other_config(self, tmp_path):
        path = str(tmp_path / "t.csv")
        write_table(path, [("config", "cafe")], ["x"], [["1"]])
        assert read_stamped(path, "cafe")[1] == [["1"]]
        with pytest.raises(ConfigError, match="config"):
            read_stamped(path, "beef")

    def test_stable_salt(self):
        assert stable_salt("garlic") == stable_salt("garlic")
        assert stable_salt("garlic") != stable_salt("chickpea")
        lo, hi = stable_salt("garlic")
        assert 0 <= lo < 2**32 and 0 <= hi < 2**32


class TestIngest:
    def test_clean_series_is_contiguous(self, world):
        root, cfg, _ = world
        dates, mids = load_clean(cfg, "alpha")
        assert len(dates) == 160  # the two gap days were refilled
        assert all((b - a).days == 1 for a, b in zip(dates, dates[1:]))
        assert mids[70] == 0.0  # zeros survive by default

    def test_anomaly_report(self, world):
        root, cfg, _ = world
        _, _, rows = read_table(str(root / "out" / "ingest" /
                                    "alpha_anomalies.csv"))
        kinds = {(r[0], r[1]) for r in rows}
        start = dt.date(2021, 1, 1)
        for i in (40, 41):
            assert ((start + dt.timedelta(days=i)).isoformat(),
                    "gap-filled") in kinds
        zero_day = (start + dt.timedelta(days=70)).isoformat()
        assert any(r[0] == zero_day and r[1] == "zero-price" for r in rows)

    def test_interpolation_is_opt_in(self, world, tmp_path):
        root, cfg, _ = world
        cfg2 = reconfigure(root, interpolate_zeros=True,
                           output_dir=str(tmp_path / "sens"))
        stage_ingest(cfg2)
        _, mids = load_clean(cfg2, "alpha")
        assert mids[70] > 0.0
        assert np.all(mids > 0.0)

    def test_output_dir_pinned_to_one_config(self, world):
        root, _, _ = world
        other = reconfigure(root, seed=43)
        with pytest.raises(ConfigError, match="config"):
            stage_ingest(other)


class TestPipelineArtifacts:
    def test_report_shape(self, world):
        _, cfg, report = world
        assert {(r.commodity, r.model) for r in report.metrics} == {
            (c, m) for c in ("alpha", "beta") for m in ("naive", "sarima")
        }
        assert [(r.commodity, r.model_a, r.model_b) for r in report.dm] == [
            ("alpha", "sarima", "naive"), ("beta", "sarima", "naive")
        ]
        assert len(report.diagnostics) == 2
        assert report.config_hash == config_hash(cfg)

    def test_metric_rows_sane(self, world):
        _, _, report = world
        for row in report.metrics:
            rep = row.report
            assert 0 <= rep.mae <= rep.rmse
            assert rep.n == 12 * 5  # test windows x horizon
            assert np.isfinite(rep.mape)

    def test_expected_files(self, world):
        root, cfg, _ = world
        out = root / "out"
        for name in ("metrics.csv", "dm.csv", "diagnostics.csv", "summary.txt",
                     "run.json", "plots.csv", "CONFIG"):
            assert (out / name).exists(), name
        for c in ("alpha", "beta"):
            for m in ("naive", "sarima"):
                assert (out / "models" / f"{c}__{m}.ckpt").exists()
                assert (out / "train" / f"{c}__{m}.csv").exists()
                assert (out / "predictions" / f"{c}__{m}.csv").exists()

    def test_run_json(self, world):
        root, cfg, _ = world
        meta = json.loads((root / "out" / "run.json").read_text())
        assert meta["config_hash"] == config_hash(cfg)
        assert meta["seed"] == 42
        assert set(meta["stages"]) >= {"ingest", "train", "evaluate", "report"}

    def test_summary_contents(self, world):
        root, cfg, report = world
        text = (root / "out" / "summary.txt").read_text()
        assert text.startswith(f"# config={config_hash(cfg)}")
        assert "seed 42" in text
        for word in ("alpha", "beta", "naive", "sarima", "mae", "p_value"):
            assert word in text
        assert "forecast origins" in text  # overlap caveat rides along

    def test_predictions_carry_grid_stamp(self, world):
        root, _, _ = world
        stamps, header, rows = read_table(
            str(root / "out" / "predictions" / "alpha__naive.csv"))
        assert "grid" in stamps and "config" in stamps
        assert header == ["window_id", "step", "date", "actual", "predicted"]
        assert len(rows) == 12 * 5


class TestCachingAndDeterminism:
    def test_rerun_is_cached_and_identical(self, world):
        root, cfg, _ = world
        out = root / "out"
        files = ["metrics.csv", "dm.csv", "diagnostics.csv", "summary.txt"]
        before = {f: (out / f).read_bytes() for f in files}
        ckpt = out / "models" / "alpha__sarima.ckpt"
        stamp = ckpt.stat().st_mtime_ns
        run_pipeline(cfg)
        assert ckpt.stat().st_mtime_ns == stamp  # cache hit, no retrain
        assert {f: (out / f).read_bytes() for f in files} == before

    def test_forced_recompute_is_byte_identical(self, world):
        root, cfg, _ = world
        out = root / "out"
        files = ["metrics.csv", "dm.csv", "diagnostics.csv", "summary.txt"]
        before = {f: (out / f).read_bytes() for f in files}
        run_pipeline(cfg, force=True)
        assert {f: (out / f).read_bytes() for f in files} == before

    def test_fresh_directory_reproduces_bytes(self, world, tmp_path):
        root, cfg, _ = world
        cfg2 = reconfigure(root, output_dir=str(tmp_path / "replica"))
        run_pipeline(cfg2)
        for f in ("metrics.csv", "dm.csv", "summary.txt"):
            assert (tmp_path / "replica" / f).read_bytes() == \
                (root / "out" / f).read_bytes()

    def test_force_touches_only_invoked_stage(self, world):
        root, cfg, _ = world
        out = root / "out"
        ckpt_stamp = (out / "models" / "alpha__naive.ckpt").stat().st_mtime_ns
        metrics_stamp = (out / "metrics.csv").stat().st_mtime_ns
        stage_evaluate(cfg, force=True)
        assert (out / "metrics.csv").stat().st_mtime_ns != metrics_stamp
        assert (out / "models" / "alpha__naive.ckpt").stat().st_mtime_ns == \
            ckpt_stamp

    def test_train_cache_does_not_refit(self, world):
        root, cfg, _ = world
        hist = root / "out" / "train" / "beta__sarima.csv"
        stamp = hist.stat().st_mtime_ns
        stage_train(cfg)
        assert hist.stat().st_mtime_ns == stamp


class TestReportAssembly:
    def rows(self):
        def rep(mae):
            return MetricReport(mae=mae, rmse=mae + 1, mape=10 * mae, n=4,
                                skipped_zero_targets=0)
        return [
            MetricRow("alpha", "naive", rep(2.0)),
            MetricRow("alpha", "bilstm", rep(1.0)),
            MetricRow("alpha", "transformer", rep(3.0)),
        ]

    def test_best_flags(self):
        flags = _best_flags(self.rows())
        assert flags[("alpha", "bilstm")] == ("mae,rmse,mape", "mae,rmse,mape")
        assert flags[("alpha", "naive")] == ("-", "-")
        assert flags[("alpha", "transformer")] == ("-", "-")

    def test_best_flags_split_winners(self):
        rows = self.rows()

        def rep(mae):
            return MetricReport(mae=mae, rmse=mae + 1, mape=10 * mae, n=4,
                                skipped_zero_targets=0)
        rows[0] = MetricRow("alpha", "naive", rep(0.5))  # beats everyone
        flags = _best_flags(rows)
        assert flags[("alpha", "naive")] == ("mae,rmse,mape", "-")
        assert flags[("alpha", "bilstm")] == ("-", "mae,rmse,mape")

    def test_build_report_requires_complete_grid(self, world):
        _, cfg, report = world
        with pytest.raises(DataError, match="incomplete"):
            build_report(cfg, list(report.metrics[:-1]),
                         list(report.diagnostics), list(report.dm))

    def test_emit_tables_refuses_empty(self, world):
        _, cfg, _ = world
        empty = BenchmarkReport(metrics=(), diagnostics=(), dm=(), seed=1,
                                config_hash="x")
        with pytest.raises(DataError):
            emit_tables(empty, cfg)

    def test_default_dm_pair_is_the_ablation(self, tmp_path):
        (tmp_path / "a.csv").write_text("date,min,max\n")
        cfg = parse_config("[data]\na = a.csv\n", str(tmp_path))
        assert dm_pairs_for(cfg) == (("t2v_transformer", "transformer"),)
        narrowed = parse_config("[data]\na = a.csv\n[run]\nmodels = naive\n",
                                str(tmp_path))
        assert dm_pairs_for(narrowed) == ()


class TestComparePredictions:
    def fake_pred(self, path, config="c1", grid="g1", shift=0.0, n=30):
        rng = np.random.default_rng(0)
        rows = []
        start = dt.date(2022, 1, 1)
        for i in range(n):
            actual = 10 + float(rng.normal())
            rows.append([str(i // 5), str(i % 5),
                         (start + dt.timedelta(days=i)).isoformat(),
                         "%.6f" % actual,
                         "%.6f" % (actual + float(rng.normal()) + shift)])
        write_table(str(path), [("config", config), ("grid", grid)],
                    ["window_id", "step", "date", "actual", "predicted"], rows)

    def test_happy_path(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        self.fake_pred(a)
        self.fake_pred(b, shift=3.0)
        r = compare_predictions(str(a), str(b), h=5, label_a="a", label_b="b")
        assert isinstance(r, DmResult)
        assert r.direction == "a"  # unshifted forecasts are closer

    def test_grid_mismatch(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        self.fake_pred(a, grid="g1")
        self.fake_pred(b, grid="g2")
        with pytest.raises(DataError, match="grid"):
            compare_predictions(str(a), str(b), h=5, label_a="a", label_b="b")

    def test_config_mismatch(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        self.fake_pred(a, config="c1")
        self.fake_pred(b, config="c2", shift=1.0)
        with pytest.raises(ConfigError, match="config"):
            compare_predictions(str(a), str(b), h=5, label_a="a", label_b="b")


class TestCli:
    def test_all_subcommand(self, world, capsys):
        root, _, _ = world
        assert cli.main(["all", "-c", str(root / "run.ini")]) == 0
        assert capsys.readouterr().out.strip().endswith("summary.txt")

    def test_evaluate_prints_artifact_path(self, world, capsys):
        root, _, _ = world
        assert cli.main(["evaluate", "-c", str(root / "run.ini")]) == 0
        assert capsys.readouterr().out.strip().endswith("metrics.csv")

    def test_standalone_dm(self, world, capsys):
        root, _, _ = world
        pred = root / "out" / "predictions"
        code = cli.main([
            "dm",
            "--pred-a", str(pred / "alpha__sarima.csv"),
            "--pred-b", str(pred / "alpha__naive.csv"),
            "--h", "5",
        ])
        out = capsys.readouterr().out.splitlines()
        assert code == 0
        assert out[0] == "statistic,p_value,n,h,lag,fallback,direction"
        cells = out[1].split(",")
        assert cells[3] == "5"
        assert cells[6] in ("sarima", "naive")

    def test_standalone_dm_rejects_cross_series(self, world):
        root, _, _ = world
        pred = root / "out" / "predictions"
        code = cli.main([
            "dm",
            "--pred-a", str(pred / "alpha__naive.csv"),
            "--pred-b", str(pred / "beta__naive.csv"),
            "--h", "5",
        ])
        assert code == 2  # same shape, different actuals: a data problem

    def test_dm_needs_both_or_config(self, world):
        root, _, _ = world
        assert cli.main(["dm", "--pred-a", "only_one.csv"]) == 1
        assert cli.main(["dm"]) == 1

    def test_usage_errors_exit_1(self):
        assert cli.main(["frobnicate"]) == 1
        assert cli.main(["train"]) == 1  # missing -c

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["train", "-c", str(tmp_path / "ghost.ini")]) == 1

    def test_malformed_data_exits_2(self, tmp_path):
        (tmp_path / "bad.csv").write_text("just,not,prices\n1,2,3\n")
        (tmp_path / "r.ini").write_text("[data]\nbad = bad.csv\n")
        assert cli.main(["ingest", "-c", str(tmp_path / "r.ini")]) == 2

    def test_numeric_failure_exits_3(self, world, monkeypatch):
        root, _, _ = world

        def boom(cfg, force=False):
            raise NumericError("synthetic blowup")

        monkeypatch.setattr(cli.pipeline, "stage_diagnose", boom)
        assert cli.main(["diagnose", "-c", str(root / "run.ini")]) == 3

    def test_interpolate_zeros_flag_changes_hash(self, world):
        # same output dir, different effective config: the pin refuses
        root, _, _ = world
        assert cli.main(["ingest", "-c", str(root / "run.ini"),
                         "--interpolate-zeros"]) == 1

    def test_model_label(self):
        assert cli._model_label("out/predictions/garlic__t2v_transformer.csv") \
            == "t2v_transformer"
        assert cli._model_label("plain.csv") == "plain"
