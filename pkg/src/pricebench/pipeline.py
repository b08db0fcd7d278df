"""Benchmark pipeline: staged artifact production under one config hash.

Stage order is a DAG: ingest -> diagnose, ingest -> train -> predict ->
evaluate -> dm -> report. Every stage is callable on its own and pulls
whatever upstream artifacts it needs, reusing anything already on disk.
All artifacts live under the configured output directory and carry the
config hash; an output directory can only ever hold artifacts of one
config, which is pinned by a CONFIG marker file on first write.

Text artifacts are CSV (UTF-8, comma, ISO dates) with ``# key=value``
stamp lines before the header. Binary artifacts (model checkpoints,
see models.base) are covered by the directory-level pin. Nothing under
the output directory contains wall-clock time except run.json, so
reruns with the same config and seed are byte-identical where it
matters: two runs produce identical metrics CSVs.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io
import json
import logging
import math
import os
import platform
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import scipy

from . import __version__
from .config import RunConfig, config_hash
from .diagnostics import adf_test, rs_ratio, stl_decompose
from .evaluation import DmResult, MetricReport, dm_test, metrics
from .exceptions import ConfigError, DataError
from .models import build_forecaster
from .models.base import DEEP_KINDS, SeriesData, build_series_data, read_checkpoint, save_checkpoint
from .series import forward_fill, interpolate_zeros, parse_series, validate

log = logging.getLogger("pricebench")

STAGES = ("ingest", "diagnose", "train", "predict", "evaluate", "dm", "report")

_METRIC_NAMES = ("mae", "rmse", "mape")


def _g(x: float) -> str:
    """Canonical float rendering for artifacts: shortest %.12g form."""
    return "%.12g" % float(x)


def stable_salt(commodity: str) -> tuple[int, int]:
    """Two words derived from the name alone, used to spawn RNG streams.

    Depends on nothing but the commodity name, so adding or removing
    other commodities from a run never changes anyone's draws.
    """
    digest = hashlib.sha256(commodity.encode("utf-8")).digest()
    return (
        int.from_bytes(digest[0:4], "little"),
        int.from_bytes(digest[4:8], "little"),
    )


# ---------------------------------------------------------------------------
# stamped artifact I/O


def _atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_table(path: str, stamps: list[tuple[str, str]], header: list[str],
                rows: list[list[str]]) -> None:
    buf = io.StringIO()
    for key, value in stamps:
        buf.write(f"# {key}={value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write_text(path, buf.getvalue())


def read_table(path: str) -> tuple[dict[str, str], list[str], list[list[str]]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read artifact {path}: {exc}") from exc
    stamps: dict[str, str] = {}
    body = 0
    for line in lines:
        if not line.startswith("# "):
            break
        key, _, value = line[2:].partition("=")
        stamps[key] = value
        body += 1
    rows = list(csv.reader(lines[body:]))
    if not rows:
        raise DataError(f"{path}: no header row")
    return stamps, rows[0], rows[1:]


def read_stamped(path: str, expect_hash: str) -> tuple[list[str], list[list[str]]]:
    """Read a table, rejecting artifacts produced under another config."""
    stamps, header, rows = read_table(path)
    found = stamps.get("config")
    if found != expect_hash:
        raise ConfigError(
            f"{path} was produced under config {found or 'unknown'}, current "
            f"config is {expect_hash}; use a fresh output_dir or rerun"
        )
    return header, rows


def _pin_config(out_dir: str, digest: str) -> None:
    """First writer pins the directory to one config hash, forever."""
    os.makedirs(out_dir, exist_ok=True)
    marker = os.path.join(out_dir, "CONFIG")
    if os.path.exists(marker):
        with open(marker, "r", encoding="utf-8") as fh:
            existing = fh.read().strip()
        if existing != digest:
            raise ConfigError(
                f"output_dir {out_dir} holds artifacts of config {existing}, "
                f"current config is {digest}; pick another output_dir"
            )
        return
    _atomic_write_text(marker, digest + "\n")


def _update_run_json(cfg: RunConfig, digest: str, stage: str) -> None:
    path = os.path.join(cfg.output_dir, "run.json")
    state: dict = {}
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as fh:
            state = json.load(fh)
    state.update(
        config_hash=digest,
        seed=cfg.seed,
        versions={
            "pricebench": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    )
    stamps = state.setdefault("stages", {})
    stamps[stage] = dt.datetime.now(dt.timezone.utc).isoformat()
    _atomic_write_text(path, json.dumps(state, indent=2, sort_keys=True) + "\n")


def _fresh(cfg_hash: str, *paths: str) -> bool:
    """All artifacts exist and carry the current config stamp."""
    for path in paths:
        if not os.path.exists(path):
            return False
        try:
            stamps, _, _ = read_table(path)
        except DataError:
            return False
        if stamps.get("config") != cfg_hash:
            return False
    return True


# ---------------------------------------------------------------------------
# stage: ingest


def _ingest_paths(cfg: RunConfig, commodity: str) -> tuple[str, str]:
    base = os.path.join(cfg.output_dir, "ingest")
    return (
        os.path.join(base, f"{commodity}.csv"),
        os.path.join(base, f"{commodity}_anomalies.csv"),
    )


def stage_ingest(cfg: RunConfig, force: bool = False) -> None:
    """Parse, flag, and gap-fill every configured series."""
    digest = config_hash(cfg)
    _pin_config(cfg.output_dir, digest)
    cfg.check_files()
    for commodity in cfg.commodities:
        clean_path, anom_path = _ingest_paths(cfg, commodity)
        if not force and _fresh(digest, clean_path, anom_path):
            log.info("ingest %s: cached", commodity)
            continue
        with open(cfg.data[commodity], "r", encoding="utf-8") as fh:
            text = fh.read()
        series = parse_series(text, commodity, cfg.columns)
        flags = validate(series)
        series = replace(series, anomalies=tuple(flags))
        if cfg.interpolate_zeros:  # sensitivity mode; zeros survive by default
            series = interpolate_zeros(series)
        series = forward_fill(series)
        rows = [
            [r.date.isoformat(), _g(r.min_price), _g(r.max_price), _g(r.mid_price)]
            for r in series.records
        ]
        write_table(clean_path, [("config", digest)],
                    ["date", "min", "max", "mid"], rows)
        anom_rows = [
            [f.date.isoformat(), f.kind, _g(f.raw_value)] for f in series.anomalies
        ]
        write_table(anom_path, [("config", digest)],
                    ["date", "kind", "raw_value"], anom_rows)
        log.info("ingest %s: %d days, %d flags", commodity, len(rows), len(anom_rows))
    _update_run_json(cfg, digest, "ingest")


def load_clean(cfg: RunConfig, commodity: str) -> tuple[list[dt.date], np.ndarray]:
    """Dates and mid prices of a repaired series from the ingest artifact."""
    digest = config_hash(cfg)
    clean_path, _ = _ingest_paths(cfg, commodity)
    _, rows = read_stamped(clean_path, digest)
    dates = [dt.date.fromisoformat(r[0]) for r in rows]
    mids = np.array([float(r[3]) for r in rows], dtype=np.float64)
    return dates, mids


# ---------------------------------------------------------------------------
# stage: diagnose


def _diagnostics_path(cfg: RunConfig) -> str:
    return os.path.join(cfg.output_dir, "diagnostics.csv")


@dataclass(frozen=True)
class DiagnosticsRow:
    commodity: str
    n: int
    adf_stat: float
    adf_p: float
    stationary: bool
    rs_ratio: float
    period: int


def stage_diagnose(cfg: RunConfig, force: bool = False) -> list[DiagnosticsRow]:
    digest = config_hash(cfg)
    _pin_config(cfg.output_dir, digest)
    path = _diagnostics_path(cfg)
    if not force and _fresh(digest, path):
        log.info("diagnose: cached")
        return _load_diagnostics(cfg)
    stage_ingest(cfg)
    out: list[DiagnosticsRow] = []
    for commodity in cfg.commodities:
        _, mids = load_clean(cfg, commodity)
        adf = adf_test(mids)
        decomp = stl_decompose(mids, period=cfg.diag_period)
        out.append(
            DiagnosticsRow(
                commodity=commodity,
                n=len(mids),
                adf_stat=adf.statistic,
                adf_p=adf.p_value,
                stationary=adf.stationary,
                rs_ratio=rs_ratio(decomp),
                period=cfg.diag_period,
            )
        )
        log.info("diagnose %s: adf_p=%.4f rs=%.3f", commodity, adf.p_value,
                 out[-1].rs_ratio)
    _write_diagnostics(cfg, out)
    _update_run_json(cfg, digest, "diagnose")
    return out


def _write_diagnostics(cfg: RunConfig, rows: list[DiagnosticsRow]) -> None:
    write_table(
        _diagnostics_path(cfg),
        [("config", config_hash(cfg))],
        ["commodity", "n", "adf_stat", "adf_p", "stationary", "rs_ratio", "period"],
        [
            [r.commodity, str(r.n), _g(r.adf_stat), _g(r.adf_p),
             str(r.stationary).lower(), _g(r.rs_ratio), str(r.period)]
            for r in rows
        ],
    )


def _load_diagnostics(cfg: RunConfig) -> list[DiagnosticsRow]:
    _, rows = read_stamped(_diagnostics_path(cfg), config_hash(cfg))
    return [
        DiagnosticsRow(r[0], int(r[1]), float(r[2]), float(r[3]),
                       r[4] == "true", float(r[5]), int(r[6]))
        for r in rows
    ]


# ---------------------------------------------------------------------------
# stage: train


def prepare_series(
    cfg: RunConfig, commodity: str
) -> tuple[list[dt.date], np.ndarray, SeriesData]:
    """Dates, raw mid prices, and the split/scaled/windowed view."""
    dates, mids = load_clean(cfg, commodity)
    data = build_series_data(
        mids,
        commodity=commodity,
        fractions=cfg.fractions,
        seq_len=cfg.seq_len,
        horizon=cfg.horizon,
        eval_stride=cfg.eval_stride,
    )
    return dates, mids, data


def _model_paths(cfg: RunConfig, commodity: str, kind: str) -> tuple[str, str]:
    return (
        os.path.join(cfg.output_dir, "models", f"{commodity}__{kind}.ckpt"),
        os.path.join(cfg.output_dir, "train", f"{commodity}__{kind}.csv"),
    )


def _train_commodity(cfg: RunConfig, commodity: str, force: bool) -> None:
    digest = config_hash(cfg)
    todo = []
    for kind in cfg.models:
        ckpt, hist = _model_paths(cfg, commodity, kind)
        if not force and os.path.exists(ckpt) and _fresh(digest, hist):
            log.info("train %s/%s: cached", commodity, kind)
            continue
        todo.append((kind, ckpt, hist))
    if not todo:
        return
    _, _, data = prepare_series(cfg, commodity)
    train_cfg = cfg.train_config_for(commodity)
    for kind, ckpt, hist in todo:
        model = build_forecaster(
            kind,
            seq_len=cfg.seq_len,
            horizon=cfg.horizon,
            seed=cfg.seed,
            salt=stable_salt(commodity),
        )
        history = model.fit(data, train_cfg)
        os.makedirs(os.path.dirname(ckpt), exist_ok=True)
        tmp = ckpt + ".tmp"
        save_checkpoint(model, tmp)
        os.replace(tmp, ckpt)
        write_table(
            hist,
            [("config", digest)],
            ["epoch", "train_loss", "val_loss", "lr"],
            [[str(e.epoch), _g(e.train_loss), _g(e.val_loss), _g(e.lr)]
             for e in history],
        )
        log.info("train %s/%s: %d epochs", commodity, kind, len(history))


def _train_task(args: tuple[RunConfig, str, bool]) -> str:
    cfg, commodity, force = args
    _train_commodity(cfg, commodity, force)
    return commodity


def stage_train(cfg: RunConfig, force: bool = False) -> None:
    digest = config_hash(cfg)
    _pin_config(cfg.output_dir, digest)
    stage_ingest(cfg)
    if cfg.jobs > 1 and len(cfg.commodities) > 1:
        tasks = [(cfg, c, force) for c in cfg.commodities]
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            for name in pool.map(_train_task, tasks):
                log.info("train %s: done", name)
    else:
        for commodity in cfg.commodities:
            _train_commodity(cfg, commodity, force)
    _update_run_json(cfg, digest, "train")


# ---------------------------------------------------------------------------
# stage: predict


def _prediction_path(cfg: RunConfig, commodity: str, kind: str) -> str:
    return os.path.join(cfg.output_dir, "predictions", f"{commodity}__{kind}.csv")


def load_model(cfg: RunConfig, commodity: str, kind: str):
    ckpt, _ = _model_paths(cfg, commodity, kind)
    if not os.path.exists(ckpt):
        raise DataError(f"no checkpoint for {commodity}/{kind}; run train first")
    saved_kind, hyper, values = read_checkpoint(ckpt)
    if saved_kind != kind:
        raise DataError(f"{ckpt}: holds a {saved_kind} model, expected {kind}")
    model = build_forecaster(
        kind,
        seq_len=int(hyper.get("seq_len", cfg.seq_len)),
        horizon=int(hyper.get("horizon", cfg.horizon)),
        seed=int(hyper.get("seed", cfg.seed)),
        salt=tuple(hyper.get("salt", stable_salt(commodity))),
    )
    model.load_state_values(values)
    return model


def stage_predict(cfg: RunConfig, force: bool = False) -> None:
    digest = config_hash(cfg)
    _pin_config(cfg.output_dir, digest)
    stage_train(cfg)
    for commodity in cfg.commodities:
        paths = {k: _prediction_path(cfg, commodity, k) for k in cfg.models}
        if not force and _fresh(digest, *paths.values()):
            log.info("predict %s: cached", commodity)
            continue
        dates, mids, data = prepare_series(cfg, commodity)
        test = data.windows["test"]
        starts = test.target_starts
        for kind in cfg.models:
            model = load_model(cfg, commodity, kind)
            predicted = model.predict_prices(data, test)
            rows = []
            for i in range(test.count):
                for k in range(test.horizon):
                    t = int(starts[i]) + k
                    rows.append([
                        str(i), str(k + 1), dates[t].isoformat(),
                        _g(mids[t]), _g(predicted[i, k]),
                    ])
            write_table(
                paths[kind],
                [("config", digest), ("grid", test.fingerprint())],
                ["window_id", "step", "date", "actual", "predicted"],
                rows,
            )
            log.info("predict %s/%s: %d windows", commodity, kind, test.count)
    _update_run_json(cfg, digest, "predict")


def load_predictions(path: str) -> tuple[dict[str, str], np.ndarray, np.ndarray]:
    """Read one prediction artifact: stamps, actuals, predictions.

    Row order (window-major, then step) is preserved; it is the order
    the error vectors are compared in.
    """
    stamps, header, rows = read_table(path)
    if header != ["window_id", "step", "date", "actual", "predicted"]:
        raise DataError(f"{path}: not a prediction artifact (header {header})")
    if "grid" not in stamps:
        raise DataError(f"{path}: missing grid stamp")
    actual = np.array([float(r[3]) for r in rows], dtype=np.float64)
    predicted = np.array([float(r[4]) for r in rows], dtype=np.float64)
    return stamps, actual, predicted


# ---------------------------------------------------------------------------
# stage: evaluate


def _metrics_path(cfg: RunConfig) -> str:
    return os.path.join(cfg.output_dir, "metrics.csv")


@dataclass(frozen=True)
class MetricRow:
    commodity: str
    model: str
    report: MetricReport


def stage_evaluate(cfg: RunConfig, force: bool = False) -> list[MetricRow]:
    digest = config_hash(cfg)
    _pin_config(cfg.output_dir, digest)
    path = _metrics_path(cfg)
    if not force and _fresh(digest, path):
        log.info("evaluate: cached")
        return _load_metrics(cfg)
    stage_predict(cfg)
    out: list[MetricRow] = []
    for commodity in cfg.commodities:
        for kind in cfg.models:
            stamps, actual, predicted = load_predictions(
                _prediction_path(cfg, commodity, kind))
            if stamps.get("config") != digest:
                raise ConfigError(
                    f"predictions for {commodity}/{kind} carry config "
                    f"{stamps.get('config')}, expected {digest}")
            report = metrics(actual, predicted, zero_policy=cfg.zero_policy,
                             epsilon=cfg.epsilon)
            out.append(MetricRow(commodity, kind, report))
            log.info("evaluate %s/%s: mae=%.4f", commodity, kind, report.mae)
    _write_metrics(cfg, out)
    _update_run_json(cfg, digest, "evaluate")
    return out


def _write_metrics(cfg: RunConfig, rows: list[MetricRow]) -> None:
    write_table(
        _metrics_path(cfg),
        [("config", config_hash(cfg))],
        ["commodity", "model", "mae", "rmse", "mape", "n", "skipped_zero_targets"],
        [
            [r.commodity, r.model, _g(r.report.mae), _g(r.report.rmse),
             _g(r.report.mape), str(r.report.n), str(r.report.skipped_zero_targets)]
            for r in rows
        ],
    )


def _load_metrics(cfg: RunConfig) -> list[MetricRow]:
    _, rows = read_stamped(_metrics_path(cfg), config_hash(cfg))
    return [
        MetricRow(r[0], r[1], MetricReport(float(r[2]), float(r[3]), float(r[4]),
                                           int(r[5]), int(r[6])))
        for r in rows
    ]


# ---------------------------------------------------------------------------
# stage: dm


def _dm_path(cfg: RunConfig) -> str:
    return os.path.join(cfg.output_dir, "dm.csv")


@dataclass(frozen=True)
class DmRow:
    commodity: str
    model_a: str
    model_b: str
    result: DmResult


def dm_pairs_for(cfg: RunConfig) -> tuple[tuple[str, str], ...]:
    """Configured comparison pairs, defaulting to the encoding ablation."""
    if cfg.dm_pairs:
        return cfg.dm_pairs
    if "t2v_transformer" in cfg.models and "transformer" in cfg.models:
        return (("t2v_transformer", "transformer"),)
    return ()


def compare_predictions(path_a: str, path_b: str, h: int,
                        label_a: str, label_b: str) -> DmResult:
    """DM test between two prediction artifacts on the same grid."""
    stamps_a, actual_a, pred_a = load_predictions(path_a)
    stamps_b, actual_b, pred_b = load_predictions(path_b)
    if stamps_a["grid"] != stamps_b["grid"]:
        raise DataError(
            f"evaluation grids differ: {path_a} is {stamps_a['grid']}, "
            f"{path_b} is {stamps_b['grid']}")
    if stamps_a.get("config") != stamps_b.get("config"):
        raise ConfigError(
            f"prediction artifacts come from different configs: "
            f"{stamps_a.get('config')} vs {stamps_b.get('config')}")
    if not np.array_equal(actual_a, actual_b):
        raise DataError("prediction artifacts disagree on actual values")
    return dm_test(pred_a - actual_a, pred_b - actual_b, h=h,
                   label_a=label_a, label_b=label_b)


def stage_dm(cfg: RunConfig, force: bool = False) -> list[DmRow]:
    digest = config_hash(cfg)
    _pin_config(cfg.output_dir, digest)
    path = _dm_path(cfg)
    if not force and _fresh(digest, path):
        log.info("dm: cached")
        return _load_dm(cfg)
    stage_predict(cfg)
    out: list[DmRow] = []
    for commodity in cfg.commodities:
        for a, b in dm_pairs_for(cfg):
            result = compare_predictions(
                _prediction_path(cfg, commodity, a),
                _prediction_path(cfg, commodity, b),
                h=cfg.dm_h, label_a=a, label_b=b,
            )
            out.append(DmRow(commodity, a, b, result))
            log.info("dm %s %s vs %s: stat=%.3f p=%.4g", commodity, a, b,
                     result.statistic, result.p_value)
    _write_dm(cfg, out)
    _update_run_json(cfg, digest, "dm")
    return out


def _write_dm(cfg: RunConfig, rows: list[DmRow]) -> None:
    write_table(
        _dm_path(cfg),
        [("config", config_hash(cfg))],
        ["commodity", "model_a", "model_b", "statistic", "p_value", "n", "h",
         "lag", "fallback", "direction"],
        [
            [r.commodity, r.model_a, r.model_b, _g(r.result.statistic),
             _g(r.result.p_value), str(r.result.n), str(r.result.h),
             str(r.result.nw_lag), str(r.result.used_fallback).lower(),
             r.result.direction]
            for r in rows
        ],
    )


def _load_dm(cfg: RunConfig) -> list[DmRow]:
    _, rows = read_stamped(_dm_path(cfg), config_hash(cfg))
    return [
        DmRow(r[0], r[1], r[2], DmResult(
            statistic=float(r[3]), p_value=float(r[4]), h=int(r[6]), n=int(r[5]),
            nw_lag=int(r[7]), used_fallback=r[8] == "true", direction=r[9]))
        for r in rows
    ]


# ---------------------------------------------------------------------------
# stage: report


@dataclass(frozen=True)
class BenchmarkReport:
    """Everything one run produced, ready for table emission."""

    metrics: tuple[MetricRow, ...]
    diagnostics: tuple[DiagnosticsRow, ...]
    dm: tuple[DmRow, ...]
    seed: int
    config_hash: str


def build_report(cfg: RunConfig, metric_rows: list[MetricRow],
                 diag_rows: list[DiagnosticsRow], dm_rows: list[DmRow]) -> BenchmarkReport:
    """Assemble and sanity-check a complete report."""
    seen = [(r.commodity, r.model) for r in metric_rows]
    expected = [(c, m) for c in cfg.commodities for m in cfg.models]
    if sorted(seen) != sorted(expected):
        raise DataError(
            f"incomplete report: have {len(seen)} metric rows, "
            f"expected {len(expected)} (one per commodity and model)")
    return BenchmarkReport(
        metrics=tuple(metric_rows),
        diagnostics=tuple(diag_rows),
        dm=tuple(dm_rows),
        seed=cfg.seed,
        config_hash=config_hash(cfg),
    )


def _best_flags(rows: list[MetricRow]) -> dict[tuple[str, str], tuple[str, str]]:
    """Per (commodity, model): which metrics it wins overall / among deep."""
    flags: dict[tuple[str, str], tuple[list[str], list[str]]] = {
        (r.commodity, r.model): ([], []) for r in rows
    }
    by_commodity: dict[str, list[MetricRow]] = {}
    for r in rows:
        by_commodity.setdefault(r.commodity, []).append(r)
    for commodity, group in by_commodity.items():
        deep = [r for r in group if r.model in DEEP_KINDS]
        for name in _METRIC_NAMES:
            best = min(group, key=lambda r: getattr(r.report, name))
            flags[(commodity, best.model)][0].append(name)
            if deep:
                best_deep = min(deep, key=lambda r: getattr(r.report, name))
                flags[(commodity, best_deep.model)][1].append(name)
    return {
        key: (",".join(overall) or "-", ",".join(deep_wins) or "-")
        for key, (overall, deep_wins) in flags.items()
    }


def _render_columns(header: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in header]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


_OVERLAP_NOTE = (
    "note: successive evaluation windows share all but one input day, so the\n"
    "scored steps are far from independent; a run over the full grid carries\n"
    "roughly as much information as its ~75 distinct forecast origins. Treat\n"
    "borderline p-values above with corresponding caution."
)


def render_summary(report: BenchmarkReport) -> str:
    """Plain-text tables with winner flags instead of typography."""
    parts = [f"# config={report.config_hash}",
             f"benchmark summary (seed {report.seed})", ""]

    if report.diagnostics:
        rows = [
            [d.commodity, str(d.n), "%.3f" % d.adf_stat, "%.4f" % d.adf_p,
             "yes" if d.stationary else "no", "%.3f" % d.rs_ratio, str(d.period)]
            for d in report.diagnostics
        ]
        parts += ["== series diagnostics ==",
                  _render_columns(
                      ["commodity", "days", "adf_stat", "adf_p", "stationary",
                       "rs_ratio", "period"], rows), ""]

    flags = _best_flags(list(report.metrics))
    rows = [
        [m.commodity, m.model, "%.4f" % m.report.mae, "%.4f" % m.report.rmse,
         "%.4f" % m.report.mape, str(m.report.n),
         str(m.report.skipped_zero_targets),
         flags[(m.commodity, m.model)][0], flags[(m.commodity, m.model)][1]]
        for m in report.metrics
    ]
    parts += ["== forecast accuracy (price units; mape in percent) ==",
              _render_columns(
                  ["commodity", "model", "mae", "rmse", "mape", "n", "skipped",
                   "best", "best_deep"], rows), ""]

    if report.dm:
        rows = [
            [d.commodity, f"{d.model_a} vs {d.model_b}", "%.3f" % d.result.statistic,
             "%.4g" % d.result.p_value, str(d.result.n), str(d.result.nw_lag),
             "yes" if d.result.used_fallback else "no", d.result.direction]
            for d in report.dm
        ]
        parts += ["== forecast comparisons (positive statistic: first model"
                  " has lower squared error) ==",
                  _render_columns(
                      ["commodity", "pair", "statistic", "p_value", "n", "lag",
                       "fallback", "lower_loss"], rows), "",
                  _OVERLAP_NOTE, ""]

    return "\n".join(parts)


def emit_tables(report: BenchmarkReport, cfg: RunConfig) -> list[str]:
    """Write the metrics, diagnostics, dm, and summary files; return paths."""
    if not report.metrics:
        raise DataError("refusing to emit tables for an empty report")
    _write_metrics(cfg, list(report.metrics))
    _write_diagnostics(cfg, list(report.diagnostics))
    _write_dm(cfg, list(report.dm))
    summary_path = os.path.join(cfg.output_dir, "summary.txt")
    _atomic_write_text(summary_path, render_summary(report) + "\n")
    return [_metrics_path(cfg), _diagnostics_path(cfg), _dm_path(cfg), summary_path]


def _write_plots(cfg: RunConfig) -> str:
    """Forecast overlays as long-format CSV; rendering is the caller's job."""
    digest = config_hash(cfg)
    rows: list[list[str]] = []
    for commodity in cfg.commodities:
        for kind in cfg.models:
            _, header, body = read_table(_prediction_path(cfg, commodity, kind))
            for r in body:
                rows.append([commodity, kind, r[2], r[3], r[4]])
    path = os.path.join(cfg.output_dir, "plots.csv")
    write_table(path, [("config", digest)],
                ["commodity", "model", "date", "actual", "predicted"], rows)
    return path


def stage_report(cfg: RunConfig, force: bool = False) -> BenchmarkReport:
    digest = config_hash(cfg)
    _pin_config(cfg.output_dir, digest)
    diag_rows = stage_diagnose(cfg, force=False)
    metric_rows = stage_evaluate(cfg, force=False)
    dm_rows = stage_dm(cfg, force=False)
    report = build_report(cfg, metric_rows, diag_rows, dm_rows)
    emit_tables(report, cfg)
    _write_plots(cfg)
    _update_run_json(cfg, digest, "report")
    log.info("report: %d metric rows, %d dm rows", len(report.metrics),
             len(report.dm))
    return report


def run_pipeline(cfg: RunConfig, force: bool = False) -> BenchmarkReport:
    """Run every stage in order and return the assembled report."""
    stage_ingest(cfg, force=force)
    stage_diagnose(cfg, force=force)
    stage_train(cfg, force=force)
    stage_predict(cfg, force=force)
    stage_evaluate(cfg, force=force)
    stage_dm(cfg, force=force)
    return stage_report(cfg, force=force)
