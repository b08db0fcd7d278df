"""Command-line entry point.

One subcommand per pipeline stage plus ``all``. Stages reuse cached
artifacts, so ``pricebench train -c run.ini`` after an earlier
``ingest`` does not re-parse the data, and ``report`` after ``all`` is
free. Exit codes: 0 success, 1 configuration problem, 2 data problem,
3 numeric failure.

``dm`` has a second, pipeline-free mode that compares two prediction
CSVs directly::

    pricebench dm --pred-a out/predictions/garlic__t2v_transformer.csv \\
                  --pred-b out/predictions/garlic__transformer.csv
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from . import __version__
from .config import RunConfig, load_config
from .exceptions import ConfigError, DataError, NumericError
from . import pipeline

log = logging.getLogger("pricebench")


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; bad usage is a
    # config problem here, so route it through ConfigError instead
    def error(self, message: str):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pricebench",
                     description="commodity price forecasting benchmark")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name: str, help_text: str, config_required: bool = True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", required=config_required,
                       help="path to the run config (INI)")
        p.add_argument("--force", action="store_true",
                       help="recompute this stage even if cached")
        p.add_argument("--jobs", type=int, default=None,
                       help="override worker process count")
        p.add_argument("-v", "--verbose", action="store_true",
                       help="debug logging")
        return p

    interp_help = "repair zero prices by interpolation (sensitivity runs)"
    ingest = add("ingest", "parse, flag, and gap-fill the raw series")
    ingest.add_argument("--interpolate-zeros", action="store_true", help=interp_help)
    add("diagnose", "stationarity and seasonal-strength diagnostics")
    add("train", "fit every selected model on every commodity")
    add("predict", "emit test-grid forecasts from trained checkpoints")
    add("evaluate", "score predictions into metrics.csv")
    dm = add("dm", "forecast-comparison tests", config_required=False)
    dm.add_argument("--pred-a", help="first prediction CSV (standalone mode)")
    dm.add_argument("--pred-b", help="second prediction CSV (standalone mode)")
    dm.add_argument("--h", type=int, default=14, dest="horizon",
                    help="forecast horizon for the small-sample correction")
    dm.add_argument("--label-a", default=None, help="name for the first model")
    dm.add_argument("--label-b", default=None, help="name for the second model")
    add("report", "assemble summary tables from cached artifacts")
    whole = add("all", "run the whole pipeline in order")
    whole.add_argument("--interpolate-zeros", action="store_true", help=interp_help)
    return parser


def _load(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config)
    if args.jobs is not None:
        cfg = dataclasses.replace(cfg, jobs=args.jobs)
    if getattr(args, "interpolate_zeros", False):
        # part of the config hash: interpolated artifacts never mix with
        # default ones in the same output directory
        cfg = dataclasses.replace(cfg, interpolate_zeros=True)
    return cfg


def _model_label(path: str) -> str:
    stem = os.path.splitext(os.path.basename(path))[0]
    _, sep, kind = stem.partition("__")
    return kind if sep else stem


def _run_dm(args: argparse.Namespace) -> None:
    standalone = args.pred_a is not None or args.pred_b is not None
    if standalone:
        if not (args.pred_a and args.pred_b):
            raise ConfigError("standalone dm needs both --pred-a and --pred-b")
        result = pipeline.compare_predictions(
            args.pred_a, args.pred_b, h=args.horizon,
            label_a=args.label_a or _model_label(args.pred_a),
            label_b=args.label_b or _model_label(args.pred_b),
        )
        print("statistic,p_value,n,h,lag,fallback,direction")
        print(",".join([
            "%.12g" % result.statistic, "%.12g" % result.p_value,
            str(result.n), str(result.h), str(result.nw_lag),
            str(result.used_fallback).lower(), result.direction,
        ]))
        return
    if not args.config:
        raise ConfigError("dm needs either -c/--config or --pred-a/--pred-b")
    cfg = _load(args)
    pipeline.stage_dm(cfg, force=args.force)
    print(os.path.join(cfg.output_dir, "dm.csv"))


def main(argv: list[str] | None = None) -> int:
    args_list = sys.argv[1:] if argv is None else argv
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        args = build_parser().parse_args(args_list)
        if getattr(args, "verbose", False):
            logging.getLogger().setLevel(logging.DEBUG)
        if args.command == "dm":
            _run_dm(args)
            return 0
        cfg = _load(args)
        if args.command == "ingest":
            pipeline.stage_ingest(cfg, force=args.force)
        elif args.command == "diagnose":
            pipeline.stage_diagnose(cfg, force=args.force)
            print(os.path.join(cfg.output_dir, "diagnostics.csv"))
        elif args.command == "train":
            pipeline.stage_train(cfg, force=args.force)
        elif args.command == "predict":
            pipeline.stage_predict(cfg, force=args.force)
        elif args.command == "evaluate":
            pipeline.stage_evaluate(cfg, force=args.force)
            print(os.path.join(cfg.output_dir, "metrics.csv"))
        elif args.command == "report":
            pipeline.stage_report(cfg, force=args.force)
            print(os.path.join(cfg.output_dir, "summary.txt"))
        elif args.command == "all":
            pipeline.run_pipeline(cfg, force=args.force)
            print(os.path.join(cfg.output_dir, "summary.txt"))
        return 0
    except ConfigError as exc:
        log.error("config: %s", exc)
        return 1
    except DataError as exc:
        log.error("data: %s", exc)
        return 2
    except NumericError as exc:
        log.error("numeric: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
