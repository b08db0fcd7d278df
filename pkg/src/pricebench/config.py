"""Run configuration: INI parsing, validation, and a stable content hash.

The file format is flat INI (section headers plus ``key = value`` lines,
no interpolation, no nesting). ``[data]`` is the only required section;
everything else falls back to the defaults below. Unknown sections or
keys are rejected rather than ignored so typos fail loudly.

Minimal example::

    [run]
    output_dir = runs/demo
    models = naive, sarima

    [data]
    garlic = data/garlic.csv
"""

from __future__ import annotations

import configparser
import hashlib
import os
import re
from dataclasses import dataclass, field

from .exceptions import ConfigError
from .models.base import DEEP_KINDS, MODEL_KINDS, TrainConfig
from .series import ColumnSchema

_NAME_RE = re.compile(r"^[a-z0-9][a-z0-9_]*$")

# section -> allowed keys; [data] and [dropout] take free-form commodity keys
_KNOWN_KEYS = {
    "run": {"output_dir", "seed", "models", "jobs"},
    "columns": {"date", "min", "max", "mid"},
    "ingest": {"interpolate_zeros"},
    "split": {"train", "val", "test"},
    "windows": {"seq_len", "horizon", "eval_stride"},
    "train": {
        "lr",
        "batch_size",
        "max_epochs",
        "plateau_factor",
        "plateau_patience",
        "early_stop_patience",
        "min_delta",
        "huber_delta",
        "dropout",
    },
    "diagnostics": {"period"},
    "evaluate": {"zero_policy", "epsilon"},
    "dm": {"h", "pairs"},
}


@dataclass(frozen=True)
class RunConfig:
    """One fully validated benchmark run."""

    data: dict[str, str]  # commodity -> csv path (resolved)
    output_dir: str
    models: tuple[str, ...] = MODEL_KINDS
    seed: int = 42
    jobs: int = 1
    columns: ColumnSchema = field(default_factory=ColumnSchema)
    interpolate_zeros: bool = False
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seq_len: int = 90
    horizon: int = 14
    eval_stride: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)
    dropout_overrides: dict[str, float] = field(default_factory=dict)
    diag_period: int = 365
    zero_policy: str = "skip"
    epsilon: float = 1e-8
    dm_h: int = 14
    dm_pairs: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if not self.data:
            raise ConfigError("[data] must name at least one commodity")
        for name in self.data:
            if not _NAME_RE.match(name):
                raise ConfigError(
                    f"commodity name {name!r} must be lowercase [a-z0-9_] "
                    "(it becomes part of file names)"
                )
        if not self.models:
            raise ConfigError("models list must not be empty")
        for kind in self.models:
            if kind not in MODEL_KINDS:
                raise ConfigError(
                    f"unknown model kind {kind!r}; known: {', '.join(MODEL_KINDS)}"
                )
        if len(set(self.models)) != len(self.models):
            raise ConfigError("models list contains duplicates")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions {self.fractions} must sum to 1")
        if min(self.fractions) <= 0:
            raise ConfigError("all three split fractions must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.seq_len < 1 or self.horizon < 1 or self.eval_stride < 1:
            raise ConfigError("seq_len, horizon and eval_stride must be >= 1")
        if self.dm_h < 1:
            raise ConfigError("dm h must be >= 1")
        if self.zero_policy not in ("skip", "epsilon"):
            raise ConfigError("zero_policy must be 'skip' or 'epsilon'")
        if self.diag_period < 2:
            raise ConfigError("diagnostics period must be >= 2")
        for name, rate in self.dropout_overrides.items():
            if name not in self.data:
                raise ConfigError(f"[dropout] override for unknown commodity {name!r}")
            if not 0.0 <= rate < 1.0:
                raise ConfigError(f"[dropout] {name}: rate must be in [0, 1)")
        for a, b in self.dm_pairs:
            for kind in (a, b):
                if kind not in self.models:
                    raise ConfigError(f"dm pair references unselected model {kind!r}")
            if a == b:
                raise ConfigError(f"dm pair compares {a!r} with itself")

    @property
    def commodities(self) -> tuple[str, ...]:
        return tuple(sorted(self.data))

    @property
    def deep_models(self) -> tuple[str, ...]:
        return tuple(k for k in self.models if k in DEEP_KINDS)

    def train_config_for(self, commodity: str) -> TrainConfig:
        """The shared protocol with this commodity's dropout override."""
        rate = self.dropout_overrides.get(commodity, self.train.dropout)
        if rate == self.train.dropout:
            return self.train
        from dataclasses import replace

        return replace(self.train, dropout=rate)

    def check_files(self) -> None:
        """Fail before any work starts if an input file is missing."""
        missing = [p for p in self.data.values() if not os.path.isfile(p)]
        if missing:
            raise ConfigError("missing data files: " + ", ".join(sorted(missing)))


def config_hash(cfg: RunConfig) -> str:
    """16-hex-digit digest of everything that affects the artifacts.

    Computed from resolved values, not file bytes, so comments and
    formatting may change without invalidating cached outputs. The
    output directory itself is excluded: the same run written elsewhere
    is still the same run.
    """
    parts: list[str] = []
    for name in sorted(cfg.data):
        parts.append(f"data.{name}={cfg.data[name]}")
    sch = cfg.columns
    parts.append(f"columns={sch.date_col},{sch.min_col},{sch.max_col},{sch.mid_col}")
    parts.append(f"ingest={int(cfg.interpolate_zeros)}")
    parts.append(f"models={','.join(cfg.models)}")
    parts.append(f"seed={cfg.seed}")
    parts.append("fractions=%.17g,%.17g,%.17g" % cfg.fractions)
    parts.append(f"windows={cfg.seq_len},{cfg.horizon},{cfg.eval_stride}")
    t = cfg.train
    parts.append(
        "train=%.17g,%d,%d,%.17g,%d,%d,%.17g,%.17g,%.17g"
        % (t.lr, t.batch_size, t.max_epochs, t.plateau_factor, t.plateau_patience,
           t.early_stop_patience, t.min_delta, t.huber_delta, t.dropout)
    )
    for name in sorted(cfg.dropout_overrides):
        parts.append("dropout.%s=%.17g" % (name, cfg.dropout_overrides[name]))
    parts.append(f"diagnostics={cfg.diag_period}")
    parts.append(f"evaluate={cfg.zero_policy},%.17g" % cfg.epsilon)
    parts.append(f"dm={cfg.dm_h};" + ";".join(f"{a}:{b}" for a, b in cfg.dm_pairs))
    blob = "\n".join(parts).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _get(parser, section, key, cast, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc


def _get_flag(parser, section, key, default):
    if not parser.has_option(section, key):
        return default
    try:
        return parser.getboolean(section, key)
    except ValueError as exc:
        raise ConfigError(
            f"[{section}] {key}: not a boolean: {parser.get(section, key)!r}"
        ) from exc


def _csv_list(raw: str) -> list[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def parse_config(text: str, base_dir: str = ".") -> RunConfig:
    """Parse and validate INI text; paths resolve relative to base_dir."""
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=(";", "#")
    )
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    for section in parser.sections():
        if section in ("data", "dropout"):
            continue
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        stray = set(parser.options(section)) - _KNOWN_KEYS[section]
        if stray:
            raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(stray))}")

    if not parser.has_section("data"):
        raise ConfigError("config needs a [data] section")
    data = {
        name: os.path.normpath(os.path.join(base_dir, path))
        for name, path in parser.items("data")
    }

    models_raw = _get(parser, "run", "models", str, ", ".join(MODEL_KINDS))
    out_dir = _get(parser, "run", "output_dir", str, "out")
    if not os.path.isabs(out_dir):
        out_dir = os.path.normpath(os.path.join(base_dir, out_dir))

    schema_kwargs: dict = {}
    if parser.has_section("columns"):
        sec = parser["columns"]
        if "date" in sec:
            schema_kwargs["date_col"] = sec["date"]
        if "mid" in sec:
            if "min" in sec or "max" in sec:
                raise ConfigError("[columns] give either mid or min/max, not both")
            schema_kwargs.update(mid_col=sec["mid"], min_col=None, max_col=None)
        else:
            if "min" in sec:
                schema_kwargs["min_col"] = sec["min"]
            if "max" in sec:
                schema_kwargs["max_col"] = sec["max"]

    train = TrainConfig(
        lr=_get(parser, "train", "lr", float, 1e-3),
        batch_size=_get(parser, "train", "batch_size", int, 32),
        max_epochs=_get(parser, "train", "max_epochs", int, 150),
        plateau_factor=_get(parser, "train", "plateau_factor", float, 0.5),
        plateau_patience=_get(parser, "train", "plateau_patience", int, 10),
        early_stop_patience=_get(parser, "train", "early_stop_patience", int, 20),
        min_delta=_get(parser, "train", "min_delta", float, 1e-6),
        huber_delta=_get(parser, "train", "huber_delta", float, 1.0),
        dropout=_get(parser, "train", "dropout", float, 0.1),
        seed=_get(parser, "run", "seed", int, 42),
    )

    overrides = {}
    if parser.has_section("dropout"):
        for name, raw in parser.items("dropout"):
            try:
                overrides[name] = float(raw)
            except ValueError as exc:
                raise ConfigError(f"[dropout] {name}: cannot parse {raw!r}") from exc

    horizon = _get(parser, "windows", "horizon", int, 14)
    pairs_raw = _get(parser, "dm", "pairs", str, "")
    pairs = []
    for item in _csv_list(pairs_raw):
        if ":" not in item:
            raise ConfigError(f"[dm] pairs entry {item!r} must look like modelA:modelB")
        a, _, b = item.partition(":")
        pairs.append((a.strip(), b.strip()))

    try:
        schema = ColumnSchema(**schema_kwargs)
    except Exception as exc:
        raise ConfigError(f"[columns]: {exc}") from exc

    return RunConfig(
        data=data,
        output_dir=out_dir,
        models=tuple(_csv_list(models_raw)),
        seed=_get(parser, "run", "seed", int, 42),
        jobs=_get(parser, "run", "jobs", int, 1),
        columns=schema,
        interpolate_zeros=_get_flag(parser, "ingest", "interpolate_zeros", False),
        fractions=(
            _get(parser, "split", "train", float, 0.8),
            _get(parser, "split", "val", float, 0.1),
            _get(parser, "split", "test", float, 0.1),
        ),
        seq_len=_get(parser, "windows", "seq_len", int, 90),
        horizon=horizon,
        eval_stride=_get(parser, "windows", "eval_stride", int, 1),
        train=train,
        dropout_overrides=overrides,
        diag_period=_get(parser, "diagnostics", "period", int, 365),
        zero_policy=_get(parser, "evaluate", "zero_policy", str, "skip"),
        epsilon=_get(parser, "evaluate", "epsilon", float, 1e-8),
        dm_h=_get(parser, "dm", "h", int, horizon),
        dm_pairs=tuple(pairs),
    )


def load_config(path: str) -> RunConfig:
    """Read a config file; relative paths resolve against its directory."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))
