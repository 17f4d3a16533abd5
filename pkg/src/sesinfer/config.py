"""Plain-text key=value run configuration with fail-fast validation.

Every tunable of every pipeline stage lives here so a single file (plus
CLI ``--set key=value`` overrides) reproduces a run. A short hash of the
non-path keys is embedded into every artifact a stage writes; consumers
refuse mismatched inputs unless forced.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Any

from .geo import GeoPoint, GridSpec
from .indicators import RangeTokenizer

# Defaults: the published parameterization (stay thresholds, cell size,
# tokenizer ranges/granularities, network sizes, optimizer settings) plus
# synthetic-world knobs.
DEFAULTS: dict[str, Any] = {
    # grid
    "grid_origin_lat": 39.8,
    "grid_origin_lon": 116.2,
    "grid_cell_size_m": 200.0,
    "grid_rows": 90,
    "grid_cols": 90,
    "include_center_cell": True,
    # time handling
    "tz_offset_s": 28800,
    "min_week_records": 10,
    # preprocessing
    "v_max_mps": 50.0,
    "stay_radius_m": 100.0,
    "stay_duration_s": 5400,
    "night_start_hour": 22,
    "night_end_hour": 7,
    "home_rank_by": "duration",
    # labels
    "num_classes": 2,
    "price_min": 10588.0,
    "price_max": 113224.0,
    # indicators / tokenizers
    "aggregate_td_by_cell": False,
    "refit_tokenizers": False,
    "spatial_token_min": 0.09,
    "spatial_token_max": 8143.3,
    "spatial_token_granularity": 100.0,
    "spatial_token_vocab": 82,
    "temporal_token_min": 0.0,
    "temporal_token_max": 5.73,
    "temporal_token_granularity": 0.5,
    "temporal_token_vocab": 11,
    "activity_token_min": 0.02,
    "activity_token_max": 5.36,
    "activity_token_granularity": 0.5,
    "activity_token_vocab": 10,
    # skip-gram pretraining
    "sg_window": 2,
    "sg_negatives": 5,
    "sg_epochs": 20,
    "sg_lr": 0.025,
    # model dimensions
    "embed_dim": 32,
    "lstm_hidden": 64,
    "recurrent_dim": 32,
    "ablation": "full",
    # training
    "train_ratio": 0.7,
    "pretrain_epochs": 50,
    "joint_epochs": 50,
    "learning_rate": 0.001,
    "batch_size": 32,
    "seed": 7,
    # synthetic world
    "n_agents": 100,
    "weeks_per_agent": 4,
    "schedule_noise": 0.1,
    "sampling_period_s": 60,
    "gps_noise_m": 10.0,
}


class ConfigError(ValueError):
    pass


def _coerce(key: str, raw: str) -> Any:
    default = DEFAULTS[key]
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"key {key!r}: expected a boolean, got {raw!r}")
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw.strip()


@dataclass
class RunConfig:
    values: dict[str, Any]

    def __getattr__(self, key: str) -> Any:
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key) from None

    # -- derived objects ----------------------------------------------------

    def grid(self) -> GridSpec:
        return GridSpec(
            origin=GeoPoint(self.values["grid_origin_lat"], self.values["grid_origin_lon"]),
            cell_size_m=self.values["grid_cell_size_m"],
            rows=self.values["grid_rows"],
            cols=self.values["grid_cols"],
        )

    def tokenizers(self) -> dict[str, RangeTokenizer]:
        v = self.values
        return {
            "rg": RangeTokenizer(v["spatial_token_min"], v["spatial_token_max"],
                                 v["spatial_token_granularity"], v["spatial_token_vocab"]),
            "td": RangeTokenizer(v["temporal_token_min"], v["temporal_token_max"],
                                 v["temporal_token_granularity"], v["temporal_token_vocab"]),
            "ad": RangeTokenizer(v["activity_token_min"], v["activity_token_max"],
                                 v["activity_token_granularity"], v["activity_token_vocab"]),
        }

    def validate(self) -> None:
        v = self.values
        checks = [
            (v["grid_cell_size_m"] > 0, "grid_cell_size_m must be positive"),
            (v["grid_rows"] >= 1 and v["grid_cols"] >= 1, "grid must be non-empty"),
            (v["v_max_mps"] > 0, "v_max_mps must be positive"),
            (v["stay_radius_m"] > 0, "stay_radius_m must be positive"),
            (v["stay_duration_s"] > 0, "stay_duration_s must be positive"),
            (0 <= v["night_start_hour"] < 24 and 0 <= v["night_end_hour"] < 24, "night hours must be in [0, 24)"),
            (v["home_rank_by"] in ("duration", "count"), "home_rank_by must be 'duration' or 'count'"),
            (2 <= v["num_classes"] <= 5, "num_classes must be in [2, 5]"),
            (v["price_min"] < v["price_max"], "price_min must be below price_max"),
            (0 < v["train_ratio"] < 1, "train_ratio must be in (0, 1)"),
            (v["pretrain_epochs"] >= 1 and v["joint_epochs"] >= 1, "epoch counts must be positive"),
            (v["learning_rate"] > 0, "learning_rate must be positive"),
            (v["batch_size"] >= 1, "batch_size must be positive"),
            (v["min_week_records"] >= 1, "min_week_records must be positive"),
            (v["ablation"] in ("full", "deep_only", "recurrent_only"), "unknown ablation mode"),
            (v["n_agents"] >= 1 and v["weeks_per_agent"] >= 1, "world needs agents and weeks"),
            (0 <= v["schedule_noise"] <= 1, "schedule_noise must be in [0, 1]"),
            (v["sampling_period_s"] >= 1, "sampling_period_s must be positive"),
            (v["sg_window"] >= 1 and v["sg_negatives"] >= 0, "bad skip-gram settings"),
            (v["embed_dim"] >= 1 and v["lstm_hidden"] >= 1 and v["recurrent_dim"] >= 1, "bad model dims"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        self.grid()
        self.tokenizers()

    # -- serialization ------------------------------------------------------

    def text(self) -> str:
        def fmt(x: Any) -> str:
            if isinstance(x, bool):
                return "true" if x else "false"
            return repr(x) if isinstance(x, float) else str(x)

        return "".join(f"{k} = {fmt(self.values[k])}\n" for k in sorted(self.values))

    def hash(self) -> str:
        return hashlib.sha256(self.text().encode("utf-8")).hexdigest()[:16]

    def with_overrides(self, overrides: dict[str, str]) -> "RunConfig":
        merged = dict(self.values)
        for key, raw in overrides.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = _coerce(key, raw) if isinstance(raw, str) else raw
        return RunConfig(merged)


def default_config() -> RunConfig:
    return RunConfig(dict(DEFAULTS))


def parse_config_text(text: str) -> RunConfig:
    values = dict(DEFAULTS)
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _coerce(key, raw.strip())
    cfg = RunConfig(values)
    cfg.validate()
    return cfg


def load_config(path: str | None) -> RunConfig:
    if path is None:
        cfg = default_config()
        cfg.validate()
        return cfg
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())
