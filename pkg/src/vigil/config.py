"""Run configuration: JSON schema, validation, defaults.

The schema is strict: unknown fields anywhere are rejected so a typo in
an experiment sweep fails loudly instead of silently using a default.
Parse errors, schema violations and bounds violations raise distinct
exception types.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Optional

from .core import DEFAULT_WINDOW_LENGTH, SchedulerConfig, validate_stream_id
from .detector import DetectorKind, HeuristicKind, OracleKind, SidecarKind
from .simulate import TraceConfig

SOURCE_SYNTHETIC = "synthetic"
FRAMES_PREFIX = "frames:"


class ConfigError(ValueError):
    """Base for configuration failures."""


class ConfigParseError(ConfigError):
    """The file is not valid JSON; message carries line and column."""


class ConfigSchemaError(ConfigError):
    """Wrong shape: unknown field, wrong type, missing required field."""


class ConfigBoundsError(ConfigError):
    """Well-formed value outside its legal range."""


class DuplicateStreamError(ConfigSchemaError):
    """Two streams share an id."""


@dataclass(frozen=True)
class StreamSpec:
    stream: str
    source: str

    @property
    def frames_dir(self) -> Optional[str]:
        if self.source.startswith(FRAMES_PREFIX):
            return self.source[len(FRAMES_PREFIX):]
        return None


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs: streams, windowing, scheduler, detector, trace."""

    streams: tuple
    scheduler: SchedulerConfig
    detector: DetectorKind
    trace: TraceConfig
    window_length: int = DEFAULT_WINDOW_LENGTH
    fps: float = 25.0
    workers: int = 1
    queue_depth: Optional[int] = None
    frame_dims: tuple = (16, 16)
    events_path: Optional[str] = None
    metrics_path: Optional[str] = None

    def stream_ids(self) -> list:
        return [s.stream for s in self.streams]

    def effective_queue_depth(self) -> int:
        return self.queue_depth if self.queue_depth is not None else 2 * self.scheduler.budget


def _require_keys(obj: dict, allowed: set, required: set, where: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigSchemaError(f"unknown field(s) in {where}: {', '.join(unknown)}")
    missing = sorted(required - set(obj))
    if missing:
        raise ConfigSchemaError(f"missing required field(s) in {where}: {', '.join(missing)}")


def _typed(obj: dict, key: str, types, default, where: str):
    if key not in obj:
        return default
    v = obj[key]
    if isinstance(v, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ConfigSchemaError(f"{where}.{key} has wrong type {type(v).__name__}")
    if not isinstance(v, types):
        raise ConfigSchemaError(f"{where}.{key} has wrong type {type(v).__name__}")
    return v


def _parse_streams(raw, where: str = "streams") -> tuple:
    if not isinstance(raw, list) or not raw:
        raise ConfigSchemaError(f"{where} must be a nonempty list")
    out = []
    seen = set()
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ConfigSchemaError(f"{where}[{i}] must be an object")
        _require_keys(item, {"id", "source"}, {"id"}, f"{where}[{i}]")
        try:
            stream = validate_stream_id(item["id"])
        except ValueError as exc:
            raise ConfigSchemaError(f"{where}[{i}].id: {exc}") from exc
        if stream in seen:
            raise DuplicateStreamError(f"duplicate stream id {stream!r}")
        seen.add(stream)
        source = item.get("source", SOURCE_SYNTHETIC)
        if not isinstance(source, str) or (
                source != SOURCE_SYNTHETIC and not source.startswith(FRAMES_PREFIX)):
            raise ConfigSchemaError(
                f"{where}[{i}].source must be 'synthetic' or 'frames:<dir>', got {source!r}")
        out.append(StreamSpec(stream=stream, source=source))
    return tuple(out)


def _parse_detector(raw) -> DetectorKind:
    if raw is None:
        return OracleKind(tpr=1.0, fpr=0.0)
    if not isinstance(raw, dict):
        raise ConfigSchemaError("detector must be an object")
    kind = raw.get("kind")
    if kind == "oracle":
        _require_keys(raw, {"kind", "tpr", "fpr", "seed"}, {"kind"}, "detector")
        try:
            return OracleKind(
                tpr=float(_typed(raw, "tpr", (int, float), 1.0, "detector")),
                fpr=float(_typed(raw, "fpr", (int, float), 0.0, "detector")),
                seed=_typed(raw, "seed", int, None, "detector"),
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigBoundsError(str(exc)) from exc
    if kind == "heuristic":
        _require_keys(raw, {"kind", "kappa"}, {"kind"}, "detector")
        try:
            return HeuristicKind(kappa=float(_typed(raw, "kappa", (int, float), 0.02, "detector")))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigBoundsError(str(exc)) from exc
    if kind == "sidecar":
        _require_keys(raw, {"kind", "cmd", "timeout_ms"}, {"kind", "cmd"}, "detector")
        cmd = raw["cmd"]
        if not isinstance(cmd, list) or not all(isinstance(c, str) for c in cmd) or not cmd:
            raise ConfigSchemaError("detector.cmd must be a nonempty list of strings")
        timeout_ms = _typed(raw, "timeout_ms", (int, float), 1000.0, "detector")
        try:
            return SidecarKind(cmd=tuple(cmd), timeout=float(timeout_ms) / 1000.0)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigBoundsError(str(exc)) from exc
    raise ConfigSchemaError(f"detector.kind must be oracle, heuristic or sidecar, got {kind!r}")


def _parse_trace(raw) -> TraceConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigSchemaError("trace must be an object")
    _require_keys(raw, {"seed", "cycles", "p_start", "mean_burst", "burstiness"},
                  set(), "trace")
    burstiness = raw.get("burstiness")
    if burstiness is not None:
        if not isinstance(burstiness, dict):
            raise ConfigSchemaError("trace.burstiness must map stream ids to multipliers")
        burstiness = {k: float(v) for k, v in burstiness.items()}
    try:
        return TraceConfig(
            seed=_typed(raw, "seed", int, 0, "trace"),
            cycles=_typed(raw, "cycles", int, 1000, "trace"),
            p_start=float(_typed(raw, "p_start", (int, float), 0.01, "trace")),
            mean_burst=float(_typed(raw, "mean_burst", (int, float), 40.0, "trace")),
            burstiness=burstiness,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigBoundsError(str(exc)) from exc


_TOP_LEVEL_KEYS = {
    "streams", "budget", "tau", "p_floor", "aging_alpha", "w_max", "threshold",
    "queue_cost", "window_length", "fps", "detector", "trace", "workers",
    "queue_depth", "frame_dims", "events_path", "metrics_path",
}


def parse_config(obj: dict) -> RunConfig:
    if not isinstance(obj, dict):
        raise ConfigSchemaError("top-level config must be a JSON object")
    _require_keys(obj, _TOP_LEVEL_KEYS, {"streams", "budget"}, "config")
    streams = _parse_streams(obj["streams"])
    n = len(streams)
    w_max_raw = obj.get("w_max", 200)
    if w_max_raw is None:
        w_max = math.inf
    elif isinstance(w_max_raw, (int, float)) and not isinstance(w_max_raw, bool):
        w_max = w_max_raw
    else:
        raise ConfigSchemaError(f"w_max must be a number or null, got {w_max_raw!r}")
    try:
        scheduler = SchedulerConfig(
            n_streams=n,
            budget=_typed(obj, "budget", int, None, "config"),
            tau=_typed(obj, "tau", int, 1, "config"),
            p_floor=float(_typed(obj, "p_floor", (int, float), 0.0, "config")),
            aging_alpha=float(_typed(obj, "aging_alpha", (int, float), 0.01, "config")),
            w_max=w_max,
            threshold=float(_typed(obj, "threshold", (int, float), 0.5, "config")),
            queue_cost=float(_typed(obj, "queue_cost", (int, float), 1.0, "config")),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigBoundsError(str(exc)) from exc
    frame_dims = obj.get("frame_dims", [16, 16])
    if (not isinstance(frame_dims, list) or len(frame_dims) != 2
            or not all(isinstance(d, int) and d >= 8 for d in frame_dims)):
        raise ConfigBoundsError(f"frame_dims must be [H, W] with H, W >= 8, got {frame_dims!r}")
    window_length = _typed(obj, "window_length", int, DEFAULT_WINDOW_LENGTH, "config")
    if window_length < 1:
        raise ConfigBoundsError(f"window_length must be >= 1, got {window_length}")
    fps = float(_typed(obj, "fps", (int, float), 25.0, "config"))
    if fps <= 0:
        raise ConfigBoundsError(f"fps must be > 0, got {fps}")
    workers = _typed(obj, "workers", int, 1, "config")
    if workers < 1:
        raise ConfigBoundsError(f"workers must be >= 1, got {workers}")
    queue_depth = _typed(obj, "queue_depth", int, None, "config")
    if queue_depth is not None and queue_depth < 1:
        raise ConfigBoundsError(f"queue_depth must be >= 1, got {queue_depth}")
    return RunConfig(
        streams=streams,
        scheduler=scheduler,
        detector=_parse_detector(obj.get("detector")),
        trace=_parse_trace(obj.get("trace")),
        window_length=window_length,
        fps=fps,
        workers=workers,
        queue_depth=queue_depth,
        frame_dims=tuple(frame_dims),
        events_path=_typed(obj, "events_path", str, None, "config"),
        metrics_path=_typed(obj, "metrics_path", str, None, "config"),
    )


def load_config(path) -> RunConfig:
    """Read, parse and validate a config file; checks referenced paths exist."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    cfg = parse_config(obj)
    for spec in cfg.streams:
        d = spec.frames_dir
        if d is not None and not os.path.isdir(d):
            raise ConfigBoundsError(f"frames directory does not exist: {d}")
    return cfg
