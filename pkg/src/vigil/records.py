"""Canonical serialization of event records and metrics.

Every real number is printed with exactly 9 fractional digits and keys
are emitted in a fixed documented order, so identical runs produce
byte-identical files on every platform.

Record shapes (one JSON object per line):

    {"type":"service","cycle":C,"stream":S,"detected":B,"score":F}
    {"type":"alert","cycle":C,"stream":S,"event_start":I,"ttd":I}
    {"type":"update","cycle":C,"stream":S,"p":F,"confidence":F,"wait":I}
    {"type":"skip","cycle":C,"stream":S,"reason":STR}
"""

from __future__ import annotations

import json
from functools import lru_cache

METRICS_COLUMNS = (
    "policy", "seed", "n", "b", "tau",
    "events_total", "events_detected", "events_missed",
    "mean_ttd", "p95_ttd", "services_total", "maintenance_total", "max_wait",
)


def fmt_real(x: float) -> str:
    return f"{x:.9f}"


@lru_cache(maxsize=4096)
def _quote(s: str) -> str:
    return json.dumps(s)


def service_record(cycle: int, stream: str, detected: bool, score: float) -> str:
    return (f'{{"type":"service","cycle":{cycle},"stream":{_quote(stream)},'
            f'"detected":{"true" if detected else "false"},"score":{score:.9f}}}')


def alert_record(cycle: int, stream: str, event_start: int, ttd: int) -> str:
    return (f'{{"type":"alert","cycle":{cycle},"stream":{_quote(stream)},'
            f'"event_start":{event_start},"ttd":{ttd}}}')


def update_record(cycle: int, stream: str, p: float, confidence: float, wait: int) -> str:
    return (f'{{"type":"update","cycle":{cycle},"stream":{_quote(stream)},'
            f'"p":{p:.9f},"confidence":{confidence:.9f},"wait":{wait}}}')


def skip_record(cycle: int, stream: str, reason: str) -> str:
    return (f'{{"type":"skip","cycle":{cycle},"stream":{_quote(stream)},'
            f'"reason":{_quote(reason)}}}')


def metrics_header() -> str:
    return ",".join(METRICS_COLUMNS)


def metrics_row(m) -> str:
    """CSV row for a SimMetrics value, column order pinned."""
    return ",".join([
        m.policy,
        str(m.seed),
        str(m.n),
        str(m.b),
        str(m.tau),
        str(m.events_total),
        str(m.events_detected),
        str(m.events_missed),
        fmt_real(m.mean_ttd),
        fmt_real(m.p95_ttd),
        str(m.services_total),
        fmt_real(m.maintenance_total),
        str(m.max_wait),
    ])


def write_metrics_csv(path, metrics_list) -> None:
    lines = [metrics_header()] + [metrics_row(m) for m in metrics_list]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_events_jsonl(path, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines))
        if lines:
            fh.write("\n")
