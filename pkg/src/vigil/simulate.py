"""Seeded discrete-cycle simulation of N streams under a compute budget.

Ground truth comes from per-stream two-state Markov chains; the
scheduler under test picks which streams get inference each cycle; the
run measures time-to-detection, missed events, services and queue
maintenance. Everything is a pure function of (inputs, seed): draws are
addressed by (seed, purpose, stream, cycle), so policies can be compared
on identical timelines and identical detector luck.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import records
from .core import (
    DetectionResult,
    EventTimeline,
    Frame,
    FrameWindow,
    SchedulerConfig,
    ScoreVector,
    SOURCE_VIDEO,
    validate_stream_id,
)
from .detector import (
    DetectorError,
    DetectorKind,
    OracleKind,
    ProtocolError,
    TransportError,
    build_detector,
)
from .preprocess import diff_window
from .rng import byte_stream, uniforms
from .scheduler import PriorityTable, init_table

POLICY_PRIORITY = "priority"
POLICY_ROUND_ROBIN = "round_robin"
POLICY_COMPUTE_ALL = "compute_all"
POLICIES = (POLICY_PRIORITY, POLICY_ROUND_ROBIN, POLICY_COMPUTE_ALL)

# Cycles past an event's end during which a detection still credits it.
GRACE_CYCLES = 1

TIMELINE_DRAW_PURPOSE = "timeline"


@dataclass(frozen=True)
class TraceConfig:
    """Synthetic ground-truth generator parameters.

    Per cycle a quiet stream turns violent with probability
    p_start * hotness (capped at 1) and a violent one turns quiet with
    probability 1 / mean_burst. ``burstiness`` maps stream ids to
    hotness multipliers; absent streams default to 1.
    """

    seed: int
    cycles: int
    p_start: float
    mean_burst: float
    burstiness: Optional[dict] = None

    def __post_init__(self) -> None:
        if self.cycles < 1:
            raise ValueError(f"cycles must be >= 1, got {self.cycles}")
        if not (0.0 < self.p_start < 1.0):
            raise ValueError(f"p_start must be in (0, 1), got {self.p_start}")
        if self.mean_burst < 1.0:
            raise ValueError(f"mean_burst must be >= 1, got {self.mean_burst}")
        if self.burstiness is not None:
            for s, h in self.burstiness.items():
                validate_stream_id(s)
                if h < 0:
                    raise ValueError(f"hotness must be >= 0 for {s}, got {h}")

    def hotness(self, stream: str) -> float:
        if self.burstiness is None:
            return 1.0
        return float(self.burstiness.get(stream, 1.0))


@dataclass(frozen=True)
class SimMetrics:
    """Outcome summary of one simulated run."""

    policy: str
    seed: int
    n: int
    b: int
    tau: int
    events_total: int
    events_detected: int
    events_missed: int
    mean_ttd: float
    p95_ttd: float
    services_total: int
    maintenance_total: float
    max_wait: int

    def __post_init__(self) -> None:
        if self.events_detected + self.events_missed != self.events_total:
            raise ValueError("events_detected + events_missed must equal events_total")
        if self.mean_ttd < 0:
            raise ValueError("mean_ttd must be >= 0")


def gen_timeline(tc: TraceConfig, streams) -> EventTimeline:
    """Sample the per-stream violence chains into half-open intervals.

    Two sub-draws per (stream, cycle) come from the stream's counter
    stream: the first drives the state transition, the second lets a
    burst that just ended restart in the same cycle (so p_start=1 keeps
    a stream violent forever instead of flickering).
    """
    streams = [validate_stream_id(s) for s in streams]
    p_end = 1.0 / tc.mean_burst
    intervals: dict = {}
    for s in streams:
        ps = min(1.0, tc.p_start * tc.hotness(s))
        u = uniforms(tc.seed, TIMELINE_DRAW_PURPOSE, s, 2 * tc.cycles)
        violent = False
        ivs = []
        start = None
        for c in range(tc.cycles):
            if violent:
                if u[2 * c] < p_end:
                    violent = u[2 * c + 1] < ps
            else:
                violent = u[2 * c] < ps
            if violent and start is None:
                start = c
            elif not violent and start is not None:
                ivs.append((start, c))
                start = None
        if start is not None:
            ivs.append((start, tc.cycles))
        intervals[s] = tuple(ivs)
    return EventTimeline(intervals=intervals)


def gen_synthetic_frames(stream: str, cycle: int, timeline: EventTimeline,
                         dims, seed: int, length: int = 20,
                         noise: int = 1, background_level: Optional[int] = None,
                         block_intensity: int = 255) -> FrameWindow:
    """Deterministic synthetic window for one (stream, cycle).

    Quiet cycles repeat a static seeded background with per-frame noise
    of at most +/- ``noise`` intensity steps. Violent cycles slide a
    quarter-area block across the background at 2 px per frame, which
    drives motion energy well above the quiet floor. Identical
    arguments always produce identical bytes.
    """
    h, w = int(dims[0]), int(dims[1])
    if h < 8 or w < 8:
        raise ValueError(f"dims must be at least 8x8, got {h}x{w}")
    if not (0 <= noise <= 127):
        raise ValueError(f"noise must be in [0, 127], got {noise}")
    npx = h * w
    if background_level is None:
        background = byte_stream(seed, "background", stream, npx).reshape(h, w)
    else:
        background = np.full((h, w), background_level, dtype=np.uint8)
    violent = timeline.is_violent(stream, cycle)
    bh, bw = h // 2, w // 2
    frames = []
    base_index = cycle * (length + 1)
    if noise > 0 and not violent:
        noise_bytes = byte_stream(seed, f"noise.{cycle}", stream, npx * (length + 1))
    for k in range(length + 1):
        arr = background.copy()
        if violent:
            x0 = (2 * (cycle + k)) % w
            arr16 = arr.astype(np.int16)
            xs = (np.arange(bw) + x0) % w
            arr16[0:bh, xs] = block_intensity
            arr = arr16.astype(np.uint8)
        elif noise > 0:
            delta = noise_bytes[k * npx:(k + 1) * npx].reshape(h, w).astype(np.int16)
            delta = delta % (2 * noise + 1) - noise
            arr = np.clip(arr.astype(np.int16) + delta, 0, 255).astype(np.uint8)
        frames.append(Frame.from_array(arr, index=base_index + k))
    return FrameWindow(stream=stream, frames=tuple(frames))


# --------------------------------------------------------------------------
# event accounting


class _EventTracker:
    """Credits detections to ground-truth events and derives TTD statistics.

    A detection on stream S at cycle t credits the first uncredited
    event [a, b) with a <= t < b + grace. Missed events contribute a
    right-censored TTD of min(b + grace, horizon) - a, so the mean
    penalizes misses instead of silently dropping them.
    """

    def __init__(self, timeline: EventTimeline, streams, horizon: int):
        self.horizon = horizon
        self.events = {s: list(timeline.events(s)) for s in streams}
        self.alert_cycle = {s: [None] * len(self.events[s]) for s in streams}
        self._next_candidate = {s: 0 for s in streams}

    def credit(self, stream: str, cycle: int):
        """Returns (event_start, ttd) when this detection credits an event."""
        evs = self.events[stream]
        k = self._next_candidate[stream]
        while k < len(evs) and cycle >= evs[k][1] + GRACE_CYCLES:
            k += 1
        self._next_candidate[stream] = k
        if k < len(evs):
            a, b = evs[k]
            if a <= cycle < b + GRACE_CYCLES and self.alert_cycle[stream][k] is None:
                self.alert_cycle[stream][k] = cycle
                self._next_candidate[stream] = k + 1
                return a, cycle - a
        return None

    def summarize(self):
        """(events_total, detected, missed, censored ttd list)."""
        total = detected = 0
        ttds = []
        for s, evs in self.events.items():
            for k, (a, b) in enumerate(evs):
                total += 1
                alert = self.alert_cycle[s][k]
                if alert is not None:
                    detected += 1
                    ttds.append(alert - a)
                else:
                    ttds.append(min(b + GRACE_CYCLES, self.horizon) - a)
        return total, detected, total - detected, ttds


def mean_of(values) -> float:
    return sum(values) / len(values) if values else 0.0


def percentile_nearest_rank(values, q: float) -> float:
    """Nearest-rank percentile; 0.0 for an empty list."""
    if not values:
        return 0.0
    ordered = sorted(values)
    rank = max(1, math.ceil(q * len(ordered)))
    return float(ordered[rank - 1])


# --------------------------------------------------------------------------
# the cycle engine


class CycleEngine:
    """Shared per-cycle logic for the sequential simulator and the pipeline.

    select(cycle) names the streams to service; apply(cycle, results)
    folds the (id-sorted) results back into scheduler state, credits
    events, and emits canonical records. Splitting the detector work out
    lets callers run it inline or fan it out to workers without touching
    the observable outputs.
    """

    def __init__(self, streams, config: SchedulerConfig, policy: str,
                 timeline: EventTimeline, seed: int, collect_log: bool = True):
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}")
        self.streams = sorted(validate_stream_id(s) for s in streams)
        known = set(self.streams)
        if len(known) != len(self.streams):
            raise ValueError("duplicate stream ids")
        missing = [s for s in timeline.streams() if s not in known]
        if missing:
            raise ValueError(f"timeline has unknown streams: {missing}")
        if config.n_streams != len(self.streams):
            raise ValueError(
                f"config.n_streams={config.n_streams} != {len(self.streams)} streams"
            )
        self.config = config
        self.policy = policy
        self.seed = seed
        self.n = len(self.streams)
        self.effective_budget = self.n if policy == POLICY_COMPUTE_ALL else config.budget
        self.table: Optional[PriorityTable] = None
        if policy == POLICY_PRIORITY:
            self.table = init_table(self.streams, config)
        self._wait = {s: 0 for s in self.streams}  # used by the non-priority policies
        self.max_wait = 0
        self.services_total = 0
        self.maintenance_total = 0.0
        self._rebuilds_charged = 0
        self.log: Optional[list] = [] if collect_log else None
        self.horizon: Optional[int] = None
        self.tracker: Optional[_EventTracker] = None
        self._timeline = timeline

    def prepare(self, horizon: int) -> None:
        self.horizon = horizon
        self.tracker = _EventTracker(self._timeline, self.streams, horizon)

    # -- per cycle -------------------------------------------------------

    def select(self, cycle: int) -> list:
        if self.policy == POLICY_PRIORITY:
            self.max_wait = max(self.max_wait, self.table.max_wait())
            selected = self.table.select_streams()
            new_rebuilds = self.table.rebuilds - self._rebuilds_charged
            self.maintenance_total += new_rebuilds * self.config.queue_cost * self.n
            self._rebuilds_charged = self.table.rebuilds
        else:
            self.max_wait = max(self.max_wait, max(self._wait.values()))
            if self.policy == POLICY_ROUND_ROBIN:
                b = self.effective_budget
                selected = [self.streams[(cycle * b + j) % self.n] for j in range(b)]
            else:
                selected = list(self.streams)
            chosen = set(selected)
            for s in self.streams:
                self._wait[s] = 0 if s in chosen else self._wait[s] + 1
        self.services_total += len(selected)
        return selected

    def apply(self, cycle: int, results, skips=()) -> None:
        """Fold a cycle's outcomes in deterministic order and emit records."""
        results = sorted(results, key=lambda r: r.stream)
        for stream, reason in sorted(skips):
            if self.log is not None:
                self.log.append(records.skip_record(cycle, stream, reason))
        for r in results:
            if self.log is not None:
                self.log.append(records.service_record(
                    cycle, r.stream, r.detected, r.scores.mean()))
            if r.detected:
                credit = self.tracker.credit(r.stream, cycle)
                if credit is not None and self.log is not None:
                    start, ttd = credit
                    self.log.append(records.alert_record(cycle, r.stream, start, ttd))
        if self.policy == POLICY_PRIORITY:
            self.table.apply_cycle_results(results)
            if self.log is not None:
                for r in results:
                    st = self.table.state(r.stream)
                    self.log.append(records.update_record(
                        cycle, r.stream, st.p, st.c, st.wait))

    # -- wrap-up ---------------------------------------------------------

    def metrics(self) -> SimMetrics:
        total, detected, missed, ttds = self.tracker.summarize()
        return SimMetrics(
            policy=self.policy,
            seed=self.seed,
            n=self.n,
            b=self.effective_budget,
            tau=self.config.tau,
            events_total=total,
            events_detected=detected,
            events_missed=missed,
            mean_ttd=mean_of(ttds),
            p95_ttd=percentile_nearest_rank(ttds, 0.95),
            services_total=self.services_total,
            maintenance_total=self.maintenance_total,
            max_wait=self.max_wait,
        )


# --------------------------------------------------------------------------
# sequential runner


def run_sim(timeline: EventTimeline, config: SchedulerConfig, policy: str,
            detector: DetectorKind, seed: int, cycles: int,
            streams=None, collect_log: bool = True,
            frame_dims=(16, 16), window_length: int = 20):
    """Run one policy over the timeline; returns (SimMetrics, event log).

    The oracle detector consults the timeline directly and needs no
    pixels; heuristic and sidecar detectors run on synthetic windows
    generated for each serviced (stream, cycle).
    """
    if streams is None:
        streams = timeline.streams()
    engine = CycleEngine(streams, config, policy, timeline, seed,
                         collect_log=collect_log)
    engine.prepare(cycles)
    det = build_detector(detector, threshold=config.threshold, seed=seed, horizon=cycles)
    oracle_fast = isinstance(detector, OracleKind)
    truth = {s: timeline.truth_array(s, cycles) for s in engine.streams}
    # The oracle only ever emits two score values; interning the vectors
    # keeps the 6-figure service counts of compute_all runs inside budget.
    score_vectors: dict = {}
    try:
        for cycle in range(cycles):
            selected = engine.select(cycle)
            results = []
            skips = []
            for s in selected:
                is_violent = bool(truth[s][cycle])
                if oracle_fast:
                    score = det.score(s, cycle, is_violent)
                    sv = score_vectors.get(score)
                    if sv is None:
                        sv = ScoreVector((score,))
                        score_vectors[score] = sv
                    results.append(DetectionResult(
                        stream=s, cycle=cycle, scores=sv,
                        detected=score > config.threshold,
                        source=SOURCE_VIDEO))
                else:
                    window = gen_synthetic_frames(
                        s, cycle, timeline, frame_dims, seed, length=window_length)
                    try:
                        results.append(det.detect(diff_window(window), cycle, is_violent))
                    except (DetectorError, ProtocolError, TransportError) as exc:
                        skips.append((s, str(exc)))
            engine.apply(cycle, results, skips)
    finally:
        close = getattr(det, "close", None)
        if close is not None:
            close()
    return engine.metrics(), (engine.log if collect_log else [])


def bench_tau(base_config: SchedulerConfig, tau_list, timeline: EventTimeline,
              detector: DetectorKind, seed: int, cycles: int):
    """One run per tau on the identical timeline and draws.

    Returns rows (tau, mean_ttd, maintenance_total, end_to_end_delay)
    sorted by tau, where end_to_end_delay folds the amortized
    maintenance into the detection delay.
    """
    if not tau_list:
        raise ValueError("tau_list must be nonempty")
    if any(t < 1 for t in tau_list):
        raise ValueError(f"every tau must be >= 1, got {sorted(tau_list)}")
    rows = []
    for tau in sorted(tau_list):
        cfg = replace(base_config, tau=int(tau))
        metrics, _ = run_sim(timeline, cfg, POLICY_PRIORITY, detector, seed,
                             cycles, collect_log=False)
        delay = metrics.mean_ttd + metrics.maintenance_total / cycles
        rows.append((int(tau), metrics.mean_ttd, metrics.maintenance_total, delay))
    return rows
