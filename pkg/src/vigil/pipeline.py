"""Staged pipeline runtime: Ingest -> Preprocess -> Detect -> Update.

Stages are connected by bounded queues (blocking backpressure, nothing
is ever dropped). Ingest and Update are single agents; Preprocess and
Detect are worker pools. Results are gathered per cycle and applied in
stream-id order, so the emitted records are a pure function of
(config, policy, seed) and never depend on worker count or timing.
"""

from __future__ import annotations

import os
import queue
import threading
from dataclasses import dataclass, replace
from typing import Optional

from .config import RunConfig, StreamSpec
from .core import DetectionResult, FrameWindow, ScoreVector
from .detector import (
    DetectorError,
    OracleKind,
    ProtocolError,
    SidecarClient,
    TransportError,
    build_detector,
)
from .formats import read_pgm
from .preprocess import diff_window
from .simulate import CycleEngine, EventTimeline, gen_synthetic_frames

_SENTINEL = None


@dataclass
class _Job:
    cycle: int
    stream: str
    truth: bool
    window: Optional[FrameWindow] = None  # filled by preprocess when pixels are needed
    skip_reason: Optional[str] = None


class _FrameSource:
    """Per-stream frame supply: synthetic windows or a PGM directory."""

    def __init__(self, spec: StreamSpec, timeline: EventTimeline, seed: int,
                 window_length: int, frame_dims):
        self.spec = spec
        self.timeline = timeline
        self.seed = seed
        self.window_length = window_length
        self.frame_dims = frame_dims
        self._paths: Optional[list] = None
        if spec.frames_dir is not None:
            names = sorted(n for n in os.listdir(spec.frames_dir)
                           if n.lower().endswith(".pgm"))
            self._paths = [os.path.join(spec.frames_dir, n) for n in names]

    def window_for(self, cycle: int) -> Optional[FrameWindow]:
        """The cycle's window, or None when a frames: source ran out."""
        span = self.window_length + 1
        if self._paths is None:
            return gen_synthetic_frames(self.spec.stream, cycle, self.timeline,
                                        self.frame_dims, self.seed,
                                        length=self.window_length)
        lo = cycle * span
        if lo + span > len(self._paths):
            return None
        frames = [replace(read_pgm(path), index=lo + k)
                  for k, path in enumerate(self._paths[lo:lo + span])]
        return FrameWindow(stream=self.spec.stream, frames=tuple(frames))


def _preprocess_worker(q_in: queue.Queue, q_out: queue.Queue,
                       sources: dict, needs_pixels: bool) -> None:
    while True:
        job = q_in.get()
        if job is _SENTINEL:
            q_out.put(_SENTINEL)
            return
        if needs_pixels and job.skip_reason is None:
            window = sources[job.stream].window_for(job.cycle)
            if window is None:
                job.skip_reason = "eof"
            else:
                job.window = window
        q_out.put(job)


def _detect_worker(q_in: queue.Queue, q_out: queue.Queue, detector_factory) -> None:
    det = detector_factory()
    try:
        while True:
            job = q_in.get()
            if job is _SENTINEL:
                return
            if job.skip_reason is not None:
                q_out.put(("skip", job.cycle, job.stream, job.skip_reason))
                continue
            try:
                if job.window is not None:
                    result = det.detect(diff_window(job.window), job.cycle, job.truth)
                else:
                    result = det.detect_truth_only(job.stream, job.cycle, job.truth)
                q_out.put(("result", job.cycle, result))
            except (DetectorError, ProtocolError, TransportError) as exc:
                q_out.put(("skip", job.cycle, job.stream, str(exc)))
    except BaseException as exc:  # propagate unexpected failures to the update agent
        q_out.put(("fatal", exc))
        raise
    finally:
        close = getattr(det, "close", None)
        if close is not None:
            close()


class _OracleAdapter:
    """Lets the oracle run in the detect stage without any pixels."""

    def __init__(self, oracle):
        self._oracle = oracle

    def detect_truth_only(self, stream: str, cycle: int, truth: bool):
        score = self._oracle.score(stream, cycle, truth)
        scores = ScoreVector((score,))
        return DetectionResult(stream=stream, cycle=cycle, scores=scores,
                               detected=scores.mean() > self._oracle.threshold)

    def detect(self, dw, cycle, truth):
        return self._oracle.detect(dw, cycle, truth)


def run_pipeline(config: RunConfig, policy: str, seed: int, cycles: int,
                 timeline: EventTimeline, workers: Optional[int] = None,
                 collect_log: bool = True):
    """Run the staged pipeline; returns (SimMetrics, event log lines).

    Observable outputs are byte-identical to run_sim on the same inputs;
    only the execution strategy differs.
    """
    workers = workers if workers is not None else config.workers
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    depth = config.effective_queue_depth()
    streams = config.stream_ids()
    engine = CycleEngine(streams, config.scheduler, policy, timeline, seed,
                         collect_log=collect_log)
    engine.prepare(cycles)

    oracle_mode = isinstance(config.detector, OracleKind)
    truth = {s: timeline.truth_array(s, cycles) for s in engine.streams}
    sources = {
        spec.stream: _FrameSource(spec, timeline, seed, config.window_length,
                                  config.frame_dims)
        for spec in config.streams
    }

    def detector_factory():
        det = build_detector(config.detector, threshold=config.scheduler.threshold,
                             seed=seed, horizon=cycles)
        if oracle_mode:
            return _OracleAdapter(det)
        if isinstance(det, SidecarClient):
            det.start()
        return det

    q_select: queue.Queue = queue.Queue(maxsize=2)
    q_pre: queue.Queue = queue.Queue(maxsize=depth)
    q_det: queue.Queue = queue.Queue(maxsize=depth)
    q_upd: queue.Queue = queue.Queue(maxsize=depth)

    def ingest_agent() -> None:
        while True:
            item = q_select.get()
            if item is _SENTINEL:
                for _ in range(workers):
                    q_pre.put(_SENTINEL)
                return
            cycle, selected = item
            for s in selected:
                q_pre.put(_Job(cycle=cycle, stream=s, truth=bool(truth[s][cycle])))

    threads = [threading.Thread(target=ingest_agent, name="ingest", daemon=True)]
    for i in range(workers):
        threads.append(threading.Thread(
            target=_preprocess_worker, name=f"preprocess-{i}", daemon=True,
            args=(q_pre, q_det, sources, not oracle_mode)))
        threads.append(threading.Thread(
            target=_detect_worker, name=f"detect-{i}", daemon=True,
            args=(q_det, q_upd, detector_factory)))
    for t in threads:
        t.start()

    failure: Optional[BaseException] = None
    try:
        for cycle in range(cycles):
            selected = engine.select(cycle)
            q_select.put((cycle, selected))
            results = []
            skips = []
            for _ in range(len(selected)):
                item = q_upd.get()
                if item[0] == "fatal":
                    failure = item[1]
                    raise RuntimeError("pipeline worker failed") from failure
                if item[0] == "skip":
                    _, _, stream, reason = item
                    skips.append((stream, reason))
                else:
                    results.append(item[2])
            engine.apply(cycle, results, skips)
    finally:
        q_select.put(_SENTINEL)
        if failure is None:
            for t in threads:
                t.join(timeout=10.0)
    return engine.metrics(), (engine.log if collect_log else [])
