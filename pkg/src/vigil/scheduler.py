"""Probability-driven priority scheduling under a fixed compute budget.

Each stream carries a priority probability ``p`` and a confidence
coefficient ``c``. After a serviced window, the priority moves by a
confidence-damped exponential step, up on detection and down otherwise:

    p' = clamp(p + d * exp(-c / N), p_floor, 1),  d = +1 if detected else -1
    c' = |c - sum(scores)|

Selection takes the top ``budget`` streams per cycle. The selection
order (a hard service-guarantee clause for streams past ``w_max``,
followed by descending ``p + aging_alpha * wait``) is rebuilt only at
``tau``-cycle boundaries and reused, stale, in between; each rebuild
costs ``queue_cost * n_streams`` maintenance units.
"""

from __future__ import annotations

import math

from .core import SchedulerConfig, ScoreVector, StreamState, validate_stream_id


def update_confidence(c: float, scores: ScoreVector) -> float:
    """c' = |c - sum(scores)|."""
    if c < 0:
        raise ValueError(f"confidence must be >= 0, got {c}")
    return abs(c - scores.total())


def update_priority(p: float, detected: bool, c: float, config: SchedulerConfig) -> float:
    """One confidence-damped priority step, clamped into [p_floor, 1]."""
    if c < 0:
        raise ValueError(f"confidence must be >= 0, got {c}")
    d = 1.0 if detected else -1.0
    raw = p + d * math.exp(-c / config.n_streams)
    return min(1.0, max(config.p_floor, raw))


def maintenance_cost(n: int, tau: int, cost_per_entry: float = 1.0) -> float:
    """Amortized per-cycle cost of rebuilding an n-entry queue every tau cycles."""
    if n < 1 or tau < 1:
        raise ValueError(f"need n >= 1 and tau >= 1, got n={n}, tau={tau}")
    return cost_per_entry * n / tau


class PriorityTable:
    """Scheduler state for all streams plus the stale selection order.

    Single writer: one scheduling agent calls :meth:`select_streams` and
    :meth:`apply_cycle_results` once per cycle, in that order. Identical
    inputs always produce identical state (no hidden randomness).
    """

    def __init__(self, streams, config: SchedulerConfig):
        streams = [validate_stream_id(s) for s in streams]
        if len(set(streams)) != len(streams):
            raise ValueError("duplicate stream ids")
        if len(streams) != config.n_streams:
            raise ValueError(
                f"config.n_streams={config.n_streams} but {len(streams)} streams given"
            )
        self.config = config
        self.cycle = 0
        self.rebuilds = 0
        p0 = 1.0 / config.n_streams
        self.states = {s: StreamState(stream=s, p=p0) for s in sorted(streams)}
        self._order: list = []
        self._selected_now: set = set()

    # -- selection -----------------------------------------------------

    def _rebuild_order(self) -> None:
        cfg = self.config
        forced = sorted(
            (s for s in self.states.values() if s.wait >= cfg.w_max),
            key=lambda s: (-s.wait, s.stream),
        )
        forced_ids = [s.stream for s in forced]
        in_forced = set(forced_ids)
        rest = sorted(
            (s for s in self.states.values() if s.stream not in in_forced),
            key=lambda s: (-(s.p + cfg.aging_alpha * s.wait), s.stream),
        )
        self._order = forced_ids + [s.stream for s in rest]
        self.rebuilds += 1

    def select_streams(self) -> list:
        """Pick the streams to service this cycle and update wait counters.

        Returns exactly min(budget, n_streams) distinct ids. The
        ordering is re-derived from live state only when the current
        cycle sits on a tau boundary; between boundaries the previous
        (stale) ordering is reused unchanged.
        """
        cfg = self.config
        if self.cycle % cfg.tau == 0:
            self._rebuild_order()
        selected = self._order[: cfg.budget]
        self._selected_now = set(selected)
        for s in self.states.values():
            if s.stream in self._selected_now:
                s.wait = 0
                s.last_serviced = self.cycle
            else:
                s.wait += 1
        return list(selected)

    # -- state transition ----------------------------------------------

    def apply_cycle_results(self, results) -> None:
        """Fold this cycle's detection results into stream state.

        Results must belong to streams selected this cycle and are
        applied in stream-id order regardless of arrival order. For each
        stream the priority step consumes the pre-update confidence,
        then the confidence itself is updated. Ends the cycle.
        """
        seen = set()
        for r in sorted(results, key=lambda r: r.stream):
            if r.stream not in self._selected_now:
                raise ValueError(f"result for unselected stream {r.stream!r}")
            if r.stream in seen:
                raise ValueError(f"duplicate result for stream {r.stream!r}")
            seen.add(r.stream)
            st = self.states[r.stream]
            st.p = update_priority(st.p, r.detected, st.c, self.config)
            st.c = update_confidence(st.c, r.scores)
        self._selected_now = set()
        self.cycle += 1

    # -- introspection ---------------------------------------------------

    def state(self, stream: str) -> StreamState:
        return self.states[stream]

    def max_wait(self) -> int:
        return max(s.wait for s in self.states.values())


def init_table(streams, config: SchedulerConfig) -> PriorityTable:
    """Fresh table: every p = 1/N, every c = 0, nothing serviced yet."""
    return PriorityTable(streams, config)


def select_streams(table: PriorityTable) -> list:
    return table.select_streams()


def apply_cycle_results(table: PriorityTable, results) -> PriorityTable:
    table.apply_cycle_results(results)
    return table
