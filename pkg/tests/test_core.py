from __future__ import annotations

import math

import pytest

from vigil.core import (
    DetectionResult,
    EventTimeline,
    Frame,
    FrameWindow,
    SchedulerConfig,
    ScoreVector,
    validate_stream_id,
)


def make_frame(width=4, height=4, value=0, index=0):
    return Frame(width=width, height=height, pixels=bytes([value]) * (width * height),
                 index=index)


class TestStreamId:
    def test_accepts_token(self):
        assert validate_stream_id("cam-07_a") == "cam-07_a"

    @pytest.mark.parametrize("bad", ["", "has space", "tab\tid", "nl\n", 7, None])
    def test_rejects_non_tokens(self, bad):
        with pytest.raises(ValueError):
            validate_stream_id(bad)


class TestFrame:
    def test_pixel_count_must_match_dims(self):
        with pytest.raises(ValueError):
            Frame(width=3, height=3, pixels=bytes(8))

    def test_rejects_zero_dims(self):
        with pytest.raises(ValueError):
            Frame(width=0, height=4, pixels=b"")

    def test_rejects_negative_index(self):
        with pytest.raises(ValueError):
            Frame(width=1, height=1, pixels=b"\x00", index=-1)

    def test_array_round_trip(self):
        f = Frame(width=3, height=2, pixels=bytes([1, 2, 3, 4, 5, 6]))
        arr = f.as_array()
        assert arr.shape == (2, 3)
        assert Frame.from_array(arr) == Frame(width=3, height=2, pixels=f.pixels)


class TestFrameWindow:
    def test_requires_consecutive_indices(self):
        frames = (make_frame(index=0), make_frame(index=2))
        with pytest.raises(ValueError):
            FrameWindow(stream="s1", frames=frames)

    def test_requires_matching_dims(self):
        frames = (make_frame(width=4, index=0), make_frame(width=5, height=4, index=1))
        with pytest.raises(ValueError):
            FrameWindow(stream="s1", frames=frames)

    def test_requires_two_frames(self):
        with pytest.raises(ValueError):
            FrameWindow(stream="s1", frames=(make_frame(),))

    def test_length_is_pair_count(self):
        frames = tuple(make_frame(index=i) for i in range(21))
        assert FrameWindow(stream="s1", frames=frames).length == 20


class TestScoreVector:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            ScoreVector(())

    @pytest.mark.parametrize("bad", [-0.1, 1.0001, math.nan, math.inf])
    def test_rejects_out_of_range(self, bad):
        with pytest.raises(ValueError):
            ScoreVector((0.5, bad))

    def test_total_and_mean(self):
        sv = ScoreVector((0.25, 0.75))
        assert sv.total() == 1.0
        assert sv.mean() == 0.5


class TestDetectionResult:
    def test_rejects_unknown_source(self):
        with pytest.raises(ValueError):
            DetectionResult(stream="s1", cycle=0, scores=ScoreVector((0.5,)),
                            detected=False, source="radar")

    def test_rejects_negative_cycle(self):
        with pytest.raises(ValueError):
            DetectionResult(stream="s1", cycle=-1, scores=ScoreVector((0.5,)),
                            detected=False)


class TestSchedulerConfig:
    def test_budget_bounds(self):
        with pytest.raises(ValueError):
            SchedulerConfig(n_streams=4, budget=5)
        with pytest.raises(ValueError):
            SchedulerConfig(n_streams=4, budget=0)

    def test_p_floor_strictly_below_one(self):
        with pytest.raises(ValueError):
            SchedulerConfig(n_streams=4, budget=2, p_floor=1.0)

    def test_infinite_w_max_allowed(self):
        cfg = SchedulerConfig(n_streams=4, budget=2, w_max=math.inf)
        assert math.isinf(cfg.w_max)

    def test_threshold_open_interval(self):
        for bad in (0.0, 1.0):
            with pytest.raises(ValueError):
                SchedulerConfig(n_streams=2, budget=1, threshold=bad)


class TestEventTimeline:
    def test_rejects_overlap(self):
        with pytest.raises(ValueError):
            EventTimeline(intervals={"s1": ((0, 5), (4, 9))})

    def test_rejects_empty_interval(self):
        with pytest.raises(ValueError):
            EventTimeline(intervals={"s1": ((3, 3),)})

    def test_is_violent_half_open(self):
        tl = EventTimeline(intervals={"s1": ((2, 5),)})
        assert not tl.is_violent("s1", 1)
        assert tl.is_violent("s1", 2)
        assert tl.is_violent("s1", 4)
        assert not tl.is_violent("s1", 5)
        assert not tl.is_violent("other", 2)

    def test_truth_array_matches_point_queries(self):
        tl = EventTimeline(intervals={"s1": ((1, 3), (6, 8))})
        arr = tl.truth_array("s1", 10)
        assert [bool(v) for v in arr] == [tl.is_violent("s1", c) for c in range(10)]
