from __future__ import annotations

import os
import random
import sys

import pytest

from vigil.core import DiffWindow, Frame
from vigil.detector import (
    DetectorError,
    HeuristicDetector,
    HeuristicKind,
    OracleDetector,
    OracleKind,
    PROTOCOL_VERSION,
    ProtocolError,
    SidecarClient,
    SidecarKind,
    TransportError,
    decode_request,
    decode_response,
    detect,
    encode_request,
    make_message,
    parse_message,
)
from vigil.preprocess import motion_energy

STUB = os.path.join(os.path.dirname(__file__), "stub_sidecar.py")


def uniform_dw(value, width=4, height=4, length=3, stream="s1"):
    diffs = tuple(Frame(width=width, height=height,
                        pixels=bytes([value]) * (width * height), index=i)
                  for i in range(length))
    return DiffWindow(stream=stream, diffs=diffs)


def random_dw(rng, width=3, height=2, length=2, stream="s1"):
    diffs = tuple(Frame(width=width, height=height,
                        pixels=bytes(rng.randrange(256) for _ in range(width * height)),
                        index=i)
                  for i in range(length))
    return DiffWindow(stream=stream, diffs=diffs)


def stub_kind(behavior, timeout=2.0):
    return SidecarKind(cmd=(sys.executable, STUB, "--behavior", behavior),
                       timeout=timeout)


class TestHeuristic:
    def test_zero_energy_zero_score(self):
        det = HeuristicDetector(HeuristicKind(kappa=0.1))
        result = det.detect(uniform_dw(0), cycle=0)
        assert result.scores.scores == (0.0,)
        assert result.detected is False

    def test_energy_above_kappa_saturates(self):
        dw = uniform_dw(51)
        assert motion_energy(dw) == pytest.approx(0.04, abs=1e-15)
        result = HeuristicDetector(HeuristicKind(kappa=0.02)).detect(dw, cycle=0)
        assert result.scores.scores == (1.0,)
        assert result.detected is True

    def test_monotone_in_motion_energy(self):
        det = HeuristicDetector(HeuristicKind(kappa=0.5))
        scores = [det.detect(uniform_dw(v), cycle=0).scores.mean()
                  for v in (0, 20, 60, 120, 200, 255)]
        assert all(a <= b for a, b in zip(scores, scores[1:]))


class TestOracle:
    def test_forced_hit(self):
        det = OracleDetector(OracleKind(tpr=1.0, fpr=0.0), threshold=0.5)
        result = det.detect(uniform_dw(0), cycle=0, truth=True)
        assert result.scores.scores == (0.9,)
        assert result.detected is True

    def test_truth_required(self):
        det = OracleDetector(OracleKind(tpr=1.0, fpr=0.0))
        with pytest.raises(ValueError):
            det.detect(uniform_dw(0), cycle=0)

    def test_perfect_oracle_never_wrong(self):
        det = OracleDetector(OracleKind(tpr=1.0, fpr=0.0), seed=5)
        for cycle in range(200):
            truth = cycle % 3 == 0
            r = det.detect(uniform_dw(0), cycle=cycle, truth=truth)
            assert r.detected == truth

    def test_draws_deterministic_and_policy_independent(self):
        a = OracleDetector(OracleKind(tpr=0.6, fpr=0.1), seed=11, horizon=64)
        b = OracleDetector(OracleKind(tpr=0.6, fpr=0.1), seed=11)
        for cycle in range(64):
            assert a.score("s1", cycle, True) == b.score("s1", cycle, True)

    def test_decision_matches_threshold_contract(self):
        det = OracleDetector(OracleKind(tpr=0.5, fpr=0.5), seed=3, threshold=0.5)
        for cycle in range(300):
            r = det.detect(uniform_dw(0), cycle=cycle, truth=True)
            assert all(0.0 <= s <= 1.0 for s in r.scores.scores)
            assert r.detected == (r.scores.mean() > 0.5)


class TestWireFormat:
    def test_encode_known_window(self):
        diffs = (Frame(width=2, height=2, pixels=bytes([0, 1, 2, 3])),)
        msg = encode_request("s1", 7, DiffWindow(stream="s1", diffs=diffs))
        assert msg.payload == b"\x00\x01\x02\x03"
        header = msg.header()
        assert header == {"op": "infer", "stream": "s1", "request_id": 7,
                          "dims": [1, 2, 2], "dtype": "u8"}

    def test_header_length_prefix_is_big_endian_u32(self):
        msg = make_message({"op": "hello", "version": PROTOCOL_VERSION})
        raw = msg.to_bytes()
        declared = int.from_bytes(raw[:4], "big")
        assert declared == len(msg.header_json.encode("utf-8"))

    def test_round_trip_identity(self):
        rng = random.Random(2024)
        for _ in range(200):
            dw = random_dw(rng, width=rng.randrange(1, 5), height=rng.randrange(1, 5),
                           length=rng.randrange(1, 4), stream="cam-x")
            msg = encode_request(dw.stream, rng.randrange(1 << 32), dw)
            parsed, consumed = parse_message(msg.to_bytes())
            assert consumed == len(msg.to_bytes())
            assert parsed == msg
            assert decode_request(parsed) == dw

    def test_truncated_frame_is_transport_error(self):
        diffs = (Frame(width=2, height=2, pixels=bytes(4)),)
        raw = encode_request("s1", 1, DiffWindow(stream="s1", diffs=diffs)).to_bytes()
        for cut in (2, 10, len(raw) - 1):
            with pytest.raises(TransportError):
                parse_message(raw[:cut])

    def test_garbage_header_is_protocol_error(self):
        with pytest.raises(ProtocolError):
            parse_message(b"\x00\x00\x00\x02{]")
        with pytest.raises(ProtocolError):
            parse_message(b"\x00\x00\x00\x03\xff\xfe\xfd")  # invalid UTF-8 header


class TestDecodeResponse:
    def result_msg(self, request_id=7, scores=(0.83,)):
        return make_message({"op": "result", "request_id": request_id,
                             "scores": list(scores)})

    def test_scores_extracted(self):
        sv = decode_response(self.result_msg(), expected_id=7)
        assert sv.scores == (0.83,)

    def test_error_op_raises_with_message(self):
        msg = make_message({"op": "error", "message": "boom"})
        with pytest.raises(DetectorError, match="boom"):
            decode_response(msg, expected_id=7)

    def test_request_id_mismatch(self):
        with pytest.raises(ProtocolError):
            decode_response(self.result_msg(request_id=7), expected_id=8)

    def test_score_out_of_range(self):
        with pytest.raises(ProtocolError):
            decode_response(self.result_msg(scores=(1.01,)), expected_id=7)

    def test_empty_scores_rejected(self):
        with pytest.raises(ProtocolError):
            decode_response(self.result_msg(scores=()), expected_id=7)


class TestSidecarClient:
    def test_detect_through_stub(self):
        with SidecarClient(stub_kind("fixed"), threshold=0.5) as client:
            r = client.detect(uniform_dw(0), cycle=3)
            assert r.scores.scores == (0.83,)
            assert r.detected is True
            assert r.cycle == 3

    def test_request_ids_increment(self):
        with SidecarClient(stub_kind("fixed")) as client:
            client.detect(uniform_dw(0), cycle=0)
            client.detect(uniform_dw(1), cycle=1)
            assert client._next_id == 2

    def test_version_mismatch_aborts(self):
        client = SidecarClient(stub_kind("hello-bad"))
        with pytest.raises(ProtocolError):
            client.start()

    def test_handshake_timeout(self):
        client = SidecarClient(stub_kind("mute", timeout=0.3))
        try:
            with pytest.raises(TransportError):
                client.start()
        finally:
            client.close()

    def test_infer_timeout(self):
        with SidecarClient(stub_kind("silent", timeout=0.3)) as client:
            with pytest.raises(TransportError):
                client.detect(uniform_dw(0), cycle=0)

    def test_error_frame_surfaces(self):
        with SidecarClient(stub_kind("error")) as client:
            with pytest.raises(DetectorError, match="boom"):
                client.detect(uniform_dw(0), cycle=0)

    def test_wrong_request_id_is_protocol_error(self):
        with SidecarClient(stub_kind("wrong-id")) as client:
            with pytest.raises(ProtocolError):
                client.detect(uniform_dw(0), cycle=0)

    def test_out_of_range_score_is_protocol_error(self):
        with SidecarClient(stub_kind("bad-score")) as client:
            with pytest.raises(ProtocolError):
                client.detect(uniform_dw(0), cycle=0)

    def test_launch_failure(self):
        client = SidecarClient(SidecarKind(cmd=("/nonexistent/detector",)))
        with pytest.raises(TransportError):
            client.start()


class TestDispatch:
    def test_one_shot_heuristic(self):
        r = detect(HeuristicKind(kappa=0.02), uniform_dw(51), cycle=5)
        assert r.detected is True
        assert r.cycle == 5

    def test_one_shot_oracle_needs_truth(self):
        with pytest.raises(ValueError):
            detect(OracleKind(tpr=1.0, fpr=0.0), uniform_dw(0), cycle=0)
