"""Acceptance suite: one test per criterion, each printing a PASS line.

Criterion-2 scale runs (N=32, B=8, 20000 cycles, seed 7) are shared
through a session fixture so the whole suite stays inside its time
budget. Goldens freeze on first run and are byte-compared afterwards;
set VIGIL_UPDATE_GOLDENS=1 to regenerate deliberately.
"""

from __future__ import annotations

import cmath
import hashlib
import json
import math
import operator
import os
import random
import time
from dataclasses import replace

import numpy as np
import pytest

from vigil import records
from vigil.audio import (
    AudioClip,
    chroma,
    energy,
    fuse_minmax,
    hann_window,
    hz_to_mel,
    loudness_db,
    stft,
    zcr,
)
from vigil.config import parse_config
from vigil.core import EventTimeline, Frame, FrameWindow, SchedulerConfig, ScoreVector
from vigil.detector import OracleKind
from vigil.formats import (
    PgmDimsError,
    PgmMagicError,
    PgmMaxvalError,
    PgmTruncatedError,
    WavBitDepthError,
    WavChannelsError,
    WavDataChunkError,
    WavFormatCodeError,
    WavRiffError,
    parse_pgm,
    parse_wav,
    wav_bytes,
)
from vigil.pipeline import run_pipeline
from vigil.preprocess import (
    ContentRect,
    diff_window,
    motion_energy,
    remove_borders,
    transpose,
)
from vigil.scheduler import update_confidence, update_priority
from vigil.simulate import (
    POLICY_COMPUTE_ALL,
    POLICY_PRIORITY,
    POLICY_ROUND_ROBIN,
    TraceConfig,
    bench_tau,
    gen_synthetic_frames,
    gen_timeline,
    run_sim,
)

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "goldens")

N_STREAMS = 32
BUDGET = 8
CYCLES = 20000
SEED = 7
TAUS = (1, 2, 4, 8, 16, 32, 64, 128, 256)
STREAMS = tuple(f"cam{i:02d}" for i in range(N_STREAMS))


def scheduler_config(**kw):
    base = dict(n_streams=N_STREAMS, budget=BUDGET, tau=1, p_floor=0.0,
                aging_alpha=0.01, w_max=200, threshold=0.5, queue_cost=1.0)
    base.update(kw)
    return SchedulerConfig(**base)


def golden_path(name):
    return os.path.join(GOLDEN_DIR, name)


def freeze_or_load(name, text):
    path = golden_path(name)
    if os.environ.get("VIGIL_UPDATE_GOLDENS") == "1" or not os.path.exists(path):
        os.makedirs(GOLDEN_DIR, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        return text
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return fh.read()


def sha256_lines(lines):
    h = hashlib.sha256()
    for line in lines:
        h.update(line.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


@pytest.fixture(scope="session")
def benchmark_trace():
    tc = TraceConfig(seed=SEED, cycles=CYCLES, p_start=0.0025, mean_burst=40.0)
    return gen_timeline(tc, STREAMS)


@pytest.fixture(scope="session")
def benchmark_runs(benchmark_trace):
    """The criterion-2 trio on the shared trace; must finish inside 10 s."""
    detector = OracleKind(tpr=0.95, fpr=0.02)
    started = time.perf_counter()
    runs = {
        policy: run_sim(benchmark_trace, scheduler_config(), policy, detector,
                        SEED, CYCLES)
        for policy in (POLICY_PRIORITY, POLICY_ROUND_ROBIN, POLICY_COMPUTE_ALL)
    }
    elapsed = time.perf_counter() - started
    return runs, elapsed


@pytest.fixture(scope="session")
def benchmark_files(benchmark_runs, tmp_path_factory):
    runs, _ = benchmark_runs
    out = tmp_path_factory.mktemp("criterion2")
    metrics_path = out / "metrics.csv"
    records.write_metrics_csv(metrics_path, [runs[p][0] for p in
                                             (POLICY_PRIORITY, POLICY_ROUND_ROBIN,
                                              POLICY_COMPUTE_ALL)])
    event_paths = {}
    for policy, (_, log) in runs.items():
        path = out / f"events_{policy}.jsonl"
        records.write_events_jsonl(path, log)
        event_paths[policy] = path
    return metrics_path, event_paths


def test_criterion_1_formula_conformance():
    rng = random.Random(0xF0F0)
    cases = []
    for _ in range(100_000):
        n = rng.randint(1, 256)
        p = rng.random()
        c = rng.random() * 8.0
        detected = rng.random() < 0.5
        scores = tuple(rng.random() for _ in range(rng.randint(1, 5)))
        cases.append((n, p, c, detected, scores))

    started = time.perf_counter()
    for n, p, c, detected, scores in cases:
        cfg = SchedulerConfig(n_streams=n, budget=1)
        got_p = update_priority(p, detected, c, cfg)
        got_c = update_confidence(c, ScoreVector(scores))
        # Independent scalar evaluation of the update rules.
        step = math.e ** (-c / n)
        want_p = min(1.0, max(0.0, p + (step if detected else -step)))
        total = 0.0
        for s in scores:
            total = operator.add(total, s)
        want_c = abs(c - total)
        assert math.isclose(got_p, want_p, rel_tol=1e-12, abs_tol=0.0)
        assert math.isclose(got_c, want_c, rel_tol=1e-12, abs_tol=0.0)
        assert 0.0 <= got_p <= 1.0
        assert got_c >= 0.0
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0, f"formula conformance took {elapsed:.2f}s, budget is 1s"
    print(f"\nACCEPTANCE 1 formula conformance: PASS ({elapsed:.2f}s for 1e5 tuples)")


def test_criterion_2_scheduler_benefit_directional(benchmark_runs):
    runs, elapsed = benchmark_runs
    assert elapsed < 10.0, f"criterion-2 runs took {elapsed:.2f}s, budget is 10s"
    priority = runs[POLICY_PRIORITY][0]
    round_robin = runs[POLICY_ROUND_ROBIN][0]
    compute_all = runs[POLICY_COMPUTE_ALL][0]
    assert compute_all.mean_ttd <= priority.mean_ttd
    assert compute_all.mean_ttd <= round_robin.mean_ttd
    assert priority.mean_ttd < round_robin.mean_ttd, (
        "priority does not beat round_robin on this trace: "
        f"{priority.mean_ttd:.6f} vs {round_robin.mean_ttd:.6f}. The update "
        "rule pins a detected stream at p=1 for its whole event (budget spent "
        "re-observing known events) and e^(-c/N) is ~1 at N=32, so no "
        "cross-event memory survives; round-robin's period N/B=4 is optimal "
        "for service freshness. See 'Known-red acceptance test' in README.md."
    )
    assert priority.events_missed <= round_robin.events_missed, (
        f"priority misses more events ({priority.events_missed} vs "
        f"{round_robin.events_missed}); same structural cause."
    )
    print(f"\nACCEPTANCE 2 scheduler benefit (directional): PASS ({elapsed:.2f}s)")


def test_criterion_2_goldens_byte_stable(benchmark_runs, benchmark_files):
    runs, _ = benchmark_runs
    metrics_path, event_paths = benchmark_files
    with open(metrics_path, "r", encoding="utf-8", newline="") as fh:
        metrics_text = fh.read()
    assert metrics_text == freeze_or_load("criterion2_metrics.csv", metrics_text)
    hashes = {policy: sha256_lines(runs[policy][1]) for policy in runs}
    hashes_text = json.dumps(hashes, indent=1, sort_keys=True) + "\n"
    assert hashes_text == freeze_or_load("criterion2_events_sha256.json", hashes_text)
    print("\nACCEPTANCE 2 goldens: PASS (metrics row and event hashes byte-stable)")


def test_criterion_3_starvation_bound(benchmark_trace, benchmark_runs):
    runs, _ = benchmark_runs
    bound = 200 + math.ceil(N_STREAMS / BUDGET)
    assert bound == 204
    guarded = runs[POLICY_PRIORITY][0]
    assert guarded.max_wait <= bound, (
        f"guarded max_wait {guarded.max_wait} exceeds {bound}")
    literal_cfg = scheduler_config(aging_alpha=0.0, w_max=math.inf)
    literal, _ = run_sim(benchmark_trace, literal_cfg, POLICY_PRIORITY,
                         OracleKind(tpr=0.95, fpr=0.02), SEED, CYCLES,
                         collect_log=False)
    assert literal.max_wait > 1000, (
        f"unguarded max_wait {literal.max_wait} should demonstrate starvation")
    print(f"\nACCEPTANCE 3 starvation bound: PASS "
          f"(guarded {guarded.max_wait} <= {bound}, literal {literal.max_wait} > 1000)")


def test_criterion_4_tau_tradeoff(benchmark_trace):
    rows = bench_tau(scheduler_config(), list(TAUS), benchmark_trace,
                     OracleKind(tpr=0.95, fpr=0.02), SEED, CYCLES)
    assert [r[0] for r in rows] == list(TAUS)
    maintenance = [r[2] for r in rows]
    assert all(a > b for a, b in zip(maintenance, maintenance[1:])), (
        f"maintenance_total not strictly decreasing: {maintenance}")
    by_tau = {r[0]: r[1] for r in rows}
    staleness_tail = [by_tau[t] for t in (32, 64, 128, 256)]
    assert all(a <= b for a, b in zip(staleness_tail, staleness_tail[1:])), (
        f"mean_ttd not nondecreasing over tau=32..256: {staleness_tail}")
    lines = ["tau,mean_ttd,maintenance_total,end_to_end_delay"]
    for tau, mean_ttd, maint, delay in rows:
        lines.append(f"{tau},{records.fmt_real(mean_ttd)},"
                     f"{records.fmt_real(maint)},{records.fmt_real(delay)}")
    table = "\n".join(lines) + "\n"
    assert table == freeze_or_load("bench_tau.csv", table)
    print(f"\nACCEPTANCE 4 tau trade-off: PASS (tail mean_ttd {staleness_tail})")


def test_criterion_5_preprocessing_oracles():
    started = time.perf_counter()

    quiet = EventTimeline(intervals={"s0": ()})
    window = gen_synthetic_frames("s0", 0, quiet, (16, 16), seed=3, length=20, noise=0)
    dw = diff_window(window)
    assert len(dw.diffs) == 20  # 21 frames in, 20 diffs out
    assert all(set(d.pixels) == {0} for d in dw.diffs)
    assert motion_energy(dw) == 0.0

    arr = np.zeros((24, 30), dtype=np.uint8)
    arr[4:19, 6:27] = 180  # letterboxed content block
    rect = remove_borders(Frame.from_array(arr), 10)
    assert rect == ContentRect(x0=6, y0=4, w=21, h=15)

    rng = random.Random(0xACCE)
    for _ in range(1000):
        w, h = rng.randint(1, 8), rng.randint(1, 8)
        frame = Frame(width=w, height=h,
                      pixels=bytes(rng.randrange(256) for _ in range(w * h)))
        assert transpose(transpose(frame)) == frame
    for _ in range(1000):
        length = rng.randint(1, 4)
        frames = tuple(
            Frame(width=3, height=3, pixels=bytes(rng.randrange(256) for _ in range(9)),
                  index=i)
            for i in range(length + 1))
        fwd = diff_window(FrameWindow(stream="s0", frames=frames))
        rev = diff_window(FrameWindow(
            stream="s0",
            frames=tuple(replace(f, index=i)
                         for i, f in enumerate(reversed(frames)))))
        assert [d.pixels for d in rev.diffs] == [d.pixels for d in reversed(fwd.diffs)]

    elapsed = time.perf_counter() - started
    assert elapsed < 1.0, f"preprocessing oracles took {elapsed:.2f}s, budget 1s"
    print(f"\nACCEPTANCE 5 preprocessing oracles: PASS ({elapsed:.2f}s)")


def test_criterion_6_audio_oracles():
    rate = 16000
    t = np.arange(rate) / rate
    clip = AudioClip(samples=np.sin(2 * np.pi * 440.0 * t), sample_rate=rate)

    crossings = zcr(clip) * (len(clip) - 1)
    assert abs(crossings - 880) <= 2
    assert energy(clip) == pytest.approx(0.5, abs=1e-3)
    assert loudness_db(clip) == pytest.approx(-3.0103, abs=0.01)
    assert hz_to_mel(700.0) == pytest.approx(2595.0 * math.log10(2.0), abs=1e-6)

    seg = np.asarray(clip.samples[:256])
    spec = stft(AudioClip(samples=seg, sample_rate=rate), 256, 256)
    windowed = seg * hann_window(256)
    naive = [abs(sum(windowed[m] * cmath.exp(-2j * math.pi * k * m / 256)
                     for m in range(256)))
             for k in range(129)]
    assert float(np.max(np.abs(spec.frames[0] - np.array(naive)))) <= 1e-6

    from vigil.audio import log_mel_spectrogram, mel_spectrogram, mfcc, power_spectrogram

    def mfcc_of(x):
        s = stft(AudioClip(samples=x, sample_rate=rate), 256, 128)
        mel = mel_spectrogram(power_spectrogram(s), 26)
        return mfcc(log_mel_spectrogram(mel), 13)

    # Scale invariance needs every mel band well above the log floor,
    # so use broadband seeded noise rather than the pure tone.
    base = 0.2 * np.random.default_rng(0xB0B).uniform(-1.0, 1.0, rate)
    scaled = mfcc_of(4.0 * base)
    unscaled = mfcc_of(base)
    assert float(np.max(np.abs(scaled[:, 1:] - unscaled[:, 1:]))) <= 1e-6

    low = chroma(stft(clip, 2048, 1024))
    t2 = np.arange(rate) / rate
    octave = AudioClip(samples=np.sin(2 * np.pi * 880.0 * t2), sample_rate=rate)
    high = chroma(stft(octave, 2048, 1024))
    assert int(np.argmax(low[0])) == int(np.argmax(high[0])) == 9

    print("\nACCEPTANCE 6 audio oracles: PASS")


def test_criterion_7_fusion_properties():
    rng = random.Random(0xFACE)
    for _ in range(10_000):
        v, a, wv, wa = (rng.random() for _ in range(4))
        out = fuse_minmax(v, a, wv, wa)
        assert out == fuse_minmax(a, v, wa, wv)  # commutativity, exact
        assert 0.0 <= out <= 1.0
        assert fuse_minmax(v, v, wv, wv) == min(v, wv)  # idempotence
        assert fuse_minmax(v, a, 1.0, 1.0) == max(v, a)  # unit weights
        for bumped in (fuse_minmax(min(1.0, v + 0.05), a, wv, wa),
                       fuse_minmax(v, min(1.0, a + 0.05), wv, wa),
                       fuse_minmax(v, a, min(1.0, wv + 0.05), wa),
                       fuse_minmax(v, a, wv, min(1.0, wa + 0.05))):
            assert bumped >= out  # monotone in every argument
    print("\nACCEPTANCE 7 fusion properties: PASS (1e4 quadruples, exact)")


def test_criterion_8_determinism_and_worker_independence(benchmark_runs,
                                                         benchmark_files,
                                                         benchmark_trace,
                                                         tmp_path):
    runs, _ = benchmark_runs
    metrics_path, event_paths = benchmark_files
    detector = OracleKind(tpr=0.95, fpr=0.02)
    rerun = {
        policy: run_sim(benchmark_trace, scheduler_config(), policy, detector,
                        SEED, CYCLES)
        for policy in runs
    }
    metrics_again = tmp_path / "metrics.csv"
    records.write_metrics_csv(metrics_again, [rerun[p][0] for p in
                                              (POLICY_PRIORITY, POLICY_ROUND_ROBIN,
                                               POLICY_COMPUTE_ALL)])
    assert metrics_again.read_bytes() == metrics_path.read_bytes()
    for policy, (_, log) in rerun.items():
        path = tmp_path / f"events_{policy}.jsonl"
        records.write_events_jsonl(path, log)
        assert path.read_bytes() == event_paths[policy].read_bytes()

    cfg = parse_config({
        "streams": [{"id": f"s{i}"} for i in range(8)],
        "budget": 3,
        "detector": {"kind": "oracle", "tpr": 0.9, "fpr": 0.05},
        "trace": {"seed": 17, "cycles": 500, "p_start": 0.01, "mean_burst": 20},
    })
    tl = gen_timeline(cfg.trace, cfg.stream_ids())
    m1, log1 = run_pipeline(cfg, POLICY_PRIORITY, 17, 500, tl, workers=1)
    m4, log4 = run_pipeline(cfg, POLICY_PRIORITY, 17, 500, tl, workers=4)
    assert log1 == log4
    assert m1 == m4
    print("\nACCEPTANCE 8 determinism and worker independence: PASS")


def test_criterion_9_format_parsers():
    frame = parse_pgm(b"P5\n2 2\n255\n\x00\x01\x02\x03")
    assert (frame.width, frame.height, frame.pixels) == (2, 2, b"\x00\x01\x02\x03")
    with pytest.raises(PgmMagicError):
        parse_pgm(b"P2\n2 2\n255\n0 1 2 3")
    with pytest.raises(PgmMaxvalError):
        parse_pgm(b"P5\n2 2\n1000\n" + bytes(4))
    with pytest.raises(PgmTruncatedError):
        parse_pgm(b"P5\n4 4\n255\n" + bytes(15))
    with pytest.raises(PgmDimsError):
        parse_pgm(b"P5\n100000 1\n255\n")

    clip = parse_wav(wav_bytes([0, 16384, -32768], 8000))
    assert list(clip.samples) == [0.0, 0.5, -1.0]
    assert clip.sample_rate == 8000
    import struct as _struct
    stereo = bytearray(wav_bytes([0, 0], 8000))
    stereo[22:24] = _struct.pack("<H", 2)
    with pytest.raises(WavChannelsError):
        parse_wav(bytes(stereo))
    float_pcm = bytearray(wav_bytes([0, 0], 8000))
    float_pcm[20:22] = _struct.pack("<H", 3)
    with pytest.raises(WavFormatCodeError):
        parse_wav(bytes(float_pcm))
    eight_bit = bytearray(wav_bytes([0, 0], 8000))
    eight_bit[34:36] = _struct.pack("<H", 8)
    with pytest.raises(WavBitDepthError):
        parse_wav(bytes(eight_bit))
    with pytest.raises(WavRiffError):
        parse_wav(b"MIDI" + bytes(40))
    fmt_only = (b"RIFF" + _struct.pack("<I", 28) + b"WAVE"
                + b"fmt " + _struct.pack("<I", 16)
                + _struct.pack("<HHIIHH", 1, 1, 8000, 16000, 2, 16))
    with pytest.raises(WavDataChunkError):
        parse_wav(fmt_only)
    print("\nACCEPTANCE 9 format parsers: PASS")
