"""Command-line surface.

Subcommands: simulate, bench-tau, preprocess, detect, audio-features,
fuse. Exit codes: 0 on success, 2 on usage errors (argparse), 1 on
runtime errors with a message on stderr.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

from . import records
from .audio import (
    AudioClip,
    chroma,
    energy,
    fuse_minmax,
    log_mel_spectrogram,
    loudness_db,
    mel_spectrogram,
    mfcc,
    power_spectrogram,
    stft,
    zcr,
)
from .config import ConfigError, load_config
from .core import FrameWindow
from .detector import HeuristicKind, SidecarKind, build_detector, SidecarClient
from .formats import read_pgm, read_wav, write_pgm
from .pipeline import run_pipeline
from .preprocess import crop, diff_window, remove_borders, transpose
from .simulate import POLICIES, bench_tau, gen_timeline, run_sim


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vigil",
        description="Budgeted multi-stream violence-detection scheduling and simulation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one policy over a synthetic trace")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--policy", required=True, choices=POLICIES)
    p_sim.add_argument("--seed", type=int, default=None,
                       help="overrides the trace seed from the config")
    p_sim.add_argument("--out", required=True, help="metrics CSV path")
    p_sim.add_argument("--log", required=True, help="events JSONL path")

    p_tau = sub.add_parser("bench-tau", help="sweep the queue-update period")
    p_tau.add_argument("--config", required=True)
    p_tau.add_argument("--taus", required=True,
                       help="comma-separated update periods, e.g. 1,2,4,8")
    p_tau.add_argument("--seed", type=int, default=None)
    p_tau.add_argument("--out", default=None, help="table CSV path (default: stdout)")

    p_pre = sub.add_parser("preprocess", help="deborder/crop/transpose a PGM directory")
    p_pre.add_argument("--in", dest="in_dir", required=True)
    p_pre.add_argument("--out", dest="out_dir", required=True)
    p_pre.add_argument("--deborder", type=int, default=None, metavar="N",
                       help="remove dark borders using threshold N")
    p_pre.add_argument("--transpose", action="store_true")

    p_det = sub.add_parser("detect", help="run a detector over a PGM frame directory")
    p_det.add_argument("--frames", required=True)
    p_det.add_argument("--detector", required=True, choices=["heuristic", "sidecar"])
    p_det.add_argument("--sidecar-cmd", default=None,
                       help="argv for the sidecar process (shell-split)")
    p_det.add_argument("--kappa", type=float, default=0.02)
    p_det.add_argument("--window-length", type=int, default=20)
    p_det.add_argument("--threshold", type=float, default=0.5)
    p_det.add_argument("--out", default=None, help="CSV path (default: stdout)")

    p_aud = sub.add_parser("audio-features", help="extract per-window audio features")
    p_aud.add_argument("--wav", required=True)
    p_aud.add_argument("--out", required=True)
    p_aud.add_argument("--n-fft", type=int, default=256)
    p_aud.add_argument("--hop", type=int, default=128)
    p_aud.add_argument("--n-mels", type=int, default=26)
    p_aud.add_argument("--n-mfcc", type=int, default=13)

    p_fuse = sub.add_parser("fuse", help="min-max fusion of video and audio score CSVs")
    p_fuse.add_argument("--video", required=True)
    p_fuse.add_argument("--audio", required=True)
    p_fuse.add_argument("--w-video", type=float, default=1.0)
    p_fuse.add_argument("--w-audio", type=float, default=1.0)
    p_fuse.add_argument("--out", required=True)

    return parser


# --------------------------------------------------------------------------
# subcommand bodies


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.trace.seed
    trace = cfg.trace if args.seed is None else replace(cfg.trace, seed=seed)
    timeline = gen_timeline(trace, cfg.stream_ids())
    if cfg.workers > 1:
        metrics, log = run_pipeline(cfg, args.policy, seed, trace.cycles, timeline)
    else:
        metrics, log = run_sim(
            timeline, cfg.scheduler, args.policy, cfg.detector, seed, trace.cycles,
            streams=cfg.stream_ids(), frame_dims=cfg.frame_dims,
            window_length=cfg.window_length)
    records.write_events_jsonl(args.log, log)
    records.write_metrics_csv(args.out, [metrics])
    return 0


def _cmd_bench_tau(args) -> int:
    cfg = load_config(args.config)
    try:
        taus = [int(t) for t in args.taus.split(",") if t.strip()]
    except ValueError as exc:
        raise ValueError(f"--taus must be comma-separated integers: {exc}") from exc
    seed = args.seed if args.seed is not None else cfg.trace.seed
    trace = cfg.trace if args.seed is None else replace(cfg.trace, seed=seed)
    timeline = gen_timeline(trace, cfg.stream_ids())
    rows = bench_tau(cfg.scheduler, taus, timeline, cfg.detector, seed, trace.cycles)
    lines = ["tau,mean_ttd,maintenance_total,end_to_end_delay"]
    for tau, mean_ttd, maintenance, delay in rows:
        lines.append(f"{tau},{records.fmt_real(mean_ttd)},"
                     f"{records.fmt_real(maintenance)},{records.fmt_real(delay)}")
    text = "\n".join(lines) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


def _list_pgms(directory: str) -> list:
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"not a directory: {directory}")
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(".pgm"))
    if not names:
        raise FileNotFoundError(f"no .pgm files in {directory}")
    return names


def _cmd_preprocess(args) -> int:
    names = _list_pgms(args.in_dir)
    os.makedirs(args.out_dir, exist_ok=True)
    rect = None
    for name in names:
        frame = read_pgm(os.path.join(args.in_dir, name))
        if args.deborder is not None:
            if rect is None:
                rect = remove_borders(frame, args.deborder)  # rect from the first frame
            frame = crop(frame, rect)
        if args.transpose:
            frame = transpose(frame)
        write_pgm(os.path.join(args.out_dir, name), frame)
    return 0


def _cmd_detect(args) -> int:
    names = _list_pgms(args.frames)
    if args.detector == "heuristic":
        kind = HeuristicKind(kappa=args.kappa)
    else:
        if not args.sidecar_cmd:
            raise ValueError("--sidecar-cmd is required with --detector sidecar")
        kind = SidecarKind(cmd=tuple(args.sidecar_cmd.split()))
    det = build_detector(kind, threshold=args.threshold)
    span = args.window_length + 1
    lines = ["cycle,score,detected"]
    try:
        for cycle in range(len(names) // span):
            frames = []
            for k in range(span):
                f = read_pgm(os.path.join(args.frames, names[cycle * span + k]))
                frames.append(replace(f, index=cycle * span + k))
            window = FrameWindow(stream="frames", frames=tuple(frames))
            result = det.detect(diff_window(window), cycle)
            lines.append(f"{cycle},{records.fmt_real(result.scores.mean())},"
                         f"{str(result.detected).lower()}")
    finally:
        if isinstance(det, SidecarClient):
            det.close()
    text = "\n".join(lines) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


def _cmd_audio_features(args) -> int:
    clip = read_wav(args.wav)
    spec = stft(clip, args.n_fft, args.hop)
    mel = mel_spectrogram(power_spectrogram(spec), args.n_mels)
    coeffs = mfcc(log_mel_spectrogram(mel), args.n_mfcc)
    chrom = chroma(spec)
    header = (["zcr", "energy", "loudness"]
              + [f"mfcc_{i}" for i in range(args.n_mfcc)]
              + [f"chroma_{i}" for i in range(12)])
    lines = [",".join(header)]
    for w in range(spec.n_frames):
        lo = w * args.hop
        seg = AudioClip(samples=clip.samples[lo:lo + args.n_fft],
                        sample_rate=clip.sample_rate)
        row = [zcr(seg), energy(seg), loudness_db(seg)]
        row.extend(coeffs[w])
        row.extend(chrom[w])
        lines.append(",".join(records.fmt_real(v) for v in row))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


def _read_score_column(path: str) -> list:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "score" not in reader.fieldnames:
            raise ValueError(f"{path}: needs a CSV header with a 'score' column")
        return [float(row["score"]) for row in reader]


def _cmd_fuse(args) -> int:
    video = _read_score_column(args.video)
    audio_scores = _read_score_column(args.audio)
    if len(video) != len(audio_scores):
        raise ValueError(
            f"row count mismatch: {len(video)} video vs {len(audio_scores)} audio")
    lines = ["index,video,audio,fused"]
    for i, (v, a) in enumerate(zip(video, audio_scores)):
        fused = fuse_minmax(v, a, args.w_video, args.w_audio)
        lines.append(f"{i},{records.fmt_real(v)},{records.fmt_real(a)},"
                     f"{records.fmt_real(fused)}")
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "bench-tau": _cmd_bench_tau,
    "preprocess": _cmd_preprocess,
    "detect": _cmd_detect,
    "audio-features": _cmd_audio_features,
    "fuse": _cmd_fuse,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"vigil: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
