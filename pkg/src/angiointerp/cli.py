"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import _backend
from .core import as_image, load_frame, save_frame
from .dataset import (
    DedupConfig,
    ManifestEntry,
    MaskRegion,
    apply_mask,
    augment_flips,
    deduplicate,
    extract_triplets,
    load_frames,
    read_triplet_tree,
    sample_subset,
    write_manifest,
    write_triplet_tree,
)
from .errors import ConfigError, DataError, NumericError
from .estimators import DepthProvider
from .evaluation import MIN_PERIOD_RECORDS, detect_period, emit_report, interpolation_protocol, write_csv
from .pipeline import BlendParams, PipelineConfig, fit_blend_params, interpolate, load_config
from .synthetic import PhantomConfig, generate_clip, write_clip

log = logging.getLogger("angiointerp")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _t_list(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"bad --t value {text!r}") from None


def _pipeline_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    changes = {}
    if getattr(args, "t", None):
        changes["t_values"] = _t_list(args.t)
    if getattr(args, "depth", None):
        changes["depth"] = DepthProvider.parse(args.depth)
    if getattr(args, "threads", None) is not None:
        changes["threads"] = args.threads
    if getattr(args, "kernel_mode", None):
        changes["kernel_mode"] = args.kernel_mode
    return replace(cfg, **changes) if changes else cfg


def _frames_dir(path) -> Path:
    """Accept a frame directory or a synthetic clip directory holding ``frames/``."""
    p = Path(path)
    return p / "frames" if (p / "frames").is_dir() else p


def _synthetic_depth_provider(cfg: PipelineConfig, frames_dir: Path) -> PipelineConfig:
    """``synthetic`` depth on the command line reads the clip's ``depth/`` directory."""
    if cfg.depth.kind != "synthetic":
        return cfg
    depth_dir = frames_dir.parent / "depth"
    if not depth_dir.is_dir():
        raise DataError(f"synthetic depth requested but {depth_dir} does not exist")
    return replace(cfg, depth=DepthProvider("file", path=str(depth_dir)))


def _read_params(path) -> BlendParams:
    values = {}
    for line in Path(path).read_text().splitlines():
        key, sep, value = line.partition("=")
        if sep:
            values[key.strip()] = value.strip()
    try:
        return BlendParams(float(values["bias"]), float(values["sharpness"]))
    except (KeyError, ValueError):
        raise ConfigError(f"{path} is not a blend-parameter file") from None


def _t_tag(t):
    return f"{t:.4f}".rstrip("0").rstrip(".").replace(".", "p")


# ----------------------------------------------------------------- commands


def cmd_interp(args):
    cfg = _pipeline_config(args)
    frame0, frame1 = load_frame(args.frame0), load_frame(args.frame1)
    params = _read_params(args.params) if args.params else None
    ids = (Path(args.frame0).stem, Path(args.frame1).stem)
    out = Path(args.out)
    multi = len(cfg.t_values) > 1
    if multi:
        out.mkdir(parents=True, exist_ok=True)
    for t in cfg.t_values:
        frame, diag = interpolate(frame0, frame1, t, cfg, frame_ids=ids, params=params)
        target = out / f"interp_t{_t_tag(t)}.pgm" if multi else out
        save_frame(frame, target)
        if args.dump_diagnostics:
            diag.dump(args.dump_diagnostics, stem=f"t{_t_tag(t)}")
        print(target)


def _run_pairs(frames, ids, cfg, params, threads):
    def job(i):
        outs = []
        for t in cfg.t_values:
            frame, diag = interpolate(frames[i], frames[i + 1], t, cfg, frame_ids=(ids[i], ids[i + 1]), params=params)
            outs.append((t, frame, float(np.mean(np.hypot(diag.flow_t0[..., 0], diag.flow_t0[..., 1])))))
        return outs

    pairs = range(len(frames) - 1)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(job, pairs))
    return [job(i) for i in pairs]


def cmd_run_clip(args):
    frames_dir = _frames_dir(args.frames)
    cfg = _synthetic_depth_provider(_pipeline_config(args), frames_dir)
    paths, frames = load_frames(frames_dir)
    if len(frames) < 2:
        raise DataError("run-clip needs at least two frames")
    ids = [p.stem for p in paths]
    params = _read_params(args.params) if args.params else None
    out = Path(args.out)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    results = _run_pairs(frames, ids, cfg, params, cfg.threads)

    rows = ["index,kind,frame0,frame1,t,file,mean_intensity,mean_flow_t0"]
    seq = 0

    def emit(kind, img, a, b, t, flow_mag):
        nonlocal seq
        name = f"{seq:06d}.pgm"
        save_frame(img, out / "frames" / name)
        rows.append(f"{seq},{kind},{a},{b},{t:.6f},{name},{float(np.mean(img)):.9f},{flow_mag:.9f}")
        seq += 1

    for i, outs in enumerate(results):
        emit("input", frames[i], ids[i], ids[i], 0.0, 0.0)
        for t, img, flow_mag in outs:
            emit("interpolated", img, ids[i], ids[i + 1], t, flow_mag)
    emit("input", frames[-1], ids[-1], ids[-1], 0.0, 0.0)
    (out / "run.csv").write_text("\n".join(rows) + "\n")

    if args.evaluate:
        if len(frames) < 3:
            raise DataError("evaluation needs at least three frames")

        def pred(prev, nxt, t, i):
            return interpolate(prev, nxt, t, cfg, frame_ids=(ids[i - 1], ids[i + 1]), params=params)[0]

        series = interpolation_protocol(frames, pred, clip=args.clip_name or frames_dir.parent.name, method="depth-aware", workers=cfg.threads)
        write_csv([series], out / "evaluation.csv")
    print(out)


def cmd_fit(args):
    cfg = _pipeline_config(args)
    if cfg.depth.kind == "synthetic":
        raise ConfigError("triplet trees carry no depth maps; use --depth constant:V or file:PATH with fit")
    triplets = read_triplet_tree(args.triplets)
    if args.limit:
        triplets = triplets[: args.limit]
    init = BlendParams(args.init_bias, args.init_sharpness)
    history = []
    best = fit_blend_params(triplets, cfg, init, steps=args.steps, lr=args.lr, history=history)
    lines = [
        f"bias={best.bias!r}",
        f"sharpness={best.sharpness!r}",
        f"initial_loss={history[0]!r}",
        f"best_loss={min(history)!r}",
        f"triplets={len(triplets)}",
        f"steps={args.steps}",
    ]
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"loss {history[0]:.6g} -> {min(history):.6g}")


def cmd_dedup(args):
    paths, frames = load_frames(args.frames)
    kept, report = deduplicate(frames, DedupConfig(threshold=args.threshold, recording_fps=args.fps))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for n, i in enumerate(kept):
        save_frame(frames[i], out / f"{n:06d}.pgm")
    lines = report.lines() + ["kept_files=" + ",".join(paths[i].name for i in kept)]
    (out / "dedup_report.txt").write_text("\n".join(lines) + "\n")
    print(f"kept {len(kept)} of {len(frames)} frames")


def cmd_mask(args):
    if not args.regions:
        raise ConfigError("at least one --regions entry is required")
    regions = [MaskRegion.parse(r) for r in args.regions]
    paths, frames = load_frames(args.frames)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for p, f in zip(paths, frames):
        save_frame(apply_mask(f, regions), out / f"{p.stem}.pgm")
    print(f"masked {len(frames)} frames")


def cmd_triplets(args):
    paths, frames = load_frames(args.frames)
    clip = args.clip or Path(args.frames).resolve().name
    triplets = extract_triplets(frames, args.stride, source_id=clip)
    entries = [ManifestEntry(clip, (n * args.stride, n * args.stride + 1, n * args.stride + 2)) for n in range(len(triplets))]
    if args.subset is not None:
        chosen = sample_subset(list(range(len(triplets))), args.subset, args.seed)
        triplets = [triplets[i] for i in chosen]
        entries = [entries[i] for i in chosen]
    out = Path(args.out)
    write_triplet_tree(triplets, out, clip=clip)
    write_manifest(entries, out / "manifest.txt")
    print(f"wrote {len(triplets)} triplets")


def cmd_augment(args):
    triplets = read_triplet_tree(args.triplets)
    out = Path(args.out)
    entries = []
    counters = {}
    for trip in triplets:
        for tag, flipped in augment_flips(trip):
            clip = f"{trip.source_id}-{tag}"
            n = counters.get(clip, 0)
            write_triplet_tree([flipped], out, clip=clip, start=n)
            counters[clip] = n + 1
            mid = flipped.frame_index
            entries.append(ManifestEntry(trip.source_id, (mid - 1, mid, mid + 1), tag))
    write_manifest(entries, out / "manifest.txt")
    print(f"wrote {len(entries)} triplets")


def cmd_evaluate(args):
    frames_dir = _frames_dir(args.clip)
    cfg = _synthetic_depth_provider(_pipeline_config(args), frames_dir)
    paths, frames = load_frames(frames_dir)
    ids = [p.stem for p in paths]
    method = args.method
    if method == "linear":

        def pred(prev, nxt, t, i):
            return np.clip((1.0 - t) * prev + t * nxt, 0.0, 1.0)

    else:
        params = _read_params(args.params) if args.params else None

        def pred(prev, nxt, t, i):
            return interpolate(prev, nxt, t, cfg, frame_ids=(ids[i - 1], ids[i + 1]), params=params)[0]

    clip_name = args.clip_name or (frames_dir.parent.name if frames_dir.name == "frames" else frames_dir.name)
    series = interpolation_protocol(frames, pred, clip=clip_name, method=method, workers=cfg.threads)
    report = detect_period(series) if len(series.records) >= MIN_PERIOD_RECORDS else None
    emit_report([series], [report], args.out)
    print(f"{clip_name} {method}: mean PSNR {series.mean_psnr():.3f} dB, mean SSIM {series.mean_ssim():.4f}")


def cmd_synth(args):
    cfg = PhantomConfig(
        seed=args.seed,
        size=(args.size, args.size),
        cycle_period=args.period,
        motion_amplitude=args.amplitude,
        n_frames=args.frames,
        contrast_speed=args.contrast_speed,
    )
    clip = generate_clip(cfg)
    print(write_clip(clip, args.out))


# ------------------------------------------------------------------- parser


def build_parser():
    p = _Parser(prog="angiointerp", description="Depth-aware frame interpolation for angiography-like video.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    p.add_argument("--backend", choices=("cython", "python"), help="kernel backend (default: best available)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def pipeline_flags(sp, t_default_help="comma-separated times in (0,1)"):
        sp.add_argument("--t", help=t_default_help)
        sp.add_argument("--config", help="key = value pipeline config file")
        sp.add_argument("--depth", help="constant:V | file:PATH | synthetic")
        sp.add_argument("--threads", type=int, help="worker threads")
        sp.add_argument("--kernel-mode", choices=("delta", "uniform"))
        sp.add_argument("--params", help="blend parameter file written by 'fit'")

    sp = sub.add_parser("interp", help="interpolate between two frames")
    sp.add_argument("frame0")
    sp.add_argument("frame1")
    sp.add_argument("-o", "--out", required=True, help="output frame (directory when several t are given)")
    sp.add_argument("--dump-diagnostics", metavar="DIR")
    pipeline_flags(sp)
    sp.set_defaults(func=cmd_interp)

    sp = sub.add_parser("run-clip", help="interpolate every consecutive pair in a frame directory")
    sp.add_argument("frames")
    sp.add_argument("-o", "--out", required=True)
    sp.add_argument("--evaluate", action="store_true", help="also score the leave-one-out protocol")
    sp.add_argument("--clip-name")
    pipeline_flags(sp)
    sp.set_defaults(func=cmd_run_clip)

    sp = sub.add_parser("fit", help="fit blend parameters on a triplet tree")
    sp.add_argument("triplets")
    sp.add_argument("-o", "--out", required=True)
    sp.add_argument("--steps", type=int, default=100)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--init-bias", type=float, default=0.0)
    sp.add_argument("--init-sharpness", type=float, default=1.0)
    sp.add_argument("--limit", type=int, help="use only the first N triplets")
    pipeline_flags(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("dedup", help="drop duplicated frames of a screen recording")
    sp.add_argument("frames")
    sp.add_argument("-o", "--out", required=True)
    sp.add_argument("--threshold", type=float, default=DedupConfig.threshold)
    sp.add_argument("--fps", type=float, default=DedupConfig.recording_fps, help="recording frame rate")
    sp.set_defaults(func=cmd_dedup)

    sp = sub.add_parser("mask", help="blank rectangular regions in every frame")
    sp.add_argument("frames")
    sp.add_argument("-o", "--out", required=True)
    sp.add_argument("--regions", action="append", metavar="x,y,w,h[:fill]")
    sp.set_defaults(func=cmd_mask)

    sp = sub.add_parser("triplets", help="cut a frame directory into triplets")
    sp.add_argument("frames")
    sp.add_argument("-o", "--out", required=True)
    sp.add_argument("--stride", type=int, default=1)
    sp.add_argument("--clip")
    sp.add_argument("--subset", type=int, help="keep a random subset of this size")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_triplets)

    sp = sub.add_parser("augment", help="add horizontal/vertical flips of a triplet tree")
    sp.add_argument("triplets")
    sp.add_argument("-o", "--out", required=True)
    sp.set_defaults(func=cmd_augment)

    sp = sub.add_parser("evaluate", help="leave-one-out scoring of a clip with report emission")
    sp.add_argument("--clip", required=True, help="frame directory or synthetic clip directory")
    sp.add_argument("--method", default="depth-aware", choices=("depth-aware", "linear"))
    sp.add_argument("-o", "--out", required=True)
    sp.add_argument("--clip-name")
    pipeline_flags(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("synth", help="render a synthetic phantom clip with ground truth")
    sp.add_argument("-o", "--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--size", type=int, default=256)
    sp.add_argument("--period", type=float, default=12.0)
    sp.add_argument("--amplitude", type=float, default=4.0)
    sp.add_argument("--frames", type=int, default=36)
    sp.add_argument("--contrast-speed", type=float, default=40.0)
    sp.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        if args.backend:
            _backend.select(args.backend)
        args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        where = f" (step {exc.step})" if exc.step is not None else ""
        print(f"numeric error{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
