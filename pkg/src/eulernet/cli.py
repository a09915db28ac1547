"""Command-line entry point (``eulernet <command> ...``).

Exit status: 0 ok, 2 usage error, 3 data error, 4 numeric failure. Every
failure prints one ``eulernet: error[<code>]: <message>`` line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data, netpbm
from .checkpoint import CheckpointError
from .supervision import LandmarkError, make_target
from .tensor import NonFiniteError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

STAGE_FILES = ("1_f128", "2_f64", "3_f32", "4_fusion", "5_predicted")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _read_clip_dir(path) -> np.ndarray:
    """All frames of a directory as float64 [T,3,H,W] in [0,1], no resizing."""
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"input directory not found: {path}")
    n = data.count_frames(path)
    if n == 0:
        raise DataError(f"no {data.FRAME_PATTERN.format(0)} in {path}")
    frames = [netpbm.read_pnm(path / data.FRAME_PATTERN.format(i)) for i in range(n)]
    if any(f.ndim != 3 for f in frames) or len({f.shape for f in frames}) != 1:
        raise DataError(f"{path}: frames must be colour and share one size")
    return np.stack(frames).transpose(0, 3, 1, 2).astype(np.float64) / 255.0


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path}: {exc}") from None


# ---------------------------------------------------------------- commands


def cmd_magnify(args) -> int:
    from .evm import EvmConfig, magnify

    try:
        cfg = EvmConfig(levels=args.levels, f_low=args.low, f_high=args.high, fps=args.fps, alpha=args.alpha)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    clip = _read_clip_dir(args.input)
    if len(clip) < 4:
        raise DataError(f"{args.input}: need at least 4 frames, found {len(clip)}")
    try:
        out = magnify(clip, cfg)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    dest = Path(args.out)
    dest.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(out):
        netpbm.write_ppm(dest / data.FRAME_PATTERN.format(i), netpbm.to_uint8(frame.transpose(1, 2, 0)))
    if args.compare:
        written = _read_clip_dir(dest)
        print(json.dumps({"frames": len(out), "mae_vs_input": float(np.abs(written - clip).mean())}))
    return EXIT_OK


def cmd_label(args) -> int:
    records = data.load_manifest(args.manifest)
    bad = [r.video_id for r in records if args.kind == "position_map" and r.label == "live" and not r.landmarks]
    if bad:
        raise DataError(f"records without landmarks: {', '.join(bad)}")
    dest = Path(args.out)
    dest.mkdir(parents=True, exist_ok=True)
    for rec in records:
        tgt = make_target(args.kind, rec.label, args.size, rec.landmarks)
        netpbm.write_pgm(dest / f"{rec.video_id}.pgm", netpbm.to_uint8(tgt.values))
    return EXIT_OK


def _train_configs(args):
    from .model import EulerNetConfig, tiny_config
    from .trainer import TrainConfig

    file_cfg = _load_json(args.config) if args.config else {}
    unknown = set(file_cfg) - {"train", "model"}
    if unknown:
        raise UsageError(f"config file: unknown sections {sorted(unknown)}")
    train_d = dict(file_cfg.get("train", {}))
    model_d = dict(file_cfg.get("model", {}))
    for key in ("lr", "batch_size", "epochs", "seed", "max_steps", "target_loss"):
        val = getattr(args, key)
        if val is not None:
            train_d[key] = val
    if args.no_projection:
        train_d["stability_projection"] = False
    if args.hflip:
        train_d["hflip"] = True
    if args.input_size is not None:
        model_d["input_size"] = args.input_size
    try:
        model_cfg = tiny_config(**model_d) if args.tiny else EulerNetConfig.from_dict(model_d)
        return TrainConfig.from_dict(train_d), model_cfg
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def cmd_train(args) -> int:
    from .trainer import train

    train_cfg, model_cfg = _train_configs(args)
    res = train(train_cfg, model_cfg, args.manifest, out_dir=args.out)
    print(json.dumps({"steps": res.steps, "final_loss": res.losses[-1] if res.losses else None,
                      "seconds": round(res.seconds, 3)}))
    return EXIT_OK


def _score_split(model, manifest, split):
    from .trainer import load_split
    from .model import predict_video

    try:
        videos = load_split(manifest, model.config, split)
    except data.ManifestError as exc:
        raise DataError(str(exc)) from None
    rows = []
    for v in videos:
        frames = np.stack([data.frame_to_input(f, model.config.input_size) for f in v.frames])
        rows.append((v.video_id, predict_video(frames, model), v.label))
    return rows


def cmd_eval(args) -> int:
    from .metrics import EvalReport, read_scores_csv, select_threshold, write_scores_csv
    from .trainer import model_from_checkpoint

    if args.dev_scores:
        dev = read_scores_csv(args.dev_scores)
        test = read_scores_csv(args.test_scores) if args.test_scores else dev
    elif args.checkpoint and args.manifest:
        model = model_from_checkpoint(args.checkpoint)
        dev = _score_split(model, args.manifest, args.dev_split)
        test = dev if args.test_split == args.dev_split else _score_split(model, args.manifest, args.test_split)
    else:
        raise UsageError("eval needs --checkpoint with --manifest, or --dev-scores")
    try:
        thr = select_threshold([(s, lab) for _, s, lab in dev])
        report = EvalReport.build(test, thr, dev_videos=len(dev), test_videos=len(test))
    except ValueError as exc:
        raise DataError(str(exc)) from None
    dest = Path(args.out)
    dest.mkdir(parents=True, exist_ok=True)
    report.save_json(dest / "report.json")
    report.save_csv(dest / "scores.csv")
    if args.checkpoint and not args.dev_scores:
        write_scores_csv(dest / "dev_scores.csv", dev)
    print(json.dumps({"threshold": report.threshold, "apcer": report.apcer, "bpcer": report.bpcer,
                      "acer": report.acer}))
    return EXIT_OK


def cmd_score(args) -> int:
    from .model import predict_video
    from .trainer import model_from_checkpoint

    model = model_from_checkpoint(args.checkpoint)
    frames = _read_video(args.clip, model.config.input_size)
    print(repr(predict_video(frames, model)))
    return EXIT_OK


def _read_video(path, size) -> np.ndarray:
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"clip directory not found: {path}")
    return data.load_video(path, size)


def _heatmap(arr: np.ndarray) -> tuple[np.ndarray, float, float]:
    lo, hi = float(arr.min()), float(arr.max())
    norm = np.zeros_like(arr) if hi == lo else (arr - lo) / (hi - lo)
    return netpbm.to_uint8(norm), lo, hi


def cmd_inspect(args) -> int:
    from .tensor import Tensor, no_grad
    from .trainer import model_from_checkpoint

    model = model_from_checkpoint(args.checkpoint)
    frames = _read_video(args.clip, model.config.input_size)
    seqs = data.sample_sequences(len(frames), model.config.sampler, "eval_nonoverlap")
    if not seqs:
        raise data.ClipTooShortError(f"clip has {len(frames)} frames, need at least {model.config.sampler.span}")
    with no_grad():
        pred = model.forward(Tensor(frames[list(seqs[0])]), capture=True)
    dest = Path(args.out)
    dest.mkdir(parents=True, exist_ok=True)
    meta = {"score": float(pred.score.data), "frames": list(seqs[0]), "maps": {}}
    for fname, key in zip(STAGE_FILES, ("f128", "f64", "f32", "fusion", "predicted")):
        stage = pred.stages[key]
        if key == "predicted":
            # fixed (0, 1) range so the file reads back as the map itself
            img, lo, hi = netpbm.to_uint8(stage), 0.0, 1.0
        else:
            # frame- and channel-averaged activation [T,C,h,w] -> [h,w]
            img, lo, hi = _heatmap(stage.mean(axis=(0, 1)))
        netpbm.write_pgm(dest / f"{fname}.pgm", img)
        meta["maps"][fname] = {"min": lo, "max": hi, "shape": list(img.shape)}
    with open(dest / "stages.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    print(repr(meta["score"]))
    return EXIT_OK


def cmd_synth(args) -> int:
    path = data.synth_dataset(args.seed, args.live, args.spoof, args.out, n_frames=args.frames, size=args.size)
    print(path)
    return EXIT_OK


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="eulernet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    m = sub.add_parser("magnify", help="Eulerian magnification of a frame directory")
    m.add_argument("--in", dest="input", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--alpha", type=float, default=10.0)
    m.add_argument("--low", type=float, default=0.4)
    m.add_argument("--high", type=float, default=3.0)
    m.add_argument("--fps", type=float, default=30.0)
    m.add_argument("--levels", type=int, default=4)
    m.add_argument("--compare", action="store_true", help="print the mean absolute change vs the input")
    m.set_defaults(func=cmd_magnify)

    lab = sub.add_parser("label", help="rasterise supervision maps for a manifest")
    lab.add_argument("--manifest", required=True)
    lab.add_argument("--out", required=True)
    lab.add_argument("--kind", choices=("position_map", "binary_mask"), default="position_map")
    lab.add_argument("--size", type=int, default=32)
    lab.set_defaults(func=cmd_label)

    t = sub.add_parser("train", help="train a model on the train split")
    t.add_argument("--manifest", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--config", help="JSON file with optional 'train' and 'model' sections")
    t.add_argument("--tiny", action="store_true", help="start from the small backbone preset")
    t.add_argument("--lr", type=float)
    t.add_argument("--batch-size", dest="batch_size", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--max-steps", dest="max_steps", type=int)
    t.add_argument("--target-loss", dest="target_loss", type=float)
    t.add_argument("--input-size", dest="input_size", type=int)
    t.add_argument("--no-projection", action="store_true")
    t.add_argument("--hflip", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="dev-chosen threshold applied to the test split")
    e.add_argument("--checkpoint")
    e.add_argument("--manifest")
    e.add_argument("--dev-split", default="dev", choices=data.SPLITS)
    e.add_argument("--test-split", default="test", choices=data.SPLITS)
    e.add_argument("--dev-scores", help="CSV video_id,score,label instead of a model")
    e.add_argument("--test-scores")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("score", help="print the live score of one video")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--clip", required=True)
    s.set_defaults(func=cmd_score)

    i = sub.add_parser("inspect", help="dump intermediate maps of the first sequence")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--clip", required=True)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_inspect)

    y = sub.add_parser("synth", help="write a synthetic live/spoof dataset")
    y.add_argument("--out", required=True)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--live", type=int, default=8)
    y.add_argument("--spoof", type=int, default=8)
    y.add_argument("--frames", type=int, default=20)
    y.add_argument("--size", type=int, default=256)
    y.set_defaults(func=cmd_synth)
    return p


_DATA_ERRORS = (DataError, FileNotFoundError, NotADirectoryError, netpbm.NetpbmError, data.ManifestError,
                data.ClipTooShortError, CheckpointError, LandmarkError)


def _fail(code: int, exc: BaseException) -> int:
    msg = " ".join(str(exc).split()) or type(exc).__name__
    print(f"eulernet: error[{code}]: {type(exc).__name__}: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    if args.verbose:
        import logging

        logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except _DATA_ERRORS as exc:
        return _fail(EXIT_DATA, exc)
    except (NonFiniteError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERIC, exc)
    except ValueError as exc:
        # remaining shape/config mismatches originate in the inputs
        return _fail(EXIT_DATA, exc)


if __name__ == "__main__":
    sys.exit(main())
