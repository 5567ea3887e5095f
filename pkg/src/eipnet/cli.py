"""Command-line interface: train, sr, edges, eval, tar, stats.

Exit codes are a stable contract: 0 success, 1 usage or input error,
2 numerical abort during training. Heavy modules are imported inside
the command handlers so `--threads` can pin OpenMP/BLAS thread counts
before numpy loads.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

IMAGE_SUFFIXES = (".png", ".ppm")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eipnet",
                                     description="Face super-resolution engine (8x, 16->128)")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap kernel/BLAS worker threads")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the two-phase training schedule")
    p.add_argument("--config", required=True, help="key = value config file")

    p = sub.add_parser("sr", help="super-resolve a directory of images")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--emit-edges", action="store_true",
                   help="also write the three predicted edge maps per image")

    p = sub.add_parser("edges", help="detect edges in one image")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--fixed", nargs=2, type=float, metavar=("T_LOW", "T_HIGH"))
    group.add_argument("--adaptive", type=float, metavar="K_HIGH")

    p = sub.add_parser("eval", help="PSNR/SSIM report over paired directories")
    p.add_argument("--sr", required=True)
    p.add_argument("--hr", required=True)
    p.add_argument("--bboxes", default=None)

    p = sub.add_parser("tar", help="true-acceptance rate of two embedding files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--d", required=True, type=float)
    p.add_argument("--squared", action="store_true")

    p = sub.add_parser("stats", help="parameter and MAC counts of a checkpoint's generator")
    p.add_argument("--model", required=True)
    return parser


def _generator_spec_from_meta(meta: dict):
    from .config import parse_kv_text
    from .model import GeneratorSpec

    kv = parse_kv_text(meta.get("config_text", ""), "<checkpoint config>")
    base = int(kv.get("base_channels", "512"))
    scales = tuple(int(v) for v in kv.get("edge_scales", "2,4,8").split(",") if v.strip())
    return GeneratorSpec(base_channels=base, edge_scales=scales)


def _list_images(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir()
                  if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def cmd_train(args) -> int:
    from . import checkpoint
    from .canny import ThresholdPolicy
    from .config import load_config, to_train_config
    from .data import Dataset
    from .train import NumericalAbortError, train

    cfg = load_config(args.config)
    tc = to_train_config(cfg)
    if not cfg["manifest"]:
        print("error: config must set `manifest`", file=sys.stderr)
        return 1
    policy = ThresholdPolicy(mode=cfg["canny_mode"], k_high=cfg["canny_kh"])
    dataset = Dataset.from_manifest(cfg["manifest"], tc.crop_policy, policy)
    embedder_params = None
    if tc.alpha > 0:
        if not cfg["embedder_checkpoint"]:
            print("error: alpha > 0 requires `embedder_checkpoint`", file=sys.stderr)
            return 1
        from . import autodiff as ad
        raw, _ = checkpoint.load(cfg["embedder_checkpoint"])
        embedder_params = {k: ad.Tensor(v.astype(tc.dtype)) for k, v in raw.items()}
    try:
        result = train(tc, dataset, cfg["out_dir"], embedder_params=embedder_params)
    except NumericalAbortError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"finished {result.iterations} iterations; final checkpoint {result.final_checkpoint}")
    return 0


def cmd_sr(args) -> int:
    import numpy as np

    from . import autodiff as ad
    from . import checkpoint, imageio
    from .image import to_float, to_u8
    from .model import generator_infer, generator_param_specs, validate_params

    out_dir = Path(args.output)
    in_dir = Path(args.input)
    if not in_dir.is_dir():
        print(f"error: input directory {in_dir} does not exist", file=sys.stderr)
        return 1
    raw, meta = checkpoint.load(args.model)
    spec = _generator_spec_from_meta(meta)
    g_params = {k: ad.Tensor(v) for k, v in raw.items() if not k.startswith("d_")}
    validate_params({k: v.data for k, v in g_params.items()}, generator_param_specs(spec))

    images = _list_images(in_dir)
    if not images:
        print(f"error: no images in {in_dir}", file=sys.stderr)
        return 1
    out_dir.mkdir(parents=True, exist_ok=True)
    done = skipped = 0
    for path in images:
        try:
            img = imageio.decode(path)
        except imageio.ImageFormatError as exc:
            print(f"skipping {path.name}: {exc}", file=sys.stderr)
            skipped += 1
            continue
        if min(img.shape[:2]) < 16:
            print(f"skipping {path.name}: smaller than 16x16", file=sys.stderr)
            skipped += 1
            continue
        lr = ad.tensor(to_float(img).transpose(2, 0, 1)[None])
        sr, edges = generator_infer(g_params, lr, spec)
        sr_img = to_u8(sr.data[0].transpose(1, 2, 0))
        imageio.write_image(out_dir / f"{path.stem}_sr.png", sr_img)
        if args.emit_edges:
            for scale, logits in sorted(edges.items()):
                gray = np.round(np.clip(logits.data[0, 0], 0, 1) * 255).astype(np.uint8)
                rgb = np.repeat(gray[:, :, None], 3, axis=2)
                imageio.write_image(out_dir / f"{path.stem}_edge{scale}.png", rgb)
        done += 1
    print(f"super-resolved {done} images ({skipped} skipped) into {out_dir}")
    return 0 if done else 1


def cmd_edges(args) -> int:
    import numpy as np

    from . import imageio
    from .canny import ThresholdPolicy, canny

    if args.fixed is not None:
        t_low, t_high = args.fixed
        if t_low > t_high:
            print(f"error: t_low {t_low} > t_high {t_high}", file=sys.stderr)
            return 1
        policy = ThresholdPolicy(mode="fixed", t_low=t_low, t_high=t_high)
    else:
        policy = ThresholdPolicy(mode="adaptive", k_high=args.adaptive if args.adaptive else 1.6)
    try:
        img = imageio.decode(Path(args.input))
    except (OSError, imageio.ImageFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    edge = canny(img, policy)
    rgb = np.repeat((edge * 255).astype(np.uint8)[:, :, None], 3, axis=2)
    imageio.write_image(Path(args.out), rgb)
    return 0


def cmd_eval(args) -> int:
    from . import imageio
    from .metrics import evaluate_pairs, parse_bbox_sidecar

    sr_dir, hr_dir = Path(args.sr), Path(args.hr)
    sr_files = {p.stem: p for p in _list_images(sr_dir)}
    hr_files = {p.stem: p for p in _list_images(hr_dir)}
    unmatched = sorted(set(sr_files) ^ set(hr_files))
    if unmatched:
        print(f"error: unmatched filenames: {', '.join(unmatched)}", file=sys.stderr)
        return 1
    if not sr_files:
        print("error: no image pairs found", file=sys.stderr)
        return 1
    bboxes = parse_bbox_sidecar(args.bboxes) if args.bboxes else None
    pairs = [(name, imageio.decode(sr_files[name]), imageio.decode(hr_files[name]))
             for name in sorted(sr_files)]
    report = evaluate_pairs(pairs, bboxes)
    sys.stdout.write(report.to_csv())
    print(report.summary_line())
    return 0


def cmd_tar(args) -> int:
    from .embedder import import_embeddings
    from .metrics import tar

    try:
        emb_a = import_embeddings(args.a)
        emb_b = import_embeddings(args.b)
        value = tar(emb_a, emb_b, args.d, "squared" if args.squared else "euclidean")
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"TAR {value}")
    return 0


def cmd_stats(args) -> int:
    from . import checkpoint
    from .model import model_stats

    raw, meta = checkpoint.load(args.model)
    spec = _generator_spec_from_meta(meta)
    params, macs = model_stats(spec)
    print(f"generator parameters {params} ({params / 1e6:.2f}M)")
    print(f"generator GMACs {macs / 1e9:.3f} (16x16 input)")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "sr": cmd_sr,
    "edges": cmd_edges,
    "eval": cmd_eval,
    "tar": cmd_tar,
    "stats": cmd_stats,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
