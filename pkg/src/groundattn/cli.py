"""Command-line pipeline: synth / train / sample / extract / merge / mask /
eval / report / render.

Stages compose through files: GAMD dumps (+ JSON sidecars), .npz map and
mask files that carry their own ground truth, JSONL metric records and a
CSV report.  Every command writes a manifest of its inputs and flags next
to its output.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .attnstore import GroundTruthRegion, read_dump, write_dump
from .bbm import run_bbm
from .extraction import ActivationMap, ExtractionSpec, extract_comb, extract_img_bias
from .masking import mask_from_map
from .metrics import (
    MetricsRecord,
    aggregate,
    evaluate_sample,
    write_report_csv,
    write_report_json,
)
from .overlay import render_overlay
from .synthoracle import OracleConfig, gen_dump, gen_scene, load_scene, save_scene
from .tokenfilter import TokenMode


def _write_manifest(out: Path, command: str, args: dict) -> None:
    doc = {"command": command, "version": __version__, "args": args}
    target = out / "manifest.json" if out.is_dir() else Path(str(out) + ".manifest.json")
    target.write_text(json.dumps(doc, indent=1, default=str))


def _parse_seeds(text: str) -> list[int]:
    """"0:100" -> range, "3,7,9" -> list, "5" -> [5]."""
    if ":" in text:
        lo, hi = text.split(":")
        return list(range(int(lo), int(hi)))
    return [int(s) for s in text.split(",")]


def _atomic_savez(path: Path, **arrays) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        np.savez(f, **arrays)
    tmp.replace(path)


def _save_map(path: Path, amap: ActivationMap, sample_id: str,
              gt: GroundTruthRegion | None, extra: dict | None = None) -> None:
    arrays = {
        "grid": amap.grid,
        "provenance": np.array(amap.provenance),
        "sample_id": np.array(sample_id),
        "category": np.array(gt.category if gt else ""),
        "boxes": np.array(gt.boxes if gt else np.zeros((0, 4)), dtype=np.int64),
    }
    for k, v in (extra or {}).items():
        arrays[k] = np.array(v)
    _atomic_savez(path, **arrays)


def _load_map(path: Path) -> tuple[ActivationMap, str, GroundTruthRegion | None, dict]:
    z = np.load(path, allow_pickle=False)
    amap = ActivationMap(z["grid"], str(z["provenance"]))
    boxes = z["boxes"]
    gt = None
    if boxes.shape[0] > 0:
        gt = GroundTruthRegion([tuple(int(v) for v in b) for b in boxes],
                               str(z["category"]))
    extra = {k: z[k] for k in z.files
             if k not in ("grid", "provenance", "sample_id", "category", "boxes")}
    return amap, str(z["sample_id"]), gt, extra


def _spec_from_args(args) -> ExtractionSpec:
    spec = ExtractionSpec(
        token_mode=TokenMode(args.tokens),
        token_combine=args.combine,
        contrast_exponent=args.gamma,
        upsample_target=args.upsample,
        upsample_mode=args.interp,
        normalize=not args.no_normalize,
    )
    ts = args.timesteps
    if ts == "all":
        pass
    elif ts.startswith("last:"):
        spec.timestep_policy = "last"
        spec.last_n = int(ts.split(":")[1])
    else:
        spec.timestep_policy = "set"
        spec.timestep_set = tuple(int(s) for s in ts.split(","))
    ly = args.layers
    if ly == "all":
        pass
    elif ly.startswith("level:"):
        spec.layer_policy = "level"
        spec.resolution_level = ly.split(":", 1)[1]
    else:
        spec.layer_policy = "set"
        spec.layer_set = tuple(int(s) for s in ly.split(","))
    return spec


def _add_extraction_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--timesteps", default="all", help="all | last:N | t1,t2,...")
    p.add_argument("--layers", default="all", help="all | level:TAG | id1,id2,...")
    p.add_argument("--tokens", default="lexical",
                   choices=["lexical", "disease", "end", "all"])
    p.add_argument("--combine", default="mean", choices=["mean", "product"],
                   help="pool token maps by averaging or multiplying")
    p.add_argument("--gamma", type=float, default=1.0,
                   help="contrast exponent applied to the normalized map")
    p.add_argument("--upsample", type=int, default=64)
    p.add_argument("--interp", default="bilinear", choices=["bilinear", "nearest"])
    p.add_argument("--no-normalize", action="store_true")


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = OracleConfig(
        noise_sigma=args.noise_sigma,
        bias_alignment=args.alignment,
        comb_corruption=args.corruption,
    )
    runs = args.runs.split(",")
    for seed in _parse_seeds(args.seeds):
        if args.kind == "oracle":
            scene = gen_scene(seed)
        elif args.kind == "train":
            from .toydiff.scenes import gen_train_scene

            scene = gen_train_scene(seed)
        else:
            from .toydiff.scenes import gen_eval_scene

            scene = gen_eval_scene(seed)
        save_scene(scene, out / f"scene_{seed:04d}.json")
        for run in runs:
            if run == "none":
                continue
            mode = "gt-run" if run == "gt" else "noise-run"
            dump, tokens, gt = gen_dump(scene, cfg, mode)
            if args.kind == "eval":
                from .toydiff.scenes import eval_ground_truth

                gt = eval_ground_truth(scene)
            write_dump(dump, [tokens], [gt], out / f"{run}_{seed:04d}.gamd")
    _write_manifest(out, "synth", vars(args))
    return 0


def cmd_train(args) -> int:
    from .toydiff import DenoiserConfig, build_encoder, save_checkpoint, train
    from .toydiff.scenes import gen_train_scene

    corpus = [gen_train_scene(s) for s in _parse_seeds(args.seeds)]
    cfg = DenoiserConfig(epochs=args.epochs, seed=args.seed,
                         batch_size=args.batch,
                         cond_dropout=args.cond_dropout)
    enc = build_encoder(args.encoder, seed=0)
    result = train(corpus, cfg, enc, deterministic=True)
    out = Path(args.out)
    save_checkpoint(
        out, result.model, result.ema, enc,
        extra={
            "initial_loss": result.initial_loss,
            "final_loss": result.final_loss,
            "loss_trace": result.loss_trace,
        },
    )
    _write_manifest(out, "train", vars(args))
    print(f"trained: initial loss {result.initial_loss:.4f} "
          f"-> final {result.final_loss:.4f}")
    return 0


def cmd_sample(args) -> int:
    from .toydiff import load_checkpoint, render, sample
    from .toydiff.scenes import eval_ground_truth

    model, enc, _ = load_checkpoint(args.ckpt, use_ema=not args.no_ema)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene_files = sorted(Path(args.scenes).glob("scene_*.json"))
    if not scene_files:
        print("no scene files found", file=sys.stderr)
        return 1
    for f in scene_files:
        scene = load_scene(f)
        gt_img = render(scene) if args.mode in ("gt1_cfg", "gt_cfg") else None
        img, dump = sample(
            model, enc, scene.tokens, mode=args.mode, gt_image=gt_img,
            steps=args.steps, guidance_scale=args.guidance,
            seed=scene.seed, capture=args.capture,
        )
        sid = f.stem.split("_")[1]
        np.save(out / f"image_{sid}.npy", img)
        if dump is not None:
            gt = eval_ground_truth(scene) if args.gt == "first" else scene.ground_truth()
            write_dump(dump, [scene.tokens], [gt], out / f"dump_{sid}.gamd")
    _write_manifest(out, "sample", vars(args))
    return 0


def _iter_dumps(path: str, pattern: str):
    p = Path(path)
    files = [p] if p.is_file() else sorted(p.glob(pattern))
    if not files:
        raise FileNotFoundError(f"no dumps matching {pattern} under {path}")
    return files


def cmd_extract(args) -> int:
    spec = _spec_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for f in _iter_dumps(args.dumps, args.pattern):
        dump, tokens, gts = read_dump(f)
        for b in range(dump.batch_size):
            if args.target == "img":
                amap = extract_img_bias(dump, spec, b)
            else:
                amap = extract_comb(dump, tokens[b], spec, b)
            sid = f"{f.stem}_{b}" if dump.batch_size > 1 else f.stem
            _save_map(out / f"map_{sid}.npz", amap, sid, gts[b])
    _write_manifest(out, "extract", vars(args))
    return 0


def cmd_merge(args) -> int:
    spec = _spec_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gt_files = _iter_dumps(args.gt_dumps, args.pattern)
    for f in gt_files:
        noise_f = Path(args.noise_dumps) / f.name.replace("gt_", "noise_")
        if not noise_f.exists():
            print(f"missing noise dump for {f.name}", file=sys.stderr)
            return 1
        dump_gt, tokens, gts = read_dump(f)
        dump_noise, _, _ = read_dump(noise_f)
        for b in range(dump_gt.batch_size):
            res = run_bbm(dump_gt, dump_noise, tokens[b], spec, b, args.variant)
            sid = f"{f.stem}_{b}" if dump_gt.batch_size > 1 else f.stem
            _save_map(out / f"map_{sid}.npz", res.p_bbm, sid, gts[b],
                      extra={"s": res.s, "variant": res.variant})
    _write_manifest(out, "merge", vars(args))
    return 0


def cmd_mask(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for f in sorted(Path(args.maps).glob("map_*.npz")):
        amap, sid, gt, _ = _load_map(f)
        mask = mask_from_map(amap)
        _atomic_savez(
            out / f.name.replace("map_", "mask_"),
            grid=mask.grid, threshold=np.array(mask.threshold),
            degenerate=np.array(mask.degenerate), sample_id=np.array(sid),
        )
    _write_manifest(out, "mask", vars(args))
    return 0


def cmd_eval(args) -> int:
    records = []
    for f in sorted(Path(args.maps).glob("map_*.npz")):
        amap, sid, gt, _ = _load_map(f)
        if gt is None:
            print(f"{f.name}: no ground truth, skipped", file=sys.stderr)
            continue
        mask_file = Path(args.masks) / f.name.replace("map_", "mask_")
        z = np.load(mask_file, allow_pickle=False)
        from .masking import BinaryMask

        mask = BinaryMask(z["grid"], float(z["threshold"]), bool(z["degenerate"]))
        records.append(evaluate_sample(sid, amap, mask, gt, run=args.run))
    out = Path(args.out)
    with open(out, "w") as fh:
        for r in records:
            fh.write(json.dumps(asdict(r)) + "\n")
    _write_manifest(out, "eval", vars(args))
    print(f"evaluated {len(records)} samples -> {out}")
    return 0


def cmd_report(args) -> int:
    records = []
    for line in Path(args.records).read_text().splitlines():
        if line.strip():
            records.append(MetricsRecord(**json.loads(line)))
    report = aggregate(records)
    write_report_csv(report, args.out_csv)
    if args.out_json:
        write_report_json(report, records, args.out_json)
    _write_manifest(Path(args.out_csv), "report", vars(args))
    w = report.weighted
    print(f"weighted avg: cnr={w.mean['cnr']:.3f} iou_fg={w.mean['iou_fg']:.3f} "
          f"miou2={w.mean['miou_2class']:.3f} auc={w.mean['auc_roc']:.3f} "
          f"top1={w.mean['top1_rate']:.3f}")
    return 0


def cmd_render(args) -> int:
    amap, sid, gt, _ = _load_map(Path(args.map))
    base = np.load(args.image) if args.image else None
    render_overlay(amap, base, gt, args.out)
    _write_manifest(Path(args.out), "render", vars(args))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="groundattn")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate oracle scenes and dumps")
    p.add_argument("--seeds", required=True, help="lo:hi or comma list")
    p.add_argument("--out", required=True)
    p.add_argument("--kind", default="oracle", choices=["oracle", "train", "eval"])
    p.add_argument("--runs", default="gt", help="comma subset of gt,noise or none")
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--corruption", type=float, default=0.0)
    p.add_argument("--alignment", default="aligned",
                   choices=["aligned", "anti-correlated"])
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the toy denoiser")
    p.add_argument("--seeds", default="0:2000")
    p.add_argument("--out", required=True)
    p.add_argument("--encoder", default="grounded", choices=["grounded", "degraded"])
    p.add_argument("--epochs", type=int, default=8)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cond-dropout", type=float, default=0.3)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="sample + capture attention dumps")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--scenes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", default="gt_cfg",
                   choices=["text", "cfg", "gt1_cfg", "gt_cfg"])
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--guidance", type=float, default=3.0)
    p.add_argument("--capture", action="store_true")
    p.add_argument("--no-ema", action="store_true")
    p.add_argument("--gt", default="all", choices=["all", "first"],
                   help="ground truth: all objects or the first only")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("extract", help="dumps -> activation maps")
    p.add_argument("--dumps", required=True)
    p.add_argument("--pattern", default="*.gamd")
    p.add_argument("--out", required=True)
    p.add_argument("--target", default="comb", choices=["comb", "img"])
    _add_extraction_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("merge", help="bimodal bias merging")
    p.add_argument("--gt-dumps", required=True)
    p.add_argument("--noise-dumps", required=True)
    p.add_argument("--pattern", default="gt_*.gamd")
    p.add_argument("--out", required=True)
    p.add_argument("--variant", default="mixture",
                   choices=["linear", "quadratic", "mixture"])
    _add_extraction_flags(p)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("mask", help="maps -> binary masks (GMM)")
    p.add_argument("--maps", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("eval", help="maps + masks -> metric records")
    p.add_argument("--maps", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iou", default="two-class", choices=["fg", "two-class"])
    p.add_argument("--run", default="run0")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="records -> CSV/JSON report")
    p.add_argument("--records", required=True)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-json", default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("render", help="map -> PNG heatmap overlay")
    p.add_argument("--map", required=True)
    p.add_argument("--image", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
