"""Command-line entry points for every pipeline stage.

Each subcommand is a thin wrapper producing files; failures print a
machine-readable JSON error on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import features as feat
from . import graph_analysis, imaging, layout_codec, render, service as service_mod, training
from .errors import LayoutMuseError


def _fail(code: str, message: str) -> int:
    print(json.dumps({"error": code, "message": message}), file=sys.stderr)
    return 1


def cmd_ingest(args) -> int:
    """Pair image files with their saliency maps into a JSONL manifest."""
    images_dir = Path(args.images)
    records = []
    for img in sorted(images_dir.glob("*.png")):
        if img.stem.endswith(args.saliency_suffix):
            continue
        sal = img.with_name(img.stem + args.saliency_suffix + ".png")
        if not sal.exists():
            print(f"no saliency for {img.name}, skipping", file=sys.stderr)
            continue
        imaging.load_pair(img, sal, img.stem)  # validates decode + dimensions
        records.append({"image": str(img), "saliency": str(sal), "id": img.stem})
    with open(args.out, "w") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")
    print(f"wrote {len(records)} pairs to {args.out}")
    return 0


def cmd_segment(args) -> int:
    pair = imaging.load_pair(args.image, args.saliency)
    regions = imaging.watershed_segment(pair.saliency)
    regions = imaging.extract_patches(pair, regions)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = [
        {
            "rank": r.rank,
            "bbox": list(r.bbox),
            "center": list(r.center),
            "area": r.area,
            "color": list(layout_codec.PALETTE[r.rank]),
        }
        for r in regions.regions
    ]
    (out / "regions.json").write_text(json.dumps(doc, indent=2))
    np.savez_compressed(out / "masks.npz", masks=np.stack([r.mask for r in regions.regions]))
    imaging.save_image(render.boxes_overlay(pair.image, regions), out / "overlay.png")
    print(f"{regions.n} regions -> {out}")
    return 0


def cmd_features(args) -> int:
    bags = []
    for rec in graph_analysis.read_manifest(args.manifest):
        pair = imaging.load_pair(rec["image"], rec["saliency"], rec.get("id", rec["image"]))
        regions = imaging.extract_patches(pair, imaging.watershed_segment(pair.saliency))
        bags.append(feat.bag_from_regions(pair.id, regions.regions))
    feat.export_features(bags, args.out)
    print(f"wrote {len(bags)} feature bags to {args.out}")
    return 0


def cmd_cluster(args) -> int:
    assignment = graph_analysis.cluster_layouts(
        args.manifest,
        wl_iterations=args.wl_iters,
        k=args.k,
        out_dir=args.out,
        feature_file=args.features,
    )
    print(f"{assignment.k} clusters over {len(assignment.labels)} drawings -> {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = training.TrainConfig(
        epochs=args.epochs,
        batch=args.batch,
        seed=args.seed,
        critic_ratio=args.critic_ratio,
        checkpoint_every=args.checkpoint_every,
    )
    training.train(args.manifest, cfg, args.out, feature_file=args.features)
    print(f"trained {args.epochs} epochs -> {args.out}")
    return 0


def cmd_generate(args) -> int:
    bundle = service_mod.GeneratorBundle.load(args.ckpt)
    pair = imaging.load_pair(args.image, args.saliency)
    regions = imaging.extract_patches(pair, imaging.watershed_segment(pair.saliency))
    bag = feat.bag_from_regions("input", regions.regions)
    f = feat.sum_features(bag)
    n = regions.n
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    imaging.save_image(render.boxes_overlay(pair.image, regions), out / "marks.png")
    masks = np.stack([r.mask for r in regions.regions])
    enabled = [
        {"rank": r.rank, "bbox": list(r.bbox)} for r in regions.regions
    ]
    sprites, canvas = service_mod._session_sprites(pair, masks, enabled)
    bg = imaging.background_color(pair, regions)
    rng = np.random.default_rng(args.seed)
    from .compositor import SpriteSet, hard_composite

    for j in range(args.count):
        z = rng.standard_normal(bundle.arch.noise_dim)
        grid = bundle.generate_grid(f, n, z)
        anchors = layout_codec.decode_top_n(grid, n)
        (out / f"layout_{j:02d}.json").write_text(layout_codec.layout_to_json(anchors, grid))
        preview = hard_composite(SpriteSet(sprites, canvas, bg), anchors)
        imaging.save_image(preview.image, out / f"layout_{j:02d}.png")
        imaging.save_image(render.wireframe_overlay(anchors), out / f"wireframe_{j:02d}.png")
    print(f"{args.count} layouts -> {out}")
    return 0


def cmd_gradcheck(args) -> int:
    from . import gradcheck

    results = gradcheck.run_all(tol=args.tol)
    ok = True
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name:28s} max_rel_err={r.max_rel_err:.3e}")
        ok &= r.ok
    return 0 if ok else 1


def cmd_serve(args) -> int:
    import uvicorn

    cfg = service_mod.ServiceConfig(
        listen=args.listen,
        data_dir=args.data_dir,
        checkpoint=args.ckpt,
        layouts_per_request=args.layouts,
    )
    host, _, port = args.listen.rpartition(":")
    uvicorn.run(service_mod.create_app(cfg), host=host or "127.0.0.1", port=int(port))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="layoutmuse")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="build a manifest from paired PNG files")
    s.add_argument("--images", required=True)
    s.add_argument("--saliency-suffix", default="_saliency")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("segment", help="segment one drawing's saliency map")
    s.add_argument("--image", required=True)
    s.add_argument("--saliency", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("features", help="compute LMF1 feature file for a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("cluster", help="cluster layout graphs across a corpus")
    s.add_argument("--manifest", required=True)
    s.add_argument("--k", type=int, default=None)
    s.add_argument("--wl-iters", type=int, default=graph_analysis.DEFAULT_WL_ITERATIONS)
    s.add_argument("--features", default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("train", help="train the WGAN-GP layout generator")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--epochs", type=int, default=400)
    s.add_argument("--batch", type=int, default=16)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--critic-ratio", type=int, default=1)
    s.add_argument("--checkpoint-every", type=int, default=25)
    s.add_argument("--features", default=None)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("generate", help="generate layouts for one drawing")
    s.add_argument("--image", required=True)
    s.add_argument("--saliency", required=True)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--count", type=int, default=10)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("gradcheck", help="run finite-difference gradient suites")
    s.add_argument("--tol", type=float, default=1e-6)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("serve", help="run the HTTP layout service")
    s.add_argument("--listen", default="127.0.0.1:8000")
    s.add_argument("--data-dir", default="layoutmuse_data")
    s.add_argument("--ckpt", default=None)
    s.add_argument("--layouts", type=int, default=10)
    s.set_defaults(func=cmd_serve)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except LayoutMuseError as exc:
        return _fail(type(exc).__name__, str(exc))
    except FileNotFoundError as exc:
        return _fail("FileNotFound", str(exc))


if __name__ == "__main__":
    sys.exit(main())
