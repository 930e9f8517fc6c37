"""Command-line entry points.

Subcommands mirror the pipeline stages so each can run (and be tested) in
isolation on the declared file formats:

  prior      depth raster -> prior latent + state + transform
  landmarks  align + substitute one generated landmark cloud into a scene PLY
  plan       latent -> patch plan JSON
  complete   run one region completion from saved artifacts
  fuse       merge a completed region latent back into the scene
  run        full pipeline from a config file
  inspect    print latent statistics

Set SCENELAT_LOG to adjust verbosity (DEBUG, INFO, WARNING, ...).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .align import icp_align, substitute_landmark
from .errors import SceneLatError
from .flow import FlowConfig
from .fusion import classify_partial_landmarks, fuse_region
from .generators import GeneratorEndpoint
from .latent import read_slat, write_slat
from .prior import (
    init_scene_latent,
    labels_from_map,
    normalize,
    read_depth_raster,
    read_ply,
    unproject,
    voxelize,
    write_ply,
    LabeledPointCloud,
)
from .rng import NoiseStream
from .runner import RegionStats, complete_features, complete_structure
from .tiler import PatchPlan, extract_region, plan_patches

log = logging.getLogger("scenelat")


def _setup_logging():
    level = os.environ.get("SCENELAT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _endpoint_from_args(args, config: pl.PipelineConfig | None = None) -> GeneratorEndpoint:
    if args.generator is None and config is not None:
        endpoint = config.generator
    else:
        kind = args.generator or "mock"
        endpoint = GeneratorEndpoint(
            kind,
            tuple(args.adapter_cmd.split()) if args.adapter_cmd else None,
            args.adapter_addr)
    return endpoint


def cmd_prior(args) -> int:
    raster = read_depth_raster(args.depth, args.meta)
    cloud = unproject(raster)
    if args.label_map:
        label_map = np.fromfile(args.label_map, dtype="<i4").reshape(
            raster.height, raster.width)
        cloud = LabeledPointCloud(cloud.points, labels_from_map(raster, label_map))
    normed, transform = normalize(cloud)
    positions, state = voxelize(normed, args.scene_resolution)
    lat = init_scene_latent(positions, args.scene_resolution, args.channels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_slat(lat, out / "prior.slat")
    pl.save_state(state, out / "state.npz")
    (out / "transform.json").write_text(json.dumps(transform.to_json(), indent=2))
    print(f"prior: {len(lat)} voxels at M={args.scene_resolution} -> {out}")
    return 0


def cmd_landmarks(args) -> int:
    scene = read_ply(args.scene_ply)
    generated = read_ply(args.generated_ply)
    raw = scene.points[scene.labels == args.id]
    if len(raw) == 0:
        print(f"error: landmark {args.id} not present in scene", file=sys.stderr)
        return 2
    transform, rmse = icp_align(generated.points, raw,
                                max_iters=args.max_iters, tol=args.tol)
    merged = substitute_landmark(scene, args.id, generated.points, transform)
    write_ply(merged, args.out)
    print(f"landmark {args.id}: rmse={rmse:.6f}, "
          f"{len(generated)} points substituted -> {args.out}")
    return 0


def cmd_plan(args) -> int:
    lat = read_slat(args.slat)
    n = args.region_resolution
    plan = plan_patches(lat.positions, lat.resolution, (n, n, n))
    plan.save(args.out)
    print(f"plan: {len(plan.origins)} regions, bbox {plan.bbox} -> {args.out}")
    return 0


def cmd_complete(args) -> int:
    scene = read_slat(args.slat)
    state = pl.load_state(args.state)
    plan = PatchPlan.load(args.plan)
    origin = plan.origins[args.index]
    config = pl.PipelineConfig(
        region_resolution=plan.patch_shape[0],
        scene_resolution=scene.resolution,
        channels=scene.channels,
        flow=FlowConfig(seed=args.seed),
        generator=_endpoint_from_args(args),
        out_dir=str(Path(args.out).parent),
    )
    backend = pl.make_backend(config, scene_target=scene)
    try:
        flow_cfg = FlowConfig(seed=args.seed, sigma_min=backend.sigma_min)
        ctx = extract_region(scene, state, origin, plan.patch_shape)
        stream = NoiseStream(args.seed).child("region", args.index)
        stats = RegionStats()
        field_s = backend.structure_field(origin, plan.patch_shape,
                                          ctx.image_crop_rect,
                                          flow_cfg.guidance_structure)
        positions = complete_structure(ctx, field_s, flow_cfg,
                                       stream.child("structure"), stats)
        field_l = backend.latent_field(origin, plan.patch_shape, positions,
                                       ctx.image_crop_rect,
                                       flow_cfg.guidance_latent)
        region = complete_features(ctx, positions, field_l, flow_cfg,
                                   stream.child("features"))
        write_slat(region, args.out)
    finally:
        backend.close()
    print(f"region {args.index} at {origin}: {len(region)} rows -> {args.out}")
    return 0


def cmd_fuse(args) -> int:
    scene = read_slat(args.slat)
    state = pl.load_state(args.state)
    region = read_slat(args.region)
    origin = tuple(int(v) for v in args.origin.split(","))
    shape = (region.resolution,) * 3
    partial = classify_partial_landmarks(origin, shape, state)
    fused, new_state = fuse_region(scene, state, region, origin, partial)
    write_slat(fused, args.out_slat)
    pl.save_state(new_state, args.out_state)
    print(f"fused region at {origin}: scene now {len(fused)} entries"
          + (f", partial landmarks {sorted(partial)}" if partial else ""))
    return 0


def cmd_run(args) -> int:
    config = pl.PipelineConfig.from_json(json.loads(Path(args.config).read_text()))
    overrides = {}
    if args.seed is not None:
        overrides["flow"] = dataclasses.replace(config.flow, seed=args.seed)
    if args.generator or args.adapter_cmd or args.adapter_addr:
        overrides["generator"] = _endpoint_from_args(args, config)
    if args.out:
        overrides["out_dir"] = args.out
    if overrides:
        config = dataclasses.replace(config, **overrides)
    manifest = pl.run_pipeline(config)
    print(f"pipeline ok: {manifest['scene_entries']} scene entries, "
          f"{len(manifest['regions'])} regions -> {config.out_dir}")
    return 0


def cmd_inspect(args) -> int:
    lat = read_slat(args.slat)
    print(f"resolution : {lat.resolution}")
    print(f"channels   : {lat.channels}")
    print(f"entries    : {len(lat)}")
    if len(lat):
        lo = lat.positions.min(axis=0).tolist()
        hi = lat.positions.max(axis=0).tolist()
        print(f"bbox       : {lo} .. {hi}")
        feats = lat.features
        print(f"features   : mean={feats.mean():.4f} std={feats.std():.4f} "
              f"min={feats.min():.4f} max={feats.max():.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scenelat", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("prior", help="build the scene prior from a depth raster")
    sp.add_argument("--depth", required=True)
    sp.add_argument("--meta", required=True)
    sp.add_argument("--label-map")
    sp.add_argument("--scene-resolution", type=int, default=128)
    sp.add_argument("--channels", type=int, default=8)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_prior)

    sp = sub.add_parser("landmarks", help="ICP-align and substitute a landmark")
    sp.add_argument("--scene-ply", required=True)
    sp.add_argument("--generated-ply", required=True)
    sp.add_argument("--id", type=int, required=True)
    sp.add_argument("--max-iters", type=int, default=50)
    sp.add_argument("--tol", type=float, default=1e-7)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_landmarks)

    sp = sub.add_parser("plan", help="compute the region patch plan")
    sp.add_argument("--slat", required=True)
    sp.add_argument("--region-resolution", type=int, default=64)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_plan)

    sp = sub.add_parser("complete", help="complete one region from artifacts")
    sp.add_argument("--slat", required=True)
    sp.add_argument("--state", required=True)
    sp.add_argument("--plan", required=True)
    sp.add_argument("--index", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--generator", choices=["mock", "oracle", "adapter"])
    sp.add_argument("--adapter-cmd")
    sp.add_argument("--adapter-addr")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_complete)

    sp = sub.add_parser("fuse", help="fuse a completed region into the scene")
    sp.add_argument("--slat", required=True)
    sp.add_argument("--state", required=True)
    sp.add_argument("--region", required=True)
    sp.add_argument("--origin", required=True, metavar="X,Y,Z")
    sp.add_argument("--out-slat", required=True)
    sp.add_argument("--out-state", required=True)
    sp.set_defaults(fn=cmd_fuse)

    sp = sub.add_parser("run", help="run the full pipeline from a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--generator", choices=["mock", "oracle", "adapter"])
    sp.add_argument("--adapter-cmd")
    sp.add_argument("--adapter-addr")
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("inspect", help="show statistics of a latent file")
    sp.add_argument("slat")
    sp.set_defaults(fn=cmd_inspect)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (SceneLatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
