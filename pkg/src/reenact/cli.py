"""Command-line entry points for the reenactment pipeline.

Exit codes: 0 success, 2 validation error, 3 ingest error.  Worker count
for per-frame fan-out is capped by the H2H_THREADS environment variable
(0 or unset = auto); results are collected in frame order so output is
byte-identical for any worker count.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import streams
from .errors import IngestError, PipelineError
from .eyes import EyeLandmarks, detect_pupils, render_eye_sketch, to_gray
from .metrics import (
    MetricReport,
    aed,
    aeld,
    apd,
    ard,
    dai,
    fid_from_features,
    mapd,
    median_heuristic_bandwidth,
    mmd2_from_features,
)
from .model import ShapeCoefficients, assemble_shape, load_model_dir, normalized_mean_face
from .nmfc import NmfcImage, nmfc_color_table, nmfc_facial_mask, rasterize_visibility, render_nmfc
from .pipeline import (
    BoundingBox,
    NearestNeighborIndex,
    ReenactmentMode,
    average_bounding_box,
    crop_roi,
    route_parameters,
)
from .recon import average_identity, recover_frame
from .util import parallel_map, write_json


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reenact",
        description="Head reenactment geometry pipeline: fitting, conditioning "
        "images, baseline rendering, and evaluation metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="recover pose and shape coefficients per frame")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--obs-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("nmfc", help="render semantic conditioning images from a recovery")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--recovery", required=True)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--dump-masks", action="store_true", help="also write raw u32 visibility grids")
    p.set_defaults(func=cmd_nmfc)

    p = sub.add_parser("eyes", help="detect pupils and render eye sketch frames")
    p.add_argument("--landmarks", required=True)
    p.add_argument("--frames-dir", required=True)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eyes)

    p = sub.add_parser("crop", help="crop the fixed average-box face ROI from a frame stream")
    p.add_argument("--frames-dir", required=True)
    p.add_argument("--boxes", required=True)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_crop)

    p = sub.add_parser("reenact", help="route parameters and render via the NN baseline")
    p.add_argument("--mode", required=True, choices=[m.value for m in ReenactmentMode])
    p.add_argument("--model-dir", required=True)
    p.add_argument("--source-recovery", required=True)
    p.add_argument("--target-recovery", required=True)
    p.add_argument("--train-pairs", required=True, help="directory of nmfc_*.png + frame_*.png pairs")
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_reenact)

    p = sub.add_parser("metrics", help="evaluate a real/generated sequence pair")
    p.add_argument("--real", required=True)
    p.add_argument("--fake", required=True)
    p.add_argument("--masks-from-nmfc", help="NMFC directory supplying facial-area masks")
    p.add_argument("--features-real")
    p.add_argument("--features-fake")
    p.add_argument("--recovery-real")
    p.add_argument("--recovery-fake")
    p.add_argument("--eyes-real", help="68-point landmark CSV for the real frames")
    p.add_argument("--eyes-fake", help="68-point landmark CSV for the fake frames")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metrics)

    return parser


def cmd_fit(args) -> int:
    model = load_model_dir(args.model_dir)
    observations = streams.read_observations(args.obs_dir)
    recoveries = parallel_map(lambda obs: recover_frame(model, obs), observations)
    streams.write_recovery(args.out, recoveries)
    print(f"fit: {len(recoveries)} frames -> {args.out}")
    return 0


def cmd_nmfc(args) -> int:
    model = load_model_dir(args.model_dir)
    recoveries = streams.read_recovery(args.recovery)
    if not recoveries:
        raise IngestError(f"recovery {args.recovery} has no frames")
    # Conditioning identity is the sequence average, matching how the
    # images are built when driving a renderer.
    avg_id = average_identity(recoveries)
    nmf = normalized_mean_face(model)
    table = nmfc_color_table(nmf, model.triangles)
    os.makedirs(args.out_dir, exist_ok=True)

    def render_one(rec):
        shape = assemble_shape(model, ShapeCoefficients(avg_id, rec.coeffs.expression))
        mask = rasterize_visibility(rec.pose, shape, model.triangles, args.size, args.size)
        image = render_nmfc(mask, nmf, model.triangles, color_table=table)
        return mask, image

    rendered = parallel_map(render_one, recoveries)
    for i, (mask, image) in enumerate(rendered):
        streams.write_png(os.path.join(args.out_dir, streams.frame_name("nmfc", i)), image.rgb)
        if args.dump_masks:
            streams.write_mask_u32(os.path.join(args.out_dir, streams.frame_name("mask", i, "u32")), mask)
    print(f"nmfc: {len(rendered)} frames -> {args.out_dir}")
    return 0


def _eye_frames_from(landmarks_csv, frames_dir):
    """Per-frame (EyeLandmarks, PupilPair) from a landmark CSV + RGB stream."""
    landmarks = streams.read_landmarks_csv(landmarks_csv)
    frames = streams.read_frame_stream(frames_dir)
    if len(landmarks) != len(frames):
        raise IngestError(
            f"{len(landmarks)} landmark rows vs {len(frames)} frames"
        )

    def detect_one(args):
        pts68, frame = args
        lms = EyeLandmarks.from_68(pts68)
        return lms, detect_pupils(lms, to_gray(frame))

    return parallel_map(detect_one, zip(landmarks, frames))


def cmd_eyes(args) -> int:
    eye_frames = _eye_frames_from(args.landmarks, args.frames_dir)
    os.makedirs(args.out_dir, exist_ok=True)
    sketches = parallel_map(
        lambda ef: render_eye_sketch(ef[0], ef[1], size=args.size), eye_frames
    )
    for i, sketch in enumerate(sketches):
        streams.write_png(os.path.join(args.out_dir, streams.frame_name("eyes", i)), sketch.rgb)
    print(f"eyes: {len(sketches)} frames -> {args.out_dir}")
    return 0


def cmd_crop(args) -> int:
    paths = streams.list_stream(args.frames_dir, "frame")
    boxes = [BoundingBox(*row) for row in streams.read_boxes_csv(args.boxes)]
    first = streams.read_png(paths[0])
    h, w = first.shape[:2]
    box = average_bounding_box(boxes, frame_width=w, frame_height=h)
    os.makedirs(args.out_dir, exist_ok=True)
    cropped = parallel_map(
        lambda p: crop_roi(streams.read_png(p), box, size=args.size), paths
    )
    for i, crop in enumerate(cropped):
        streams.write_png(os.path.join(args.out_dir, streams.frame_name("frame", i)), crop)
    print(f"crop: {len(cropped)} frames -> {args.out_dir} (box {box})")
    return 0


def _read_train_pairs(directory):
    nmfc_paths = streams.list_stream(directory, "nmfc")
    frame_paths = streams.list_stream(directory, "frame")
    if len(nmfc_paths) != len(frame_paths):
        raise IngestError(
            f"{directory}: {len(nmfc_paths)} nmfc images vs {len(frame_paths)} frames"
        )
    return [
        (streams.read_png(np_), streams.read_png(fp))
        for np_, fp in zip(nmfc_paths, frame_paths)
    ]


def cmd_reenact(args) -> int:
    model = load_model_dir(args.model_dir)
    source = streams.read_recovery(args.source_recovery)
    target = streams.read_recovery(args.target_recovery)
    avg_id = average_identity(target)
    routed = route_parameters(ReenactmentMode(args.mode), source, target, avg_id)

    nmf = normalized_mean_face(model)
    table = nmfc_color_table(nmf, model.triangles)
    index = NearestNeighborIndex(_read_train_pairs(args.train_pairs))
    os.makedirs(args.out_dir, exist_ok=True)

    def render_one(frame):
        shape = assemble_shape(model, frame.coeffs)
        mask = rasterize_visibility(frame.pose, shape, model.triangles, args.size, args.size)
        image = render_nmfc(mask, nmf, model.triangles, color_table=table)
        return image, index.render(image)

    rendered = parallel_map(render_one, routed)
    for i, (image, frame) in enumerate(rendered):
        streams.write_png(os.path.join(args.out_dir, streams.frame_name("nmfc", i)), image.rgb)
        streams.write_png(os.path.join(args.out_dir, streams.frame_name("frame", i)), frame)
    print(f"reenact[{args.mode}]: {len(rendered)} frames -> {args.out_dir}")
    return 0


def cmd_metrics(args) -> int:
    real = streams.read_frame_stream(args.real)
    fake = streams.read_frame_stream(args.fake)
    report = MetricReport()
    provenance: dict = {
        "inputs": {"real": args.real, "fake": args.fake},
        "frame_counts": {"real": len(real), "fake": len(fake)},
        "decisions": {
            "ard_aggregation": "mean absolute per-angle difference, wrapped to (-180, 180]",
            "aed_normalization": "unnormalized L1 over expression coefficients",
            "mapd_pooling": "global pixel pooling across frames",
        },
    }

    report.apd = apd(real, fake)

    if args.masks_from_nmfc:
        nmfc_frames = streams.read_frame_stream(args.masks_from_nmfc, prefix="nmfc")
        masks = np.stack([nmfc_facial_mask(NmfcImage(f)) for f in nmfc_frames])
        report.mapd = mapd(real, fake, masks)
        provenance["inputs"]["masks_from_nmfc"] = args.masks_from_nmfc

    if (args.recovery_real is None) != (args.recovery_fake is None):
        raise ValueError("--recovery-real and --recovery-fake must be given together")
    if args.recovery_real:
        rec_real = streams.read_recovery(args.recovery_real)
        rec_fake = streams.read_recovery(args.recovery_fake)
        report.aed = aed(
            [r.coeffs.expression for r in rec_real],
            [r.coeffs.expression for r in rec_fake],
        )
        report.ard_degrees = ard([r.pose for r in rec_real], [r.pose for r in rec_fake])
        report.dai = dai(rec_real, rec_fake)
        provenance["inputs"]["recovery_real"] = args.recovery_real
        provenance["inputs"]["recovery_fake"] = args.recovery_fake
        provenance["decisions"]["expression_dim"] = int(rec_real[0].coeffs.expression.size)

    if (args.eyes_real is None) != (args.eyes_fake is None):
        raise ValueError("--eyes-real and --eyes-fake must be given together")
    if args.eyes_real:
        report.aeld = aeld(
            _eye_frames_from(args.eyes_real, args.real),
            _eye_frames_from(args.eyes_fake, args.fake),
        )
        provenance["inputs"]["eyes_real"] = args.eyes_real
        provenance["inputs"]["eyes_fake"] = args.eyes_fake

    if (args.features_real is None) != (args.features_fake is None):
        raise ValueError("--features-real and --features-fake must be given together")
    if args.features_real:
        feats_real = streams.read_features(args.features_real)
        feats_fake = streams.read_features(args.features_fake)
        bandwidth = median_heuristic_bandwidth(feats_real, feats_fake)
        report.fid = fid_from_features(feats_real, feats_fake)
        report.mmd2 = mmd2_from_features(feats_real, feats_fake, bandwidth=bandwidth)
        provenance["inputs"]["features_real"] = args.features_real
        provenance["inputs"]["features_fake"] = args.features_fake
        provenance["decisions"]["mmd_bandwidth"] = bandwidth

    payload = {"metrics": report.to_dict(), "provenance": provenance}
    write_json(args.out, payload)
    computed = [k for k, v in report.to_dict().items() if v is not None]
    print(f"metrics: {', '.join(computed)} -> {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IngestError as exc:
        print(f"ingest error: {exc}", file=sys.stderr)
        return 3
    except (PipelineError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
