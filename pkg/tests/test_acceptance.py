"""Acceptance suite: one test per release criterion.

Each test prints a single `ACCEPTANCE <n> ... PASS/FAIL` line (visible
with `pytest -s`); the assertions enforce the stated tolerances.
"""

import contextlib
import math
import os
import shutil
import time

import numpy as np
import pytest

from conftest import (
    dome_model,
    exhaustive_visibility_oracle,
    observation_from,
    shape_from_points,
)
from reenact import (
    CameraPose,
    EyeLandmarks,
    PupilPair,
    ShapeCoefficients,
    apd,
    ard,
    assemble_shape,
    detect_pupil,
    fid_from_features,
    mapd,
    mmd2_from_features,
    aed,
    aeld,
    dai,
    nmfc_color_table,
    nmfc_facial_mask,
    normalized_mean_face,
    rasterize_visibility,
    render_eye_sketch,
    render_nmfc,
    save_model_dir,
)
from reenact import streams
from reenact.cli import main as cli_main
from reenact.nmfc import NONE_INDEX
from reenact.pipeline import NearestNeighborIndex
from reenact.recon import FrameObservation, FrameRecovery, recover_frame
from test_eyes import hexagon_eye


@contextlib.contextmanager
def criterion(number, name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number} ({name}): FAIL")
        raise
    print(f"ACCEPTANCE {number} ({name}): PASS")


def test_criterion_1_round_trip_recovery(face5k):
    angles = [math.radians(a) for a in (-45.0, 0.0, 45.0)]
    scales = [0.5, 1.0, 2.0]
    rng = np.random.default_rng(11)
    worst_coeff = worst_euler = worst_scale = worst_time = 0.0
    with criterion(1, "round-trip recovery"):
        for yaw in angles:
            for pitch in angles:
                for roll in angles:
                    for scale in scales:
                        pose = CameraPose(yaw, pitch, roll, 128.0, 120.0, scale)
                        for _ in range(10):
                            coeffs = ShapeCoefficients(
                                rng.normal(size=40) * 2.0, rng.normal(size=20) * 2.0
                            )
                            obs = observation_from(face5k, coeffs, pose)
                            start = time.perf_counter()
                            rec = recover_frame(face5k, obs)
                            worst_time = max(worst_time, time.perf_counter() - start)

                            truth = np.concatenate([coeffs.identity, coeffs.expression])
                            got = np.concatenate(
                                [rec.coeffs.identity, rec.coeffs.expression]
                            )
                            worst_coeff = max(
                                worst_coeff,
                                float(np.linalg.norm(got - truth) / np.linalg.norm(truth)),
                            )
                            for a, b in (
                                (rec.pose.yaw, yaw),
                                (rec.pose.pitch, pitch),
                                (rec.pose.roll, roll),
                            ):
                                worst_euler = max(worst_euler, abs(math.degrees(a - b)))
                            worst_scale = max(
                                worst_scale, abs(rec.pose.scale - scale) / scale
                            )
        print(
            f"  810 frames: coeff rel {worst_coeff:.2e}, euler {worst_euler:.2e} deg, "
            f"scale rel {worst_scale:.2e}, slowest frame {worst_time * 1e3:.1f} ms"
        )
        assert worst_coeff <= 1e-4
        assert worst_euler <= 0.01
        assert worst_scale <= 1e-5
        assert worst_time <= 1.0


def test_criterion_2_rasterizer_oracle_equivalence():
    pose = CameraPose.identity()
    with criterion(2, "rasterizer matches exhaustive oracle"):
        for seed in range(100):
            rng = np.random.default_rng(5000 + seed)
            n_verts = int(rng.integers(6, 16))
            n_tris = int(rng.integers(1, 51))
            if seed % 2 == 0:
                # integer lattice: exercises exact edge and depth ties
                pts = np.column_stack(
                    [
                        rng.integers(-8, 72, size=n_verts).astype(np.float64),
                        rng.integers(-8, 72, size=n_verts).astype(np.float64),
                        rng.integers(0, 9, size=n_verts).astype(np.float64),
                    ]
                )
            else:
                pts = np.column_stack(
                    [
                        rng.uniform(-8, 72, size=n_verts),
                        rng.uniform(-8, 72, size=n_verts),
                        rng.uniform(0, 9, size=n_verts),
                    ]
                )
            tris = rng.integers(0, n_verts, size=(n_tris, 3))
            mask = rasterize_visibility(pose, shape_from_points(pts), tris, 64, 64)
            want = exhaustive_visibility_oracle(pts[:, :2], pts[:, 2], tris, 64, 64)
            np.testing.assert_array_equal(mask.triangle_index, want)


def _convex_contains(poly, x, y):
    area = 0.0
    for i in range(len(poly)):
        p, q = poly[i], poly[(i + 1) % len(poly)]
        area += p[0] * q[1] - p[1] * q[0]
    s = 1.0 if area > 0.0 else -1.0
    for i in range(len(poly)):
        p, q = poly[i], poly[(i + 1) % len(poly)]
        cr = (q[0] - p[0]) * (y - p[1]) - (q[1] - p[1]) * (x - p[0])
        if s * cr <= 0.0:
            return False
    return True


def test_criterion_3_pupil_detector_oracle():
    with criterion(3, "pupil detector matches weighted-centroid oracle"):
        worst = 0.0
        for seed in range(100):
            rng = np.random.default_rng(7000 + seed)
            cx, cy = rng.uniform(12, 50, size=2)
            poly = hexagon_eye(cx, cy, rng.uniform(4, 8), rng.uniform(2.5, 5))
            theta = rng.uniform(0, math.pi)
            rot = np.array(
                [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]
            )
            poly = (poly - [cx, cy]) @ rot.T + [cx, cy]
            gray = rng.integers(0, 255, size=(64, 64)).astype(np.float64)

            got = detect_pupil(poly, gray)
            tx, ty, tw = [], [], []
            for v in range(64):
                for u in range(64):
                    px, py = u + 0.5, v + 0.5
                    if _convex_contains(poly, px, py):
                        w = 255.0 - gray[v, u]
                        tx.append(w * px)
                        ty.append(w * py)
                        tw.append(w)
            want = np.array([math.fsum(tx) / math.fsum(tw), math.fsum(ty) / math.fsum(tw)])
            worst = max(worst, float(np.abs(got - want).max()))
        print(f"  100 configurations, worst deviation {worst:.2e}")
        assert worst <= 1e-12

        # black disc inside a white eye: detection lands on the disc center
        gray = np.full((64, 64), 255.0)
        center = np.array([31.3, 30.2])
        for v in range(64):
            for u in range(64):
                if (u + 0.5 - center[0]) ** 2 + (v + 0.5 - center[1]) ** 2 <= 9.0:
                    gray[v, u] = 0.0
        poly = hexagon_eye(center[0], center[1], 9.0, 6.0)
        got = detect_pupil(poly, gray)
        assert float(np.hypot(*(got - center))) <= 0.5


def test_criterion_4_metric_axioms():
    rng = np.random.default_rng(13)
    with criterion(4, "metric axioms"):
        frames = rng.integers(0, 256, size=(4, 16, 16, 3)).astype(np.uint8)
        masks = np.ones(frames.shape[:3], dtype=bool)
        assert apd(frames, frames) <= 1e-9
        assert mapd(frames, frames, masks) <= 1e-9
        coeffs = rng.normal(size=(6, 5))
        assert aed(coeffs, coeffs) <= 1e-9
        poses = [CameraPose(0.3, -0.2, 0.1, 1.0, 2.0, 1.5)] * 6
        assert ard(poses, poses) <= 1e-9
        recs = [
            FrameRecovery(
                pose=CameraPose.identity(),
                coeffs=ShapeCoefficients(rng.normal(size=4), rng.normal(size=2)),
                residual_rms=0.0,
            )
            for _ in range(5)
        ]
        assert dai(recs, recs) <= 1e-9
        eye_frames = [
            (
                EyeLandmarks(hexagon_eye(30, 30), hexagon_eye(60, 30)),
                PupilPair([30.0, 30.0], [60.0, 30.0]),
            )
        ] * 3
        assert aeld(eye_frames, eye_frames) <= 1e-9
        feats = rng.normal(size=(50, 8))
        assert fid_from_features(feats, feats) <= 1e-6
        assert mmd2_from_features(feats, feats) <= 1e-9

        real = np.zeros((3, 8, 8, 3), dtype=np.uint8)
        fake = real.copy()
        fake[..., 0] = 3
        fake[..., 1] = 4
        assert apd(real, fake) == 5.0

        shift = rng.normal(size=8)
        assert fid_from_features(feats, feats + shift) == pytest.approx(
            float((shift**2).sum()), abs=1e-9
        )

        for seed in range(1000):
            r = np.random.default_rng(20000 + seed)
            a = r.normal(size=(int(r.integers(1, 12)), int(r.integers(1, 5))))
            b = r.normal(size=(int(r.integers(1, 12)), a.shape[1]))
            assert mmd2_from_features(a, b) >= 0.0


def test_criterion_5_throughput(face5k):
    size = 256
    n_frames = 500
    rng = np.random.default_rng(17)
    nmf = normalized_mean_face(face5k)
    table = nmfc_color_table(nmf, face5k.triangles)
    eye = EyeLandmarks(hexagon_eye(100, 120, 9, 4), hexagon_eye(156, 120, 9, 4))
    pupils = PupilPair([100.0, 120.0], [156.0, 120.0])

    observations = []
    for t in range(n_frames):
        pose = CameraPose(
            math.radians(30.0) * math.sin(2 * math.pi * t / 125.0),
            math.radians(15.0) * math.sin(2 * math.pi * t / 80.0),
            math.radians(10.0) * math.cos(2 * math.pi * t / 95.0),
            128.0 + 10.0 * math.sin(t / 9.0),
            120.0 + 6.0 * math.cos(t / 7.0),
            2.0,
        )
        coeffs = ShapeCoefficients(rng.normal(size=40) * 1.5, rng.normal(size=20) * 1.5)
        observations.append(observation_from(face5k, coeffs, pose, frame_index=t))

    def conditional_input(obs):
        rec = recover_frame(face5k, obs)
        shape = assemble_shape(face5k, rec.coeffs)
        mask = rasterize_visibility(rec.pose, shape, face5k.triangles, size, size)
        image = render_nmfc(mask, nmf, face5k.triangles, color_table=table)
        sketch = render_eye_sketch(eye, pupils, size=size)
        return image, sketch

    conditional_input(observations[0])  # warm the JIT outside the timed window

    start = time.perf_counter()
    for obs in observations:
        conditional_input(obs)
    elapsed = time.perf_counter() - start
    fps = n_frames / elapsed

    with criterion(5, "conditional-input throughput"):
        print(
            f"  {n_frames} frames in {elapsed:.1f} s = {fps:.1f} fps at {size}x{size}, "
            f"{face5k.vertex_count} vertices / {face5k.triangle_count} triangles, "
            "single core; geometry path only (parameter recovery + semantic render "
            "+ eye sketch), no neural renderer"
        )
        assert fps >= 18.0
        assert elapsed <= 60.0


def _render_nmfc_for(model, pose, expression, nmf, table, size):
    coeffs = ShapeCoefficients(np.full(model.identity_dim, 0.2), expression)
    shape = assemble_shape(model, coeffs)
    mask = rasterize_visibility(pose, shape, model.triangles, size, size)
    return render_nmfc(mask, nmf, model.triangles, color_table=table)


def test_criterion_6_self_reenactment_smoke(face_small):
    size = 128
    model = face_small
    nmf = normalized_mean_face(model)
    table = nmfc_color_table(nmf, model.triangles)

    def pose_at(t):
        return CameraPose(
            math.radians(-30.0 + 60.0 * (t / 200.0)),
            0.0,
            0.0,
            64.0 + 12.0 * math.sin(2 * math.pi * t / 40.0),
            60.0 + 8.0 * math.cos(2 * math.pi * t / 55.0),
            0.9,
        )

    def expression_at(t):
        return np.array([math.sin(t / 9.0), math.cos(t / 13.0), 0.3, -0.2]) * 1.5

    train_images = [
        _render_nmfc_for(model, pose_at(t), expression_at(t), nmf, table, size)
        for t in range(200)
    ]
    train_frames = [img.rgb for img in train_images]
    index = NearestNeighborIndex(list(zip(train_images, train_frames)))
    assert len(np.unique(index._keys, axis=0)) == 200, "training keys must be distinct"

    with criterion(6, "self-reenactment smoke test"):
        # training set == query set: retrieval is exact
        retrieved = np.stack([index.render(img) for img in train_images])
        real = np.stack(train_frames)
        masks = np.stack([nmfc_facial_mask(img) for img in train_images])
        assert apd(real, retrieved) == 0.0
        assert mapd(real, retrieved, masks) == 0.0

        # disjoint queries: the baseline must beat random retrieval
        query_images = [
            _render_nmfc_for(
                model, pose_at(t + 0.5), expression_at(t + 0.5), nmf, table, size
            )
            for t in range(0, 200, 2)
        ]
        query_truth = np.stack([img.rgb for img in query_images])
        query_masks = np.stack([nmfc_facial_mask(img) for img in query_images])
        nn_frames = np.stack([index.render(img) for img in query_images])
        nn_mapd = mapd(query_truth, nn_frames, query_masks)

        random_scores = []
        for seed in range(5):
            r = np.random.default_rng(31000 + seed)
            picks = r.integers(0, 200, size=len(query_images))
            rand_frames = np.stack([train_frames[i] for i in picks])
            random_scores.append(mapd(query_truth, rand_frames, query_masks))
        random_mapd = float(np.mean(random_scores))
        print(f"  NN MAPD {nn_mapd:.3f} vs random retrieval {random_mapd:.3f}")
        assert nn_mapd < random_mapd


def _build_world(root, model):
    inputs = root / "inputs"
    os.makedirs(inputs)
    save_model_dir(inputs / "model", model)

    rng = np.random.default_rng(23)
    identity = rng.normal(size=model.identity_dim) * 1.5
    observations = []
    lms = np.zeros((24, 68, 2))
    for t in range(24):
        pose = CameraPose(-0.35 + 0.03 * t, 0.01 * t, -0.015 * t, 32.0 + 0.5 * t, 32.0, 0.5)
        coeffs = ShapeCoefficients(identity, rng.normal(size=model.expression_dim))
        observations.append(observation_from(model, coeffs, pose, frame_index=t))
        lms[t, 36:42] = hexagon_eye(20 + 0.3 * t, 20, 6, 3)
        lms[t, 42:48] = hexagon_eye(44, 20 + 0.2 * t, 6, 3)
    streams.write_observations(inputs / "obs", observations)
    streams.write_landmarks_csv(inputs / "landmarks.csv", lms)
    with open(inputs / "boxes.csv", "w") as fh:
        for t in range(24):
            fh.write(f"{t},{5 + 0.1 * t},5,{53 + 0.1 * t},49\n")
    feats = np.random.default_rng(29).normal(size=(20, 5))
    streams.write_features(inputs / "feats_real.f32", feats)
    streams.write_features(inputs / "feats_fake.f32", feats + 0.1)


def _run_pipeline(run_dir, threads):
    os.makedirs(run_dir, exist_ok=True)
    cwd = os.getcwd()
    previous = os.environ.get("H2H_THREADS")
    os.environ["H2H_THREADS"] = str(threads)
    os.chdir(run_dir)
    try:
        model = "../inputs/model"
        assert cli_main(["fit", "--model-dir", model, "--obs-dir", "../inputs/obs", "--out", "recovery.json"]) == 0
        assert cli_main(["nmfc", "--model-dir", model, "--recovery", "recovery.json", "--size", "64", "--out-dir", "nmfc", "--dump-masks"]) == 0
        os.makedirs("footage")
        os.makedirs("train")
        for t in range(24):
            shutil.copyfile(f"nmfc/nmfc_{t:06d}.png", f"footage/frame_{t:06d}.png")
            shutil.copyfile(f"nmfc/nmfc_{t:06d}.png", f"train/nmfc_{t:06d}.png")
            shutil.copyfile(f"footage/frame_{t:06d}.png", f"train/frame_{t:06d}.png")
        assert cli_main(["eyes", "--landmarks", "../inputs/landmarks.csv", "--frames-dir", "footage", "--size", "64", "--out-dir", "eyes"]) == 0
        assert cli_main(["crop", "--frames-dir", "footage", "--boxes", "../inputs/boxes.csv", "--size", "32", "--out-dir", "cropped"]) == 0
        assert cli_main([
            "reenact", "--mode", "self", "--model-dir", model,
            "--source-recovery", "recovery.json", "--target-recovery", "recovery.json",
            "--train-pairs", "train", "--size", "64", "--out-dir", "generated",
        ]) == 0
        assert cli_main([
            "metrics", "--real", "footage", "--fake", "generated",
            "--masks-from-nmfc", "generated",
            "--recovery-real", "recovery.json", "--recovery-fake", "recovery.json",
            "--eyes-real", "../inputs/landmarks.csv", "--eyes-fake", "../inputs/landmarks.csv",
            "--features-real", "../inputs/feats_real.f32",
            "--features-fake", "../inputs/feats_fake.f32",
            "--out", "report.json",
        ]) == 0
    finally:
        os.chdir(cwd)
        if previous is None:
            os.environ.pop("H2H_THREADS", None)
        else:
            os.environ["H2H_THREADS"] = previous


def _tree_bytes(root):
    out = {}
    for base, _, files in os.walk(root):
        for name in files:
            path = os.path.join(base, name)
            rel = os.path.relpath(path, root)
            with open(path, "rb") as fh:
                out[rel] = fh.read()
    return out


def test_criterion_7_end_to_end_determinism(face_small, tmp_path):
    _build_world(tmp_path, face_small)
    with criterion(7, "byte-identical pipeline runs"):
        _run_pipeline(tmp_path / "run_a", threads=1)
        _run_pipeline(tmp_path / "run_b", threads=1)
        _run_pipeline(tmp_path / "run_c", threads=4)
        a = _tree_bytes(tmp_path / "run_a")
        b = _tree_bytes(tmp_path / "run_b")
        c = _tree_bytes(tmp_path / "run_c")
        assert a.keys() == b.keys() == c.keys()
        assert len(a) > 100  # pngs, masks, jsons
        for rel in a:
            assert a[rel] == b[rel], f"{rel} differs between identical runs"
            assert a[rel] == c[rel], f"{rel} differs under H2H_THREADS=4"


def test_criterion_8_semantic_consistency(face_small):
    size = 128
    model = face_small
    nmf = normalized_mean_face(model)
    table = nmfc_color_table(nmf, model.triangles)
    seen_colors: dict[int, set] = {}
    seen_frames: dict[int, set] = {}

    with criterion(8, "semantic color consistency"):
        for t in range(50):
            pose = CameraPose(
                math.radians(-40.0 + 80.0 * t / 49.0), 0.0, 0.0, 64.0, 60.0, 0.9
            )
            expression = np.array([math.sin(t / 5.0), -0.4, 0.2, 0.1])
            coeffs = ShapeCoefficients(np.full(model.identity_dim, 0.1), expression)
            shape = assemble_shape(model, coeffs)
            mask = rasterize_visibility(pose, shape, model.triangles, size, size)
            image = render_nmfc(mask, nmf, model.triangles, color_table=table)

            idx = mask.triangle_index.ravel()
            rgb = image.rgb.reshape(-1, 3)
            visible = idx != NONE_INDEX
            rows = np.unique(
                np.column_stack([idx[visible], rgb[visible]]).astype(np.int64), axis=0
            )
            for tri, r, g, b in rows:
                seen_colors.setdefault(int(tri), set()).add((int(r), int(g), int(b)))
                seen_frames.setdefault(int(tri), set()).add(t)

        multi_frame = [tri for tri, frames in seen_frames.items() if len(frames) >= 2]
        assert len(multi_frame) > 100  # the sweep genuinely revisits triangles
        offenders = [tri for tri in multi_frame if len(seen_colors[tri]) != 1]
        print(
            f"  {len(multi_frame)} triangles visible in >= 2 frames, "
            f"{len(offenders)} color inconsistencies"
        )
        assert offenders == []
