"""Procedural face-like images for desk-scale experiments.

Faces are layered geometric primitives (skin ellipse, hair cap, eyes,
brows, nose, mouth, optional glasses) with identity-specific geometry
and colors plus per-image jitter. They carry sharp edges and consistent
structure, so an 8x super-resolver has something to learn and a bilinear
baseline visibly smears. Deterministic via counter-based streams.
"""

from pathlib import Path

import numpy as np

from eipnet import imageio
from eipnet.prng import PhiloxStream

CANVAS_H, CANVAS_W = 218, 178


def _ellipse(yy, xx, cy, cx, ry, rx):
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def face_image(seed: int, identity: int, index: int) -> np.ndarray:
    """One (218, 178, 3) uint8 face; identity fixes geometry, index jitters it."""
    ident = PhiloxStream(seed, "identity", identity)
    iu = ident.uniforms(24)
    jit = PhiloxStream(seed, "face", identity, index)
    ju = jit.uniforms(8)

    skin = np.array([0.62 + 0.3 * iu[0], 0.45 + 0.25 * iu[1], 0.32 + 0.2 * iu[2]])
    hair = np.array([0.08 + 0.45 * iu[3], 0.05 + 0.3 * iu[4], 0.03 + 0.25 * iu[5]])
    eye_color = np.array([0.05 + 0.25 * iu[6], 0.1 + 0.3 * iu[7], 0.25 + 0.5 * iu[8]])
    mouth_color = np.array([0.55 + 0.35 * iu[9], 0.1 + 0.15 * iu[10], 0.12 + 0.1 * iu[11]])
    bg = 0.15 + 0.7 * iu[12]

    face_rx = 52 + 18 * iu[13]
    face_ry = 68 + 20 * iu[14]
    eye_dx = 18 + 10 * iu[15]
    eye_ry = 4.5 + 3.5 * iu[16]
    eye_rx = 7 + 4 * iu[17]
    brow_h = 3 + 2.5 * iu[18]
    mouth_rx = 14 + 9 * iu[19]
    mouth_ry = 4 + 3 * iu[20]
    nose_len = 16 + 8 * iu[21]
    glasses = iu[22] > 0.6
    hair_drop = 0.30 + 0.18 * iu[23]

    dx = (ju[0] - 0.5) * 10
    dy = (ju[1] - 0.5) * 10
    brightness = 0.88 + 0.24 * ju[2]
    scale = 0.92 + 0.16 * ju[3]
    bg_jitter = (ju[4] - 0.5) * 0.12

    cy, cx = 112 + dy, 89 + dx
    face_rx *= scale
    face_ry *= scale

    yy, xx = np.mgrid[0:CANVAS_H, 0:CANVAS_W].astype(np.float64)
    img = np.empty((CANVAS_H, CANVAS_W, 3))
    img[:, :] = np.clip(bg + bg_jitter, 0.05, 0.95)
    img[:, :, 2] = np.clip(img[:, :, 2] * (0.8 + 0.4 * iu[12]), 0, 1)  # tinted backdrop

    face = _ellipse(yy, xx, cy, cx, face_ry, face_rx)
    img[face] = skin
    # hair cap: upper slice of a larger ellipse
    hair_mask = _ellipse(yy, xx, cy - 8, cx, face_ry * 1.12, face_rx * 1.12) & \
        (yy < cy - face_ry * hair_drop)
    img[hair_mask] = hair

    ey = cy - 0.18 * face_ry
    for sx in (-1.0, 1.0):
        ex = cx + sx * eye_dx * scale
        white = _ellipse(yy, xx, ey, ex, eye_ry + 2.0, eye_rx + 2.5)
        img[white] = (0.93, 0.93, 0.9)
        iris = _ellipse(yy, xx, ey, ex, eye_ry, eye_rx * 0.55)
        img[iris] = eye_color
        pupil = _ellipse(yy, xx, ey, ex, eye_ry * 0.45, eye_rx * 0.25)
        img[pupil] = (0.02, 0.02, 0.02)
        brow = (np.abs(xx - ex) <= eye_rx + 3) & \
            (np.abs(yy - (ey - eye_ry - 6)) <= brow_h / 2)
        img[brow] = hair * 0.7
        if glasses:
            ring = _ellipse(yy, xx, ey, ex, eye_ry + 5, eye_rx + 5.5) & \
                ~_ellipse(yy, xx, ey, ex, eye_ry + 3, eye_rx + 3.5)
            img[ring] = (0.06, 0.06, 0.06)

    nose = (np.abs(xx - cx) <= 1.6) & (yy >= ey + 6) & (yy <= ey + 6 + nose_len)
    img[nose] = skin * 0.65
    nostrils = (np.abs(yy - (ey + 8 + nose_len)) <= 1.5) & (np.abs(np.abs(xx - cx) - 5) <= 2)
    img[nostrils] = skin * 0.5

    my = cy + 0.42 * face_ry
    mouth = _ellipse(yy, xx, my, cx, mouth_ry, mouth_rx)
    img[mouth] = mouth_color
    lip_line = mouth & (np.abs(yy - my) <= 0.8)
    img[lip_line] = mouth_color * 0.5

    img = np.clip(img * brightness, 0.0, 1.0)
    return np.round(img * 255.0).astype(np.uint8)


def write_face_dataset(directory, n_identities: int, per_identity: int, seed: int = 0):
    """Write PNGs plus a manifest; returns (manifest path, list of names)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    names = []
    for ident in range(n_identities):
        for idx in range(per_identity):
            name = f"id{ident:03d}_{idx:03d}"
            imageio.write_image(directory / f"{name}.png", face_image(seed, ident, idx))
            lines.append(f"{name}.png\tid{ident:03d}\t")
            names.append(name)
    manifest = directory / "manifest.tsv"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest, names
