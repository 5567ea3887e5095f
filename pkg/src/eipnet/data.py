"""Dataset manifests, augmentation, LR synthesis, and edge targets.

Manifest files are UTF-8 text, one record per line:
``path<TAB>identity<TAB>bbox_t,bbox_r,bbox_b,bbox_l`` with empty fields
allowed and ``#`` comments.

Training examples run: crop per policy -> resize to 128 (bilinear) ->
horizontal flip with p=0.5 -> rotation from {0, 90, 270} with
p=(0.5, 0.25, 0.25) -> LR by three exact 2x downscales. Test examples
crop+resize only and take the LR with a single direct 8x bilinear
resize. Edge targets apply the edge detector to the bilinearly resized
HR image at 32/64/128 (resizing a binary map would produce gray
values), cached under a hash of the HR pixels so they can never go
stale.

All randomness derives from counter streams keyed on
(seed, purpose, epoch, record index), so examples are bit-reproducible
and order-independent.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import image as im
from . import imageio
from .canny import ThresholdPolicy, canny
from .prng import PhiloxStream

HR_SIZE = 128
LR_SIZE = 16
CROP_POLICIES = ("celeba_178", "fraction_0.7_min_side")
ROTATIONS = (0, 90, 270)
ROTATION_PROBS = (0.5, 0.25, 0.25)


class UndersizedImageError(ValueError):
    pass


@dataclass(frozen=True)
class Record:
    path: Path
    identity: Optional[str] = None
    bbox: Optional[tuple[int, int, int, int]] = None  # top, right, bottom, left


@dataclass
class TrainExample:
    lr: np.ndarray                      # (3, 16, 16) float32
    hr: np.ndarray                      # (3, 128, 128) float32
    edge_targets: dict[int, np.ndarray]  # scale -> (1, 16*scale, 16*scale) float32
    identity: Optional[str] = None


def parse_manifest(path) -> list[Record]:
    path = Path(path)
    records: list[Record] = []
    missing: list[str] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        fields = line.split("\t")
        img_path = Path(fields[0])
        if not img_path.is_absolute():
            img_path = path.parent / img_path
        identity = fields[1] if len(fields) > 1 and fields[1] else None
        bbox = None
        if len(fields) > 2 and fields[2]:
            try:
                t, r, b, l = (int(v) for v in fields[2].split(","))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad bbox field {fields[2]!r}") from exc
            bbox = (t, r, b, l)
        if not img_path.exists():
            missing.append(str(img_path))
        records.append(Record(img_path, identity, bbox))
    if missing:
        raise FileNotFoundError(f"manifest {path} references missing files: {missing}")
    if not records:
        raise ValueError(f"manifest {path} is empty")
    return records


def crop_for_policy(img: np.ndarray, policy: str) -> np.ndarray:
    h, w = img.shape[0], img.shape[1]
    if policy == "celeba_178":
        size = 178
    elif policy == "fraction_0.7_min_side":
        size = int(round(0.7 * min(h, w)))
    else:
        raise ValueError(f"unknown crop policy {policy!r}")
    if size > min(h, w) or size < 1:
        raise UndersizedImageError(f"image {h}x{w} too small for crop policy {policy}")
    return im.center_crop(img, size)


def base_hr(img_u8: np.ndarray, policy: str) -> np.ndarray:
    """Crop + resize to the HR working resolution; float32 (h, w, 3) in [0, 1]."""
    cropped = im.to_float(crop_for_policy(img_u8, policy))
    return im.resize(cropped, HR_SIZE, HR_SIZE, "bilinear")


def progressive_lr(hr_hwc: np.ndarray) -> np.ndarray:
    """Three exact 2x downscales: 128 -> 64 -> 32 -> 16."""
    out = hr_hwc
    for _ in range(3):
        out = im.halve(out)
    return out


def _chw(img_hwc: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(img_hwc.transpose(2, 0, 1))


class EdgeTargetCache:
    """Edge maps keyed by (hash of HR pixels, scale); capped FIFO."""

    def __init__(self, policy: ThresholdPolicy, limit: int = 8192):
        self.policy = policy
        self.limit = limit
        self._store: dict[tuple[bytes, int], np.ndarray] = {}

    def get(self, hr_hwc: np.ndarray, scale: int) -> np.ndarray:
        key = (hashlib.blake2b(hr_hwc.tobytes(), digest_size=16).digest(), scale)
        hit = self._store.get(key)
        if hit is None:
            size = LR_SIZE * scale
            scaled = im.resize(hr_hwc, size, size, "bilinear") * 255.0
            hit = canny(scaled, self.policy).astype(np.float32)[None]
            if len(self._store) >= self.limit:
                self._store.pop(next(iter(self._store)))
            self._store[key] = hit
        return hit


def edge_targets_for(hr_hwc: np.ndarray, scales, policy: ThresholdPolicy) -> dict[int, np.ndarray]:
    cache = EdgeTargetCache(policy)
    return {s: cache.get(hr_hwc, s) for s in scales}


def make_example(hr_raw: np.ndarray, rng: PhiloxStream, policy: str = "celeba_178",
                 edge_scales=(2, 4, 8), canny_policy: ThresholdPolicy | None = None,
                 cache: EdgeTargetCache | None = None, identity=None) -> TrainExample:
    """Augmented training example from a raw uint8 image."""
    hr = base_hr(hr_raw, policy)
    draws = rng.uniforms(2)
    flip = bool(draws[0] < 0.5)
    rotation = ROTATIONS[int(np.searchsorted(np.cumsum(ROTATION_PROBS), draws[1], side="right"))]
    if flip:
        hr = im.flip_h(hr)
    hr = im.rotate(hr, rotation)
    lr = progressive_lr(hr)
    canny_policy = canny_policy or ThresholdPolicy()
    if cache is None:
        targets = edge_targets_for(hr, edge_scales, canny_policy)
    else:
        targets = {s: cache.get(hr, s) for s in edge_scales}
    return TrainExample(_chw(lr), _chw(hr), targets, identity)


def test_example(hr_raw: np.ndarray, policy: str = "celeba_178"):
    """(lr, hr) pair without augmentation; LR is one direct 8x bilinear resize."""
    hr = base_hr(hr_raw, policy)
    lr = im.resize(hr, LR_SIZE, LR_SIZE, "bilinear")
    return _chw(lr), _chw(hr)


def batches(num_items: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Per-epoch shuffled index batches; the last partial batch is kept."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if num_items < 1:
        raise ValueError("empty dataset")
    order = PhiloxStream(seed, "shuffle", epoch).permutation(num_items)
    return [order[i:i + batch_size] for i in range(0, num_items, batch_size)]


class Dataset:
    """Manifest-backed training set with decoded-image and edge-target caches."""

    def __init__(self, records: list[Record], policy: str = "celeba_178",
                 canny_policy: ThresholdPolicy | None = None):
        self.policy = policy
        self.canny_policy = canny_policy or ThresholdPolicy()
        self.records: list[Record] = []
        self._raw: list[np.ndarray] = []
        skipped = []
        for rec in records:
            img = imageio.decode(rec.path)
            try:
                crop_for_policy(img, policy)
            except UndersizedImageError:
                skipped.append(str(rec.path))
                continue
            self.records.append(rec)
            self._raw.append(img)
        if skipped:
            warnings.warn(f"skipped undersized images: {skipped}")
        if not self.records:
            raise ValueError("no usable records in dataset")
        self._edge_cache = EdgeTargetCache(self.canny_policy)

    @classmethod
    def from_manifest(cls, manifest_path, policy: str = "celeba_178",
                      canny_policy: ThresholdPolicy | None = None) -> "Dataset":
        return cls(parse_manifest(manifest_path), policy, canny_policy)

    def __len__(self) -> int:
        return len(self.records)

    def example(self, index: int, seed: int, epoch: int, edge_scales=(2, 4, 8)) -> TrainExample:
        rng = PhiloxStream(seed, "augment", epoch, index)
        return make_example(self._raw[index], rng, self.policy, edge_scales,
                            self.canny_policy, self._edge_cache,
                            identity=self.records[index].identity)

    def train_batch(self, indices, seed: int, epoch: int, edge_scales=(2, 4, 8)):
        """Stacked (lr, hr, edge target dict, identities) arrays for a batch."""
        examples = [self.example(int(i), seed, epoch, edge_scales) for i in indices]
        lr = np.stack([e.lr for e in examples])
        hr = np.stack([e.hr for e in examples])
        targets = {s: np.stack([e.edge_targets[s] for e in examples]) for s in edge_scales}
        return lr, hr, targets, [e.identity for e in examples]

    def test_pairs(self) -> list[tuple[str, np.ndarray, np.ndarray]]:
        """(name, lr, hr) for every record, deterministic order, no augmentation."""
        out = []
        for rec, raw in zip(self.records, self._raw):
            lr, hr = test_example(raw, self.policy)
            out.append((rec.path.stem, lr, hr))
        return out
