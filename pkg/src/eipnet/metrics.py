"""Image quality metrics and identity-match evaluation.

PSNR runs jointly over all RGB samples on the 8-bit scale (peak 255);
identical images report the 99.0 dB cap. SSIM follows the canonical
windowed formulation (11x11 Gaussian, sigma 1.5, K1=0.01, K2=0.03,
L=255) on the BT.601 luma channel, averaged over valid windows.

Face-region variants crop both images with a bounding box detected on
the ground-truth image; images without a box are discarded and counted.
The acceptance-rate metric compares embedding pairs under a distance
threshold: plain euclidean distance, or squared L2 after unit
normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

PSNR_CAP = 99.0
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_K1, _K2, _L = 0.01, 0.03, 255.0


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(255^2 / MSE) over all samples of two uint8 images."""
    if a.shape != b.shape:
        raise ValueError(f"psnr dimension mismatch: {a.shape} vs {b.shape}")
    mse = np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)
    if mse == 0.0:
        return PSNR_CAP
    return float(10.0 * math.log10(255.0 * 255.0 / mse))


def _luma(img: np.ndarray) -> np.ndarray:
    f = img.astype(np.float64)
    if f.ndim == 2:
        return f
    return 0.299 * f[:, :, 0] + 0.587 * f[:, :, 1] + 0.114 * f[:, :, 2]


def _gauss_window(size: int, sigma: float) -> np.ndarray:
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


_WIN = _gauss_window(_SSIM_WINDOW, _SSIM_SIGMA)


def _filter_valid(img: np.ndarray) -> np.ndarray:
    """Separable Gaussian filter, valid windows only."""
    k = _WIN.size
    h, w = img.shape
    rows = np.zeros((h - k + 1, w))
    for i in range(k):
        rows += _WIN[i] * img[i:i + h - k + 1, :]
    out = np.zeros((h - k + 1, w - k + 1))
    for i in range(k):
        out += _WIN[i] * rows[:, i:i + w - k + 1]
    return out


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError(f"ssim dimension mismatch: {a.shape} vs {b.shape}")
    if a.shape[0] < _SSIM_WINDOW or a.shape[1] < _SSIM_WINDOW:
        raise ValueError(f"image {a.shape[:2]} smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} window")
    x, y = _luma(a), _luma(b)
    mu_x = _filter_valid(x)
    mu_y = _filter_valid(y)
    sxx = _filter_valid(x * x) - mu_x * mu_x
    syy = _filter_valid(y * y) - mu_y * mu_y
    sxy = _filter_valid(x * y) - mu_x * mu_y
    c1 = (_K1 * _L) ** 2
    c2 = (_K2 * _L) ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * sxy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def fr_metrics(sr: np.ndarray, hr: np.ndarray,
               bbox: Optional[tuple[int, int, int, int]]):
    """(fr_psnr, fr_ssim) over the face crop, or None when no box exists.

    `bbox` is (top, right, bottom, left) in ground-truth coordinates and
    is applied identically to both images.
    """
    if bbox is None:
        return None
    top, right, bottom, left = bbox
    h, w = hr.shape[:2]
    if not (0 <= top < bottom <= h and 0 <= left < right <= w):
        raise ValueError(f"bbox {bbox} out of bounds for {h}x{w} image")
    crop_sr = sr[top:bottom, left:right]
    crop_hr = hr[top:bottom, left:right]
    return psnr(crop_sr, crop_hr), ssim(crop_sr, crop_hr)


def tar(emb_a: dict[str, np.ndarray], emb_b: dict[str, np.ndarray], d: float,
        mode: str = "euclidean") -> float:
    """Percentage of pairs whose embedding distance is strictly below d."""
    if set(emb_a) != set(emb_b):
        missing = set(emb_a) ^ set(emb_b)
        raise ValueError(f"embedding sets disagree on names: {sorted(missing)[:8]}")
    if not emb_a:
        raise ValueError("empty embedding sets")
    accepted = 0
    for name in emb_a:
        va = np.asarray(emb_a[name], dtype=np.float64)
        vb = np.asarray(emb_b[name], dtype=np.float64)
        if mode == "euclidean":
            dist = float(np.linalg.norm(va - vb))
        elif mode == "squared":
            ua = va / max(np.linalg.norm(va), 1e-12)
            ub = vb / max(np.linalg.norm(vb), 1e-12)
            dist = float(np.sum((ua - ub) ** 2))
        else:
            raise ValueError(f"unknown tar mode {mode!r}")
        if dist < d:
            accepted += 1
    return 100.0 * accepted / len(emb_a)


@dataclass
class MetricsRow:
    name: str
    psnr: float
    ssim: float
    fr_psnr: Optional[float] = None
    fr_ssim: Optional[float] = None


@dataclass
class MetricsReport:
    rows: list[MetricsRow] = field(default_factory=list)
    discarded: int = 0

    @property
    def evaluated_fr(self) -> int:
        return sum(1 for r in self.rows if r.fr_psnr is not None)

    def aggregate(self) -> dict[str, float]:
        out = {
            "psnr": float(np.mean([r.psnr for r in self.rows])),
            "ssim": float(np.mean([r.ssim for r in self.rows])),
        }
        fr = [(r.fr_psnr, r.fr_ssim) for r in self.rows if r.fr_psnr is not None]
        if fr:
            out["fr_psnr"] = float(np.mean([v[0] for v in fr]))
            out["fr_ssim"] = float(np.mean([v[1] for v in fr]))
        return out

    def to_csv(self) -> str:
        lines = ["name,psnr,ssim,fr_psnr,fr_ssim"]
        for r in self.rows:
            fp = "" if r.fr_psnr is None else repr(r.fr_psnr)
            fs = "" if r.fr_ssim is None else repr(r.fr_ssim)
            lines.append(f"{r.name},{r.psnr!r},{r.ssim!r},{fp},{fs}")
        return "\n".join(lines) + "\n"

    def summary_line(self) -> str:
        agg = self.aggregate()
        parts = [f"images={len(self.rows)}",
                 f"psnr={agg['psnr']:.4f}", f"ssim={agg['ssim']:.6f}"]
        if "fr_psnr" in agg:
            parts += [f"fr_psnr={agg['fr_psnr']:.4f}", f"fr_ssim={agg['fr_ssim']:.6f}"]
        parts += [f"fr_evaluated={self.evaluated_fr}", f"discarded={self.discarded}"]
        return "summary " + " ".join(parts)


def evaluate_pairs(pairs: list[tuple[str, np.ndarray, np.ndarray]],
                   bboxes: Optional[dict[str, tuple[int, int, int, int]]] = None) -> MetricsReport:
    """Per-image metrics for (name, sr_u8, hr_u8) pairs; missing boxes count as discarded."""
    report = MetricsReport()
    for name, sr, hr in pairs:
        row = MetricsRow(name, psnr(sr, hr), ssim(sr, hr))
        if bboxes is not None:
            fr = fr_metrics(sr, hr, bboxes.get(name))
            if fr is None:
                report.discarded += 1
            else:
                row.fr_psnr, row.fr_ssim = fr
        report.rows.append(row)
    return report


def parse_bbox_sidecar(path) -> dict[str, tuple[int, int, int, int]]:
    """Parse `name<TAB>top,right,bottom,left` lines."""
    out: dict[str, tuple[int, int, int, int]] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        try:
            name, coords = line.split("\t")
            t, r, b, l = (int(v) for v in coords.split(","))
        except ValueError as exc:
            raise ValueError(f"bbox sidecar line {lineno}: {line!r} ({exc})") from exc
        out[name] = (t, r, b, l)
    return out
