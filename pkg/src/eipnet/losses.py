"""Training losses: pixel, edge, luminance-chrominance, identity, GAN.

Per-image losses follow the channel-sum-of-per-channel-MSE convention
(divide the squared-error sum by w*h only), then average over the
batch. Probabilities entering logarithms are floored at 1e-7.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .image import YUV_FROM_RGB

_LOG_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    gamma: float = 1.0   # edge
    alpha: float = 0.1   # identity
    beta: float = 1e-3   # adversarial

    def __post_init__(self):
        for name in ("gamma", "alpha", "beta"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"loss weight {name} must be finite and >= 0, got {v}")


@dataclass
class LossReport:
    l_rgb: float = 0.0
    l_e: float = 0.0
    l_lc: float = 0.0
    l_id: float = 0.0
    l_ad_g: float = 0.0
    l_ad_d: float = 0.0
    total: float = 0.0

    FIELDS = ("l_rgb", "l_e", "l_lc", "l_id", "l_ad_g", "l_ad_d", "total")

    def csv_row(self) -> str:
        return ",".join(repr(getattr(self, f)) for f in self.FIELDS)


def _channel_sum_mse(a: ad.Tensor, b: ad.Tensor) -> ad.Tensor:
    """sum_c MSE_c per image, averaged over the batch: sum(d^2) / (n*h*w)."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"loss shape mismatch: {a.data.shape} vs {b.data.shape}")
    n, _, h, w = a.data.shape
    d = ad.sub(a, b)
    return ad.scale(ad.tsum(ad.mul(d, d)), 1.0 / (n * h * w))


def pixel_loss(sr: ad.Tensor, hr: ad.Tensor) -> ad.Tensor:
    """RGB-space reconstruction error."""
    return _channel_sum_mse(sr, hr)


def luminance_chrominance_loss(sr: ad.Tensor, hr: ad.Tensor) -> ad.Tensor:
    """Same error computed after converting both images to YUV."""
    return _channel_sum_mse(ad.color_transform(sr, YUV_FROM_RGB),
                            ad.color_transform(hr, YUV_FROM_RGB))


def edge_loss(edge_logits: dict[int, ad.Tensor], edge_targets: dict[int, np.ndarray]) -> ad.Tensor | None:
    """Sum over scales of the mean squared error against binary edge maps.

    The per-scale mean over all (r*w0) x (r*h0) pixels equals the
    1/(r^2 * w0 * h0) normalization of the multi-scale edge objective.
    Returns None when no scale is supervised.
    """
    total = None
    for scale in sorted(edge_logits):
        logits = edge_logits[scale]
        target = edge_targets[scale]
        if logits.data.shape != target.shape:
            raise ValueError(
                f"edge scale {scale}: logits {logits.data.shape} vs target {target.shape}"
            )
        d = ad.sub(logits, ad.tensor(target, dtype=logits.data.dtype))
        term = ad.tmean(ad.mul(d, d))
        total = term if total is None else ad.add(total, term)
    return total


def identity_loss(sr_logits: ad.Tensor, hr_logits: ad.Tensor) -> ad.Tensor:
    """Jensen-Shannon divergence between softmax-encoded identity vectors.

    Both (n, 512) logit batches are softmax-normalized; the divergence
    uses natural logs and is averaged over the batch.
    """
    if sr_logits.data.shape != hr_logits.data.shape:
        raise ValueError(f"identity logits mismatch: {sr_logits.data.shape} vs {hr_logits.data.shape}")
    n = sr_logits.data.shape[0]
    p = ad.softmax(hr_logits)
    q = ad.softmax(sr_logits)
    m = ad.scale(ad.add(p, q), 0.5)
    log_m = ad.log(m, _LOG_EPS)
    kl_pm = ad.tsum(ad.mul(p, ad.sub(ad.log(p, _LOG_EPS), log_m)))
    kl_qm = ad.tsum(ad.mul(q, ad.sub(ad.log(q, _LOG_EPS), log_m)))
    return ad.scale(ad.add(kl_pm, kl_qm), 0.5 / n)


def js_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """JS divergence of two normalized distributions (numpy, not differentiable)."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    for name, v in (("p", p), ("q", q)):
        if (v < 0).any():
            raise ValueError(f"{name} has negative entries")
        if abs(v.sum() - 1.0) > 1e-6:
            raise ValueError(f"{name} is not normalized (sum {v.sum()!r})")
    m = 0.5 * (p + q)

    def kl(a, b):
        mask = a > 0
        return float(np.sum(a[mask] * (np.log(a[mask]) - np.log(b[mask]))))

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def adversarial_d_loss(d_real: ad.Tensor, d_fake: ad.Tensor) -> ad.Tensor:
    """-[log D(real) + log(1 - D(fake))], batch means."""
    one = ad.tensor(np.ones_like(d_fake.data))
    term_real = ad.tmean(ad.log(d_real, _LOG_EPS))
    term_fake = ad.tmean(ad.log(ad.sub(one, d_fake), _LOG_EPS))
    return ad.scale(ad.add(term_real, term_fake), -1.0)


def adversarial_g_loss(d_fake: ad.Tensor) -> ad.Tensor:
    """Non-saturating generator objective: -log D(fake)."""
    return ad.scale(ad.tmean(ad.log(d_fake, _LOG_EPS)), -1.0)


def total_loss(l_rgb: ad.Tensor, weights: LossWeights, l_e=None, l_lc=None, l_id=None,
               l_ad_g=None, gan_active: bool = False) -> ad.Tensor:
    """l_rgb + gamma*l_e + l_lc + alpha*l_id + beta*l_ad_g.

    Absent terms contribute nothing; beta is forced to zero while the
    adversarial phase is inactive.
    """
    total = l_rgb
    if l_e is not None and weights.gamma:
        total = ad.add(total, ad.scale(l_e, weights.gamma))
    if l_lc is not None:
        total = ad.add(total, l_lc)
    if l_id is not None and weights.alpha:
        total = ad.add(total, ad.scale(l_id, weights.alpha))
    if l_ad_g is not None and gan_active and weights.beta:
        total = ad.add(total, ad.scale(l_ad_g, weights.beta))
    return total
