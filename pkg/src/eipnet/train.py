"""Adam optimization and the two-phase training loop.

Phase 1 trains the generator alone (adversarial weight forced to zero;
the discriminator is never touched). From `phase1_iters` on, each batch
runs one discriminator step followed by one generator step. Runs with
the same config and seed are bit-reproducible: the training log and
checkpoints are byte-identical (wall-clock timing goes to the console,
never into artifacts).

A non-finite total loss aborts the run, preserving the last checkpoint
and reporting the iteration.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import checkpoint as ckpt
from . import losses as L
from .data import Dataset, batches
from .embedder import EmbedderSpec, embed
from .model import (DiscriminatorSpec, GeneratorSpec, discriminator_forward,
                    discriminator_param_specs, generator_forward, generator_param_specs)
from .prng import PhiloxStream


class NumericalAbortError(RuntimeError):
    def __init__(self, iteration: int, value: float):
        super().__init__(f"non-finite loss ({value!r}) at iteration {iteration}; "
                         f"last checkpoint preserved")
        self.iteration = iteration


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    batch_size: int = 16
    lr: float = 1e-4
    g_betas: tuple[float, float] = (0.9, 0.999)
    d_betas: tuple[float, float] = (0.5, 0.9)
    adam_eps: float = 1e-8
    phase1_iters: int = 20000
    phase2_iters: int = 22000
    gamma: float = 1.0
    alpha: float = 0.1
    beta: float = 1e-3
    use_lc: bool = True
    crop_policy: str = "celeba_178"
    canny_mode: str = "adaptive"
    canny_kh: float = 1.6
    checkpoint_interval: int = 1000
    base_channels: int = 512
    edge_scales: tuple[int, ...] = (2, 4, 8)
    element_type: str = "float32"

    def __post_init__(self):
        if self.phase2_iters < self.phase1_iters:
            raise ValueError("phase2_iters must be >= phase1_iters")
        if self.lr <= 0 or self.batch_size < 1 or self.checkpoint_interval < 1:
            raise ValueError("lr, batch_size and checkpoint_interval must be positive")
        if self.element_type not in ("float32", "float64"):
            raise ValueError(f"element_type must be float32|float64, got {self.element_type}")

    @property
    def dtype(self):
        return np.float32 if self.element_type == "float32" else np.float64

    @property
    def weights(self) -> L.LossWeights:
        return L.LossWeights(gamma=self.gamma, alpha=self.alpha, beta=self.beta)

    def generator_spec(self) -> GeneratorSpec:
        return GeneratorSpec(base_channels=self.base_channels,
                             edge_scales=tuple(self.edge_scales))

    def discriminator_spec(self) -> DiscriminatorSpec:
        return DiscriminatorSpec(base_channels=max(8, self.base_channels // 4))

    def canonical_text(self) -> str:
        pairs = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            pairs.append(f"{f.name} = {v}")
        return "\n".join(pairs) + "\n"


def init_params(param_specs, seed: int, dtype=np.float32) -> dict[str, ad.Tensor]:
    """He-normal weights (std sqrt(2/fan_in)), zero biases, per-name streams."""
    params: dict[str, ad.Tensor] = {}
    for name, shape, fan_in in param_specs:
        if name.endswith(".b"):
            data = np.zeros(shape, dtype=dtype)
        else:
            stream = PhiloxStream(seed, "init", name)
            std = np.sqrt(2.0 / fan_in)
            data = (stream.normals(int(np.prod(shape))) * std).reshape(shape).astype(dtype)
        params[name] = ad.Tensor(data, requires_grad=True)
    return params


def adam_step(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
              t: int, lr: float, beta1: float, beta2: float, eps: float):
    """One bias-corrected Adam update; returns (new_param, m, v, delta)."""
    if grad.shape != param.shape:
        raise ValueError(f"grad shape {grad.shape} != param shape {param.shape}")
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    delta = -lr * m_hat / (np.sqrt(v_hat) + eps)
    return param + delta, m, v, delta


class Adam:
    """Adam over a dict of parameter tensors; missing grads count as zero."""

    def __init__(self, params: dict[str, ad.Tensor], lr: float,
                 beta1: float, beta2: float, eps: float):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> float:
        """Apply one update; returns the max |delta| over all elements."""
        self.t += 1
        bound = self.lr / (1.0 - self.beta1)
        max_delta = 0.0
        for name, p in self.params.items():
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            new, self.m[name], self.v[name], delta = adam_step(
                p.data, grad.astype(p.data.dtype, copy=False), self.m[name], self.v[name],
                self.t, self.lr, self.beta1, self.beta2, self.eps)
            p.data = new
            if delta.size:
                max_delta = max(max_delta, float(np.abs(delta).max()))
        if max_delta > bound * (1.0 + 1e-6):
            raise FloatingPointError(
                f"Adam update {max_delta:.3e} exceeded bound lr/(1-beta1)={bound:.3e}")
        return max_delta


@dataclass
class TrainResult:
    g_params: dict
    d_params: dict
    iterations: int
    log_path: Path
    final_checkpoint: Path
    checkpoints: list[Path] = field(default_factory=list)


def _zero_grads(params: dict[str, ad.Tensor]) -> None:
    for p in params.values():
        p.grad = None


def _set_requires_grad(params: dict[str, ad.Tensor], flag: bool) -> None:
    for p in params.values():
        p.requires_grad = flag


def train(config: TrainConfig, dataset: Dataset, out_dir,
          embedder_params: dict | None = None, quiet: bool = False) -> TrainResult:
    """Run the full two-phase schedule over `dataset`, writing artifacts to `out_dir`."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if config.alpha > 0 and embedder_params is None:
        raise ValueError("identity loss weight alpha > 0 requires embedder parameters")

    gspec = config.generator_spec()
    dspec = config.discriminator_spec()
    dtype = config.dtype
    g_params = init_params(generator_param_specs(gspec), config.seed, dtype)
    d_params = init_params(discriminator_param_specs(dspec), config.seed, dtype)
    g_opt = Adam(g_params, config.lr, *config.g_betas, config.adam_eps)
    d_opt = Adam(d_params, config.lr, *config.d_betas, config.adam_eps)
    weights = config.weights
    edge_scales = tuple(gspec.edge_scales) if weights.gamma > 0 else ()
    espec = EmbedderSpec()
    if embedder_params is not None:
        _set_requires_grad(embedder_params, False)

    log_path = out_dir / "train_log.csv"
    checkpoints: list[Path] = []
    cfg_text = config.canonical_text()

    def save_checkpoint(iteration: int, name: str | None = None) -> Path:
        payload = {k: p.data for k, p in g_params.items()}
        payload.update({k: p.data for k, p in d_params.items()})
        path = out_dir / (name or f"checkpoint_{iteration:07d}.eipn")
        ckpt.save(path, payload, iteration=iteration, config_text=cfg_text)
        checkpoints.append(path)
        return path

    iteration = 0
    epoch = 0
    t_start = time.perf_counter()
    with open(log_path, "w", encoding="utf-8", newline="\n") as log:
        log.write("iteration," + ",".join(L.LossReport.FIELDS) + "\n")
        while iteration < config.phase2_iters:
            for batch_idx in batches(len(dataset), config.batch_size, config.seed, epoch):
                if iteration >= config.phase2_iters:
                    break
                lr_arr, hr_arr, targets, _ = dataset.train_batch(
                    batch_idx, config.seed, epoch, edge_scales)
                lr_t = ad.tensor(lr_arr, dtype=dtype)
                hr_t = ad.tensor(hr_arr, dtype=dtype)
                gan_active = iteration >= config.phase1_iters
                report = L.LossReport()

                if gan_active:
                    sr_raw, _ = generator_forward(g_params, lr_t, gspec)  # no tape: detached
                    _zero_grads(d_params)
                    with ad.Tape() as dtape:
                        d_real = discriminator_forward(d_params, hr_t, dspec)
                        d_fake = discriminator_forward(d_params, ad.tensor(sr_raw.data), dspec)
                        l_ad_d = L.adversarial_d_loss(d_real, d_fake)
                    dtape.backward(l_ad_d)
                    d_opt.step()
                    report.l_ad_d = l_ad_d.item()

                _zero_grads(g_params)
                _set_requires_grad(d_params, False)
                try:
                    with ad.Tape() as gtape:
                        sr, edge_logits = generator_forward(g_params, lr_t, gspec)
                        l_rgb = L.pixel_loss(sr, hr_t)
                        l_lc = L.luminance_chrominance_loss(sr, hr_t) if config.use_lc else None
                        l_e = L.edge_loss(edge_logits, targets) if edge_scales else None
                        l_id = None
                        if weights.alpha > 0:
                            hr_emb = embed(embedder_params, hr_t, espec)
                            l_id = L.identity_loss(embed(embedder_params, sr, espec),
                                                   ad.tensor(hr_emb.data))
                        l_ad_g = None
                        if gan_active:
                            l_ad_g = L.adversarial_g_loss(
                                discriminator_forward(d_params, sr, dspec))
                        total = L.total_loss(l_rgb, weights, l_e=l_e, l_lc=l_lc, l_id=l_id,
                                             l_ad_g=l_ad_g, gan_active=gan_active)
                    gtape.backward(total, leaves=list(g_params.values()))
                finally:
                    _set_requires_grad(d_params, True)
                g_opt.step()

                report.l_rgb = l_rgb.item()
                report.l_e = l_e.item() if l_e is not None else 0.0
                report.l_lc = l_lc.item() if l_lc is not None else 0.0
                report.l_id = l_id.item() if l_id is not None else 0.0
                report.l_ad_g = l_ad_g.item() if l_ad_g is not None else 0.0
                report.total = total.item()
                iteration += 1
                log.write(f"{iteration},{report.csv_row()}\n")

                if not np.isfinite(report.total):
                    log.flush()
                    raise NumericalAbortError(iteration, report.total)
                if (iteration % config.checkpoint_interval == 0
                        or iteration == config.phase1_iters
                        or iteration == config.phase2_iters):
                    save_checkpoint(iteration)
                if not quiet and iteration % max(1, config.checkpoint_interval) == 0:
                    rate = iteration / (time.perf_counter() - t_start)
                    print(f"iter {iteration}/{config.phase2_iters} "
                          f"total={report.total:.5f} ({rate:.1f} it/s)", file=sys.stderr)
            epoch += 1

    final = save_checkpoint(iteration, "checkpoint_final.eipn")
    return TrainResult(g_params, d_params, iteration, log_path, final, checkpoints)
