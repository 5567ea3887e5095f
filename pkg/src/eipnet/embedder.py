"""Toy identity embedder producing 512-dim class-encoded vectors.

Stands in for a large pretrained face recognizer: four conv+pool stages
and a fully-connected head emit 512 logits per 128x128 RGB image. It is
trained with softmax cross-entropy over identity labels, where class
scores are the first N of the 512 logits ("class-encoded" by
construction, N = number of identities), then frozen. The identity loss
differentiates through `embed` into the image while the embedder
parameters stay fixed.

Embedding files are CSV text: ``name,v1,...,v512`` with full-precision
floats (repr round-trip).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .prng import PhiloxStream

EMBEDDING_DIM = 512


@dataclass(frozen=True)
class EmbedderSpec:
    conv_channels: tuple[int, ...] = (16, 32, 64, 128)
    input_size: int = 128
    embedding_dim: int = EMBEDDING_DIM

    @property
    def flat_features(self) -> int:
        s = self.input_size // (2 ** len(self.conv_channels))
        return self.conv_channels[-1] * s * s


def embedder_param_specs(spec: EmbedderSpec | None = None):
    spec = spec or EmbedderSpec()
    out = []
    ci = 3
    for i, co in enumerate(spec.conv_channels):
        out.append((f"e_conv{i}.w", (co, ci, 3, 3), ci * 9))
        out.append((f"e_conv{i}.b", (co,), ci * 9))
        ci = co
    out.append(("e_fc.w", (spec.embedding_dim, spec.flat_features), spec.flat_features))
    out.append(("e_fc.b", (spec.embedding_dim,), spec.flat_features))
    return out


def embed(params: dict, img: ad.Tensor, spec: EmbedderSpec | None = None) -> ad.Tensor:
    """(n, 3, 128, 128) image batch -> (n, 512) identity logits."""
    spec = spec or EmbedderSpec()
    if img.data.ndim != 4 or img.data.shape[1] != 3 or \
            img.data.shape[2] != spec.input_size or img.data.shape[3] != spec.input_size:
        raise ValueError(
            f"embedder expects (n, 3, {spec.input_size}, {spec.input_size}), got {img.data.shape}"
        )
    h = img
    for i in range(len(spec.conv_channels)):
        h = ad.relu(ad.conv2d(h, params[f"e_conv{i}.w"], params[f"e_conv{i}.b"], stride=1, pad=1))
        h = ad.avg_pool_2x2(h)
    return ad.fully_connected(ad.flatten(h), params["e_fc.w"], params["e_fc.b"])


def train_embedder(examples: Sequence[tuple[np.ndarray, str]], epochs: int = 8,
                   seed: int = 0, lr: float = 1e-3, batch_size: int = 16,
                   spec: EmbedderSpec | None = None):
    """Train on (chw float image, identity label) pairs; returns (params, classes, accuracy).

    Parameters come back frozen (requires_grad False). Runs are
    bit-reproducible for a fixed seed.
    """
    from .train import Adam, init_params  # deferred: trainer builds on this module

    spec = spec or EmbedderSpec()
    labels = [label for _, label in examples]
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ValueError(f"need at least 2 identities, got {len(classes)}")
    counts = {c: labels.count(c) for c in classes}
    thin = [c for c, n in counts.items() if n < 2]
    if thin:
        raise ValueError(f"identities with fewer than 2 images: {thin}")
    if len(classes) > spec.embedding_dim:
        raise ValueError(f"at most {spec.embedding_dim} identities supported, got {len(classes)}")

    n_classes = len(classes)
    class_index = {c: i for i, c in enumerate(classes)}
    y = np.array([class_index[label] for label in labels], dtype=np.int64)
    images = np.stack([img for img, _ in examples]).astype(np.float32)

    params = init_params(embedder_param_specs(spec), seed, np.float32)
    opt = Adam(params, lr=lr, beta1=0.9, beta2=0.999, eps=1e-8)
    selector = np.zeros((n_classes, spec.embedding_dim), dtype=np.float32)
    selector[np.arange(n_classes), np.arange(n_classes)] = 1.0
    sel_t = ad.tensor(selector)

    accuracy = 0.0
    for epoch in range(epochs):
        order = PhiloxStream(seed, "embedder-shuffle", epoch).permutation(len(examples))
        correct = 0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            xb = ad.tensor(images[idx])
            onehot = np.zeros((len(idx), n_classes), dtype=np.float32)
            onehot[np.arange(len(idx)), y[idx]] = 1.0
            for p in params.values():
                p.grad = None
            with ad.Tape() as tape:
                logits = embed(params, xb, spec)
                scores = ad.fully_connected(logits, sel_t, None)
                probs = ad.softmax(scores)
                ce = ad.scale(ad.tsum(ad.mul(ad.tensor(onehot), ad.log(probs))), -1.0 / len(idx))
            tape.backward(ce)
            opt.step()
            correct += int((scores.data.argmax(axis=1) == y[idx]).sum())
        accuracy = correct / len(examples)
    for p in params.values():
        p.requires_grad = False
        p.grad = None
    return params, classes, accuracy


def export_embeddings(params: dict, named_images: dict[str, np.ndarray], path,
                      spec: EmbedderSpec | None = None) -> None:
    """Write `name,v1,...,v512` lines for each (name -> chw float image)."""
    spec = spec or EmbedderSpec()
    lines = []
    for name in named_images:
        if "," in name or "\n" in name:
            raise ValueError(f"embedding name may not contain commas or newlines: {name!r}")
        img = ad.tensor(named_images[name][None].astype(np.float32))
        vec = embed(params, img, spec).data[0].astype(np.float64)
        lines.append(name + "," + ",".join(repr(float(v)) for v in vec))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def import_embeddings(path) -> dict[str, np.ndarray]:
    """Parse an embedding file; malformed lines raise with their line number."""
    out: dict[str, np.ndarray] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != EMBEDDING_DIM + 1:
            raise ValueError(
                f"line {lineno}: expected name + {EMBEDDING_DIM} values, got {len(parts) - 1}"
            )
        name = parts[0]
        if name in out:
            raise ValueError(f"line {lineno}: duplicate name {name!r}")
        try:
            vec = np.array([float(v) for v in parts[1:]], dtype=np.float64)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad float ({exc})") from exc
        out[name] = vec
    return out
