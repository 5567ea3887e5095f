"""Generator and discriminator topologies.

The generator upscales 8x through three transposed-conv stages. After
each upsampling, an edge block isolates high-frequency content by
subtracting an average-pooled (low-pass) copy of the feature maps,
concatenates it back (doubling channels), and projects it with a 1x1
conv to a single supervised edge map. Residual additions pair conv0
with conv1_2 and each transposed conv with the second conv that
follows it.

`base_channels` scales every width proportionally; 512 reproduces the
reference configuration (11.9M parameters, ~10.1 GMACs at 16x16 input).
When a stage's edge block is disabled the features are concatenated
with themselves instead, preserving widths so ablations compare models
of near-identical capacity (only the 1x1 projections are removed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

EDGE_SCALES = (2, 4, 8)


@dataclass(frozen=True)
class GeneratorSpec:
    base_channels: int = 512
    edge_scales: tuple[int, ...] = EDGE_SCALES
    pool_kernels: tuple[int, int, int] = (5, 7, 10)

    def __post_init__(self):
        if self.base_channels < 8 or self.base_channels % 8:
            raise ValueError(f"base_channels must be a positive multiple of 8, got {self.base_channels}")
        if not set(self.edge_scales) <= set(EDGE_SCALES):
            raise ValueError(f"edge_scales must be a subset of {EDGE_SCALES}")

    @property
    def widths(self) -> tuple[int, int, int, int]:
        b = self.base_channels
        return b, b // 2, b // 4, b // 8


@dataclass(frozen=True)
class DiscriminatorSpec:
    base_channels: int = 128
    input_size: int = 128

    @property
    def conv_channels(self) -> tuple[int, ...]:
        b = self.base_channels
        return (b, b, 2 * b, 2 * b, 2 * b, 4 * b, 4 * b)

    conv_strides: tuple[int, ...] = (1, 2, 1, 2, 1, 2, 1)

    @property
    def fc_width(self) -> int:
        return 4 * self.base_channels

    @property
    def flat_features(self) -> int:
        s = self.input_size // 8  # three stride-2 convs
        return self.conv_channels[-1] * s * s


def generator_param_specs(spec: GeneratorSpec):
    """(name, shape, fan_in) for every generator parameter tensor."""
    c0, c1, c2, c3 = spec.widths
    entries = [
        ("conv0", (c0, 3, 3, 3)),
        ("conv1_1", (c0, c0, 3, 3)),
        ("conv1_2", (c0, c0, 3, 3)),
        ("t_conv1", (c0, c1, 4, 4)),
        ("edge1", (1, c1, 1, 1)),
        ("conv2_1", (c0, 2 * c1, 3, 3)),
        ("conv2_2", (c1, c0, 3, 3)),
        ("t_conv2", (c1, c2, 4, 4)),
        ("edge2", (1, c2, 1, 1)),
        ("conv3_1", (c1, 2 * c2, 3, 3)),
        ("conv3_2", (c2, c1, 3, 3)),
        ("t_conv3", (c2, c3, 4, 4)),
        ("edge3", (1, c3, 1, 1)),
        ("conv4", (3, 2 * c3, 3, 3)),
    ]
    active = {f"edge{i + 1}": (s in spec.edge_scales) for i, s in enumerate(EDGE_SCALES)}
    out = []
    for name, shape in entries:
        if name.startswith("edge") and not active[name]:
            continue
        if name.startswith("t_conv"):
            bias_n, fan_in = shape[1], shape[0] * 16
        else:
            bias_n, fan_in = shape[0], shape[1] * shape[2] * shape[3]
        out.append((f"{name}.w", shape, fan_in))
        out.append((f"{name}.b", (bias_n,), fan_in))
    return out


def discriminator_param_specs(spec: DiscriminatorSpec):
    out = []
    ci = 3
    for i, (co, _) in enumerate(zip(spec.conv_channels, spec.conv_strides)):
        out.append((f"d_conv{i}.w", (co, ci, 3, 3), ci * 9))
        out.append((f"d_conv{i}.b", (co,), ci * 9))
        ci = co
    out.append(("d_fc1.w", (spec.fc_width, spec.flat_features), spec.flat_features))
    out.append(("d_fc1.b", (spec.fc_width,), spec.flat_features))
    out.append(("d_fc2.w", (1, spec.fc_width), spec.fc_width))
    out.append(("d_fc2.b", (1,), spec.fc_width))
    return out


def _edge_block(features: ad.Tensor, pool_k: int, params: dict | None, prefix: str):
    """Returns (concatenated features, edge logits or None)."""
    if params is None:
        return ad.concat_channels(features, features), None
    smoothed = ad.avg_pool_same(features, pool_k)
    high_freq = ad.sub(features, smoothed)
    merged = ad.concat_channels(features, high_freq)
    logits = ad.clamp01(ad.conv2d(high_freq, params[f"{prefix}.w"], params[f"{prefix}.b"],
                                  stride=1, pad=0))
    return merged, logits


def generator_forward(params: dict, lr: ad.Tensor, spec: GeneratorSpec):
    """SR forward pass; returns (raw sr, {scale: edge logits}).

    Input is (n, 3, h, w); output is (n, 3, 8h, 8w). The output is raw
    (unclamped) so training losses see unmodified gradients.
    """
    if lr.data.ndim != 4 or lr.data.shape[1] != 3:
        raise ValueError(f"generator expects (n, 3, h, w) input, got {lr.data.shape}")

    def conv(name, x, act, stride=1, pad=1):
        y = ad.conv2d(x, params[f"{name}.w"], params[f"{name}.b"], stride=stride, pad=pad)
        return ad.relu(y) if act else y

    def tconv(name, x):
        return ad.relu(ad.transposed_conv2d(x, params[f"{name}.w"], params[f"{name}.b"]))

    edge_on = {s: (s in spec.edge_scales) for s in EDGE_SCALES}
    edges: dict[int, ad.Tensor] = {}

    x0 = conv("conv0", lr, act=False)
    h = conv("conv1_1", x0, act=True)
    h = conv("conv1_2", h, act=True)
    r1 = ad.add(x0, h)

    t1 = tconv("t_conv1", r1)
    cat1, e1 = _edge_block(t1, spec.pool_kernels[0], params if edge_on[2] else None, "edge1")
    if e1 is not None:
        edges[2] = e1
    h = conv("conv2_1", cat1, act=True)
    h = conv("conv2_2", h, act=True)
    r2 = ad.add(t1, h)

    t2 = tconv("t_conv2", r2)
    cat2, e2 = _edge_block(t2, spec.pool_kernels[1], params if edge_on[4] else None, "edge2")
    if e2 is not None:
        edges[4] = e2
    h = conv("conv3_1", cat2, act=True)
    h = conv("conv3_2", h, act=True)
    r3 = ad.add(t2, h)

    t3 = tconv("t_conv3", r3)
    cat3, e3 = _edge_block(t3, spec.pool_kernels[2], params if edge_on[8] else None, "edge3")
    if e3 is not None:
        edges[8] = e3
    sr = conv("conv4", cat3, act=False)
    return sr, edges


def generator_infer(params: dict, lr: ad.Tensor, spec: GeneratorSpec):
    """Inference pass: output clamped to [0, 1]."""
    sr, edges = generator_forward(params, lr, spec)
    return ad.clamp01(sr), edges


def discriminator_forward(params: dict, img: ad.Tensor, spec: DiscriminatorSpec) -> ad.Tensor:
    """Probability that `img` (n, 3, s, s) is a real high-resolution image."""
    if img.data.ndim != 4 or img.data.shape[1] != 3 or img.data.shape[2] != spec.input_size \
            or img.data.shape[3] != spec.input_size:
        raise ValueError(
            f"discriminator expects (n, 3, {spec.input_size}, {spec.input_size}), got {img.data.shape}"
        )
    h = img
    for i, stride in enumerate(spec.conv_strides):
        h = ad.conv2d(h, params[f"d_conv{i}.w"], params[f"d_conv{i}.b"], stride=stride, pad=1)
        h = ad.leaky_relu(h, 0.2)
    flat = ad.flatten(h)
    h = ad.leaky_relu(ad.fully_connected(flat, params["d_fc1.w"], params["d_fc1.b"]), 0.2)
    return ad.sigmoid(ad.fully_connected(h, params["d_fc2.w"], params["d_fc2.b"]))


def generator_shape_trace(spec: GeneratorSpec, in_size: int = 16):
    """(layer name, out channels, out size) in network order."""
    c0, c1, c2, c3 = spec.widths
    s = in_size
    return [
        ("conv0", c0, s), ("conv1_1", c0, s), ("conv1_2", c0, s), ("residual1", c0, s),
        ("t_conv1", c1, 2 * s), ("edge_block1", 2 * c1, 2 * s),
        ("conv2_1", c0, 2 * s), ("conv2_2", c1, 2 * s), ("residual2", c1, 2 * s),
        ("t_conv2", c2, 4 * s), ("edge_block2", 2 * c2, 4 * s),
        ("conv3_1", c1, 4 * s), ("conv3_2", c2, 4 * s), ("residual3", c2, 4 * s),
        ("t_conv3", c3, 8 * s), ("edge_block3", 2 * c3, 8 * s),
        ("conv4", 3, 8 * s),
    ]


def model_stats(spec: GeneratorSpec, in_size: int = 16) -> tuple[int, int]:
    """(parameter count, multiply-accumulate count) for the generator.

    Conv MACs count k^2*ci*co per output pixel; transposed convs are
    counted at their input resolution.
    """
    c0, c1, c2, c3 = spec.widths
    s = in_size
    convs = [  # (ci, co, k, out_or_in_size) with t_convs at input size
        (3, c0, 3, s), (c0, c0, 3, s), (c0, c0, 3, s),
        (c0, c1, 4, s),
        (2 * c1, c0, 3, 2 * s), (c0, c1, 3, 2 * s),
        (c1, c2, 4, 2 * s),
        (2 * c2, c1, 3, 4 * s), (c1, c2, 3, 4 * s),
        (c2, c3, 4, 4 * s),
        (2 * c3, 3, 3, 8 * s),
    ]
    edge_projections = {2: (c1, 2 * s), 4: (c2, 4 * s), 8: (c3, 8 * s)}
    params = 0
    macs = 0
    for ci, co, k, size in convs:
        params += k * k * ci * co + co
        macs += k * k * ci * co * size * size
    for scale in spec.edge_scales:
        ci, size = edge_projections[scale]
        params += ci + 1
        macs += ci * size * size
    return params, macs


def validate_params(params: dict, specs) -> None:
    """Check a loaded tensor dict against one or more param spec lists."""
    for name, shape, _ in specs:
        if name not in params:
            raise KeyError(f"checkpoint is missing parameter {name!r}")
        got = tuple(params[name].shape)
        if got != tuple(shape):
            raise ValueError(f"parameter {name!r} has shape {got}, expected {tuple(shape)}")
