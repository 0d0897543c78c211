"""VGG-style block architectures with transfer-learning surgery.

A model is an ordered map of named parameters plus per-parameter
trainability flags. Names encode (block, layer, role), e.g.
"block3.conv2.w" or "head.out.b", so freezing by block depth is
well-defined. Two presets ship: "paper-vgg16" (filter widths
32/64/128/256/256) and "canonical-vgg16" (64/128/256/512/512).

The default head is GAP -> single dense -> softmax, which serves both
classification and class-activation mapping; a conventional FC head is
available through ArchSpec for comparison runs.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .errors import CapabilityError, ShapeError
from .tensor import Tensor

KERNEL = 3  # all convolutions are 3x3, same-padded; spatial size changes only at pools


@dataclass(frozen=True)
class GapHead:
    """Global average pool followed by one dense layer (CAM-compatible)."""


@dataclass(frozen=True)
class FcHead:
    """Flatten followed by dense+ReLU stages of the given widths, then the classifier."""

    widths: tuple[int, ...] = (4096, 4096)

    def __post_init__(self):
        if not self.widths or any(w < 1 for w in self.widths):
            raise ValueError(f"FC head widths must be positive, got {self.widths}")


Head = GapHead | FcHead


@dataclass(frozen=True)
class ArchSpec:
    """Block layout: ordered (conv-layer count, filter count) pairs plus a head."""

    blocks: tuple[tuple[int, int], ...]
    head: Head = field(default_factory=GapHead)
    num_classes: int = 4
    in_channels: int = 3
    input_size: int = 224

    def __post_init__(self):
        if not self.blocks:
            raise ValueError("architecture needs at least one block")
        for count, filters in self.blocks:
            if count < 1 or filters < 1:
                raise ValueError(f"bad block ({count}, {filters})")
        widths = [f for _, f in self.blocks]
        if widths != sorted(widths):
            raise ValueError(f"filter counts must be non-decreasing across blocks, got {widths}")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if self.in_channels < 1:
            raise ValueError("in_channels must be >= 1")
        if self.input_size % (2 ** len(self.blocks)) != 0:
            raise ValueError(
                f"input size {self.input_size} not divisible by 2^{len(self.blocks)} pools"
            )

    @property
    def final_filters(self) -> int:
        return self.blocks[-1][1]

    @property
    def map_size(self) -> int:
        """Spatial side of the feature maps after the last block (one pool per block)."""
        return self.input_size // (2 ** len(self.blocks))


PRESETS = {
    # Filter widths as printed in the source description of the architecture;
    # the fifth block reuses 256.
    "paper-vgg16": ((2, 32), (2, 64), (3, 128), (3, 256), (3, 256)),
    # Standard VGG-16 widths.
    "canonical-vgg16": ((2, 64), (2, 128), (3, 256), (3, 512), (3, 512)),
}


def arch_preset(name: str, head: Head | None = None, num_classes: int = 4,
                input_size: int = 224) -> ArchSpec:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; have {', '.join(sorted(PRESETS))}")
    return ArchSpec(PRESETS[name], head or GapHead(), num_classes, 3, input_size)


@dataclass
class Model:
    spec: ArchSpec
    params: dict[str, Tensor]
    trainable: dict[str, bool]

    @property
    def block_count(self) -> int:
        return len(self.spec.blocks)


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = math.sqrt(6.0 / fan_in)
    return Tensor._wrap(rng.uniform(-bound, bound, size=shape).astype(np.float32))


def _head_dims(spec: ArchSpec) -> list[tuple[str, int, int]]:
    """(name-stem, in-dim, out-dim) for each dense layer of the head, in order."""
    if isinstance(spec.head, GapHead):
        return [("out", spec.final_filters, spec.num_classes)]
    dims = []
    prev = spec.final_filters * spec.map_size * spec.map_size
    for i, width in enumerate(spec.head.widths, 1):
        dims.append((f"fc{i}", prev, width))
        prev = width
    dims.append(("out", prev, spec.num_classes))
    return dims


def _init_head(spec: ArchSpec, rng: np.random.Generator, params: dict[str, Tensor]):
    for stem, fan_in, out in _head_dims(spec):
        params[f"head.{stem}.w"] = _uniform(rng, (fan_in, out), fan_in)
        params[f"head.{stem}.b"] = Tensor.zeros((out,))


def build(spec: ArchSpec, seed: int) -> Model:
    """Instantiate a model; (spec, seed) fully determines every parameter bit.

    Weights are fan-in-scaled uniform draws (bound sqrt(6/fan_in)) from a
    single seeded stream consumed in parameter order; biases start at zero.
    """
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    in_ch = spec.in_channels
    for b, (count, filters) in enumerate(spec.blocks, 1):
        for i in range(1, count + 1):
            fan_in = in_ch * KERNEL * KERNEL
            params[f"block{b}.conv{i}.w"] = _uniform(rng, (filters, in_ch, KERNEL, KERNEL), fan_in)
            params[f"block{b}.conv{i}.b"] = Tensor.zeros((filters,))
            in_ch = filters
    _init_head(spec, rng, params)
    return Model(spec=spec, params=params, trainable={name: True for name in params})


def param_block(name: str) -> int | None:
    """Block number encoded in a parameter name, or None for head parameters."""
    m = re.match(r"block(\d+)\.", name)
    return int(m.group(1)) if m else None


def replace_head(model: Model, num_classes: int, seed: int) -> Model:
    """Swap the classifier head for a freshly initialized one of a new width.

    Convolutional parameters are shared bit-for-bit with the input model;
    the new head is marked trainable.
    """
    spec = replace(model.spec, num_classes=num_classes)
    params = {n: t for n, t in model.params.items() if param_block(n) is not None}
    trainable = {n: model.trainable[n] for n in params}
    _init_head(spec, np.random.default_rng(seed), params)
    for name in params:
        if param_block(name) is None:
            trainable[name] = True
    return Model(spec=spec, params=params, trainable=trainable)


def set_trainable(model: Model, freeze_up_to_block: int) -> Model:
    """Freeze blocks 1..k; blocks above k and the head become trainable."""
    if not 0 <= freeze_up_to_block <= model.block_count:
        raise ValueError(
            f"freeze depth {freeze_up_to_block} out of range 0..{model.block_count}"
        )
    trainable = {}
    for name in model.params:
        b = param_block(name)
        trainable[name] = b is None or b > freeze_up_to_block
    return Model(spec=model.spec, params=model.params, trainable=trainable)


@dataclass(frozen=True)
class ForwardTrace:
    """Model outputs plus the feature maps CAM projects onto."""

    logits: Tensor
    probs: Tensor
    final_conv_maps: Tensor


def _check_batch(model: Model, batch: Tensor):
    spec = model.spec
    if batch.rank != 4:
        raise ShapeError(f"batch must be NCHW, got {batch.shape}")
    expect = (spec.in_channels, spec.input_size, spec.input_size)
    if batch.shape[1:] != expect:
        raise ShapeError(f"batch shape {batch.shape[1:]} != expected {expect}")


def _run(model: Model, batch: Tensor, record: bool):
    """Forward pass; optionally records per-layer inputs for the backward walk."""
    p = model.params
    tape = [] if record else None
    x = batch
    for b, (count, _) in enumerate(model.spec.blocks, 1):
        for i in range(1, count + 1):
            cp = nn.ConvParams(p[f"block{b}.conv{i}.w"], p[f"block{b}.conv{i}.b"],
                               stride=1, padding=KERNEL // 2)
            z = nn.conv2d_forward(x, cp)
            if record:
                tape.append(("conv", f"block{b}.conv{i}", x, cp))
                tape.append(("relu", None, z, None))
            x = nn.relu(z)
        x, mask = nn.maxpool2d_forward(x)
        if record:
            tape.append(("pool", None, mask, None))
    final_maps = x
    if isinstance(model.spec.head, GapHead):
        pooled = nn.global_avg_pool(final_maps)
        if record:
            tape.append(("gap", None, final_maps.shape, None))
        logits = nn.dense_forward(pooled, p["head.out.w"], p["head.out.b"])
        if record:
            tape.append(("dense", "head.out", pooled, None))
    else:
        n = final_maps.shape[0]
        x = Tensor._wrap(np.ascontiguousarray(final_maps.array.reshape(n, -1)))
        if record:
            tape.append(("flatten", None, final_maps.shape, None))
        for stem, _, _ in _head_dims(model.spec)[:-1]:
            z = nn.dense_forward(x, p[f"head.{stem}.w"], p[f"head.{stem}.b"])
            if record:
                tape.append(("dense", f"head.{stem}", x, None))
                tape.append(("relu", None, z, None))
            x = nn.relu(z)
        logits = nn.dense_forward(x, p["head.out.w"], p["head.out.b"])
        if record:
            tape.append(("dense", "head.out", x, None))
    probs = nn.softmax(logits)
    return ForwardTrace(logits=logits, probs=probs, final_conv_maps=final_maps), tape


def forward(model: Model, batch: Tensor) -> ForwardTrace:
    _check_batch(model, batch)
    trace, _ = _run(model, batch, record=False)
    return trace


def loss_and_gradients(model: Model, batch: Tensor, targets) -> tuple[float, Tensor, dict[str, Tensor]]:
    """One forward/backward pass: (mean loss, probs, gradient per parameter)."""
    _check_batch(model, batch)
    trace, tape = _run(model, batch, record=True)
    loss = nn.cross_entropy(trace.probs, targets)
    grads: dict[str, Tensor] = {}
    d = nn.cross_entropy_backward(trace.probs, targets)
    for kind, name, saved, extra in reversed(tape):
        if kind == "dense":
            lg = nn.dense_backward(saved, model.params[f"{name}.w"], d)
            grads[f"{name}.w"] = lg.d_params["weights"]
            grads[f"{name}.b"] = lg.d_params["bias"]
            d = lg.d_input
        elif kind == "relu":
            d = nn.relu_backward(saved, d)
        elif kind == "gap":
            d = nn.global_avg_pool_backward(saved, d)
        elif kind == "flatten":
            d = Tensor._wrap(np.ascontiguousarray(d.array.reshape(saved)))
        elif kind == "pool":
            d = nn.maxpool2d_backward(saved, d)
        elif kind == "conv":
            lg = nn.conv2d_backward(saved, extra, d)
            grads[f"{name}.w"] = lg.d_params["weights"]
            grads[f"{name}.b"] = lg.d_params["bias"]
            d = lg.d_input
    return loss, trace.probs, grads


def predict(model: Model, image: Tensor) -> tuple[int, Tensor]:
    """Classify one CHW image; ties break to the lowest class index."""
    if image.rank != 3:
        raise ShapeError(f"image must be CHW, got {image.shape}")
    batch = Tensor._wrap(np.ascontiguousarray(image.array[None]))
    trace = forward(model, batch)
    probs = Tensor._wrap(np.ascontiguousarray(trace.probs.array[0]))
    return int(np.argmax(probs.array)), probs


def gap_head_weights(model: Model) -> Tensor:
    """Classifier weights [C x num_classes] for CAM; errors on FC-head models."""
    if not isinstance(model.spec.head, GapHead):
        raise CapabilityError("class activation mapping requires a GAP-head model")
    return model.params["head.out.w"]


def spec_from_params(params: dict[str, Tensor], head_widths_hint=None,
                     input_size: int | None = None) -> ArchSpec:
    """Reconstruct an ArchSpec from a parameter map (for loading archives).

    For GAP-head maps the input size is not encoded in any shape, so it
    defaults to 224 unless given; FC-head maps determine it exactly.
    """
    blocks: list[tuple[int, int]] = []
    b = 1
    while f"block{b}.conv1.w" in params:
        i = 1
        filters = None
        while f"block{b}.conv{i}.w" in params:
            filters = params[f"block{b}.conv{i}.w"].shape[0]
            i += 1
        blocks.append((i - 1, filters))
        b += 1
    if not blocks:
        raise ValueError("parameter map contains no convolution blocks")
    in_channels = params["block1.conv1.w"].shape[1]
    if "head.out.w" not in params:
        raise ValueError("parameter map has no classifier head")
    num_classes = params["head.out.w"].shape[1]
    if "head.fc1.w" in params:
        widths = []
        i = 1
        while f"head.fc{i}.w" in params:
            widths.append(params[f"head.fc{i}.w"].shape[1])
            i += 1
        head: Head = FcHead(tuple(widths))
        flat = params["head.fc1.w"].shape[0]
        side = int(round(math.sqrt(flat / blocks[-1][1])))
        size = side * (2 ** len(blocks))
    else:
        head = GapHead()
        size = input_size if input_size is not None else 224
    return ArchSpec(tuple(blocks), head, num_classes, in_channels, size)
