"""Hardware building blocks: per-layer stream/rate/depth models.

Every layer maps to one streaming block. Coarse parallelism (s_i, s_o)
replicates processing over channel streams; fine parallelism (p_mac)
unrolls the convolution window dot product. Rates are normalized to
elements per cycle per stream and always land in (0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import IllegalParallelism
from .model import Kind, LayerDescriptor


@dataclass(frozen=True)
class RatePair:
    """Per-stream rates: one entry per input arc, one production rate."""

    r_in: tuple[float, ...]
    r_out: float


@dataclass(frozen=True)
class BlockConfig:
    """A layer bound to concrete parallelism, with derived rates and depth."""

    layer: LayerDescriptor
    s_i: int
    s_o: int
    p_mac: int
    r_i: float
    r_o: float
    depth: int
    r_i2: float | None = None  # secondary input of an element-wise join

    @property
    def name(self) -> str:
        return self.layer.id

    def input_rate(self, port: int) -> float:
        if port == 0:
            return self.r_i
        if port == 1 and self.r_i2 is not None:
            return self.r_i2
        raise IndexError(f"block {self.name} has no input port {port}")


def divisors(n: int) -> list[int]:
    out = [d for d in range(1, n + 1) if n % d == 0]
    return out


def fine_factor(layer: LayerDescriptor, p_mac: int) -> float:
    return p_mac / layer.kernel_volume


def check_parallelism(layer: LayerDescriptor, s_i: int, s_o: int, p_mac: int) -> None:
    c_in = layer.in_channels
    c_out = layer.out_channels
    if s_i < 1 or s_i > c_in or c_in % s_i:
        raise IllegalParallelism(
            f"layer {layer.id}: s_i={s_i} must divide input channels {c_in}")
    if layer.kind == Kind.CONV:
        if s_o < 1 or s_o > c_out or c_out % s_o:
            raise IllegalParallelism(
                f"layer {layer.id}: s_o={s_o} must divide filters {c_out}")
        if layer.is_depthwise and s_o != s_i:
            raise IllegalParallelism(
                f"layer {layer.id}: depthwise conv requires s_o == s_i")
        if p_mac < 1 or p_mac > layer.kernel_volume:
            raise IllegalParallelism(
                f"layer {layer.id}: p_mac={p_mac} outside [1, {layer.kernel_volume}]")
    else:
        # Only convolutions expose independent output streams and MAC unrolling.
        if s_o != s_i:
            raise IllegalParallelism(f"layer {layer.id}: {layer.kind.value} ties s_o to s_i")
        if p_mac != 1:
            raise IllegalParallelism(f"layer {layer.id}: p_mac applies to Conv3D only")


def compute_rates(layer: LayerDescriptor, s_i: int, s_o: int, p_mac: int) -> RatePair:
    """Consumption/production rates for one block configuration.

    Conv/Pool production follows the per-stream element ratio so that a
    block takes exactly as many cycles to drain its input as to emit its
    output; rates above 1 fold back into slower consumption because no
    stream can carry more than one element per cycle.
    """
    kind = layer.kind
    if kind == Kind.ACT:
        return RatePair(r_in=(1.0,), r_out=1.0)
    if kind == Kind.EW:
        # A broadcast side delivers fewer tokens per inference; scaling its
        # rate by the token ratio keeps both input arcs' fill times equal.
        out_elems = layer.output_shape.elems
        r = tuple(min(1.0, s.elems / out_elems) for s in layer.input_shapes)
        return RatePair(r_in=r, r_out=1.0)
    if kind == Kind.GAP:
        shape = layer.input_shapes[0]
        return RatePair(r_in=(1.0,), r_out=1.0 / shape.spatial_elems)

    f = fine_factor(layer, p_mac) if kind == Kind.CONV else 1.0
    e_in = layer.input_shapes[0].elems / s_i
    e_out = layer.output_shape.elems / s_o
    r_i = f
    r_o = f * (e_out / e_in)
    if r_o > 1.0:
        r_i = r_i / r_o
        r_o = 1.0
    return RatePair(r_in=(r_i,), r_out=r_o)


def block_depth(layer: LayerDescriptor, s_i: int) -> int:
    """Pipeline-fill cycles before the block emits its first element."""
    kind = layer.kind
    if kind in (Kind.ACT, Kind.EW):
        return 1
    shape = layer.input_shapes[0]
    if kind == Kind.GAP:
        return shape.elems // s_i
    kh, kw, kd = layer.kernel
    window = (kd - 1) * shape.height * shape.width + (kh - 1) * shape.width + kw
    tree = math.ceil(math.log2(layer.kernel_volume)) if layer.kernel_volume > 1 else 0
    return window * (shape.channels // s_i) + tree


def make_block(layer: LayerDescriptor, s_i: int = 1, s_o: int | None = None,
               p_mac: int = 1) -> BlockConfig:
    """Bind a layer to parallelism values, validating their legality."""
    if s_o is None:
        s_o = s_i
    check_parallelism(layer, s_i, s_o, p_mac)
    rates = compute_rates(layer, s_i, s_o, p_mac)
    r_i2 = rates.r_in[1] if len(rates.r_in) > 1 else None
    return BlockConfig(layer=layer, s_i=s_i, s_o=s_o, p_mac=p_mac,
                       r_i=rates.r_in[0], r_o=rates.r_out,
                       depth=block_depth(layer, s_i), r_i2=r_i2)


def max_parallelism(layer: LayerDescriptor) -> tuple[int, int, int]:
    """Upper bounds (s_i, s_o, p_mac) for this layer kind."""
    if layer.kind == Kind.CONV:
        s_o = layer.in_channels if layer.is_depthwise else layer.out_channels
        return layer.in_channels, s_o, layer.kernel_volume
    return layer.in_channels, layer.in_channels, 1


def is_maxed(block: BlockConfig) -> bool:
    mi, mo, mp = max_parallelism(block.layer)
    if block.layer.is_depthwise:
        return block.s_i == mi and block.p_mac == mp
    return block.s_i == mi and block.s_o == mo and block.p_mac == mp
