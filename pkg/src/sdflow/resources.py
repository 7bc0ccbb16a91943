"""Device budgets and the invented per-block resource cost model.

The cost model is deliberately centralized here behind replaceable
coefficients: the quantities the rest of the tool depends on only need
the model to be monotone in parallelism and additive over blocks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources as importlib_resources

from .blocks import BlockConfig
from .errors import SchemaError
from .model import ActType, EwType, Kind


@dataclass(frozen=True)
class DeviceSpec:
    """FPGA platform budget, loaded from an editable JSON file."""

    name: str
    dsp_total: int
    bram18_total: int
    lut_total: int
    ff_total: int
    bandwidth_gbps: float
    clock_mhz: float
    reconfig_time_ms: float
    word_bits: int = 16
    mem_split_in: float | None = None  # bandwidth fraction for input streams

    def __post_init__(self):
        for fieldname in ("dsp_total", "bram18_total", "lut_total", "ff_total"):
            if getattr(self, fieldname) <= 0:
                raise SchemaError(f"device {self.name}: {fieldname} must be > 0")
        if self.bandwidth_gbps <= 0 or self.clock_mhz <= 0:
            raise SchemaError(f"device {self.name}: bandwidth and clock must be > 0")

    @property
    def clock_hz(self) -> float:
        return self.clock_mhz * 1e6

    @property
    def t_reconfig(self) -> float:
        return self.reconfig_time_ms / 1e3

    @property
    def words_per_cycle(self) -> float:
        """Total off-chip transfer budget in 16-bit (word_bits) words/cycle."""
        bytes_per_word = self.word_bits / 8
        return self.bandwidth_gbps * 1e9 / bytes_per_word / self.clock_hz


def load_device(path_or_dict) -> DeviceSpec:
    if isinstance(path_or_dict, dict):
        doc = path_or_dict
    else:
        with open(path_or_dict) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"device file is not valid JSON: {exc}") from exc
    try:
        return DeviceSpec(
            name=doc["name"],
            dsp_total=doc["dsp"],
            bram18_total=doc["bram18"],
            lut_total=doc["lut"],
            ff_total=doc["ff"],
            bandwidth_gbps=doc["bandwidth_gbps"],
            clock_mhz=doc["clock_mhz"],
            reconfig_time_ms=doc["reconfig_time_ms"],
            word_bits=doc.get("word_bits", 16),
            mem_split_in=doc.get("mem_split_in"),
        )
    except KeyError as exc:
        raise SchemaError(f"device file missing field {exc}") from exc


def bundled_device(name: str) -> DeviceSpec:
    ref = importlib_resources.files("sdflow") / "assets" / "devices" / f"{name}.json"
    return load_device(json.loads(ref.read_text()))


@dataclass(frozen=True)
class ResourceUsage:
    dsp: int = 0
    bram18: int = 0
    lut: int = 0
    ff: int = 0

    def __add__(self, other: "ResourceUsage") -> "ResourceUsage":
        return ResourceUsage(self.dsp + other.dsp, self.bram18 + other.bram18,
                             self.lut + other.lut, self.ff + other.ff)

    def utilization(self, device: DeviceSpec) -> dict[str, float]:
        return {
            "dsp": self.dsp / device.dsp_total,
            "bram18": self.bram18 / device.bram18_total,
            "lut": self.lut / device.lut_total,
            "ff": self.ff / device.ff_total,
        }


@dataclass(frozen=True)
class CostModel:
    """Coefficients of the block cost formulas; see assets/cost_model.json."""

    bram18_words: int = 1024
    lut_per_stream: int = 120
    ff_per_stream: int = 220
    lut_per_mac: int = 40
    ff_per_mac: int = 64

    @staticmethod
    def from_json(path) -> "CostModel":
        with open(path) as fh:
            doc = json.load(fh)
        cm = CostModel()
        unknown = set(doc) - set(cm.__dataclass_fields__)
        if unknown:
            raise SchemaError(f"cost model file has unknown keys {sorted(unknown)}")
        return replace(cm, **doc)


DEFAULT_COST_MODEL = CostModel()


def _bram_for_words(words: int, cost: CostModel) -> int:
    # Each physical buffer occupies its own BRAMs.
    return math.ceil(words / cost.bram18_words) if words > 0 else 0


def block_resources(block: BlockConfig, cost: CostModel = DEFAULT_COST_MODEL) -> ResourceUsage:
    """DSP/BRAM cost of one block (LUT/FF are coarse, reported only)."""
    layer = block.layer
    dsp = 0
    bram = 0
    macs = 0
    if layer.kind == Kind.CONV:
        macs = block.s_i * block.p_mac if layer.is_depthwise \
            else block.s_i * block.s_o * block.p_mac
        dsp = macs
        shape = layer.input_shapes[0]
        kh, kw, kd = layer.kernel
        window_words = ((kd - 1) * shape.height * shape.width
                        + (kh - 1) * shape.width + kw) * shape.channels
        weight_words = (shape.channels * layer.out_channels
                        * layer.kernel_volume // layer.groups)
        bram = _bram_for_words(window_words, cost) + _bram_for_words(weight_words, cost)
    elif layer.kind == Kind.POOL:
        shape = layer.input_shapes[0]
        kh, kw, kd = layer.kernel
        window_words = ((kd - 1) * shape.height * shape.width
                        + (kh - 1) * shape.width + kw) * shape.channels
        bram = _bram_for_words(window_words, cost)
    elif layer.kind == Kind.ACT:
        if layer.act_type in (ActType.SIGMOID, ActType.SWISH):
            dsp = block.s_i
    elif layer.kind == Kind.EW:
        if layer.ew_type == EwType.MUL:
            dsp = block.s_o
    elif layer.kind == Kind.GAP:
        bram = _bram_for_words(layer.in_channels, cost)

    streams = block.s_i + block.s_o
    lut = cost.lut_per_stream * streams + cost.lut_per_mac * macs
    ff = cost.ff_per_stream * streams + cost.ff_per_mac * macs
    return ResourceUsage(dsp=dsp, bram18=bram, lut=lut, ff=ff)


def fifo_resources(depth: int, streams: int, cost: CostModel = DEFAULT_COST_MODEL) -> ResourceUsage:
    """Merge-point FIFO cost: depth x streams words of on-chip memory."""
    return ResourceUsage(bram18=_bram_for_words(depth * streams, cost))


def partition_resources(graph, cost: CostModel = DEFAULT_COST_MODEL) -> ResourceUsage:
    """Sum of block costs plus merge-buffer FIFOs over one partition graph."""
    usage = ResourceUsage()
    for block in graph.blocks.values():
        usage = usage + block_resources(block, cost)
    for ai, extra in graph.merge_buffers.items():
        arc = graph.arcs[ai]
        streams = int(graph.S[ai, graph.col(arc.consumer)])
        usage = usage + fifo_resources(extra, streams, cost)
    return usage


def feasible(usage: ResourceUsage, device: DeviceSpec,
             constrain_lutff: bool = False) -> bool:
    """True iff usage fits the device budget (closed constraint)."""
    ok = usage.dsp <= device.dsp_total and usage.bram18 <= device.bram18_total
    if constrain_lutff:
        ok = ok and usage.lut <= device.lut_total and usage.ff <= device.ff_total
    return ok


def violation(usage: ResourceUsage, device: DeviceSpec) -> float:
    """Relative amount by which usage exceeds the budget; 0 when feasible."""
    over = 0.0
    for used, avail in ((usage.dsp, device.dsp_total), (usage.bram18, device.bram18_total)):
        if used > avail:
            over += (used - avail) / avail
    return over
