"""sdflow: streaming-dataflow performance modeling and design-space
exploration for 3D CNN FPGA accelerators."""

from .assets import bundled_model, bundled_model_names
from .dse import SaConfig, anneal, neighbor, objective
from .model import (ModelDag, TensorShape, model_workload, parse_model,
                    serialize_model, toposort)
from .partitions import (DesignPoint, LayerParallelism, evaluate_design,
                         identify_bottleneck, minimal_configs, move_layer,
                         random_partitioning)
from .perf import (build_workload_matrix, initiation_interval, partition_time,
                   throughput, total_time)
from .resources import (DeviceSpec, ResourceUsage, block_resources,
                        bundled_device, feasible, load_device,
                        partition_resources)
from .sdfg import SdfGraph, build_sdfg, equalize_merge_rates, size_merge_buffers
from .simulate import SimResult, simulate, validate

__version__ = "0.1.0"

__all__ = [
    "ModelDag", "TensorShape", "parse_model", "serialize_model", "toposort",
    "model_workload", "DeviceSpec", "ResourceUsage", "load_device",
    "bundled_device", "bundled_model", "bundled_model_names", "feasible",
    "block_resources", "partition_resources",
    "SdfGraph", "build_sdfg", "equalize_merge_rates", "size_merge_buffers",
    "build_workload_matrix", "initiation_interval", "partition_time",
    "total_time", "throughput", "DesignPoint", "LayerParallelism",
    "evaluate_design", "minimal_configs", "random_partitioning", "move_layer",
    "identify_bottleneck", "SaConfig", "anneal", "neighbor", "objective",
    "SimResult", "simulate", "validate",
]
