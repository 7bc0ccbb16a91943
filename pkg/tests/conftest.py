import json

import pytest

from sdflow.model import (ActType, EwMode, EwType, Kind, LayerDescriptor,
                          ModelDag, TensorShape, window_output_shape)
from sdflow.resources import DeviceSpec


@pytest.fixture
def zcu102():
    return DeviceSpec(name="zcu102", dsp_total=2520, bram18_total=1824,
                      lut_total=274080, ff_total=548160, bandwidth_gbps=19.2,
                      clock_mhz=160.0, reconfig_time_ms=100.0)


@pytest.fixture
def roomy_device():
    """Large budgets and bandwidth so nothing is resource or memory bound."""
    return DeviceSpec(name="roomy", dsp_total=10**6, bram18_total=10**6,
                      lut_total=10**8, ff_total=10**8, bandwidth_gbps=1000.0,
                      clock_mhz=160.0, reconfig_time_ms=50.0)


def shape(c, h, w, d):
    return TensorShape(c, h, w, d)


def conv_layer(lid, in_shape, filters, kernel=(3, 3, 3), stride=(1, 1, 1),
               padding=(1, 1, 1), groups=1):
    out = window_output_shape(in_shape, filters, kernel, stride, padding)
    return LayerDescriptor(id=lid, kind=Kind.CONV, input_shapes=(in_shape,),
                           output_shape=out, kernel=kernel, stride=stride,
                           padding=padding, groups=groups)


def pool_layer(lid, in_shape, kernel=(2, 2, 2), stride=(2, 2, 2),
               padding=(0, 0, 0)):
    out = window_output_shape(in_shape, in_shape.channels, kernel, stride, padding)
    return LayerDescriptor(id=lid, kind=Kind.POOL, input_shapes=(in_shape,),
                           output_shape=out, kernel=kernel, stride=stride,
                           padding=padding)


def act_layer(lid, in_shape, act=ActType.RELU):
    return LayerDescriptor(id=lid, kind=Kind.ACT, input_shapes=(in_shape,),
                           output_shape=in_shape, act_type=act)


def ew_layer(lid, in_shapes, ew=EwType.ADD, mode=EwMode.NORMAL):
    out = in_shapes[0] if in_shapes[0].spatial_elems > 1 else in_shapes[1]
    return LayerDescriptor(id=lid, kind=Kind.EW, input_shapes=tuple(in_shapes),
                           output_shape=out, ew_type=ew, ew_mode=mode)


def gap_layer(lid, in_shape):
    return LayerDescriptor(id=lid, kind=Kind.GAP, input_shapes=(in_shape,),
                           output_shape=TensorShape(in_shape.channels, 1, 1, 1))


def chain_dag(name, layers):
    """Linear model from an ordered layer list."""
    arcs = [(a.id, b.id) for a, b in zip(layers, layers[1:])]
    return ModelDag(name, {l.id: l for l in layers}, arcs,
                    [layers[0].id], [layers[-1].id])


def model_json(name, layers):
    return json.dumps({"name": name, "layers": layers})
