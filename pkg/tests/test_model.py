import json

import pytest
from hypothesis import given, strategies as st

from conftest import act_layer, chain_dag, conv_layer, model_json, shape
from sdflow.assets import bundled_model, bundled_model_text
from sdflow.errors import (CycleError, DanglingArc, SchemaError, ShapeMismatch)
from sdflow.model import (Kind, ModelDag, model_workload, parse_model,
                          serialize_model, toposort, window_output_shape)


def test_same_padding_conv_shape():
    text = model_json("m", [
        {"id": "c1", "kind": "Conv3D", "input_shape": [3, 112, 112, 16],
         "output_shape": [64, 112, 112, 16], "kernel": [3, 3, 3],
         "stride": [1, 1, 1], "padding": [1, 1, 1], "groups": 1},
    ])
    dag = parse_model(text)
    assert dag.nodes["c1"].output_shape.as_list() == [64, 112, 112, 16]


def test_pool_halving_shape():
    text = model_json("m", [
        {"id": "p1", "kind": "Pool3D", "input_shape": [64, 112, 112, 16],
         "output_shape": [64, 56, 56, 8], "kernel": [2, 2, 2],
         "stride": [2, 2, 2], "padding": [0, 0, 0]},
    ])
    dag = parse_model(text)
    assert dag.nodes["p1"].output_shape.as_list() == [64, 56, 56, 8]


def test_shape_mismatch_rejected():
    text = model_json("m", [
        {"id": "c1", "kind": "Conv3D", "input_shape": [3, 112, 112, 16],
         "output_shape": [64, 100, 112, 16], "kernel": [3, 3, 3],
         "stride": [1, 1, 1], "padding": [1, 1, 1]},
    ])
    with pytest.raises(ShapeMismatch):
        parse_model(text)


def test_dangling_arc_rejected():
    text = model_json("m", [
        {"id": "r1", "kind": "Activation", "inputs": ["ghost"],
         "output_shape": [4, 2, 2, 2], "act_type": "Relu"},
    ])
    with pytest.raises(DanglingArc):
        parse_model(text)


def test_cycle_rejected():
    text = model_json("m", [
        {"id": "a", "kind": "Activation", "inputs": ["b"],
         "output_shape": [4, 2, 2, 2], "act_type": "Relu"},
        {"id": "b", "kind": "Activation", "inputs": ["a"],
         "output_shape": [4, 2, 2, 2], "act_type": "Relu"},
    ])
    with pytest.raises(CycleError):
        parse_model(text)


def test_malformed_field_rejected():
    with pytest.raises(SchemaError):
        parse_model(model_json("m", [{"id": "x", "kind": "Conv9D"}]))
    with pytest.raises(SchemaError):
        parse_model("not json {")


def test_elementwise_input_arity():
    text = model_json("m", [
        {"id": "e", "kind": "ElementWise", "input_shapes": [[4, 2, 2, 2]],
         "output_shape": [4, 2, 2, 2], "ew_type": "Add", "ew_mode": "Normal"},
    ])
    with pytest.raises(SchemaError):
        parse_model(text)


def test_broadcast_needs_unit_side():
    text = model_json("m", [
        {"id": "e", "kind": "ElementWise",
         "input_shapes": [[4, 2, 2, 2], [4, 2, 2, 2]],
         "output_shape": [4, 2, 2, 2], "ew_type": "Mul", "ew_mode": "Broadcast"},
    ])
    with pytest.raises(ShapeMismatch):
        parse_model(text)


def test_c3d_description_counts():
    dag = bundled_model("c3d")
    assert len(dag.nodes) == 27
    convs = [l for l in dag.nodes.values() if l.kind == Kind.CONV]
    # 8 convolutional trunk layers; the classifier is encoded as 3 more
    # window/pointwise convolutions
    spatial = [l for l in convs if not l.id.startswith("fc")]
    assert len(spatial) == 8
    assert len(convs) == 11


def test_c3d_workload():
    dag = bundled_model("c3d")
    gops = model_workload(dag)
    assert abs(gops - 38.61) / 38.61 < 0.02


def test_toposort_singleton():
    dag = chain_dag("one", [act_layer("a", shape(2, 2, 2, 2))])
    assert toposort(dag) == ["a"]


def test_toposort_diamond_tiebreak():
    from sdflow.model import EwMode, EwType, LayerDescriptor
    s = shape(4, 2, 2, 2)
    nodes = {
        "a": act_layer("a", s),
        "b": act_layer("b", s),
        "c": act_layer("c", s),
        "d": LayerDescriptor(id="d", kind=Kind.EW, input_shapes=(s, s),
                             output_shape=s, ew_type=EwType.ADD,
                             ew_mode=EwMode.NORMAL),
    }
    dag = ModelDag("diamond", nodes, [("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")],
                   ["a"], ["d"])
    assert toposort(dag) == ["a", "b", "c", "d"]


def test_toposort_respects_skip_arcs():
    # conv -> relu -> conv -> swish -> conv -> add, with a skip into the add
    dag = bundled_model("toy_residual")
    order = toposort(dag)
    pos = {nid: i for i, nid in enumerate(order)}
    for u, v in dag.arcs:  # reference check: every arc goes forward
        assert pos[u] < pos[v], (u, v)
    assert pos["relu0"] < pos["add1"]


def test_workload_empty_model():
    assert model_workload(ModelDag("empty", {}, [])) == 0.0


def test_workload_single_pointwise_conv():
    c = conv_layer("c", shape(4, 2, 2, 2), 8, kernel=(1, 1, 1), padding=(0, 0, 0))
    dag = chain_dag("m", [c])
    assert model_workload(dag) * 1e9 == pytest.approx(8 * 2 * 2 * 2 * 4)


def test_workload_reorder_invariant():
    text = bundled_model_text("toy_residual")
    doc = json.loads(text)
    doc["layers"] = list(reversed(doc["layers"]))
    reordered = parse_model(json.dumps(doc))
    original = bundled_model("toy_residual")
    assert model_workload(reordered) == model_workload(original)


def test_serialize_round_trip():
    for name in ("toy_chain", "toy_residual", "toy_se", "toy_multi_input",
                 "toy_multi_output", "c3d"):
        dag = bundled_model(name)
        assert parse_model(serialize_model(dag)) == dag


@given(st.integers(1, 20), st.integers(1, 5), st.integers(1, 3),
       st.integers(0, 3))
def test_window_arithmetic_matches_enumeration(size, k, stride, pad):
    padded = size + 2 * pad
    if padded < k:
        return
    expect = len(range(0, padded - k + 1, stride))
    got = window_output_shape(shape(1, size, size, size), 1, (k, k, k),
                              (stride, stride, stride), (pad, pad, pad))
    assert got.height == expect


def test_conv_shape_recompute_invariant():
    for name in ("c3d", "r2plus1d_18"):
        dag = bundled_model(name)
        for layer in dag.nodes.values():
            if layer.kind in (Kind.CONV, Kind.POOL):
                redo = window_output_shape(layer.input_shapes[0],
                                           layer.out_channels, layer.kernel,
                                           layer.stride, layer.padding)
                assert redo == layer.output_shape, layer.id
