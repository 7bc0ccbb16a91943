#!/usr/bin/env python3
"""Regenerate the bundled model descriptions under src/sdflow/assets/models.

Run from the repository root after changing any architecture below; the
script validates every file through the parser and prints the workload.
"""

import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from sdflow.model import model_workload, parse_model  # noqa: E402

OUT_DIR = os.path.join(os.path.dirname(__file__), "..", "src", "sdflow",
                       "assets", "models")


def out_hw(size, k, s, p):
    return (size + 2 * p - k) // s + 1


def conv(lid, srcs, cin, cout, shape, k, st=(1, 1, 1), pd=(0, 0, 0), groups=1,
         input_shape=None):
    h, w, d = shape
    oh, ow, od = (out_hw(h, k[0], st[0], pd[0]), out_hw(w, k[1], st[1], pd[1]),
                  out_hw(d, k[2], st[2], pd[2]))
    entry = {"id": lid, "kind": "Conv3D", "inputs": srcs,
             "output_shape": [cout, oh, ow, od],
             "kernel": list(k), "stride": list(st), "padding": list(pd),
             "groups": groups}
    if not srcs:
        del entry["inputs"]
        entry["input_shape"] = [cin, h, w, d]
    return entry, (oh, ow, od)


def pool(lid, srcs, c, shape, k, st, pd=(0, 0, 0)):
    h, w, d = shape
    oh, ow, od = (out_hw(h, k[0], st[0], pd[0]), out_hw(w, k[1], st[1], pd[1]),
                  out_hw(d, k[2], st[2], pd[2]))
    return ({"id": lid, "kind": "Pool3D", "inputs": srcs,
             "output_shape": [c, oh, ow, od], "kernel": list(k),
             "stride": list(st), "padding": list(pd)}, (oh, ow, od))


def act(lid, srcs, c, shape, act_type="Relu", input_shape=None):
    h, w, d = shape
    entry = {"id": lid, "kind": "Activation", "inputs": srcs,
             "output_shape": [c, h, w, d], "act_type": act_type}
    if not srcs:
        del entry["inputs"]
        entry["input_shape"] = [c, h, w, d]
    return entry


def ew(lid, srcs, c, shape, ew_type="Add", ew_mode="Normal", input_shapes=None):
    h, w, d = shape
    entry = {"id": lid, "kind": "ElementWise", "inputs": srcs,
             "output_shape": [c, h, w, d], "ew_type": ew_type, "ew_mode": ew_mode}
    if not srcs:
        del entry["inputs"]
        entry["input_shapes"] = input_shapes
    return entry


def gap(lid, srcs, c):
    return {"id": lid, "kind": "GlobalAvgPool", "inputs": srcs,
            "output_shape": [c, 1, 1, 1]}


def make_c3d():
    layers = []
    shape = (112, 112, 16)
    c_prev = 3
    stages = [
        ("1a", 64, [("pool1", (2, 2, 1), (2, 2, 1), (0, 0, 0))]),
        ("2a", 128, [("pool2", (2, 2, 2), (2, 2, 2), (0, 0, 0))]),
        ("3a", 256, []), ("3b", 256, [("pool3", (2, 2, 2), (2, 2, 2), (0, 0, 0))]),
        ("4a", 512, []), ("4b", 512, [("pool4", (2, 2, 2), (2, 2, 2), (0, 0, 0))]),
        ("5a", 512, []), ("5b", 512, [("pool5", (2, 2, 2), (2, 2, 2), (1, 1, 0))]),
    ]
    prev = None
    for tag, cout, pools in stages:
        entry, shape = conv(f"conv{tag}", [prev] if prev else [], c_prev, cout,
                            shape, (3, 3, 3), (1, 1, 1), (1, 1, 1))
        layers.append(entry)
        layers.append(act(f"relu{tag}", [f"conv{tag}"], cout, shape))
        prev = f"relu{tag}"
        c_prev = cout
        for pname, k, st, pd in pools:
            entry, shape = pool(pname, [prev], cout, shape, k, st, pd)
            layers.append(entry)
            prev = pname
    # classifier head: first FC folds the full remaining map, rest pointwise
    entry, shape = conv("fc6", [prev], 512, 4096, shape, (4, 4, 1))
    layers.append(entry)
    layers.append(act("relu6", ["fc6"], 4096, shape))
    entry, shape = conv("fc7", ["relu6"], 4096, 4096, shape, (1, 1, 1))
    layers.append(entry)
    layers.append(act("relu7", ["fc7"], 4096, shape))
    entry, shape = conv("fc8", ["relu7"], 4096, 101, shape, (1, 1, 1))
    layers.append(entry)
    layers.append(act("prob", ["fc8"], 101, shape, "Sigmoid"))
    return {"name": "c3d", "layers": layers}


def r2p1d_block(layers, stage, idx, cin, cout, mid, shape, downsample):
    pre = f"s{stage}b{idx}"
    src = layers[-1]["id"]
    st_sp = (2, 2, 1) if downsample else (1, 1, 1)
    st_tm = (1, 1, 2) if downsample else (1, 1, 1)
    entry, shape_sp = conv(f"{pre}_convs1", [src], cin, mid, shape, (3, 3, 1),
                           st_sp, (1, 1, 0))
    layers.append(entry)
    layers.append(act(f"{pre}_relua", [f"{pre}_convs1"], mid, shape_sp))
    entry, shape_out = conv(f"{pre}_convt1", [f"{pre}_relua"], mid, cout,
                            shape_sp, (1, 1, 3), st_tm, (0, 0, 1))
    layers.append(entry)
    layers.append(act(f"{pre}_relub", [f"{pre}_convt1"], cout, shape_out))
    entry, _ = conv(f"{pre}_convs2", [f"{pre}_relub"], cout, mid, shape_out,
                    (3, 3, 1), (1, 1, 1), (1, 1, 0))
    layers.append(entry)
    layers.append(act(f"{pre}_reluc", [f"{pre}_convs2"], mid, shape_out))
    entry, _ = conv(f"{pre}_convt2", [f"{pre}_reluc"], mid, cout, shape_out,
                    (1, 1, 3), (1, 1, 1), (0, 0, 1))
    layers.append(entry)
    skip = src
    if downsample:
        entry, _ = conv(f"{pre}_convds", [src], cin, cout, shape, (1, 1, 1),
                        (2, 2, 2))
        layers.append(entry)
        skip = f"{pre}_convds"
    layers.append(ew(f"{pre}_add", [f"{pre}_convt2", skip], cout, shape_out))
    layers.append(act(f"{pre}_relud", [f"{pre}_add"], cout, shape_out))
    return shape_out


def make_r2plus1d_18():
    # Canonical factorized-residual structure; mid-plane widths scaled to
    # the published workload (see the asset README note).
    layers = []
    shape = (112, 112, 16)
    entry, shape = conv("stem_convs", [], 3, 45, shape, (7, 7, 1), (2, 2, 1),
                        (3, 3, 0))
    layers.append(entry)
    layers.append(act("stem_relua", ["stem_convs"], 45, shape))
    entry, shape = conv("stem_convt", ["stem_relua"], 45, 64, shape, (1, 1, 3),
                        (1, 1, 1), (0, 0, 1))
    layers.append(entry)
    layers.append(act("stem_relub", ["stem_convt"], 64, shape))
    plan = [(1, 64, 64, 26, False), (2, 64, 128, 52, True),
            (3, 128, 256, 104, True), (4, 256, 512, 208, True)]
    for stage, cin, cout, mid, down in plan:
        shape = r2p1d_block(layers, stage, 1, cin, cout, mid, shape, down)
        shape = r2p1d_block(layers, stage, 2, cout, cout, mid, shape, False)
    layers.append(gap("gap", [layers[-1]["id"]], 512))
    entry, _ = conv("fc", ["gap"], 512, 101, (1, 1, 1), (1, 1, 1))
    layers.append(entry)
    layers.append(act("prob", ["fc"], 101, (1, 1, 1), "Sigmoid"))
    return {"name": "r2plus1d_18", "layers": layers}


def make_toy_chain():
    layers = []
    entry, shape = conv("conv1", [], 2, 4, (8, 8, 4), (3, 3, 3), (1, 1, 1),
                        (1, 1, 1))
    layers.append(entry)
    layers.append(act("relu1", ["conv1"], 4, shape))
    entry, shape = pool("pool1", ["relu1"], 4, shape, (2, 2, 2), (2, 2, 2))
    layers.append(entry)
    return {"name": "toy_chain", "layers": layers}


def make_toy_residual():
    layers = [act("relu0", [], 4, (6, 6, 4))]
    entry, shape = conv("conv1", ["relu0"], 4, 4, (6, 6, 4), (3, 3, 3),
                        (1, 1, 1), (1, 1, 1))
    layers.append(entry)
    layers.append(act("swish1", ["conv1"], 4, shape, "Swish"))
    entry, shape = conv("conv2", ["swish1"], 4, 4, shape, (3, 3, 3), (1, 1, 1),
                        (1, 1, 1))
    layers.append(entry)
    layers.append(ew("add1", ["conv2", "relu0"], 4, shape))
    return {"name": "toy_residual", "layers": layers}


def make_toy_multi_input():
    layers = [act("relu_a", [], 4, (6, 6, 4)),
              act("relu_b", [], 4, (6, 6, 4)),
              ew("add1", ["relu_a", "relu_b"], 4, (6, 6, 4))]
    entry, _ = conv("conv1", ["add1"], 4, 4, (6, 6, 4), (1, 1, 1))
    layers.append(entry)
    return {"name": "toy_multi_input", "layers": layers}


def make_toy_multi_output():
    layers = []
    entry, shape = conv("conv0", [], 2, 4, (6, 6, 4), (1, 1, 1))
    layers.append(entry)
    entry, _ = pool("pool_a", ["conv0"], 4, shape, (2, 2, 2), (2, 2, 2))
    layers.append(entry)
    layers.append(act("relu_b", ["conv0"], 4, shape))
    return {"name": "toy_multi_output", "layers": layers}


def make_toy_se():
    layers = []
    entry, shape = conv("conv0", [], 4, 8, (8, 8, 4), (1, 1, 1))
    layers.append(entry)
    layers.append(gap("gap1", ["conv0"], 8))
    entry, _ = conv("conv_r", ["gap1"], 8, 4, (1, 1, 1), (1, 1, 1))
    layers.append(entry)
    layers.append(act("relu_r", ["conv_r"], 4, (1, 1, 1)))
    entry, _ = conv("conv_e", ["relu_r"], 4, 8, (1, 1, 1), (1, 1, 1))
    layers.append(entry)
    layers.append(act("sig_e", ["conv_e"], 8, (1, 1, 1), "Sigmoid"))
    layers.append(ew("mul1", ["conv0", "sig_e"], 8, shape, "Mul", "Broadcast"))
    return {"name": "toy_se", "layers": layers}


def make_toy_conv_relu():
    layers = []
    entry, shape = conv("conv1", [], 2, 4, (4, 4, 2), (2, 2, 1))
    layers.append(entry)
    layers.append(act("relu1", ["conv1"], 4, shape))
    return {"name": "toy_conv_relu", "layers": layers}


def make_toy_two_conv():
    layers = []
    entry, shape = conv("conv1", [], 2, 4, (5, 5, 3), (2, 2, 2))
    layers.append(entry)
    entry, shape = conv("conv2", ["conv1"], 4, 4, shape, (2, 2, 2))
    layers.append(entry)
    return {"name": "toy_two_conv", "layers": layers}


def make_toy_branch_small():
    layers = []
    entry, shape = conv("conv0", [], 2, 2, (4, 4, 2), (1, 1, 1))
    layers.append(entry)
    layers.append(act("relu_l", ["conv0"], 2, shape))
    layers.append(act("sig_r", ["conv0"], 2, shape, "Sigmoid"))
    layers.append(ew("add1", ["relu_l", "sig_r"], 2, shape))
    entry, _ = pool("pool1", ["add1"], 2, shape, (2, 2, 2), (2, 2, 2))
    layers.append(entry)
    return {"name": "toy_branch_small", "layers": layers}


def main():
    os.makedirs(OUT_DIR, exist_ok=True)
    builders = [make_c3d, make_r2plus1d_18, make_toy_chain, make_toy_residual,
                make_toy_multi_input, make_toy_multi_output, make_toy_se,
                make_toy_conv_relu, make_toy_two_conv, make_toy_branch_small]
    for build in builders:
        doc = build()
        text = json.dumps(doc, indent=2) + "\n"
        dag = parse_model(text)
        path = os.path.join(OUT_DIR, f"{doc['name']}.json")
        with open(path, "w") as fh:
            fh.write(text)
        n_conv = sum(1 for l in dag.nodes.values() if l.kind.value == "Conv3D")
        print(f"{doc['name']:>18}: {len(dag.nodes):3d} layers, {n_conv:3d} conv, "
              f"{model_workload(dag):.4f} GOps -> {path}")


if __name__ == "__main__":
    main()
