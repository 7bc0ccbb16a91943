import numpy as np
import pytest

from conftest import act_layer, conv_layer, ew_layer, shape
from sdflow.blocks import make_block
from sdflow.errors import DisconnectedGraph, StreamMismatch
from sdflow.model import ActType
from sdflow.sdfg import build_sdfg, dump_matrices, equalize_merge_rates


def _identity_chain(device, s=1):
    sh = shape(4, 4, 4, 2)
    relu = make_block(act_layer("r", sh), s_i=s, s_o=s)
    return build_sdfg([relu], [], device)


def test_identity_chain_gamma_rows(roomy_device):
    g = _identity_chain(roomy_device)
    gamma = g.gamma
    assert g.node_names == ["mem_in.r", "r", "mem_out.r"]
    # row 0: memory feeds r; row 1: r feeds memory out (capped at stream width)
    assert gamma[0, 0] == pytest.approx(1.0)
    assert gamma[0, 1] == pytest.approx(-1.0)
    assert gamma[0, 2] == 0.0
    assert gamma[1, 1] == pytest.approx(1.0)
    assert gamma[1, 2] == pytest.approx(-1.0)


def test_gamma_is_streams_times_rates(roomy_device):
    # producer with s_o = 4 and r_o = 0.5 must show +2.0 in its column
    layer = conv_layer("c", shape(4, 4, 4, 4), 8, kernel=(1, 1, 1),
                       padding=(0, 0, 0))
    blk = make_block(layer, s_i=1, s_o=4, p_mac=1)
    assert blk.r_o == pytest.approx(0.5)
    g = build_sdfg([blk], [], roomy_device)
    out_arc = g.out_arcs("c")[0]
    assert g.gamma[out_arc, g.col("c")] == pytest.approx(2.0)


def _residual_blocks(p_mac=27):
    sh = shape(4, 6, 6, 4)
    relu0 = make_block(act_layer("relu0", sh))
    conv1 = make_block(conv_layer("conv1", sh, 4), p_mac=p_mac)
    swish = make_block(act_layer("swish1", sh, ActType.SWISH))
    conv2 = make_block(conv_layer("conv2", sh, 4), p_mac=p_mac)
    add = make_block(ew_layer("add1", (sh, sh)))
    arcs = [("relu0", "conv1"), ("conv1", "swish1"), ("swish1", "conv2"),
            ("conv2", "add1"), ("relu0", "add1")]
    return [relu0, conv1, swish, conv2, add], arcs


def test_join_has_two_negative_entries(roomy_device):
    blocks, arcs = _residual_blocks()
    g = build_sdfg(blocks, arcs, roomy_device)
    col = g.col("add1")
    negatives = np.nonzero(g.gamma[:, col] < 0)[0]
    assert len(negatives) == 2
    assert len(set(negatives)) == 2  # distinct rows


def test_gamma_pattern_matches_incidence(roomy_device):
    blocks, arcs = _residual_blocks()
    g = build_sdfg(blocks, arcs, roomy_device)
    gamma = g.gamma
    for i, arc in enumerate(g.arcs):
        row = gamma[i]
        pos = np.nonzero(row > 0)[0]
        neg = np.nonzero(row < 0)[0]
        assert list(pos) == [g.col(arc.producer)]
        assert list(neg) == [g.col(arc.consumer)]
        assert np.count_nonzero(row) == 2


def test_sequential_gamma_bidiagonal(roomy_device):
    sh = shape(4, 4, 4, 2)
    blocks = [make_block(act_layer(f"r{i}", sh)) for i in range(4)]
    arcs = [(f"r{i}", f"r{i + 1}") for i in range(3)]
    g = build_sdfg(blocks, arcs, roomy_device)
    gamma = g.gamma
    for i in range(len(g.arcs)):
        nz = np.nonzero(gamma[i])[0]
        assert list(nz) == [i, i + 1]  # upper bi-diagonal under topo order


def test_stream_adapter_penalty(roomy_device):
    sh = shape(8, 4, 4, 2)
    a = make_block(act_layer("a", sh), s_i=8, s_o=8)
    b = make_block(act_layer("b", sh), s_i=2, s_o=2)
    g = build_sdfg([a, b], [("a", "b")], roomy_device)
    ai = [i for i, arc in enumerate(g.arcs)
          if arc.producer == "a" and arc.consumer == "b"][0]
    # the wider producer side is serialized down to the narrow width
    assert g.gamma[ai, g.col("a")] == pytest.approx(8 * 1.0 * (2 / 8))
    assert g.gamma[ai, g.col("b")] == pytest.approx(-2.0)


def test_strict_streams_raises(roomy_device):
    sh = shape(8, 4, 4, 2)
    a = make_block(act_layer("a", sh), s_i=8, s_o=8)
    b = make_block(act_layer("b", sh), s_i=2, s_o=2)
    with pytest.raises(StreamMismatch):
        build_sdfg([a, b], [("a", "b")], roomy_device, strict_streams=True)


def test_disconnected_rejected(roomy_device):
    sh = shape(4, 4, 4, 2)
    a = make_block(act_layer("a", sh))
    b = make_block(act_layer("b", sh))
    with pytest.raises(DisconnectedGraph):
        build_sdfg([a, b], [], roomy_device)


def test_memory_rate_bounded_by_bandwidth(zcu102):
    sh = shape(4, 4, 4, 2)
    relu = make_block(act_layer("r", sh), s_i=4, s_o=4)
    g = build_sdfg([relu], [], zcu102)
    mem = g.mems["mem_in.r"]
    share = zcu102.words_per_cycle / 2
    assert mem.rate == pytest.approx(min(share / 4, 1.0))
    assert 0 < mem.rate <= 1.0


def test_merge_rates_equalized_to_slowest(roomy_device):
    # conv at p_mac=1 trickles at 1/27; the skip side must match it
    blocks, arcs = _residual_blocks(p_mac=1)
    g = build_sdfg(blocks, arcs, roomy_device)
    col = g.col("add1")
    in_rates = sorted(-g.gamma[i, col] for i in g.in_arcs("add1"))
    assert in_rates[0] == pytest.approx(in_rates[1])
    assert in_rates[0] == pytest.approx(1.0 / 27)


def test_equal_arrivals_unchanged(roomy_device):
    blocks, arcs = _residual_blocks(p_mac=27)
    g = build_sdfg(blocks, arcs, roomy_device)
    col = g.col("add1")
    for i in g.in_arcs("add1"):
        assert g.gamma[i, col] == pytest.approx(-1.0)


def test_equalize_idempotent(roomy_device):
    blocks, arcs = _residual_blocks(p_mac=1)
    g = build_sdfg(blocks, arcs, roomy_device)
    before = g.R.copy()
    equalize_merge_rates(g)
    assert np.allclose(before, g.R)


def test_cascaded_joins_see_equalized_rates(roomy_device):
    # two stacked joins; the slow path upstream throttles both
    sh = shape(4, 6, 6, 4)
    relu0 = make_block(act_layer("relu0", sh))
    conv1 = make_block(conv_layer("conv1", sh, 4), p_mac=1)  # rate 1/27
    add1 = make_block(ew_layer("add1", (sh, sh)))
    relu1 = make_block(act_layer("relu1", sh))
    add2 = make_block(ew_layer("add2", (sh, sh)))
    arcs = [("relu0", "conv1"), ("conv1", "add1"), ("relu0", "add1"),
            ("add1", "add2"), ("relu0", "relu1"), ("relu1", "add2")]
    g = build_sdfg([relu0, conv1, add1, relu1, add2], arcs, roomy_device)
    col2 = g.col("add2")
    for i in g.in_arcs("add2"):
        assert g.gamma[i, col2] == pytest.approx(-1.0 / 27)


def test_merge_buffer_symmetric_zero(roomy_device):
    sh = shape(4, 6, 6, 4)
    relu0 = make_block(act_layer("relu0", sh))
    a = make_block(act_layer("a", sh))
    b = make_block(act_layer("b", sh))
    add = make_block(ew_layer("add1", (sh, sh)))
    arcs = [("relu0", "a"), ("relu0", "b"), ("a", "add1"), ("b", "add1")]
    g = build_sdfg([relu0, a, b, add], arcs, roomy_device)
    assert all(d == 0 for d in g.merge_buffers.values())


def test_merge_buffer_covers_deep_path(roomy_device):
    blocks, arcs = _residual_blocks()
    g = build_sdfg(blocks, arcs, roomy_device)
    skip = [i for i, a in enumerate(g.arcs)
            if a.producer == "relu0" and a.consumer == "add1"][0]
    deep_depth = sum(b.depth for b in blocks if b.name in ("conv1", "swish1", "conv2"))
    assert g.merge_buffers[skip] == deep_depth


def test_nested_branch_buffers_resolve_inner_first(roomy_device):
    sh = shape(4, 6, 6, 4)
    relu0 = make_block(act_layer("relu0", sh))
    conv1 = make_block(conv_layer("conv1", sh, 4), p_mac=27)
    add_in = make_block(ew_layer("add_in", (sh, sh)))
    conv2 = make_block(conv_layer("conv2", sh, 4), p_mac=27)
    add_out = make_block(ew_layer("add_out", (sh, sh)))
    arcs = [("relu0", "conv1"), ("conv1", "add_in"), ("relu0", "add_in"),
            ("add_in", "conv2"), ("conv2", "add_out"), ("relu0", "add_out")]
    g = build_sdfg([relu0, conv1, add_in, conv2, add_out], arcs, roomy_device)
    inner_skip = [i for i, a in enumerate(g.arcs)
                  if a.producer == "relu0" and a.consumer == "add_in"][0]
    outer_skip = [i for i, a in enumerate(g.arcs)
                  if a.producer == "relu0" and a.consumer == "add_out"][0]
    assert g.merge_buffers[inner_skip] == conv1.depth
    # outer skip covers the fully resolved inner path
    assert g.merge_buffers[outer_skip] == (conv1.depth + add_in.depth
                                           + conv2.depth)


def test_dump_matrices_format(tmp_path, roomy_device):
    from sdflow.perf import build_workload_matrix
    g = _identity_chain(roomy_device)
    files = dump_matrices(g, build_workload_matrix(g), str(tmp_path / "t_"))
    assert len(files) == 4
    lines = (tmp_path / "t_gamma.csv").read_text().strip().split("\n")
    assert lines[0] == "arc," + ",".join(g.node_names)
    first = lines[1].split(",")
    assert first[0] == "mem_in.r->r"
    assert first[1] == "1.000000"  # six decimal places


def test_memory_split_ratio_from_device():
    from sdflow.resources import DeviceSpec
    dev = DeviceSpec(name="split", dsp_total=100, bram18_total=100,
                     lut_total=1000, ff_total=1000, bandwidth_gbps=0.00256,
                     clock_mhz=160.0, reconfig_time_ms=10.0, mem_split_in=0.75)
    # 0.00256e9 / 2 bytes / 160e6 = 0.008 words/cycle total
    g = _identity_chain(dev)
    assert g.mems["mem_in.r"].rate == pytest.approx(0.008 * 0.75)
    assert g.mems["mem_out.r"].rate == pytest.approx(0.008 * 0.25)
    even = DeviceSpec(name="even", dsp_total=100, bram18_total=100,
                      lut_total=1000, ff_total=1000, bandwidth_gbps=0.00256,
                      clock_mhz=160.0, reconfig_time_ms=10.0)
    g2 = _identity_chain(even)
    assert g2.mems["mem_in.r"].rate == pytest.approx(0.004)


def test_report_carries_block_configs(roomy_device):
    from sdflow.assets import bundled_model
    from sdflow.partitions import evaluate_design, minimal_configs
    from sdflow.report import build_report
    dag = bundled_model("toy_chain")
    dp = evaluate_design(dag, roomy_device, (), minimal_configs(dag), 10)
    rep = build_report(dp, "toy_chain", roomy_device)
    blocks = rep["partitions"][0]["blocks"]
    assert set(blocks) == set(dag.nodes)
    assert blocks["conv1"]["p_mac"] == 1
    assert 0 < blocks["conv1"]["r_i"] <= 1
