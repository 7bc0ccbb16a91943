import math

import pytest
from hypothesis import given, strategies as st

from conftest import act_layer, conv_layer, ew_layer, gap_layer, pool_layer, shape
from sdflow.blocks import (compute_rates, divisors, is_maxed, make_block,
                           max_parallelism)
from sdflow.errors import IllegalParallelism


def test_relu_rates_are_unit():
    b = make_block(act_layer("r", shape(16, 8, 8, 4)), s_i=4, s_o=4)
    assert b.r_i == 1.0 and b.r_o == 1.0


def test_gap_production_rate():
    b = make_block(gap_layer("g", shape(8, 7, 7, 16)))
    assert b.r_o == pytest.approx(1.0 / (7 * 7 * 16))
    assert b.r_i == 1.0


def test_conv_fully_unrolled_preserving():
    layer = conv_layer("c", shape(4, 8, 8, 4), 4)
    b = make_block(layer, p_mac=27)
    assert b.r_i == pytest.approx(1.0)
    assert b.r_o == pytest.approx(1.0)


def test_conv_single_mac_rate():
    layer = conv_layer("c", shape(4, 8, 8, 4), 4)
    b = make_block(layer, p_mac=1)
    assert b.r_i == pytest.approx(1.0 / 27)


def test_pool_decimation_rate():
    layer = pool_layer("p", shape(4, 8, 8, 8))
    b = make_block(layer)
    assert b.r_o == pytest.approx(b.r_i / 8.0)
    assert b.r_i == pytest.approx(1.0)


def test_conv_rate_clipping_folds_back():
    # 16x filter expansion would out-produce one element/cycle/stream
    layer = conv_layer("c", shape(4, 8, 8, 4), 64, kernel=(1, 1, 1),
                       padding=(0, 0, 0))
    b = make_block(layer, p_mac=1)
    assert b.r_o == 1.0
    assert b.r_i == pytest.approx(1.0 / 16)
    assert 0 < b.r_i <= 1 and 0 < b.r_o <= 1


def test_depth_relu_is_one():
    assert make_block(act_layer("r", shape(8, 4, 4, 4))).depth == 1


def test_depth_pointwise_full_streams():
    layer = conv_layer("c", shape(8, 4, 4, 4), 8, kernel=(1, 1, 1),
                       padding=(0, 0, 0))
    assert make_block(layer, s_i=8, s_o=8).depth == 1


def _window_fill_reference(h, w, d, kh, kw, kd):
    """Cycles until the first full window, streaming in raster order
    (width fastest, then height, then depth)."""
    cycles = 0
    for dd in range(d):
        for hh in range(h):
            for ww in range(w):
                cycles += 1
                if dd >= kd - 1 and hh >= kh - 1 and ww >= kw - 1:
                    return cycles
    return cycles


def test_depth_conv_matches_window_reference():
    layer = conv_layer("c", shape(1, 8, 8, 8), 1, kernel=(3, 3, 3),
                       padding=(1, 1, 1))
    fill = _window_fill_reference(8, 8, 8, 3, 3, 3)
    assert fill == (3 - 1) * 64 + (3 - 1) * 8 + 3
    assert make_block(layer, p_mac=1).depth == fill + math.ceil(math.log2(27))
    assert make_block(layer, p_mac=1).depth == 152


def test_gap_depth_is_full_map():
    b = make_block(gap_layer("g", shape(8, 4, 4, 4)), s_i=2, s_o=2)
    assert b.depth == 8 * 4 * 4 * 4 // 2


def test_illegal_parallelism():
    layer = conv_layer("c", shape(6, 4, 4, 4), 8)
    with pytest.raises(IllegalParallelism):
        make_block(layer, s_i=4)  # 4 does not divide 6
    with pytest.raises(IllegalParallelism):
        make_block(layer, s_i=1, s_o=3)  # 3 does not divide 8
    with pytest.raises(IllegalParallelism):
        make_block(layer, p_mac=28)  # above kernel volume
    with pytest.raises(IllegalParallelism):
        make_block(act_layer("r", shape(4, 2, 2, 2)), s_i=2, s_o=4)


def test_depthwise_ties_streams():
    layer = conv_layer("c", shape(8, 4, 4, 4), 8, groups=8)
    b = make_block(layer, s_i=4, s_o=4, p_mac=2)
    assert b.s_o == b.s_i
    with pytest.raises(IllegalParallelism):
        make_block(layer, s_i=4, s_o=8, p_mac=2)


def test_elementwise_rate_transparent():
    s = shape(8, 4, 4, 4)
    b = make_block(ew_layer("e", (s, s)))
    assert b.r_i == b.r_o == 1.0
    assert b.r_i2 == 1.0


def test_broadcast_secondary_rate_scales_with_tokens():
    s = shape(8, 4, 4, 4)
    side = shape(8, 1, 1, 1)
    from sdflow.model import EwMode, EwType
    b = make_block(ew_layer("e", (s, side), ew=EwType.MUL, mode=EwMode.BROADCAST))
    assert b.r_i == 1.0
    assert b.r_i2 == pytest.approx(1.0 / (4 * 4 * 4))


@given(st.integers(1, 3).map(lambda k: (k, k, k)),
       st.sampled_from([1, 2, 4, 8]), st.sampled_from([1, 2, 4, 8]))
def test_rate_monotonicity_in_p_mac(kernel, c_in, c_out):
    layer = conv_layer("c", shape(c_in, 6, 6, 6), c_out, kernel=kernel,
                       padding=tuple(k // 2 for k in kernel))
    vol = kernel[0] ** 3
    prev = compute_rates(layer, 1, 1, 1)
    for p in range(2, vol + 1):
        cur = compute_rates(layer, 1, 1, p)
        assert cur.r_in[0] >= prev.r_in[0] - 1e-12
        assert cur.r_out >= prev.r_out - 1e-12
        prev = cur


def test_max_parallelism_and_is_maxed():
    layer = conv_layer("c", shape(4, 4, 4, 4), 8)
    assert max_parallelism(layer) == (4, 8, 27)
    assert is_maxed(make_block(layer, 4, 8, 27))
    assert not is_maxed(make_block(layer, 4, 8, 26))


def test_divisors():
    assert divisors(8) == [1, 2, 4, 8]
    assert divisors(1) == [1]
