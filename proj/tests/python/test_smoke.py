import numpy as np
import pytest

import stsm


def manual_shift(x, channel_lo, channel_hi, axis, offset):
    """Zero-fill unit shift of x[:, lo:hi] along a (t|h|w) axis index."""
    out = x.copy()
    block = np.zeros_like(x[:, channel_lo:channel_hi])
    src = x[:, channel_lo:channel_hi]
    idx_dst = [slice(None)] * block.ndim
    idx_src = [slice(None)] * block.ndim
    if offset == 1:
        idx_dst[axis] = slice(1, None)
        idx_src[axis] = slice(None, -1)
    else:
        idx_dst[axis] = slice(None, -1)
        idx_src[axis] = slice(1, None)
    block[tuple(idx_dst)] = src[tuple(idx_src)]
    out[:, channel_lo:channel_hi] = block
    return out


def test_temporal_shift_matches_numpy():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 8, 4, 5, 5))
    got = stsm.apply_shift(x, "pattern=T f=1/2")
    # 8 channels, f=1/2, one group: channels [0,2) forward, [2,4) backward
    want = manual_shift(x, 0, 2, axis=2, offset=1)
    want = manual_shift(want, 2, 4, axis=2, offset=-1)
    np.testing.assert_array_equal(got, want)


def test_shift_agrees_with_sparse_conv_reference():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 16, 4, 6, 6))
    a = stsm.apply_shift(x, "pattern=T+HW f=3/8")
    b = stsm.sparse_conv_reference(x, "pattern=T+HW f=3/8")
    np.testing.assert_array_equal(a, b)


def test_shift_layout_partition():
    layout = stsm.shift_layout(64, "pattern=T+H+W f=3/8")
    shifted = layout["shifted"]
    assert [(r["start"], r["end"]) for r in shifted] == [
        (0, 4), (4, 8), (8, 12), (12, 16), (16, 20), (20, 24)]
    assert (layout["identity"]["start"], layout["identity"]["end"]) == (24, 64)


def test_zero_overhead_cost():
    dims = (1, 1, 8, 32, 32)
    with_shift = stsm.Network("tiny", 1, 4, "pattern=T+H+W f=3/8", seed=3)
    without = stsm.Network("tiny", 1, 4, "pattern=none f=0", seed=3)
    assert with_shift.cost_totals(dims) == without.cost_totals(dims)
    assert with_shift.parameter_count() == without.parameter_count()


def test_network_forward_shapes_and_determinism():
    clips, labels = stsm.generate_clips(8, seed=5, frames=4, height=16, width=16, square=3)
    assert clips.shape == (8, 1, 4, 16, 16)
    assert sorted(labels) == [0, 0, 1, 1, 2, 2, 3, 3]

    net = stsm.Network("micro", 1, 4, "pattern=T+H+W f=3/8", seed=9)
    logits = net.forward(clips)
    assert logits.shape == (8, 4)
    np.testing.assert_array_equal(logits, net.forward(clips))

    loss = stsm.softmax_cross_entropy(logits, labels)
    assert loss > 0.0


def test_generate_clips_reversal_pairs():
    clips, labels = stsm.generate_clips(4, seed=11, frames=6, height=20, width=20, square=4,
                                        noise=0.0)
    # right clip at even index, its left partner (exact time reversal) next
    assert labels[0] == 0 and labels[1] == 1
    np.testing.assert_array_equal(clips[1], clips[0][:, ::-1])


def test_tensor_file_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 2, 3, 4, 5))
    path = str(tmp_path / "x.t5")
    stsm.save_tensor(x, path)
    np.testing.assert_array_equal(stsm.load_tensor(path), x)


def test_errors_are_typed():
    with pytest.raises(stsm.ConfigError):
        stsm.apply_shift(np.zeros((1, 4, 2, 2, 2)), "pattern=T+X f=1/4")
    with pytest.raises(stsm.ShapeError):
        stsm.apply_shift(np.zeros((4, 2, 2, 2)), "pattern=T f=1/4")
