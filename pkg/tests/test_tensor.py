import numpy as np
import pytest

from stvs import tensor
from stvs.tensor import AxisError, ShapeError


def test_reshape_is_pure_metadata():
    t = tensor.as_tensor([1, 2, 3, 4, 5, 6])
    r = tensor.reshape(t, (2, 3))
    assert r.shape == (2, 3)
    assert np.array_equal(r.reshape(-1), t)


def test_reshape_flatten_round_trip_bit_exact():
    rng = np.random.default_rng(0)
    t = tensor.as_tensor(rng.standard_normal(192))
    back = tensor.reshape(tensor.reshape(t, (64, 3)), (192,))
    assert np.array_equal(back, t)


def test_reshape_size_mismatch():
    t = tensor.as_tensor(np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        tensor.reshape(t, (7,))


def test_transpose2_definition():
    t = tensor.as_tensor([[1, 2, 3], [4, 5, 6]])
    got = tensor.transpose2(t, 0, 1)
    assert np.array_equal(got, np.array([[1, 4], [2, 5], [3, 6]], dtype=np.float32))


def test_transpose2_involution():
    rng = np.random.default_rng(1)
    t = tensor.as_tensor(rng.standard_normal((3, 4, 5)))
    back = tensor.transpose2(tensor.transpose2(t, 0, 2), 0, 2)
    assert np.array_equal(back, t)


def test_transpose2_bad_axis():
    t = tensor.as_tensor([1.0, 2.0])
    with pytest.raises(AxisError):
        tensor.transpose2(t, 0, 1)
    with pytest.raises(AxisError):
        tensor.transpose2(tensor.as_tensor(np.zeros((2, 2))), 1, 1)


def test_repeat_axis_block_semantics():
    t = tensor.as_tensor([[1, 2], [3, 4], [5, 6]])  # stands in for [T1, T2, T3]
    rep = tensor.repeat_axis(t, 0, 3)
    assert rep.shape == (9, 2)
    for b in range(3):
        assert np.array_equal(tensor.slice_axis(rep, 0, b * 3, 3), t)


def test_repeat_axis_times_one_identity():
    t = tensor.as_tensor(np.arange(8).reshape(2, 4))
    assert np.array_equal(tensor.repeat_axis(t, 1, 1), t)


def test_repeat_axis_scalar_like():
    t = tensor.as_tensor([7.0])
    assert np.array_equal(tensor.repeat_axis(t, 0, 4), np.full(4, 7.0, dtype=np.float32))


def test_concat_channel_axis():
    a = tensor.as_tensor(np.ones((2, 4, 4)))
    b = tensor.as_tensor(np.zeros((3, 4, 4)))
    out = tensor.concat([a, b], axis=0)
    assert out.shape == (5, 4, 4)
    assert np.array_equal(tensor.slice_axis(out, 0, 0, 2), a)
    assert np.array_equal(tensor.slice_axis(out, 0, 2, 3), b)


def test_concat_single_part_identity():
    a = tensor.as_tensor(np.arange(6).reshape(2, 3))
    assert np.array_equal(tensor.concat([a], axis=0), a)


def test_concat_mismatch():
    a = tensor.as_tensor(np.zeros((2, 4, 4)))
    b = tensor.as_tensor(np.zeros((2, 5, 4)))
    with pytest.raises(ShapeError):
        tensor.concat([a, b], axis=0)


def test_concat_slice_recovers_parts():
    rng = np.random.default_rng(2)
    parts = [tensor.as_tensor(rng.standard_normal((c, 3, 3))) for c in (1, 2, 4)]
    out = tensor.concat(parts, axis=0)
    start = 0
    for p in parts:
        assert np.array_equal(tensor.slice_axis(out, 0, start, p.shape[0]), p)
        start += p.shape[0]


def test_add_relu_sigmoid_basics():
    x = tensor.as_tensor([-1.0, 0.0, 2.0])
    assert np.array_equal(tensor.add(x, np.zeros_like(x)), x)
    assert np.array_equal(tensor.relu(x), np.array([0.0, 0.0, 2.0], dtype=np.float32))
    s = tensor.sigmoid(tensor.as_tensor([0.0]))
    assert s[0] == np.float32(0.5)
    with pytest.raises(ShapeError):
        tensor.add(x, tensor.as_tensor([1.0, 2.0]))


def test_sigmoid_stable_and_bounded():
    x = tensor.as_tensor([-30.0, -3.0, 0.0, 3.0, 30.0])
    s = tensor.sigmoid(x)
    assert np.all(s >= 0.0) and np.all(s <= 1.0)
    assert np.all(np.diff(s) > 0)  # strictly increasing on these inputs


def test_slice_axis_bounds():
    t = tensor.as_tensor(np.arange(10))
    with pytest.raises(ShapeError):
        tensor.slice_axis(t, 0, 8, 3)
    with pytest.raises(AxisError):
        tensor.slice_axis(t, 2, 0, 1)


def test_as_tensor_rejects_zero_sized_axes():
    with pytest.raises(ShapeError):
        tensor.as_tensor(np.zeros((0, 3)))
