import math

import numpy as np
import pytest

from pbgru import numerics as nx
from pbgru.errors import NumericError, ShapeError
from pbgru.gradsuite import PRIMITIVE_TOL, primitive_cases
from pbgru.numerics import AdamState, Rng, Tensor, adam_step, grad_check
from pbgru.numerics.checkpoint import from_bytes, load_json, save_json, to_bytes


def test_matmul_examples():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(nx.matmul(Tensor(np.eye(2)), Tensor(m)).values, m)
    assert nx.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).values.tolist() == [[11.0]]


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        nx.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_elementwise_examples():
    assert nx.elementwise("tanh", Tensor(0.0)).item() == 0.0
    assert nx.elementwise("sigmoid", Tensor(0.0)).item() == 0.5
    assert nx.elementwise("relu", Tensor([-1.0, 2.0])).values.tolist() == [0.0, 2.0]
    joined = nx.elementwise("concat", Tensor(np.ones((2, 1))), Tensor(np.zeros((2, 2))))
    assert joined.values.tolist() == [[1, 0, 0], [1, 0, 0]]


def test_binary_ops_reject_broadcast_except_bias():
    with pytest.raises(ShapeError):
        nx.mul(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))
    with pytest.raises(ShapeError):
        nx.add(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 1))))
    out = nx.add(Tensor(np.zeros((2, 3))), Tensor([1.0, 2.0, 3.0]))
    assert out.values.tolist() == [[1, 2, 3], [1, 2, 3]]


def test_nan_is_an_error():
    with pytest.raises(NumericError):
        nx.exp(Tensor([1000.0]))
    with pytest.raises(NumericError):
        Tensor([math.nan])


def test_softmax_examples():
    assert np.allclose(nx.softmax_over_axis(Tensor([0.0, 0.0, 0.0]), 0).values, 1 / 3)
    out = nx.softmax_over_axis(Tensor(np.log([1.0, 2.0, 3.0])), 0).values
    assert np.allclose(out, [1 / 6, 2 / 6, 3 / 6], atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_softmax_rows_sum_to_one(seed):
    x = Rng(seed).normal(0, 30, (4, 7, 3))
    for axis in range(3):
        out = nx.softmax(Tensor(x), axis=axis).values
        assert np.all(out >= 0)
        assert np.max(np.abs(out.sum(axis=axis) - 1)) <= 1e-12


def test_backward_examples():
    x = Tensor(Rng(1).normal(0, 1, (3, 2)), requires_grad=True)
    x.sum().backward()
    assert np.array_equal(x.grad, np.ones((3, 2)))

    x = Tensor(Rng(2).normal(0, 1, (4,)), requires_grad=True)
    ((x * x).sum() * 0.5).backward()
    assert np.allclose(x.grad, x.values)


def test_backward_accumulates_until_reset():
    x = Tensor([1.0, 2.0], requires_grad=True)
    for _ in range(2):
        (x * 3.0).sum().backward()
    assert x.grad.tolist() == [6.0, 6.0]
    nx.zero_grad([x])
    assert x.grad is None


def test_backward_reuses_shared_subexpression():
    x = Tensor([2.0], requires_grad=True)
    y = x * x
    (y * y).sum().backward()  # d/dx x^4 = 4x^3
    assert x.grad.tolist() == [32.0]


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        (x * 2.0).backward()


def test_adam_zero_gradient_is_fixed_point():
    p = {"w": Tensor([1.5, -2.0])}
    new, state = adam_step(p, {"w": np.zeros(2)}, AdamState())
    assert np.array_equal(new["w"].values, p["w"].values)
    assert state.step == 1


def test_adam_first_step_moves_by_lr():
    new, _ = adam_step({"w": Tensor(0.0)}, {"w": np.array(1.0)}, AdamState(lr=0.1))
    assert new["w"].item() == pytest.approx(-0.1, rel=1e-6)


def test_adam_converges_on_bowl():
    params, state = {"w": Tensor(0.0)}, AdamState(lr=0.1)
    for _ in range(200):
        params, state = adam_step(params, {"w": 2 * (params["w"].values - 3.0)}, state)
    assert abs(params["w"].item() - 3.0) < 0.05
    assert state.step == 200


def test_adam_refuses_nan_gradient():
    p = {"w": Tensor([1.0])}
    state = AdamState()
    with pytest.raises(NumericError):
        adam_step(p, {"w": np.array([math.nan])}, state)
    assert state.step == 0


def test_grad_check_on_sum_is_tight():
    report = grad_check(lambda t: t["x"].sum(), {"x": Rng(0).normal(0, 1, (3, 4))})
    assert report.worst < 1e-10


def test_grad_check_flags_wrong_rule():
    inputs = {"x": Rng(0).normal(0, 1, (2, 3))}
    with nx.inject_wrong_gradient("tanh"):
        report = grad_check(lambda t: nx.tanh(t["x"]).sum(), inputs)
    assert not report.passed
    assert report.failures == ["x"]


@pytest.mark.parametrize("seed", range(20))
def test_primitive_gradients_across_seeds(seed):
    for name, fn, inputs in primitive_cases(Rng(seed)):
        report = grad_check(fn, inputs, PRIMITIVE_TOL)
        assert report.passed, f"{name}: {report.max_rel_error}"


def test_rng_streams_are_reproducible_and_independent():
    a, b = Rng(7), Rng(7)
    assert np.array_equal(a.normal(0, 1, 5), b.normal(0, 1, 5))
    assert np.array_equal(Rng(7).child("x").random(4), Rng(7).child("x").random(4))
    assert not np.array_equal(Rng(7).child("x").random(4), Rng(7).child("y").random(4))


def test_same_seed_same_ops_bitwise_identical():
    def run():
        r = Rng(3)
        w = Tensor(r.normal(0, 1, (5, 5)), requires_grad=True)
        x = Tensor(r.normal(0, 1, (4, 5)))
        loss = nx.tanh(nx.matmul(x, w)).abs().mean()
        loss.backward()
        return loss.values.tobytes() + w.grad.tobytes()

    assert run() == run()


def test_checkpoint_binary_round_trip(tmp_path):
    params = {"b": np.arange(3.0), "a.w": Rng(0).normal(0, 1, (2, 3, 4)), "s": np.array(1.0 / 3.0)}
    blob = to_bytes(params)
    assert blob.startswith(b"PBGRUCK1")
    back = from_bytes(blob)
    assert list(back) == sorted(params)
    for k, v in params.items():
        assert back[k].shape == v.shape and back[k].tobytes() == v.tobytes()
    nx.save_binary(tmp_path / "c.bin", params)
    assert (tmp_path / "c.bin").read_bytes() == blob


def test_checkpoint_json_round_trip_is_exact(tmp_path):
    params = {"w": Rng(1).normal(0, 1, (3, 2))}
    save_json(tmp_path / "c.json", params)
    assert load_json(tmp_path / "c.json")["w"].tobytes() == params["w"].tobytes()
    assert nx.load_checkpoint(tmp_path / "c.json")["w"].shape == (3, 2)


def test_checkpoint_rejects_garbage():
    with pytest.raises(Exception):
        from_bytes(b"not a checkpoint")
