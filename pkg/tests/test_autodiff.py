"""Finite-difference oracles and contracts for the differentiation engine."""

import numpy as np
import pytest

from umclust import autodiff as ad
from umclust.util import NumericError, rng_for


def test_relu_example():
    out = ad.relu(ad.constant([[-1.0, 2.0]]))
    np.testing.assert_array_equal(out.value, [[0.0, 2.0]])


def test_row_softmax_symmetry():
    out = ad.row_softmax(ad.constant([[0.0, 0.0]]))
    np.testing.assert_array_equal(out.value, [[0.5, 0.5]])


def test_frobenius_sq_hand_sum():
    out = ad.frobenius_sq(ad.constant([[1.0, 2.0], [3.0, 4.0]]))
    assert out.item() == 30.0


def test_backward_square():
    w = ad.Parameter([[3.0]])
    loss = ad.frobenius_sq(w.node)
    ad.backward(loss)
    np.testing.assert_array_equal(w.grad, [[6.0]])


def test_backward_mean_relu_chain():
    w = ad.Parameter([[-1.0, 4.0]])
    loss = ad.mean_all(ad.relu(w.node))
    ad.backward(loss)
    np.testing.assert_array_equal(w.grad, [[0.0, 0.5]])


def test_backward_kl_at_minimum_is_zero():
    u = ad.Parameter([[0.0, 0.0]])
    p = ad.row_softmax(u.node)
    q = ad.constant([[0.5, 0.5]])
    loss = ad.sum_all(ad.multiply(p, ad.subtract(ad.log(p), ad.log(q))))
    ad.backward(loss)
    np.testing.assert_array_equal(u.grad, [[0.0, 0.0]])


def test_backward_rejects_non_scalar():
    w = ad.Parameter([[1.0, 2.0]])
    with pytest.raises(ValueError):
        ad.backward(ad.relu(w.node))


def test_shape_mismatch_raises():
    with pytest.raises(ValueError):
        ad.add(ad.constant([[1.0]]), ad.constant([[1.0, 2.0]]))
    with pytest.raises(ValueError):
        ad.matmul(ad.constant([[1.0, 2.0]]), ad.constant([[1.0, 2.0]]))


def test_non_finite_result_raises():
    big = ad.constant([[1e300]])
    with np.errstate(over="ignore"), pytest.raises(NumericError):
        ad.multiply(big, big)


def _gc(build, params, step=1e-5):
    return ad.grad_check(build, params, step=step).max_rel_err


@pytest.mark.parametrize("prim", [
    "matmul", "add", "subtract", "multiply", "broadcast_add_row", "relu",
    "row_softmax", "transpose", "frobenius_sq", "scale", "mean_all",
    "sum_all", "sum_rows", "log", "sqrt", "reciprocal", "sq_euclidean_to_rows",
])
def test_primitive_jacobians_match_finite_differences(prim):
    """Each primitive, probed with random weights over >= 100 random shapes
    in total across the parametrized cases."""
    rng = rng_for(2024, hash(prim) % 1000)
    for trial in range(8):
        n = int(rng.integers(1, 7))
        c = int(rng.integers(1, 7))
        x = ad.Parameter(rng.normal(size=(n, c)))
        if prim in ("log", "sqrt", "reciprocal"):
            x = ad.Parameter(rng.uniform(0.3, 3.0, size=(n, c)))
        probe = ad.constant(rng.normal(size=(n, c)))

        if prim == "matmul":
            m = int(rng.integers(1, 7))
            y = ad.Parameter(rng.normal(size=(c, m)))
            probe2 = ad.constant(rng.normal(size=(n, m)))
            err = _gc(lambda: ad.sum_all(ad.multiply(probe2, ad.matmul(x.node, y.node))),
                      [x, y])
        elif prim in ("add", "subtract", "multiply"):
            y = ad.Parameter(rng.normal(size=(n, c)))
            op = getattr(ad, prim)
            err = _gc(lambda: ad.sum_all(ad.multiply(probe, op(x.node, y.node))), [x, y])
        elif prim == "broadcast_add_row":
            r = ad.Parameter(rng.normal(size=(1, c)))
            err = _gc(lambda: ad.sum_all(
                ad.multiply(probe, ad.broadcast_add_row(x.node, r.node))), [x, r])
        elif prim == "transpose":
            probe_t = ad.constant(rng.normal(size=(c, n)))
            err = _gc(lambda: ad.sum_all(ad.multiply(probe_t, ad.transpose(x.node))), [x])
        elif prim in ("frobenius_sq", "mean_all", "sum_all"):
            op = getattr(ad, prim)
            err = _gc(lambda: op(x.node), [x])
        elif prim == "scale":
            err = _gc(lambda: ad.sum_all(ad.multiply(probe, ad.scale(x.node, 1.7))), [x])
        elif prim == "sum_rows":
            probe_r = ad.constant(rng.normal(size=(1, c)))
            err = _gc(lambda: ad.sum_all(ad.multiply(probe_r, ad.sum_rows(x.node))), [x])
        elif prim == "sq_euclidean_to_rows":
            pts = rng.normal(size=(int(rng.integers(1, 5)), c))
            probe_k = ad.constant(rng.normal(size=(n, pts.shape[0])))
            err = _gc(lambda: ad.sum_all(
                ad.multiply(probe_k, ad.sq_euclidean_to_rows(x.node, pts))), [x])
        elif prim == "relu":
            # keep entries away from the kink
            x = ad.Parameter(np.where(np.abs(x.value) < 0.05, 0.5, x.value))
            err = _gc(lambda: ad.sum_all(ad.multiply(probe, ad.relu(x.node))), [x])
        else:
            op = getattr(ad, prim)
            err = _gc(lambda: ad.sum_all(ad.multiply(probe, op(x.node))), [x])
        assert err <= 1e-4, f"{prim} trial {trial}: max rel err {err:.2e}"


def test_backward_is_linear_in_the_loss():
    rng = rng_for(7, 1)
    w = ad.Parameter(rng.normal(size=(3, 4)))

    def l1():
        return ad.frobenius_sq(ad.relu(w.node))

    def l2():
        return ad.mean_all(ad.multiply(w.node, w.node))

    a, b = 0.37, -1.25
    ad.zero_grad([w])
    ad.backward(l1())
    g1 = w.grad.copy()
    ad.zero_grad([w])
    ad.backward(l2())
    g2 = w.grad.copy()
    ad.zero_grad([w])
    ad.backward(ad.add(ad.scale(l1(), a), ad.scale(l2(), b)))
    np.testing.assert_allclose(w.grad, a * g1 + b * g2, rtol=0, atol=1e-12)


def test_repeated_use_of_a_node_accumulates_gradient():
    w = ad.Parameter([[2.0]])
    y = ad.multiply(w.node, w.node)   # w appears twice as a parent
    ad.backward(y)
    np.testing.assert_array_equal(w.grad, [[4.0]])


def test_forward_backward_bit_identical_across_reruns():
    def run():
        rng = rng_for(99, 3)
        w = ad.Parameter(rng.normal(size=(5, 4)))
        x = ad.constant(rng.normal(size=(6, 5)))
        z = ad.row_softmax(ad.matmul(x, w.node))
        loss = ad.add(ad.frobenius_sq(z), ad.mean_all(ad.log(z)))
        ad.backward(loss)
        return loss.value.copy(), w.grad.copy()

    v1, g1 = run()
    v2, g2 = run()
    assert np.array_equal(v1, v2)
    assert np.array_equal(g1, g2)


def test_grad_check_step_bounds():
    w = ad.Parameter([[1.0]])
    with pytest.raises(ValueError):
        ad.grad_check(lambda: ad.frobenius_sq(w.node), [w], step=1e-2)


def test_parameter_buffers_zero_initialized():
    p = ad.Parameter([[1.0, 2.0]])
    assert p.m.shape == p.value.shape and p.v.shape == p.value.shape
    assert not p.m.any() and not p.v.any()
