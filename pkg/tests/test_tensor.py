"""Autodiff engine checks: every primitive against finite differences, plus
structural properties of the tape (shared subexpressions, reuse errors)."""

import numpy as np
import pytest
from conftest import fd_grad, rel_err

from molgrow.errors import ShapeError
from molgrow.nn import (
    Adam,
    Tape,
    Tensor,
    add,
    bce_with_logits,
    concat,
    div,
    elu,
    gather_rows,
    gru_cell,
    layer_norm,
    leaky_relu,
    linear,
    matmul,
    mul,
    relu,
    rows_dot,
    segment_softmax,
    segment_sum,
    sigmoid,
    softmax,
    softplus,
    sub,
    tanh,
    tlog,
    tmean,
    tsum,
)

PRIM_TOL = 1e-4
COMP_TOL = 1e-3


def check_grads(build_loss, tensors, tol=PRIM_TOL):
    """Backprop through build_loss() and compare against finite differences."""
    with Tape() as tape:
        loss = build_loss()
    tape.backward(loss)
    numeric = fd_grad(lambda: float(build_loss().data), tensors)
    for name, t in tensors.items():
        assert t.grad is not None, f"no gradient reached {name}"
        err = rel_err(t.grad, numeric[name])
        assert err < tol, f"{name}: rel err {err:.2e} >= {tol}"
        t.grad = None


def rand_t(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def proj(rng, shape):
    """Fixed random projection to a scalar so all output entries matter."""
    return Tensor(rng.normal(size=shape))


class TestPrimitiveGradients:
    def test_add_sub_mul_div(self, rng):
        a, b = rand_t(rng, 5, 7), rand_t(rng, 5, 7)
        b.data = np.abs(b.data) + 0.5  # keep div well-conditioned
        r = proj(rng, (5, 7))
        check_grads(lambda: tsum(mul(add(a, b), r)), {"a": a, "b": b})
        check_grads(lambda: tsum(mul(sub(a, b), r)), {"a": a, "b": b})
        check_grads(lambda: tsum(mul(mul(a, b), r)), {"a": a, "b": b})
        check_grads(lambda: tsum(mul(div(a, b), r)), {"a": a, "b": b})

    def test_add_broadcast_bias(self, rng):
        x, b = rand_t(rng, 5, 7), rand_t(rng, 7)
        r = proj(rng, (5, 7))
        check_grads(lambda: tsum(mul(add(x, b), r)), {"x": x, "b": b})

    def test_matmul(self, rng):
        a, b = rand_t(rng, 5, 7), rand_t(rng, 7, 4)
        r = proj(rng, (5, 4))
        check_grads(lambda: tsum(mul(matmul(a, b), r)), {"a": a, "b": b})

    def test_matmul_shape_error(self, rng):
        with pytest.raises(ShapeError):
            matmul(rand_t(rng, 5, 7), rand_t(rng, 5, 7))

    def test_concat(self, rng):
        a, b = rand_t(rng, 5, 7), rand_t(rng, 3, 7)
        r = proj(rng, (8, 7))
        check_grads(lambda: tsum(mul(concat([a, b], axis=0), r)), {"a": a, "b": b})
        c = rand_t(rng, 5, 2)
        r2 = proj(rng, (5, 9))
        check_grads(lambda: tsum(mul(concat([a, c], axis=1), r2)), {"a": a, "c": c})

    def test_gather_rows_with_repeats(self, rng):
        x = rand_t(rng, 5, 7)
        idx = np.array([0, 2, 2, 4, 1, 2])
        r = proj(rng, (6, 7))
        check_grads(lambda: tsum(mul(gather_rows(x, idx), r)), {"x": x})

    def test_sum_mean_axes(self, rng):
        x = rand_t(rng, 5, 7)
        r0 = proj(rng, (7,))
        r1 = proj(rng, (5,))
        check_grads(lambda: tsum(mul(tsum(x, axis=0), r0)), {"x": x})
        check_grads(lambda: tsum(mul(tmean(x, axis=1), r1)), {"x": x})
        check_grads(lambda: tsum(x), {"x": x})

    @pytest.mark.parametrize(
        "op", [softmax, relu, leaky_relu, elu, sigmoid, softplus, tanh, layer_norm]
    )
    def test_elementwise_and_rowwise(self, rng, op):
        x = rand_t(rng, 5, 7)
        r = proj(rng, (5, 7))
        check_grads(lambda: tsum(mul(op(x), r)), {"x": x})

    def test_log(self, rng):
        x = Tensor(np.abs(rng.normal(size=(5, 7))) + 0.5, requires_grad=True)
        r = proj(rng, (5, 7))
        check_grads(lambda: tsum(mul(tlog(x), r)), {"x": x})

    def test_segment_sum(self, rng):
        x = rand_t(rng, 6, 7)
        seg = np.array([0, 0, 1, 2, 2, 2])
        r = proj(rng, (3, 7))
        check_grads(lambda: tsum(mul(segment_sum(x, seg, 3), r)), {"x": x})

    def test_segment_softmax(self, rng):
        z = rand_t(rng, 6)
        seg = np.array([0, 0, 1, 2, 2, 2])
        r = proj(rng, (6,))
        check_grads(lambda: tsum(mul(segment_softmax(z, seg, 3), r)), {"z": z})


class TestCompositeGradients:
    def test_linear(self, rng):
        x, w, b = rand_t(rng, 5, 7), rand_t(rng, 7, 4), rand_t(rng, 4)
        r = proj(rng, (5, 4))
        check_grads(lambda: tsum(mul(linear(x, w, b), r)), {"x": x, "w": w, "b": b}, COMP_TOL)

    def test_rows_dot(self, rng):
        a, b = rand_t(rng, 5, 7), rand_t(rng, 5, 7)
        r = proj(rng, (5,))
        check_grads(lambda: tsum(mul(rows_dot(a, b), r)), {"a": a, "b": b}, COMP_TOL)

    def test_gru_cell(self, rng):
        d = 8
        params = {}
        for gate in ("rh", "rx", "sh", "sx", "th", "tx"):
            params[f"g.{gate}.w"] = rand_t(rng, d, d)
            params[f"g.{gate}.b"] = rand_t(rng, d)
        h, x = rand_t(rng, 3, d), rand_t(rng, 3, d)
        r = proj(rng, (3, d))
        check_grads(
            lambda: tsum(mul(gru_cell(h, x, params, "g"), r)),
            {**params, "h": h, "x": x},
            COMP_TOL,
        )

    def test_bce_with_logits(self, rng):
        z = rand_t(rng, 9)
        y = (rng.random(9) > 0.5).astype(float)
        check_grads(lambda: bce_with_logits(z, y), {"z": z}, COMP_TOL)

    def test_shared_subexpression_dag(self, rng):
        # z = y + 3y with y = x*x collapses to 4x^2, so dz/dx = 8x exactly
        x = rand_t(rng, 4)
        with Tape() as tape:
            y = mul(x, x)
            z = tsum(add(y, mul(Tensor(3.0), y)))
        tape.backward(z)
        np.testing.assert_allclose(x.grad, 8.0 * x.data, rtol=1e-12)


class TestForwardValues:
    def test_activation_anchors(self):
        z = Tensor(np.array([0.0]))
        assert sigmoid(z).data[0] == pytest.approx(0.5)
        assert softplus(z).data[0] == pytest.approx(np.log(2.0))
        x = Tensor(np.array([-30.0, 0.0, 2.0]))
        np.testing.assert_allclose(elu(x).data, [np.expm1(-30.0), 0.0, 2.0])
        np.testing.assert_allclose(leaky_relu(x).data, [-0.3, 0.0, 2.0])

    def test_softmax_rows_sum_to_one_and_shift_invariance(self, rng):
        x = Tensor(rng.normal(size=(4, 6)))
        s = softmax(x).data
        np.testing.assert_allclose(s.sum(axis=1), np.ones(4), rtol=1e-12)
        s2 = softmax(Tensor(x.data + 100.0)).data
        np.testing.assert_allclose(s, s2, rtol=1e-12)

    def test_layer_norm_moments(self, rng):
        y = layer_norm(Tensor(rng.normal(size=(5, 16)) * 3 + 2)).data
        np.testing.assert_allclose(y.mean(axis=1), np.zeros(5), atol=1e-12)
        np.testing.assert_allclose(y.var(axis=1), np.ones(5), rtol=1e-5)

    def test_layer_norm_constant_row_is_zero(self):
        y = layer_norm(Tensor(np.full((2, 8), 3.7))).data
        np.testing.assert_allclose(y, np.zeros((2, 8)))

    def test_segment_softmax_normalizes_per_segment(self, rng):
        z = Tensor(rng.normal(size=8))
        seg = np.array([0, 0, 0, 1, 1, 3, 3, 3])
        s = segment_softmax(z, seg, 4).data
        assert s[:3].sum() == pytest.approx(1.0)
        assert s[3:5].sum() == pytest.approx(1.0)
        assert s[5:].sum() == pytest.approx(1.0)

    def test_sigmoid_extreme_logits_stable(self):
        s = sigmoid(Tensor(np.array([-1000.0, 1000.0]))).data
        assert np.all(np.isfinite(s))
        assert s[0] == pytest.approx(0.0)
        assert s[1] == pytest.approx(1.0)


class TestTapeMechanics:
    def test_tape_single_use(self, rng):
        x = rand_t(rng, 3)
        with Tape() as tape:
            y = tsum(mul(x, x))
        tape.backward(y)
        with pytest.raises(RuntimeError):
            tape.backward(y)

    def test_no_recording_outside_tape(self, rng):
        x = rand_t(rng, 3)
        y = tsum(mul(x, x))
        assert not y.requires_grad

    def test_zero_weight_gru_halves_state(self, rng):
        d = 8
        params = {}
        for gate in ("rh", "rx", "sh", "sx", "th", "tx"):
            params[f"g.{gate}.w"] = Tensor(np.zeros((d, d)), requires_grad=True)
            params[f"g.{gate}.b"] = Tensor(np.zeros(d), requires_grad=True)
        h = Tensor(rng.normal(size=(3, d)))
        x = Tensor(rng.normal(size=(3, d)))
        out = gru_cell(h, x, params, "g")
        np.testing.assert_allclose(out.data, 0.5 * x.data, rtol=1e-12)


class TestAdam:
    def test_first_step_magnitude_is_lr(self):
        p = Tensor(np.array([10.0, -4.0]), requires_grad=True)
        opt = Adam({"p": p}, lr=1e-3)
        p.grad = np.array([2.0, -7.0])
        opt.step()
        np.testing.assert_allclose(np.abs(p.data - np.array([10.0, -4.0])), 1e-3, rtol=1e-6)

    def test_quadratic_convergence(self, rng):
        target = rng.normal(size=5)
        p = Tensor(np.zeros(5), requires_grad=True)
        opt = Adam({"p": p}, lr=0.05)
        for _ in range(2000):
            opt.zero_grad()
            with Tape() as tape:
                diff = sub(p, Tensor(target))
                loss = tsum(mul(diff, diff))
            tape.backward(loss)
            opt.step()
        np.testing.assert_allclose(p.data, target, atol=1e-3)
