"""Differentiation engine tests: finite-difference oracles for every
primitive, double-backward agreement, and the record invariants."""

import numpy as np
import pytest

from unlearn_attack.engine import (
    EngineError,
    NonFiniteError,
    Record,
    ShapeError,
    _log_softmax_rows,
)

RNG = np.random.default_rng(20240811)


def fd_gradient(fn, x0, eps=1e-5):
    """Central finite differences of a scalar-valued fn over a matrix."""
    out = np.zeros_like(x0)
    for idx in np.ndindex(x0.shape):
        hi = x0.copy()
        hi[idx] += eps
        lo = x0.copy()
        lo[idx] -= eps
        out[idx] = (fn(hi) - fn(lo)) / (2 * eps)
    return out


def max_rel_err(a, b):
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-10)
    return np.abs(a - b).max() / scale


# ----------------------------------------------------------------------
# trivial value checks
# ----------------------------------------------------------------------


def test_sigmoid_at_zero_is_half():
    rec = Record()
    out = rec.sigmoid(rec.leaf([[0.0]]))
    assert out.values[0, 0] == 0.5


def test_matmul_identity_returns_operand():
    rec = Record()
    m = RNG.standard_normal((3, 3))
    out = rec.matmul(rec.leaf(np.eye(3)), rec.leaf(m))
    np.testing.assert_allclose(out.values, m)


def test_log_softmax_uniform_row():
    rec = Record()
    out = rec.log_softmax_rows(rec.leaf([[0.0, 0.0]]))
    np.testing.assert_allclose(out.values, [[-np.log(2), -np.log(2)]])


def test_grad_of_sum_of_squares():
    rec = Record()
    x = rec.leaf([[1.0, 2.0]])
    loss = rec.sum(rec.multiply(x, x))
    (g,) = rec.gradient(loss, [x])
    np.testing.assert_allclose(g.values, [[2.0, 4.0]])


def test_second_derivative_of_cube():
    rec = Record()
    x = rec.scalar(2.0)
    y = rec.power(x, 3.0)
    (g1,) = rec.gradient(y, [x])
    assert g1.item() == pytest.approx(12.0)
    (g2,) = rec.gradient(g1, [x])
    assert g2.item() == pytest.approx(12.0)


def test_gradient_of_constant_is_exactly_zero():
    rec = Record()
    x = rec.leaf(RNG.standard_normal((2, 3)))
    unrelated = rec.leaf(RNG.standard_normal((2, 2)))
    loss = rec.sum(rec.multiply(x, x))
    (g,) = rec.gradient(loss, [unrelated])
    assert np.all(g.values == 0.0)


def test_gradient_linearity():
    rec = Record()
    x = rec.leaf(RNG.standard_normal((3, 3)))
    l1 = rec.sum(rec.multiply(x, x))
    l2 = rec.sum(rec.sigmoid(x))
    a, b = 0.7, -1.3
    combo = rec.add(rec.scalar_multiply(l1, a), rec.scalar_multiply(l2, b))
    (g_combo,) = rec.gradient(combo, [x])
    (g1,) = rec.gradient(l1, [x])
    (g2,) = rec.gradient(l2, [x])
    np.testing.assert_allclose(g_combo.values, a * g1.values + b * g2.values, rtol=1e-12)


# ----------------------------------------------------------------------
# finite-difference agreement for every primitive (100 trials total)
# ----------------------------------------------------------------------


def _loss_through(op_builder, x0):
    """Wrap op output into sum(out * probe) so the loss is scalar."""

    def run(x_val):
        rec = Record()
        x = rec.leaf(x_val)
        out = op_builder(rec, x)
        return rec.sum(rec.multiply(out, rec.leaf(run.probe))).item()

    run.probe = None
    return run


UNARY_CASES = {
    "sigmoid": lambda rec, x: rec.sigmoid(x),
    "relu": lambda rec, x: rec.relu(x),
    "log-softmax-rows": lambda rec, x: rec.log_softmax_rows(x),
    "softmax-rows": lambda rec, x: rec.softmax_rows(x),
    "transpose": lambda rec, x: rec.transpose(x),
    "scalar-multiply": lambda rec, x: rec.scalar_multiply(x, 1.7),
    "power": lambda rec, x: rec.power(x, 1.6),
    "sum": lambda rec, x: rec.sum(x),
    "row-select": lambda rec, x: rec.row_select(x, [2, 0, 2]),
    "stack-rows": lambda rec, x: rec.stack_rows(x, rec.leaf(np.ones((2, 4)))),
}


@pytest.mark.parametrize("kind", sorted(UNARY_CASES))
def test_unary_gradients_match_finite_differences(kind):
    trials = 10
    rng = np.random.default_rng(hash(kind) % 2**32)
    for _ in range(trials):
        x0 = rng.uniform(-2, 2, size=(3, 4))
        if kind == "power":
            x0 = rng.uniform(0.5, 2, size=(3, 4))
        if kind == "relu":
            x0[np.abs(x0) < 1e-2] += 0.05  # keep samples away from the kink
        build = UNARY_CASES[kind]
        rec = Record()
        x = rec.leaf(x0)
        out = build(rec, x)
        probe = rng.standard_normal(out.shape)
        loss = rec.sum(rec.multiply(out, rec.leaf(probe)))
        (g,) = rec.gradient(loss, [x])

        def scalar_fn(x_val):
            r2 = Record()
            o2 = build(r2, r2.leaf(x_val))
            return r2.sum(r2.multiply(o2, r2.leaf(probe))).item()

        fd = fd_gradient(scalar_fn, x0)
        assert max_rel_err(g.values, fd) < 1e-5, kind


BINARY_CASES = {
    "matmul": lambda rec, a, b: rec.matmul(a, b),
    "add": lambda rec, a, b: rec.add(a, b),
    "subtract": lambda rec, a, b: rec.subtract(a, b),
    "elementwise-multiply": lambda rec, a, b: rec.multiply(a, b),
    "divide": lambda rec, a, b: rec.divide(a, b),
}


@pytest.mark.parametrize("kind", sorted(BINARY_CASES))
def test_binary_gradients_match_finite_differences(kind):
    trials = 8
    rng = np.random.default_rng(hash(kind) % 2**32)
    for _ in range(trials):
        a0 = rng.uniform(-2, 2, size=(3, 3))
        b0 = rng.uniform(-2, 2, size=(3, 3))
        if kind == "divide":
            b0 = np.sign(b0) * (np.abs(b0) + 0.5)
        build = BINARY_CASES[kind]
        rec = Record()
        a, b = rec.leaf(a0), rec.leaf(b0)
        out = build(rec, a, b)
        probe = rng.standard_normal(out.shape)
        loss = rec.sum(rec.multiply(out, rec.leaf(probe)))
        ga, gb = rec.gradient(loss, [a, b])

        def f_a(v):
            r2 = Record()
            o2 = build(r2, r2.leaf(v), r2.leaf(b0))
            return r2.sum(r2.multiply(o2, r2.leaf(probe))).item()

        def f_b(v):
            r2 = Record()
            o2 = build(r2, r2.leaf(a0), r2.leaf(v))
            return r2.sum(r2.multiply(o2, r2.leaf(probe))).item()

        assert max_rel_err(ga.values, fd_gradient(f_a, a0)) < 1e-5, kind
        assert max_rel_err(gb.values, fd_gradient(f_b, b0)) < 1e-5, kind


def test_block_assemble_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    for _ in range(5):
        tl0 = rng.uniform(-2, 2, size=(3, 3))
        inter0 = rng.uniform(-2, 2, size=(2, 3))
        intra0 = rng.uniform(-2, 2, size=(2, 2))
        probe = rng.standard_normal((5, 5))

        def loss_of(tl, inter, intra):
            rec = Record()
            out = rec.block_assemble(rec.leaf(tl), rec.leaf(inter), rec.leaf(intra))
            return rec.sum(rec.multiply(out, rec.leaf(probe))).item()

        rec = Record()
        tl, inter, intra = rec.leaf(tl0), rec.leaf(inter0), rec.leaf(intra0)
        out = rec.block_assemble(tl, inter, intra)
        loss = rec.sum(rec.multiply(out, rec.leaf(probe)))
        g_tl, g_inter, g_intra = rec.gradient(loss, [tl, inter, intra])
        assert max_rel_err(g_tl.values, fd_gradient(lambda v: loss_of(v, inter0, intra0), tl0)) < 1e-5
        assert max_rel_err(g_inter.values, fd_gradient(lambda v: loss_of(tl0, v, intra0), inter0)) < 1e-5
        assert max_rel_err(g_intra.values, fd_gradient(lambda v: loss_of(tl0, inter0, v), intra0)) < 1e-5


def test_masked_cross_entropy_gradient_vs_finite_differences():
    rng = np.random.default_rng(17)
    logits0 = rng.standard_normal((4, 3))
    labels = rng.integers(0, 3, size=4)
    weights = rng.uniform(0.2, 1.5, size=4)

    rec = Record()
    logits = rec.leaf(logits0)
    loss = rec.masked_cross_entropy(logits, labels, weights)
    (g,) = rec.gradient(loss, [logits])

    def scalar_fn(v):
        r2 = Record()
        return r2.masked_cross_entropy(r2.leaf(v), labels, weights).item()

    fd = fd_gradient(scalar_fn, logits0, eps=1e-5)
    assert max_rel_err(g.values, fd) <= 1e-6


def test_masked_cross_entropy_value_oracle():
    # independent recomputation from definition
    rng = np.random.default_rng(3)
    logits = rng.standard_normal((5, 4))
    labels = rng.integers(0, 4, size=5)
    weights = rng.uniform(0, 1, size=5)
    rec = Record()
    got = rec.masked_cross_entropy(rec.leaf(logits), labels, weights).item()
    expected = 0.0
    for i in range(5):
        z = logits[i]
        expected += weights[i] * (np.log(np.exp(z).sum()) - z[labels[i]])
    assert got == pytest.approx(expected, rel=1e-12)


# ----------------------------------------------------------------------
# double backward
# ----------------------------------------------------------------------


def test_double_backward_through_one_step_update():
    """dL/dv for L(theta - eta * dg/dtheta) matches finite differences on a
    tiny instance (n=8, m=2, d=4)."""
    rng = np.random.default_rng(99)
    n, m, d, c = 8, 2, 4, 3
    a = rng.uniform(0, 1, size=(n + m, n + m))
    a = (a + a.T) / 2
    theta0 = rng.standard_normal((d, c)) * 0.5
    labels = rng.integers(0, c, size=n + m)
    w_train = rng.uniform(0, 1, size=n + m)
    w_test = rng.uniform(0, 1, size=n + m)
    eta = 0.25
    v0 = rng.standard_normal((m, d))
    x_top = rng.standard_normal((n, d))

    def loss_value_and_grad(v_val, want_grad):
        rec = Record()
        v = rec.leaf(v_val)
        x = rec.stack_rows(rec.leaf(x_top), v)
        th = rec.leaf(theta0)
        logits = rec.matmul(rec.leaf(a), rec.matmul(x, th))
        g_obj = rec.masked_cross_entropy(logits, labels, w_train)
        (gth,) = rec.gradient(g_obj, [th])
        th_un = rec.subtract(th, rec.scalar_multiply(gth, eta))
        logits_un = rec.matmul(rec.leaf(a), rec.matmul(x, th_un))
        loss = rec.masked_cross_entropy(logits_un, labels, w_test)
        if not want_grad:
            return loss.item(), None
        (gv,) = rec.gradient(loss, [v])
        return loss.item(), gv.values

    _, analytic = loss_value_and_grad(v0, True)
    fd = fd_gradient(lambda v: loss_value_and_grad(v, False)[0], v0, eps=1e-5)
    assert max_rel_err(analytic, fd) <= 1e-4


# ----------------------------------------------------------------------
# record invariants and error handling
# ----------------------------------------------------------------------


def test_replay_reproduces_cached_values_exactly():
    rng = np.random.default_rng(8)
    rec = Record()
    x = rec.leaf(rng.standard_normal((4, 4)))
    w = rec.leaf(rng.standard_normal((4, 2)))
    logits = rec.matmul(rec.sigmoid(x), w)
    loss = rec.masked_cross_entropy(logits, [0, 1, 0, 1], [1.0, 0.5, 0.0, 1.0])
    rec.gradient(loss, [w, x])
    assert rec.replay()


def test_topological_order_of_record():
    rec = Record()
    x = rec.leaf([[1.0, 2.0]])
    y = rec.sigmoid(x)
    loss = rec.sum(y)
    rec.gradient(loss, [x])
    for nid, node in enumerate(rec._nodes):
        assert all(inp < nid for inp in node.inputs)


def test_shape_mismatch_rejected_with_kind():
    rec = Record()
    a = rec.leaf(np.ones((2, 3)))
    b = rec.leaf(np.ones((2, 3)))
    with pytest.raises(ShapeError, match="matmul"):
        rec.matmul(a, b)
    with pytest.raises(ShapeError, match="add"):
        rec.add(a, rec.leaf(np.ones((3, 2))))


def test_non_finite_output_rejected():
    rec = Record()
    z = rec.leaf([[0.0]])
    with pytest.raises(NonFiniteError):
        rec.divide(rec.leaf([[1.0]]), z)
    with pytest.raises(NonFiniteError):
        rec.power(z, -0.5)


def test_non_scalar_loss_rejected():
    rec = Record()
    x = rec.leaf(np.ones((2, 2)))
    with pytest.raises(ShapeError):
        rec.gradient(x, [x])


def test_unknown_kind_rejected():
    rec = Record()
    with pytest.raises(EngineError, match="unknown"):
        rec.build_op("convolve", rec.leaf([[1.0]]))


def test_build_op_dispatch_matches_methods():
    rec = Record()
    x = rec.leaf([[0.3, -0.7]])
    via_dispatch = rec.build_op("sigmoid", x)
    via_method = rec.sigmoid(x)
    np.testing.assert_array_equal(via_dispatch.values, via_method.values)


def test_relu_derivative_at_zero_is_zero():
    rec = Record()
    x = rec.leaf([[0.0, 1.0, -1.0]])
    loss = rec.sum(rec.relu(x))
    (g,) = rec.gradient(loss, [x])
    np.testing.assert_array_equal(g.values, [[0.0, 1.0, 0.0]])


def test_log_softmax_internal_stability():
    # max-shift keeps large logits finite
    big = np.array([[1000.0, 0.0], [-1000.0, 0.0]])
    out = _log_softmax_rows(big)
    assert np.all(np.isfinite(out))
