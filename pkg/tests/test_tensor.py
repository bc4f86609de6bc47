"""Autodiff engine: forward values, backward rules, finite-difference checks."""

import numpy as np
import pytest

import csasr.tensor as T
from csasr.errors import GraphError, ShapeError, SingularMatrixError
from csasr.gradcheck import grad_check


def test_softmax_symmetry():
    out = T.softmax(T.tensor([0.0, 0.0, 0.0]))
    np.testing.assert_allclose(out.data, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)


def test_inverse_identity():
    out = T.inverse(T.tensor(np.eye(2)))
    np.testing.assert_allclose(out.data, np.eye(2), atol=1e-15)


def test_logsumexp_pairs():
    # lse([a, a]) = a + ln 2, hand value for a = 5
    out = T.logsumexp(T.tensor([5.0, 5.0]))
    assert out.item() == pytest.approx(5.693147180559945, abs=1e-12)


def test_logsumexp_handles_neg_inf():
    out = T.logsumexp(T.tensor([-np.inf, 2.0]))
    assert out.item() == pytest.approx(2.0, abs=1e-15)
    all_inf = T.logsumexp(T.tensor([-np.inf, -np.inf]))
    assert all_inf.item() == -np.inf


def test_backward_square():
    x = T.parameter(3.0)
    loss = x * x
    loss.backward()
    assert x.grad == pytest.approx(6.0)


def test_backward_trace_of_inverse_at_identity():
    # d tr(A^-1)/dA = -(A^-1 A^-1)^T = -I at A = I
    A = T.parameter(np.eye(2), name="A")
    T.trace(T.inverse(A)).backward()
    np.testing.assert_allclose(A.grad, -np.eye(2), atol=1e-12)


def test_softmax_cross_entropy_matches_finite_differences():
    rng = np.random.default_rng(7)
    logits = T.parameter(rng.normal(size=5), name="logits")

    def loss_fn(p):
        return -T.take_along_rows(T.log_softmax(T.reshape(p, (1, 5))), [2]).sum()

    report = grad_check(loss_fn, [logits], h=1e-5, tol=1e-6)
    assert report.passed, str(report)


def test_grad_check_sum_of_squares_tight():
    x = T.parameter(np.array([1.0, -2.0, 0.5]), name="x")
    report = grad_check(lambda p: (p * p).sum(), [x], h=1e-5, tol=1e-9)
    assert report.passed, str(report)


def test_non_scalar_backward_rejected():
    x = T.parameter(np.ones(3))
    with pytest.raises(GraphError):
        (x * x).backward()


def test_double_backward_rejected_and_accumulation_across_graphs():
    x = T.parameter(2.0, name="x")
    loss = x * x
    loss.backward()
    with pytest.raises(GraphError):
        loss.backward()
    # a fresh graph accumulates into the same slot until zero_grad
    (x * x).backward()
    assert x.grad == pytest.approx(8.0)
    x.zero_grad()
    (x * x).backward()
    assert x.grad == pytest.approx(4.0)


def test_shape_error_names_op_and_shapes():
    with pytest.raises(ShapeError) as exc:
        T.matmul(T.tensor(np.ones((2, 3))), T.tensor(np.ones((2, 3))))
    assert exc.value.op == "matmul"
    assert exc.value.shapes == ((2, 3), (2, 3))
    assert "(2, 3)" in str(exc.value)


def test_singular_inverse_carries_condition_diagnostic():
    with pytest.raises(SingularMatrixError) as exc:
        T.inverse(T.tensor([[1.0, 1.0], [1.0, 1.0]]))
    assert exc.value.condition > T.MAX_CONDITION or exc.value.condition == float("inf")


def test_inverse_accuracy_well_conditioned():
    rng = np.random.default_rng(11)
    for _ in range(20):
        A = rng.normal(size=(8, 8)) + 8.0 * np.eye(8)
        inv = T.inverse(T.tensor(A)).data
        assert np.max(np.abs(A @ inv - np.eye(8))) < 1e-10


def test_forward_determinism_bit_identical():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 5))
    w = rng.normal(size=(5, 3))

    def run():
        out = T.softmax(T.tanh(T.matmul(T.tensor(x), T.tensor(w))))
        return out.data.tobytes()

    assert run() == run()


def test_no_grad_blocks_recording():
    x = T.parameter(np.ones(3))
    with T.no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad and y.parents == ()


def test_concat_stack_slice_roundtrip():
    a = T.tensor([[1.0, 2.0]])
    b = T.tensor([[3.0, 4.0]])
    cat = T.concat([a, b], axis=0)
    np.testing.assert_array_equal(cat.data, [[1, 2], [3, 4]])
    st = T.stack([T.tensor([1.0, 2.0]), T.tensor([3.0, 4.0])])
    np.testing.assert_array_equal(st.data, [[1, 2], [3, 4]])
    np.testing.assert_array_equal(st[0].data, [1, 2])
    np.testing.assert_array_equal(st[:, 1].data, [2, 4])


def test_conv1d_matches_direct_sum():
    rng = np.random.default_rng(5)
    sig = rng.normal(size=7)
    ker = rng.normal(size=(2, 3))
    out = T.conv1d(T.tensor(sig), T.tensor(ker)).data
    padded = np.concatenate([[0.0], sig, [0.0]])
    expect = np.zeros((7, 2))
    for i in range(7):
        for c in range(2):
            expect[i, c] = sum(ker[c, j] * padded[i + j] for j in range(3))
    np.testing.assert_allclose(out, expect, atol=1e-14)


def test_outer_and_accumulate():
    u = T.tensor([1.0, 2.0])
    v = T.tensor([3.0, 4.0, 5.0])
    np.testing.assert_array_equal(T.outer(u, v).data, np.outer(u.data, v.data))
    a = T.tensor(np.arange(6.0).reshape(3, 2))
    b = T.tensor(np.arange(12.0).reshape(3, 4))
    np.testing.assert_allclose(T.outer_accumulate(a, b).data, a.data.T @ b.data)


# -- finite-difference sweep over every registered op --------------------------

# each case: (name, builder) where builder(rng) returns (loss_fn, params)
def _scalarize(out, rng):
    w = T.tensor(rng.normal(size=out.data.shape))
    return (out * w).sum()


def _unary_case(op, lo=-2.0, hi=2.0, shape=(3, 4)):
    def build(rng):
        p = T.parameter(rng.uniform(lo, hi, size=shape), name="x")
        w = rng.normal(size=shape)

        def loss_fn(x):
            return (op(x) * T.tensor(w)).sum()

        return loss_fn, [p]

    return build


def _binary_case(op, shape_a=(3, 4), shape_b=(3, 4), lo=-2.0, hi=2.0, out_shape=None):
    def build(rng):
        a = T.parameter(rng.uniform(lo, hi, size=shape_a), name="a")
        b = T.parameter(rng.uniform(lo, hi, size=shape_b), name="b")
        w = rng.normal(size=out_shape or np.broadcast_shapes(shape_a, shape_b))

        def loss_fn(x, y):
            return (op(x, y) * T.tensor(w)).sum()

        return loss_fn, [a, b]

    return build


OP_CASES = {
    "add": _binary_case(T.add),
    "add_broadcast": _binary_case(T.add, shape_a=(3, 4), shape_b=(4,)),
    "sub": _binary_case(T.sub),
    "mul": _binary_case(T.mul),
    "div": _binary_case(T.div, shape_b=(3, 4), lo=0.5, hi=2.0),
    "pow": _unary_case(lambda x: T.pow_const(x, 3.0)),
    "sqrt": _unary_case(lambda x: T.pow_const(x, 0.5), lo=0.5, hi=3.0),
    "tanh": _unary_case(T.tanh),
    "sigmoid": _unary_case(T.sigmoid),
    "exp": _unary_case(T.exp),
    "log": _unary_case(T.log, lo=0.5, hi=3.0),
    "maximum": _unary_case(lambda x: T.maximum(x, 0.4)),
    "softmax": _unary_case(T.softmax),
    "log_softmax": _unary_case(T.log_softmax),
    "logsumexp": _unary_case(T.logsumexp),
    "sum_all": _unary_case(lambda x: x.sum()),
    "sum_axis": _unary_case(lambda x: x.sum(axis=1)),
    "mean_all": _unary_case(lambda x: x.mean()),
    "mean_rows": _unary_case(lambda x: x.mean(axis=0)),
    "reshape": _unary_case(lambda x: x.reshape(4, 3)),
    "transpose": _unary_case(lambda x: x.T),
    "slice": _unary_case(lambda x: x[1:, ::2]),
    "matmul": _binary_case(T.matmul, shape_a=(3, 4), shape_b=(4, 2), out_shape=(3, 2)),
    "outer": _binary_case(T.outer, shape_a=(3,), shape_b=(4,), out_shape=(3, 4)),
    "trace": _unary_case(lambda x: x.trace(), shape=(4, 4)),
    "concat": _binary_case(lambda a, b: T.concat([a, b], axis=1), shape_b=(3, 2), out_shape=(3, 6)),
    "stack": _binary_case(lambda a, b: T.stack([a, b], axis=0), out_shape=(2, 3, 4)),
    "gather_rows": _unary_case(lambda x: T.gather_rows(x, [2, 0, 2])),
    "take_along_rows": _unary_case(lambda x: T.take_along_rows(x, [3, 0, 1])),
    "conv1d": _binary_case(T.conv1d, shape_a=(3, 6), shape_b=(2, 3), out_shape=(3, 6, 2)),
    "inverse": _unary_case(lambda x: T.inverse(x + T.tensor(4.0 * np.eye(4))), shape=(4, 4)),
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients_match_finite_differences(name):
    # 100 randomized trials per op, h = 1e-5, relative tolerance 1e-4
    rng = np.random.default_rng(hash(name) % 2**32)
    for trial in range(100):
        loss_fn, params = OP_CASES[name](rng)
        report = grad_check(loss_fn, params, h=1e-5, tol=1e-4)
        assert report.passed, f"{name} trial {trial}:\n{report}"


def test_grad_check_reports_per_parameter_and_flags():
    x = T.parameter(np.array([1.0, 2.0]), name="x")
    y = T.parameter(np.array([3.0]), name="y")
    report = grad_check(lambda a, b: (a * a).sum() + (b * b * b).sum(), [x, y])
    assert set(report.max_rel_error) == {"x", "y"}
    assert report.passed and report.worst() < 1e-6
