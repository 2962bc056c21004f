import numpy as np
import pytest

from neurograph import autodiff as ad
from neurograph.errors import NumericError

N_TRIALS = 20
EPS = 1e-5
REL_TOL = 1e-4


def numeric_grad(fn, leaf: np.ndarray) -> np.ndarray:
    """Central finite differences of scalar fn() w.r.t. the leaf array in place."""
    grad = np.zeros_like(leaf)
    it = np.nditer(leaf, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = leaf[idx]
        leaf[idx] = orig + EPS
        f_plus = fn()
        leaf[idx] = orig - EPS
        f_minus = fn()
        leaf[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2 * EPS)
    return grad


def check_op(build, leaves, trial):
    """Compare autodiff grads of sum(build(leaves) * R) against central differences.

    ``build`` maps leaf Tensors to an output Tensor; the random projection
    R makes the loss scalar while exercising every output element.
    """
    rng = np.random.default_rng(1000 + trial)
    tensors = [ad.Tensor(leaf, requires_grad=True) for leaf in leaves]
    proj = rng.standard_normal(build(*tensors).data.shape)

    def loss_value():
        fresh = [ad.Tensor(leaf, requires_grad=True) for leaf in leaves]
        return float((build(*fresh).data * proj).sum())

    out = build(*tensors)
    loss = ad.sum_(ad.mul(out, proj))
    ad.backward(loss)
    for t, leaf in zip(tensors, leaves):
        numeric = numeric_grad(loss_value, leaf)
        analytic = t.grad if t.grad is not None else np.zeros_like(leaf)
        err = np.max(np.abs(analytic - numeric))
        scale = max(1.0, float(np.max(np.abs(numeric))))
        assert err / scale <= REL_TOL, f"rel err {err / scale:.2e} on trial {trial}"


def away_from_kink(rng, shape, margin=0.05):
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, x + np.sign(x + 1e-12) * margin, x)


@pytest.mark.parametrize("trial", range(N_TRIALS))
class TestOpGradients:
    def test_add(self, trial):
        rng = np.random.default_rng(trial)
        check_op(ad.add, [rng.standard_normal((3, 4)), rng.standard_normal((3, 4))], trial)

    def test_add_broadcast(self, trial):
        rng = np.random.default_rng(trial)
        check_op(ad.add, [rng.standard_normal((3, 4)), rng.standard_normal((4,))], trial)

    def test_sub(self, trial):
        rng = np.random.default_rng(trial)
        check_op(ad.sub, [rng.standard_normal((2, 5)), rng.standard_normal((2, 5))], trial)

    def test_mul_broadcast(self, trial):
        rng = np.random.default_rng(trial)
        check_op(ad.mul, [rng.standard_normal((4, 2, 3)), rng.standard_normal((2, 3))], trial)

    def test_neg(self, trial):
        rng = np.random.default_rng(trial)
        check_op(ad.neg, [rng.standard_normal((3, 3))], trial)

    def test_matmul(self, trial):
        rng = np.random.default_rng(trial)
        check_op(ad.matmul, [rng.standard_normal((3, 4)), rng.standard_normal((4, 2))], trial)

    def test_sum_axis(self, trial):
        rng = np.random.default_rng(trial)
        check_op(lambda a: ad.sum_(a, axis=1), [rng.standard_normal((3, 5))], trial)

    def test_mean_all(self, trial):
        rng = np.random.default_rng(trial)
        check_op(lambda a: ad.mean_(a), [rng.standard_normal((4, 3))], trial)

    def test_mean_axis(self, trial):
        rng = np.random.default_rng(trial)
        check_op(lambda a: ad.mean_(a, axis=0), [rng.standard_normal((4, 3))], trial)

    def test_reshape(self, trial):
        rng = np.random.default_rng(trial)
        check_op(lambda a: ad.reshape(a, (2, 6)), [rng.standard_normal((3, 4))], trial)

    def test_concat(self, trial):
        rng = np.random.default_rng(trial)
        check_op(
            lambda a, b: ad.concat([a, b], axis=1),
            [rng.standard_normal((3, 2)), rng.standard_normal((3, 4))],
            trial,
        )

    def test_gather_rows(self, trial):
        rng = np.random.default_rng(trial)
        idx = rng.integers(0, 4, size=7)
        check_op(lambda a: ad.gather_rows(a, idx), [rng.standard_normal((4, 3))], trial)

    def test_segment_sum(self, trial):
        rng = np.random.default_rng(trial)
        seg = np.sort(rng.integers(0, 4, size=8))
        check_op(lambda a: ad.segment_sum(a, seg, 4), [rng.standard_normal((8, 2))], trial)

    def test_segment_mean(self, trial):
        rng = np.random.default_rng(trial)
        seg = np.repeat(np.arange(3), 3)
        check_op(lambda a: ad.segment_mean(a, seg, 3), [rng.standard_normal((9, 2))], trial)

    def test_segment_softmax(self, trial):
        rng = np.random.default_rng(trial)
        seg = np.sort(rng.integers(0, 3, size=7))
        seg[0] = 0
        check_op(lambda a: ad.segment_softmax(a, seg, 3), [rng.standard_normal((7, 2))], trial)

    def test_leaky_relu(self, trial):
        rng = np.random.default_rng(trial)
        check_op(lambda a: ad.leaky_relu(a, 0.2), [away_from_kink(rng, (4, 4))], trial)

    def test_elu(self, trial):
        rng = np.random.default_rng(trial)
        check_op(lambda a: ad.elu(a), [away_from_kink(rng, (4, 4))], trial)

    def test_group_norm(self, trial):
        rng = np.random.default_rng(trial)
        check_op(
            lambda x, g, b: ad.group_norm(x, g, b, num_groups=2),
            [
                rng.standard_normal((3, 8)),
                rng.uniform(0.5, 1.5, size=8),
                rng.standard_normal(8),
            ],
            trial,
        )

    def test_dropout_fixed_mask(self, trial):
        rng = np.random.default_rng(trial)
        check_op(
            lambda a: ad.dropout(a, 0.5, np.random.default_rng(trial + 7)),
            [rng.standard_normal((5, 4))],
            trial,
        )

    def test_mlp_composite(self, trial):
        rng = np.random.default_rng(trial)
        check_op(
            lambda x, w1, b1, w2: ad.matmul(ad.elu(ad.add(ad.matmul(x, w1), b1)), w2),
            [
                rng.standard_normal((4, 3)),
                rng.standard_normal((3, 5)),
                rng.standard_normal(5),
                rng.standard_normal((5, 1)),
            ],
            trial,
        )


class TestBackwardSemantics:
    def test_half_squared_norm_gradient_is_identity(self):
        rng = np.random.default_rng(0)
        p = ad.Tensor(rng.standard_normal((6,)), requires_grad=True)
        loss = ad.mul(0.5, ad.sum_(ad.mul(p, p)))
        ad.backward(loss)
        assert np.allclose(p.grad, p.data, atol=1e-12)

    def test_softmax_sum_gradient_is_zero(self):
        rng = np.random.default_rng(1)
        s = ad.Tensor(rng.standard_normal((6, 1)), requires_grad=True)
        seg = np.array([0, 0, 1, 1, 1, 2])
        total = ad.sum_(ad.segment_softmax(s, seg, 3))
        ad.backward(total)
        assert np.allclose(s.grad, 0.0, atol=1e-12)

    def test_grad_accumulates_across_backward_calls(self):
        p = ad.Tensor(np.ones(3), requires_grad=True)
        for _ in range(2):
            ad.backward(ad.sum_(ad.mul(p, 2.0)))
        assert np.allclose(p.grad, 4.0)

    def test_same_tensor_used_twice(self):
        p = ad.Tensor(np.array([3.0]), requires_grad=True)
        ad.backward(ad.mul(p, p))
        assert np.allclose(p.grad, 6.0)

    def test_constant_parents_get_no_grad(self):
        c = ad.Tensor(np.ones(3))
        p = ad.Tensor(np.ones(3), requires_grad=True)
        ad.backward(ad.sum_(ad.mul(c, p)))
        assert c.grad is None and np.allclose(p.grad, 1.0)

    def test_matmul_rejects_1d(self):
        with pytest.raises(ValueError):
            ad.matmul(ad.Tensor(np.ones(3)), ad.Tensor(np.ones((3, 2))))

    def test_segment_mean_rejects_empty_segment(self):
        with pytest.raises(ValueError):
            ad.segment_mean(ad.Tensor(np.ones((2, 2))), np.array([0, 2]), 3)

    def test_dropout_rate_validation(self):
        with pytest.raises(ValueError):
            ad.dropout(ad.Tensor(np.ones(3)), 1.0, np.random.default_rng(0))


class TestNanChecks:
    def test_forward_nan_raises_with_op_name(self):
        ad.set_nan_checks(True)
        try:
            a = ad.Tensor(np.array([1e308]), requires_grad=True)
            with pytest.raises(NumericError, match="mul"):
                ad.mul(a, np.array([1e308]))
        finally:
            ad.set_nan_checks(False)

    def test_disabled_by_default(self):
        a = ad.Tensor(np.array([1e308]))
        assert np.isinf(ad.mul(a, np.array([1e308])).data).all()
