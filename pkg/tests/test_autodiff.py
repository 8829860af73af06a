import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import finite_difference_grads, max_relative_error
from qganlab import autodiff as ad
from qganlab.autodiff import (
    DivergenceError,
    Tensor,
    backward,
    bce_with_logits,
    check_finite,
    concat,
    cross_entropy,
    custom_op,
    embedding_lookup,
    mean,
    no_grad,
    reshape,
    tensor_sum,
)
from qganlab.nn import (
    AdamState,
    Dense,
    Embedding,
    MissingGradientError,
    adam_step,
    load_checkpoint,
    save_checkpoint,
    zero_grads,
)

RNG = np.random.default_rng(0)
GRADCHECK_TOL = 1e-4  # relative


def gradcheck(make_loss, params):
    for p in params:
        p.zero_grad()
    backward(make_loss())
    numeric = finite_difference_grads(make_loss, params)
    return max_relative_error([p.grad for p in params], numeric)


# -- per-op gradient audits ----------------------------------------------------


def test_add_with_broadcasting():
    a = Tensor(RNG.normal(size=(4, 3)), requires_grad=True)
    b = Tensor(RNG.normal(size=3), requires_grad=True)
    assert gradcheck(lambda: mean(ad.add(a, b)), [a, b]) < GRADCHECK_TOL


def test_elementwise_multiply_with_broadcasting():
    a = Tensor(RNG.normal(size=(4, 3)), requires_grad=True)
    b = Tensor(RNG.normal(size=(1, 3)), requires_grad=True)
    assert gradcheck(lambda: mean(ad.elementwise_multiply(a, b)), [a, b]) < GRADCHECK_TOL


def test_matmul():
    a = Tensor(RNG.normal(size=(5, 4)), requires_grad=True)
    b = Tensor(RNG.normal(size=(4, 3)), requires_grad=True)
    assert gradcheck(lambda: mean(ad.matmul(a, b)), [a, b]) < GRADCHECK_TOL


def test_affine():
    x = Tensor(RNG.normal(size=(5, 4)), requires_grad=True)
    w = Tensor(RNG.normal(size=(4, 3)), requires_grad=True)
    b = Tensor(RNG.normal(size=3), requires_grad=True)
    assert gradcheck(lambda: mean(ad.affine(x, w, b)), [x, w, b]) < GRADCHECK_TOL


@pytest.mark.parametrize("op", [ad.relu, ad.tanh, ad.sigmoid, ad.exp])
def test_elementwise_ops(op):
    # inputs kept away from relu's kink at zero
    x = Tensor(RNG.normal(size=(4, 5)) + np.sign(RNG.normal(size=(4, 5))) * 0.2,
               requires_grad=True)
    assert gradcheck(lambda: mean(op(x)), [x]) < GRADCHECK_TOL


def test_log():
    x = Tensor(RNG.uniform(0.5, 3.0, size=(4, 5)), requires_grad=True)
    assert gradcheck(lambda: mean(ad.log(x)), [x]) < GRADCHECK_TOL


def test_reshape_and_concat():
    a = Tensor(RNG.normal(size=(2, 6)), requires_grad=True)
    b = Tensor(RNG.normal(size=(3, 6)), requires_grad=True)

    def loss():
        joined = concat([a, b], axis=0)
        return mean(ad.tanh(reshape(joined, (6, 5))))

    assert gradcheck(loss, [a, b]) < GRADCHECK_TOL


def test_embedding_lookup_grads():
    table = Tensor(RNG.normal(size=(7, 4)), requires_grad=True)
    idx = np.array([0, 3, 3, 6])
    assert gradcheck(lambda: mean(embedding_lookup(table, idx)), [table]) < GRADCHECK_TOL


def test_embedding_lookup_shape_and_range():
    table = Tensor(RNG.normal(size=(7, 4)))
    out = embedding_lookup(table, np.array([1, 2]))
    assert out.shape == (2, 4)
    with pytest.raises(ValueError):
        embedding_lookup(table, np.array([7]))


def test_reductions():
    x = Tensor(RNG.normal(size=(3, 4)), requires_grad=True)
    assert gradcheck(lambda: tensor_sum(ad.sigmoid(x)), [x]) < GRADCHECK_TOL
    assert gradcheck(lambda: mean(ad.tanh(x)), [x]) < GRADCHECK_TOL


def test_losses_gradcheck():
    logits = Tensor(RNG.normal(size=(6, 3)), requires_grad=True)
    targets = RNG.uniform(0, 1, size=(6, 3))
    labels = RNG.integers(0, 3, size=6)
    assert gradcheck(lambda: bce_with_logits(logits, targets), [logits]) < GRADCHECK_TOL
    assert gradcheck(lambda: cross_entropy(logits, labels), [logits]) < GRADCHECK_TOL


def test_composite_network_gradcheck():
    w1 = Tensor(RNG.normal(size=(5, 8)), requires_grad=True)
    b1 = Tensor(RNG.normal(size=8), requires_grad=True)
    emb = Tensor(RNG.normal(size=(4, 5)), requires_grad=True)
    x = Tensor(RNG.normal(size=(6, 5)))
    idx = RNG.integers(0, 4, size=6)
    labels = RNG.integers(0, 8, size=6)

    def loss():
        h = ad.affine(ad.elementwise_multiply(x, embedding_lookup(emb, idx)), w1, b1)
        return cross_entropy(ad.tanh(h), labels) + 0.1 * mean(ad.sigmoid(h))

    assert gradcheck(loss, [w1, b1, emb]) < GRADCHECK_TOL


# -- documented loss values ------------------------------------------------------


def test_bce_symmetric_point():
    logits = Tensor(np.zeros((1, 1)))
    assert abs(bce_with_logits(logits, np.array([[0.5]])).item() - np.log(2)) < 1e-12


def test_bce_value_independent_of_target_at_zero_logit():
    logits = Tensor(np.zeros((1, 1)))
    assert abs(bce_with_logits(logits, np.array([[0.9]])).item() - np.log(2)) < 1e-12


def test_bce_saturates_toward_zero():
    logits = Tensor(np.full((1, 1), 30.0))
    assert bce_with_logits(logits, np.ones((1, 1))).item() < 1e-12


def test_bce_rejects_targets_outside_unit_interval():
    with pytest.raises(ValueError):
        bce_with_logits(Tensor(np.zeros((1, 1))), np.array([[1.2]]))


def test_cross_entropy_uniform_and_confident():
    uniform = cross_entropy(Tensor(np.zeros((4, 10))), np.arange(4) % 10)
    assert abs(uniform.item() - np.log(10)) < 1e-12
    logits = np.zeros((2, 10))
    logits[0, 3] = logits[1, 7] = 20.0
    assert cross_entropy(Tensor(logits), np.array([3, 7])).item() < 1e-6


def test_cross_entropy_matches_softmax_oracle():
    logits_values = RNG.normal(size=(8, 5))
    labels = RNG.integers(0, 5, size=8)
    ours = cross_entropy(Tensor(logits_values), labels).item()
    probs = np.exp(logits_values) / np.exp(logits_values).sum(axis=1, keepdims=True)
    reference = -np.mean(np.log(probs[np.arange(8), labels]))
    assert abs(ours - reference) < 1e-10


def test_cross_entropy_rejects_bad_labels():
    with pytest.raises(ValueError):
        cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 3]))


# -- backward mechanics ------------------------------------------------------------


def test_linear_loss_gradient_is_input():
    x_values = RNG.normal(size=5)
    w = Tensor(RNG.normal(size=5), requires_grad=True)
    backward(tensor_sum(ad.elementwise_multiply(w, Tensor(x_values))))
    np.testing.assert_allclose(w.grad, x_values, atol=1e-15)


def test_sigmoid_derivative_at_zero():
    w = Tensor(np.zeros(()), requires_grad=True)
    backward(ad.elementwise_multiply(ad.sigmoid(w), Tensor(3.0)))
    assert abs(w.grad - 0.25 * 3.0) < 1e-12


def test_backward_requires_scalar():
    x = Tensor(RNG.normal(size=3), requires_grad=True)
    with pytest.raises(ValueError):
        backward(ad.tanh(x))


def test_tape_purity_two_passes_identical():
    w = Tensor(RNG.normal(size=(4, 4)), requires_grad=True)
    x = Tensor(RNG.normal(size=(2, 4)))

    def run():
        w.zero_grad()
        backward(mean(ad.tanh(ad.matmul(x, w))))
        return w.grad.copy()

    assert np.array_equal(run(), run())


def test_no_grad_leakage_to_constants():
    const = Tensor(RNG.normal(size=(2, 3)))
    w = Tensor(RNG.normal(size=(2, 3)), requires_grad=True)
    backward(mean(ad.elementwise_multiply(const, w)))
    assert const.grad is None and w.grad is not None


def test_no_grad_context_suppresses_taping():
    w = Tensor(RNG.normal(size=(2, 2)), requires_grad=True)
    with no_grad():
        out = ad.tanh(ad.matmul(Tensor(np.eye(2)), w))
    assert not out.requires_grad and out._backward is None


def test_custom_op_routes_external_gradient():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    out = custom_op(x.values * 3.0, (x,), lambda g: x._accumulate(3.0 * g))
    backward(tensor_sum(out))
    np.testing.assert_allclose(x.grad, [3.0, 3.0])


def test_check_finite_raises_on_nan():
    with pytest.raises(DivergenceError):
        check_finite(Tensor(np.array([1.0, np.nan])), "loss")


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_network_gradcheck_property(seed):
    rng = np.random.default_rng(seed)
    w = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=4), requires_grad=True)
    x = Tensor(rng.normal(size=(2, 3)))
    labels = rng.integers(0, 4, size=2)

    def loss():
        return cross_entropy(ad.affine(x, w, b), labels)

    assert gradcheck(loss, [w, b]) < GRADCHECK_TOL


# -- Adam -------------------------------------------------------------------------


def test_adam_zero_gradient_keeps_parameters():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    p.grad = np.zeros(2)
    before = p.values.copy()
    adam_step(AdamState(), {"p": p})
    assert np.array_equal(p.values, before)


def test_adam_descends_against_constant_gradient():
    p = Tensor(np.array(0.0), requires_grad=True)
    state = AdamState(learning_rate=0.01)
    for _ in range(50):
        p.grad = np.array(2.5)
        adam_step(state, {"p": p})
    assert p.values < 0.0
    assert state.step == 50


def test_adam_first_step_is_signed_learning_rate():
    for g in (3.0, -0.7):
        p = Tensor(np.array(0.0), requires_grad=True)
        p.grad = np.array(g)
        state = AdamState(learning_rate=2e-4)
        adam_step(state, {"p": p})
        expected = -2e-4 * g / (abs(g) + state.epsilon)
        assert abs(p.values - expected) < 1e-12


def test_adam_requires_gradients():
    p = Tensor(np.array(0.0), requires_grad=True)
    with pytest.raises(MissingGradientError):
        adam_step(AdamState(), {"p": p})


def test_zero_grads_helper():
    p = Tensor(np.array(0.0), requires_grad=True)
    p.grad = np.array(1.0)
    zero_grads({"p": p})
    assert p.grad is None


# -- layers and checkpoints ---------------------------------------------------------


def test_dense_init_bounds():
    rng = np.random.default_rng(1)
    layer = Dense(rng, 64, 32, "probe")
    bound = 1.0 / np.sqrt(64)
    assert np.abs(layer.weight.values).max() <= bound
    assert np.abs(layer.bias.values).max() <= bound


def test_embedding_batch_shape_contract():
    rng = np.random.default_rng(2)
    emb = Embedding(rng, 10, 8, "probe")
    z = Tensor(rng.normal(size=(5, 8)))
    product = ad.elementwise_multiply(emb(np.arange(5)), z)
    assert product.shape == z.shape


def test_checkpoint_roundtrip(tmp_path):
    params = {
        "a.weight": RNG.normal(size=(3, 4)),
        "a.bias": RNG.normal(size=4),
        "scalar": np.array(2.5),
    }
    path = tmp_path / "model.qgl1"
    save_checkpoint(path, params, extra={"note": 7})
    raw = path.read_bytes()
    assert raw[:4] == b"QGL1"
    assert len(raw) == 4 + 8 * (12 + 4 + 1)
    loaded, extra = load_checkpoint(path)
    assert extra == {"note": 7}
    assert set(loaded) == set(params)
    for name in params:
        np.testing.assert_array_equal(loaded[name], params[name])


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "model.qgl1"
    save_checkpoint(path, {"w": np.zeros(2)})
    path.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_checkpoint_rejects_truncation(tmp_path):
    path = tmp_path / "model.qgl1"
    save_checkpoint(path, {"w": np.zeros(4)})
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        load_checkpoint(path)
