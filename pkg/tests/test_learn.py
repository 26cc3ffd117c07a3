import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tnvqml.circuits import CircuitSpec, EncodingMap, statevector_model_eval
from tnvqml.circuits.builders import _unitary_from_ops
from tnvqml.coeffs import coefficient_from_dense, sparse_pauli_coefficient_mps
from tnvqml.learn import (
    Adam,
    EncodingCircuit,
    RidgeSolverError,
    TrainConfig,
    cmps_eval,
    cmps_eval_batch,
    cmps_gradient,
    cmps_loss,
    feature_batch,
    feature_map,
    init_cmps,
    kernel_ridge,
    n_cmps_params,
    predict,
    product_kernel,
    product_kernel_matrix,
    quantum_kernel,
    quantum_kernel_matrix,
    representer_mps,
    train_cmps,
    train_vqml,
    vqml_eval,
    vqml_loss_and_grad,
)


def _fd_gradient(loss, cores, h=1e-5):
    out = []
    for s, core in enumerate(cores):
        g = np.zeros_like(core)
        for idx in np.ndindex(core.shape):
            plus = [c.copy() for c in cores]
            minus = [c.copy() for c in cores]
            plus[s][idx] += h
            minus[s][idx] -= h
            g[idx] = (loss(plus) - loss(minus)) / (2 * h)
        out.append(g)
    return out


def _rel_err(a, b):
    a, b = np.concatenate([x.ravel() for x in a]), np.concatenate([x.ravel() for x in b])
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


# feature map ------------------------------------------------------------------------


def test_feature_map_zero_angle():
    t = feature_map(EncodingMap.naive(2), 0.0)
    np.testing.assert_allclose(t.vectors, [[1, 1, 0], [1, 1, 0]])


def test_feature_map_exponential_site():
    t = feature_map(EncodingMap.exponential(3), np.pi / 2)
    np.testing.assert_allclose(t.vectors[0], [1, 0, 1], atol=1e-12)


@given(st.floats(-10, 10), st.integers(1, 7))
def test_feature_norm(x, n):
    t = feature_map(EncodingMap.exponential(n), x)
    assert t.norm_squared() == pytest.approx(2.0**n, rel=1e-12)
    assert np.vdot(t.to_dense(), t.to_dense()) == pytest.approx(2.0**n, rel=1e-12)


def test_feature_map_dimension_mismatch():
    with pytest.raises(ValueError):
        feature_map(EncodingMap.elementwise(3), [1.0, 2.0])


# cMPS evaluation --------------------------------------------------------------------


def test_cmps_constant():
    c = sparse_pauli_coefficient_mps([(0, 0, 0)], [1 / 8])
    for x in (-1.0, 0.3, 2.0):
        assert cmps_eval(c, feature_map(EncodingMap.naive(3), x)) == pytest.approx(1.0)


def test_cmps_trig_monomial():
    c = sparse_pauli_coefficient_mps([(1, 2, 1)], [1.0])
    x = np.pi / 6
    val = cmps_eval(c, feature_map(EncodingMap.exponential(3), x))
    assert val == pytest.approx(8 * np.cos(x) * np.sin(3 * x) * np.cos(9 * x), abs=1e-12)


def test_cmps_matches_dense(rng):
    vec = rng.normal(size=3**5)
    c = coefficient_from_dense(vec)
    enc = EncodingMap.exponential(5)
    xs = rng.uniform(-np.pi, np.pi, 10)
    dense = np.array([vec @ feature_map(enc, x).to_dense() for x in xs])
    np.testing.assert_allclose(cmps_eval_batch(c, feature_batch(enc, xs)), dense, atol=1e-10)
    assert cmps_eval(c, feature_map(enc, xs[0])) == pytest.approx(dense[0], abs=1e-10)


def test_cmps_length_mismatch():
    c = coefficient_from_dense(np.ones(9))
    with pytest.raises(ValueError):
        cmps_eval(c, feature_map(EncodingMap.naive(3), 0.1))


def test_parameter_counts():
    assert n_cmps_params(8, 4) == 282
    assert n_cmps_params(8, 8) == 930
    assert n_cmps_params(3, 3) == 45


# gradients ----------------------------------------------------------------------------


@pytest.mark.parametrize("n,chi,lam", [(3, 2, 0.0), (4, 3, 0.0), (5, 3, 0.05)])
def test_gradient_matches_finite_differences(rng, n, chi, lam):
    enc = EncodingMap.exponential(n)
    feats = feature_batch(enc, rng.uniform(-np.pi, np.pi, 20))
    y = rng.normal(size=20)
    cores = init_cmps(n, chi, seed=1).real_cores()
    g = cmps_gradient(cores, feats, y, lam)
    fd = _fd_gradient(lambda cs: cmps_loss(cs, feats, y, lam), cores)
    assert _rel_err(g, fd) < 1e-5


def test_gradient_zero_at_realizable_minimum(rng):
    enc = EncodingMap.naive(4)
    feats = feature_batch(enc, rng.uniform(-np.pi, np.pi, 15))
    c = init_cmps(4, 2, seed=3)
    y = cmps_eval_batch(c, feats)
    for g in cmps_gradient(c, feats, y):
        np.testing.assert_allclose(g, 0, atol=1e-10)


def test_regularizer_gradient(rng):
    feats = feature_batch(EncodingMap.naive(3), rng.uniform(-1, 1, 5))
    cores = init_cmps(3, 3, seed=0).real_cores()
    y = cmps_eval_batch(cores, feats)
    g = cmps_gradient(cores, feats, y, lam=0.3)
    fd = _fd_gradient(lambda cs: cmps_loss(cs, feats, y, 0.3), cores)
    assert _rel_err(g, fd) < 1e-5


def test_gradient_rejects_empty():
    with pytest.raises(ValueError):
        cmps_gradient(init_cmps(3, 2).real_cores(), np.zeros((0, 3, 3)), np.zeros(0))


# training --------------------------------------------------------------------------------


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_train_self_realizable(seed):
    rng = np.random.default_rng(seed)
    enc = EncodingMap.naive(4)
    xs = rng.uniform(-np.pi, np.pi, 120)
    feats = feature_batch(enc, xs)
    target = init_cmps(4, 2, seed=99 + seed, feats=feats)
    y = cmps_eval_batch(target, feats)
    c0 = init_cmps(4, 2, seed=seed, feats=feats)
    c, trace = train_cmps(c0, feats, y, TrainConfig(epochs=500))
    assert trace.train_mse[-1] < 1e-3
    assert trace.train_mse[-1] <= trace.train_mse[0]
    assert len(trace.rows()) == 501
    assert c.max_bond == 2


def test_train_zero_target_monotone(rng):
    feats = feature_batch(EncodingMap.naive(3), rng.uniform(-np.pi, np.pi, 50))
    c0 = init_cmps(3, 2, seed=4, feats=feats)
    _, trace = train_cmps(c0, feats, np.zeros(50), TrainConfig(epochs=150))
    tail = np.array(trace.train_mse[10:])
    assert np.all(np.diff(tail) <= 1e-12)


def test_train_deterministic(rng):
    feats = feature_batch(EncodingMap.naive(3), rng.uniform(-np.pi, np.pi, 30))
    y = np.sin(np.arange(30.0))
    c0 = init_cmps(3, 3, seed=2, feats=feats)
    cfg = TrainConfig(epochs=40, lam=1e-4)
    a = train_cmps(c0, feats, y, cfg)[1]
    b = train_cmps(c0, feats, y, cfg)[1]
    assert a.train_mse == b.train_mse and a.reg == b.reg


def test_train_detects_overflow(rng):
    feats = feature_batch(EncodingMap.naive(3), rng.uniform(-np.pi, np.pi, 10))
    c0 = init_cmps(3, 2, seed=0, feats=feats)
    with pytest.raises(FloatingPointError):
        train_cmps(c0, feats, np.full(10, np.inf), TrainConfig(epochs=3))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lam=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch="mini")


def test_adam_first_step_is_lr_sign():
    opt = Adam([np.zeros(3)], TrainConfig(lr=0.1))
    (p,) = opt.step([np.zeros(3)], [np.array([2.0, -5.0, 1e-3])])
    np.testing.assert_allclose(p, [-0.1, 0.1, -0.1], rtol=1e-4)


def test_init_unit_output_scale(rng):
    feats = feature_batch(EncodingMap.naive(6), rng.uniform(-np.pi, np.pi, 200))
    c = init_cmps(6, 4, seed=0, feats=feats)
    assert np.std(cmps_eval_batch(c, feats)) == pytest.approx(1.0, rel=1e-10)


# VQML --------------------------------------------------------------------------------------


def test_vqml_adjoint_gradient(rng):
    spec = CircuitSpec.random(3, (2, 1), seed=5, encoding=EncodingMap.exponential(3))
    xs = rng.uniform(-np.pi, np.pi, 12)
    y = rng.normal(size=12)
    loss, grad = vqml_loss_and_grad(spec, xs, y)
    assert loss == pytest.approx(np.mean((vqml_eval(spec, xs) - y) ** 2))
    h = 1e-6
    fd = np.empty_like(grad)
    for i in range(spec.n_params):
        tp, tm = spec.theta.copy(), spec.theta.copy()
        tp[i] += h
        tm[i] -= h
        lp = np.mean((statevector_model_eval(spec.with_theta(tp), xs) - y) ** 2)
        lm = np.mean((statevector_model_eval(spec.with_theta(tm), xs) - y) ** 2)
        fd[i] = (lp - lm) / (2 * h)
    np.testing.assert_allclose(grad, fd, atol=1e-8)


def test_vqml_gradient_reuploading(rng):
    spec = CircuitSpec.random(2, (1, 1, 1), seed=6, encoding=EncodingMap.naive(4))
    xs = rng.uniform(-np.pi, np.pi, 8)
    y = rng.normal(size=8)
    _, grad = vqml_loss_and_grad(spec, xs, y)
    i, h = 7, 1e-6
    tp, tm = spec.theta.copy(), spec.theta.copy()
    tp[i] += h
    tm[i] -= h
    fd = (np.mean((vqml_eval(spec.with_theta(tp), xs) - y) ** 2) - np.mean((vqml_eval(spec.with_theta(tm), xs) - y) ** 2)) / (2 * h)
    assert grad[i] == pytest.approx(fd, abs=1e-8)


def test_vqml_rejects_noise():
    with pytest.raises(ValueError):
        vqml_loss_and_grad(CircuitSpec.random(2, 1, gamma=0.1), [0.1], [0.0])


def test_train_vqml_reduces_loss(rng):
    spec = CircuitSpec.random(2, 1, seed=0)
    xs = rng.uniform(-np.pi, np.pi, 20)
    y = 0.5 * np.cos(xs)
    out, trace = train_vqml(spec, xs, y, TrainConfig(epochs=30, lr=0.05))
    assert trace.train_mse[-1] < trace.train_mse[0]
    assert out.n_params == spec.n_params


# kernels ------------------------------------------------------------------------------------


def test_product_kernel_examples(rng):
    enc = EncodingMap.naive(1)
    assert product_kernel(enc, 0.4, 0.4) == pytest.approx(1.0)
    assert product_kernel(enc, 0.0, np.pi) == pytest.approx(0.0, abs=1e-15)
    enc6 = EncodingMap.exponential(6)
    a, b = rng.uniform(-np.pi, np.pi, 2)
    ref = feature_map(enc6, a).to_dense() @ feature_map(enc6, b).to_dense() / 2**6
    assert product_kernel(enc6, a, b) == pytest.approx(ref, abs=1e-12)


def test_product_kernel_matrix_consistency(rng):
    enc = EncodingMap.elementwise(4)
    xs = rng.uniform(-np.pi, np.pi, (12, 4))
    k = product_kernel_matrix(enc, xs)
    f = np.array([feature_map(enc, x).to_dense() for x in xs])
    np.testing.assert_allclose(k * 2**4, f @ f.T, atol=1e-12)


def test_quantum_kernel_examples(rng):
    iqp = EncodingCircuit("iqp")
    x = rng.uniform(-np.pi, np.pi, 3)
    assert quantum_kernel(iqp, x, x) == pytest.approx(1.0)
    prod = EncodingCircuit("product")
    a, b = rng.uniform(-np.pi, np.pi, (2, 3))
    assert quantum_kernel(prod, a, b) == pytest.approx(product_kernel(EncodingMap.elementwise(3), a, b), abs=1e-12)


def _iqp_oracle(x, reps=2):
    """IQP state from explicit 8x8 gate matrices."""
    n = x.size
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    hh = h
    for _ in range(n - 1):
        hh = np.kron(hh, h)
    z = 1 - 2 * np.indices((2,) * n).reshape(n, -1)
    phase = np.zeros(2**n)
    for q in range(n):
        phase += -0.5 * x[q] * z[q]
    for q in range(n - 1):
        phase += -0.5 * x[q] * x[q + 1] * z[q] * z[q + 1]
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1
    for _ in range(reps):
        psi = np.exp(1j * phase) * (hh @ psi)
    return psi


def test_quantum_kernel_iqp_oracle(rng):
    a, b = rng.uniform(-np.pi, np.pi, (2, 3))
    ref = abs(np.vdot(_iqp_oracle(a), _iqp_oracle(b))) ** 2
    assert quantum_kernel(EncodingCircuit("iqp"), a, b) == pytest.approx(ref, abs=1e-10)


@pytest.mark.parametrize("which", ["product", "iqp"])
def test_kernel_matrices_psd(rng, which):
    xs = rng.uniform(-np.pi, np.pi, (50, 3))
    if which == "product":
        k = product_kernel_matrix(EncodingMap.elementwise(3), xs)
    else:
        k = quantum_kernel_matrix(EncodingCircuit("iqp"), xs)
    np.testing.assert_allclose(k, k.T, atol=1e-14)
    assert np.linalg.eigvalsh(k).min() >= -1e-8
    assert k.min() >= -1e-15 and k.max() <= 1 + 1e-12


# ridge --------------------------------------------------------------------------------------


def test_ridge_trivial():
    sol = kernel_ridge(np.array([[1.0]]), [2.0], 0.0)
    np.testing.assert_allclose(sol.weights, [2.0])


def test_ridge_shrinkage(rng):
    xs = rng.uniform(-np.pi, np.pi, 10)
    k = product_kernel_matrix(EncodingMap.naive(3), xs)
    y = np.cos(xs)
    norms = [np.abs(kernel_ridge(k, y, lam).weights) for lam in (1, 10, 100)]
    assert np.all(norms[1] <= norms[0]) and np.all(norms[2] <= norms[1])
    assert norms[2].max() < 0.1


def test_ridge_duplicate_point():
    enc = EncodingMap.naive(2)
    xs = np.array([0.5, 0.5])
    y = np.array([1.0, 3.0])
    k = product_kernel_matrix(enc, xs)
    sol = kernel_ridge(k, y, 0.1)
    assert np.all(np.isfinite(sol.weights))
    # eigen-decomposition of [[1, 1], [1, 1]] + lam I along (1, 1) and (-1, 1)
    expected = (y.sum() / 2) / (2.0 + 0.1) * np.ones(2) + ((y[1] - y[0]) / 2) / 0.1 * np.array([-1.0, 1.0])
    np.testing.assert_allclose(sol.weights, expected, rtol=1e-12)
    p = predict(sol, product_kernel_matrix(enc, [0.5], xs)[0])
    assert 1.0 < p < 3.0


def test_ridge_singular_reports_rank():
    k = np.ones((3, 3))
    with pytest.raises(RidgeSolverError) as err:
        kernel_ridge(k, [1.0, 2.0, 3.0], 0.0)
    assert err.value.rank == 1


def test_ridge_jitter_recorded():
    k = np.array([[1.0, 1.0], [1.0, 1.0]])
    sol = kernel_ridge(k, [1.0, 1.0], 0.0)
    assert sol.jitter == 1e-12


def test_ridge_residual_small(rng):
    xs = rng.uniform(-np.pi, np.pi, 20)
    k = product_kernel_matrix(EncodingMap.exponential(3), xs)
    y = np.sin(xs)
    sol = kernel_ridge(k, y, 0.01)
    assert np.linalg.norm((k + 0.01 * np.eye(20)) @ sol.weights - y) < 1e-8


# representer ---------------------------------------------------------------------------------


def test_representer_single_point():
    enc = EncodingMap.naive(3)
    sol = kernel_ridge(np.array([[1.0]]), [0.7], 0.0, train_inputs=[0.2])
    c = representer_mps(sol, enc)
    assert c.max_bond == 1
    x = 1.1
    assert cmps_eval(c, feature_map(enc, x)) == pytest.approx(0.7 * product_kernel(enc, x, 0.2))


def test_representer_matches_prediction(rng):
    enc = EncodingMap.exponential(4)
    xs = rng.uniform(-np.pi, np.pi, 3)
    sol = kernel_ridge(product_kernel_matrix(enc, xs), np.cos(xs), 0.01, train_inputs=xs)
    c = representer_mps(sol, enc)
    assert c.max_bond <= 3
    probe = rng.uniform(-np.pi, np.pi, 100)
    np.testing.assert_allclose(
        cmps_eval_batch(c, feature_batch(enc, probe)), predict(sol, product_kernel_matrix(enc, probe, xs)), atol=1e-10
    )


def test_representer_duplicate_point(rng):
    enc = EncodingMap.naive(3)
    xs = rng.uniform(-np.pi, np.pi, 4)
    y = np.sin(xs)
    probe = rng.uniform(-np.pi, np.pi, 30)
    a = kernel_ridge(product_kernel_matrix(enc, xs), y, 0.0, train_inputs=xs)
    xd, yd = np.append(xs, xs[0]), np.append(y, y[0])
    b = kernel_ridge(product_kernel_matrix(enc, xd), yd, 0.0, train_inputs=xd)
    pa = cmps_eval_batch(representer_mps(a, enc), feature_batch(enc, probe))
    pb = cmps_eval_batch(representer_mps(b, enc), feature_batch(enc, probe))
    np.testing.assert_allclose(pa, pb, atol=1e-6)


def test_representer_rejects_quantum_solution():
    sol = kernel_ridge(np.array([[1.0]]), [1.0], 0.0, kernel="quantum", train_inputs=[0.0])
    with pytest.raises(ValueError):
        representer_mps(sol, EncodingMap.naive(2))


def test_rkhs_containment_witness(rng):
    """A quantum-kernel ridge predictor lies in the span of the trigonometric features."""
    n = 4
    enc = EncodingMap.exponential(n)
    spec = CircuitSpec.random(n, (2, 0), seed=8, encoding=enc)
    w1 = _unitary_from_ops(spec.block_ops(0), n)
    base = w1[:, 0]
    z = 1 - 2 * np.indices((2,) * n).reshape(n, -1)

    def states(xs):
        phi = enc.angles_batch(xs)
        return base[None, :] * np.exp(-0.5j * (phi @ z))

    xt = rng.uniform(-np.pi, np.pi, 12)
    st_ = states(xt)
    k = np.abs(st_.conj() @ st_.T) ** 2
    sol = kernel_ridge(k, np.sin(xt), 0.01, kernel="quantum")
    grid = np.linspace(-np.pi, np.pi, 400, endpoint=False)
    f = predict(sol, np.abs(states(grid).conj() @ st_.T) ** 2)
    feats = np.array([feature_map(enc, x).to_dense() for x in grid])
    coef, *_ = np.linalg.lstsq(feats, f, rcond=None)
    c = coefficient_from_dense(coef)
    assert c.max_bond <= 3 ** (n // 2)
    probe = rng.uniform(-np.pi, np.pi, 50)
    ref = predict(sol, np.abs(states(probe).conj() @ st_.T) ** 2)
    np.testing.assert_allclose(cmps_eval_batch(c, feature_batch(enc, probe)), ref, atol=1e-8)
