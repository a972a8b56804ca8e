import json

import numpy as np
import pytest

from ecg_ident.svm import (KernelSpec, MulticlassModel, TrainConfig, apply_standardization,
                           decision_value, fit_standardization, gram, kernel_eval, load_model,
                           predict, save_model, solve_dual, train_binary, train_multiclass)
from oracles import qp_enumerate, qp_projected_gradient, random_qp_dataset


# -- kernels --------------------------------------------------------------------

def test_rbf_values():
    k = KernelSpec("rbf", sigma=0.5)
    x = np.array([0.3, -1.2])
    assert kernel_eval(k, x, x) == 1.0
    assert kernel_eval(k, [0.0, 0.0], [1.0, 0.0]) == pytest.approx(np.exp(-2.0), rel=1e-15)
    assert kernel_eval(k, [0.0], [1.0]) == pytest.approx(0.135335, abs=1e-6)


def test_poly_values():
    k = KernelSpec("poly", a=1.0, b=0.0, degree=2.0)
    assert kernel_eval(k, [1.0, 1.0], [1.0, 2.0]) == 9.0
    frac = KernelSpec("poly", a=1.0, b=1.0, degree=0.5)
    assert kernel_eval(frac, [1.0], [3.0]) == pytest.approx(2.0)
    with pytest.raises(ValueError, match="negative"):
        kernel_eval(frac, [1.0], [-3.0])
    assert kernel_eval(KernelSpec("poly", degree=3.0), [1.0], [-2.0]) == -8.0


def test_kernel_validation():
    with pytest.raises(ValueError):
        KernelSpec("rbf", sigma=0.0)
    with pytest.raises(ValueError):
        KernelSpec("poly", degree=0.0)
    with pytest.raises(ValueError):
        kernel_eval(KernelSpec(), [1.0, 2.0], [1.0])


def test_kernel_symmetry_and_range():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(15, 4))
    for k in (KernelSpec("rbf", sigma=0.7), KernelSpec("poly", a=0.5, b=1.0, degree=3.0)):
        K = gram(k, A, A)
        assert np.array_equal(K, K.T)
    K = gram(KernelSpec("rbf", sigma=0.7), A, A)
    assert np.all((K > 0) & (K <= 1))
    assert np.allclose(np.diag(K), 1.0)


def test_rbf_gram_is_psd():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(20, int(rng.integers(1, 6))))
        K = gram(KernelSpec("rbf", sigma=float(rng.uniform(0.2, 3))), A, A)
        assert np.linalg.eigvalsh(K).min() >= -1e-8


# -- binary SMO -----------------------------------------------------------------

def test_two_point_example():
    X = np.array([[-1.0], [1.0]])
    y = np.array([-1.0, 1.0])
    m = train_binary(X, y, KernelSpec(sigma=0.5), TrainConfig(C=1000))
    assert len(m.dual_weights) == 2
    a = np.abs(m.dual_weights)
    assert a[0] == pytest.approx(a[1], rel=1e-12)
    assert m.bias == pytest.approx(0.0, abs=1e-12)
    assert np.array_equal(np.sign(m.decision_function(X)), y)
    # closed form: alpha = 2 / (K11 + K22 - 2 K12)
    assert a[0] == pytest.approx(2.0 / (2.0 - 2.0 * np.exp(-8.0)), rel=1e-3)


def test_xor_against_oracles():
    X = np.array([[0, 0], [1, 1], [0, 1], [1, 0], [0.5, 0.1], [0.1, 0.5]], dtype=float)
    y = np.array([1, 1, -1, -1, 1, -1], dtype=float)
    k = KernelSpec(sigma=0.5)
    K = gram(k, X, X)
    m = train_binary(X, y, k, TrainConfig(C=10))
    pg, _ = qp_projected_gradient(K, y, 10.0)
    ex, _ = qp_enumerate(K, y, 10.0)
    assert abs(pg - ex) < 1e-8
    assert abs(m.dual_objective - pg) <= 1e-4


@pytest.mark.parametrize("seed", range(12))
def test_smo_matches_oracle(seed):
    X, y, sigma, C = random_qp_dataset(seed)
    k = KernelSpec(sigma=sigma)
    m = train_binary(X, y, k, TrainConfig(C=C))
    ex, _ = qp_enumerate(gram(k, X, X), y, C)
    assert m.converged
    assert abs(m.dual_objective - ex) <= 1e-4


def _kkt_violation(X, y, kernel, config):
    alpha, _, _, status = solve_dual(X, y, kernel, config)
    m = train_binary(X, y, kernel, config)
    yf = y * m.decision_function(X)
    C, tol = config.C, config.kkt_tolerance
    at0 = alpha <= 0
    atC = alpha >= C
    free = ~at0 & ~atC
    worst = 0.0
    if at0.any():
        worst = max(worst, float(np.max(1 - yf[at0])))
    if atC.any():
        worst = max(worst, float(np.max(yf[atC] - 1)))
    if free.any():
        worst = max(worst, float(np.max(np.abs(yf[free] - 1))))
    return status, worst, tol, alpha


@pytest.mark.parametrize("selection", ["first-order", "second-order"])
def test_kkt_and_equality_constraint(selection):
    rng = np.random.default_rng(7)
    for trial in range(6):
        X = rng.normal(size=(40, 3))
        y = np.where(X[:, 0] + 0.5 * rng.normal(size=40) > 0, 1.0, -1.0)
        cfg = TrainConfig(C=(1.0, 10.0, 1000.0)[trial % 3], selection=selection)
        status, worst, tol, alpha = _kkt_violation(X, y, KernelSpec(sigma=1.0), cfg)
        assert status == 0
        assert worst <= tol
        assert abs(alpha @ y) <= 1e-6
        assert np.all((alpha >= 0) & (alpha <= cfg.C))


def test_free_support_vectors_sit_on_margin():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(30, 2))
    y = np.where(X[:, 1] > 0, 1.0, -1.0)
    cfg = TrainConfig(C=5.0)
    alpha, *_ = solve_dual(X, y, KernelSpec(sigma=1.0), cfg)
    m = train_binary(X, y, KernelSpec(sigma=1.0), cfg)
    free = (alpha > 0) & (alpha < cfg.C)
    assert free.any()
    assert np.allclose(y[free] * m.decision_function(X[free]), 1.0, atol=cfg.kkt_tolerance)


def _objective(alpha, G):
    return float(alpha.sum() - 0.5 * alpha @ (G + 1.0))


def test_numba_and_numpy_paths_agree():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(60, 4))
    y = np.where(X[:, 0] * X[:, 1] > 0, 1.0, -1.0)
    for sel in ("first-order", "second-order"):
        cfg = TrainConfig(C=10.0, selection=sel, kernel_cache_budget=600)
        a1, g1, n1, s1 = solve_dual(X, y, KernelSpec(sigma=0.8), cfg, use_numba=True)
        a2, g2, n2, s2 = solve_dual(X, y, KernelSpec(sigma=0.8), cfg, use_numba=False)
        assert (n1, s1) == (n2, s2) == (n1, 0)
        assert np.allclose(a1, a2, rtol=0, atol=1e-9)


def test_numba_and_numpy_paths_agree_poly():
    # the degree-2 Gram here has rank 15 < 60, so the optimum is a face, not a point;
    # rounding differences between BLAS and loop dot products pick different optimal alphas
    rng = np.random.default_rng(9)
    X = rng.normal(size=(60, 4))
    y = np.where(X[:, 0] * X[:, 1] > 0, 1.0, -1.0)
    k = KernelSpec("poly", a=0.5, b=1.0, degree=2.0)
    for sel in ("first-order", "second-order"):
        cfg = TrainConfig(C=10.0, selection=sel)
        a1, g1, _, s1 = solve_dual(X, y, k, cfg, use_numba=True)
        a2, g2, _, s2 = solve_dual(X, y, k, cfg, use_numba=False)
        assert s1 == s2 == 0
        assert abs(_objective(a1, g1) - _objective(a2, g2)) <= 1e-3 * abs(_objective(a1, g1))


def test_iteration_cap_flags_unconverged():
    rng = np.random.default_rng(10)
    X = rng.normal(size=(50, 2))
    y = np.where(X[:, 0] > 0, 1.0, -1.0)
    m = train_binary(X, y, KernelSpec(sigma=0.3), TrainConfig(C=1000.0, max_iterations=3))
    assert not m.converged and m.n_iter == 3


def test_binary_errors():
    with pytest.raises(ValueError):
        train_binary([[0.0], [1.0]], [1.0, 1.0], KernelSpec())
    with pytest.raises(ValueError):
        train_binary([[0.0], [1.0]], [0.0, 1.0], KernelSpec())
    with pytest.raises(ValueError):
        TrainConfig(C=0)
    with pytest.raises(ValueError):
        TrainConfig(kkt_tolerance=0)


def test_decision_value():
    from ecg_ident.svm import BinarySvmModel
    empty = BinarySvmModel(np.zeros((0, 2)), np.zeros(0), 0.75, KernelSpec())
    assert decision_value(empty, [1.0, 2.0]) == 0.75
    m = train_binary([[-1.0], [1.0]], [-1.0, 1.0], KernelSpec(sigma=0.5), TrainConfig(C=1000))
    with pytest.raises(ValueError):
        decision_value(m, [1.0, 2.0])
    assert decision_value(m, [0.9]) > 0 > decision_value(m, [-0.9])


# -- standardization -----------------------------------------------------------

def test_standardization():
    s = fit_standardization(np.array([[1.0, 5.0], [3.0, 5.0]]))
    assert s.mean[0] == 2.0 and s.std[0] == 1.0
    assert s.mask.tolist() == [True, False]
    assert apply_standardization(s, [[1.0, 5.0], [3.0, 5.0]]).ravel().tolist() == [-1.0, 1.0]
    rng = np.random.default_rng(0)
    X = rng.normal(3, 2, size=(100, 4))
    Z = fit_standardization(X).apply(X)
    assert np.allclose(Z.mean(axis=0), 0) and np.allclose(Z.std(axis=0), 1)


def test_block_standardization():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(200, 5)) * [1, 10, 100, 0.1, 0.01]
    blocks = ["morph", "morph", "hpe", "hpe", "hpe"]
    Z = fit_standardization(X, blocks).apply(X)
    assert np.allclose(Z.mean(axis=0), 0)
    # each block carries unit total variance
    assert np.sum(Z[:, :2].var(axis=0)) == pytest.approx(1.0)
    assert np.sum(Z[:, 2:].var(axis=0)) == pytest.approx(1.0)


# -- multiclass ----------------------------------------------------------------

def _clusters(k, per, rng, spread=0.1, gap=5.0):
    centers = np.array([[gap * i, gap * ((i * 7) % k)] for i in range(k)], dtype=float)
    X = np.concatenate([c + spread * rng.normal(size=(per, 2)) for c in centers])
    return X, np.repeat(np.arange(k), per)


def test_three_clusters():
    X, y = _clusters(3, 30, np.random.default_rng(2))
    m = train_multiclass(X, y, KernelSpec(sigma=0.5), TrainConfig(C=1000))
    assert len(m.models) == 3
    assert list(m.predict(X)) == y.tolist()


def test_pair_count_for_18_labels():
    X, y = _clusters(18, 3, np.random.default_rng(3))
    m = train_multiclass(X, y, KernelSpec(sigma=0.5), TrainConfig(C=10))
    assert len(m.models) == 153 == len(m.pairs)


def test_two_labels_is_sign():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(40, 2))
    y = np.where(X[:, 0] > 0, "b", "a")
    m = train_multiclass(X, y, KernelSpec(sigma=1.0), TrainConfig(C=10))
    d = m.models[0].decision_function(m.standardization.apply(X))
    assert list(m.predict(X)) == [("a" if v > 0 else "b") for v in d]


def test_monotone_relabel_invariance():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(90, 3))
    y = np.digitize(X[:, 0] + 0.3 * rng.normal(size=90), [-0.5, 0.5])
    base = train_multiclass(X, y, KernelSpec(sigma=1.0), TrainConfig(C=10)).predict(X)
    f = {0: 11, 1: 40, 2: 97}
    inv = {v: k for k, v in f.items()}
    relabeled = train_multiclass(X, [f[v] for v in y], KernelSpec(sigma=1.0), TrainConfig(C=10)).predict(X)
    assert [inv[v] for v in relabeled] == list(base)


def test_one_vs_rest():
    X, y = _clusters(4, 10, np.random.default_rng(6))
    m = train_multiclass(X, y, KernelSpec(sigma=0.5), TrainConfig(C=100), strategy="ovr")
    assert len(m.models) == 4
    assert list(m.predict(X)) == y.tolist()


def test_multiclass_errors():
    with pytest.raises(ValueError):
        train_multiclass(np.zeros((3, 1)), [1, 1, 1], KernelSpec())
    with pytest.raises(ValueError):
        train_multiclass(np.arange(4.0)[:, None], [0, 0, 1, 1], KernelSpec(), strategy="tree")


def test_model_round_trip(tmp_path):
    X, y = _clusters(3, 8, np.random.default_rng(7), spread=1.5)
    m = train_multiclass(X, [f"s{v}" for v in y], KernelSpec(sigma=0.75), TrainConfig(C=100),
                         feature_group="all", columns=["a", "b"])
    save_model(tmp_path / "m.json", m)
    back = load_model(tmp_path / "m.json")
    assert back.to_dict() == m.to_dict()
    assert json.dumps(back.to_dict()) == json.dumps(m.to_dict())
    Xt = np.random.default_rng(8).normal(scale=5, size=(50, 2))
    assert np.array_equal(back.decision_matrix(Xt), m.decision_matrix(Xt))
    assert back.predict(Xt) == m.predict(Xt)
    assert predict(back, Xt[0]) == m.predict(Xt[:1])[0]
    with pytest.raises(ValueError):
        MulticlassModel.from_dict({**m.to_dict(), "version": 99})
