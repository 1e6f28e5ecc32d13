import math

import numpy as np
import pytest

from mindex import rng
from mindex.hermite import hermite_pair, link_eval
from mindex.model import LearnerModel, TargetModel
from mindex.ridge import (
    RankDeficientError,
    RidgeConfig,
    design_matrix,
    eval_test_error,
    indicator_weights,
    ridge_fit,
    select_lambda,
)


def _teacher(d=10, P=3, L=2):
    link = hermite_pair(L)
    return TargetModel(d=d, P=P, link=link, directions=np.eye(d, P)), link


def test_ridge_config_validation():
    with pytest.raises(ValueError):
        RidgeConfig(lambda_grid=())
    with pytest.raises(ValueError):
        RidgeConfig(lambda_grid=(1e-2, 1e-3))
    with pytest.raises(ValueError):
        RidgeConfig(lambda_grid=(-1.0, 1.0))


def test_design_matrix_composition():
    target, link = _teacher()
    V = np.eye(1, 10)
    x = np.zeros((4, 10))
    x[:, 0] = 1.0
    Phi = design_matrix(V, link, x)
    assert Phi.shape == (4, 1)
    np.testing.assert_allclose(Phi[:, 0], link_eval(link, 1.0), rtol=1e-14)
    with pytest.raises(ValueError):
        design_matrix(V, link, np.zeros((4, 9)))


def test_design_matrix_columns_centered():
    target, link = _teacher()
    gen = rng.substream(1, rng.MC, 60)
    V = gen.standard_normal((5, 10))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    x = gen.standard_normal((200_000, 10))
    Phi = design_matrix(V, link, x)
    se = Phi.std(axis=0, ddof=1) / math.sqrt(Phi.shape[0])
    assert np.all(np.abs(Phi.mean(axis=0)) < 4 * se)


def test_teacher_copy_design_reproduces_target():
    target, link = _teacher()
    gen = rng.substream(2, rng.MC, 61)
    x = gen.standard_normal((50, 10))
    Phi = design_matrix(np.eye(3, 10), link, x)
    y = link_eval(link, x[:, :3]).sum(axis=1)
    np.testing.assert_allclose(Phi @ np.ones(3), y, rtol=1e-12)


def test_ridge_fit_large_lambda_shrinks():
    gen = rng.substream(3, rng.MC, 62)
    Phi = gen.standard_normal((200, 6))
    y = gen.standard_normal(200)
    lam = 1e6
    a = ridge_fit(Phi, y, lam)
    bound = np.linalg.norm(Phi.T @ y) / (2 * lam * 200)
    assert np.linalg.norm(a) <= bound + 1e-15


def test_ridge_fit_recovers_teacher_weights():
    target, link = _teacher()
    gen = rng.substream(4, rng.MC, 63)
    m = 3
    x = gen.standard_normal((10 * m * 10, 10))
    Phi = design_matrix(np.eye(m, 10), link, x)
    y = link_eval(link, x[:, :m]).sum(axis=1)
    a = ridge_fit(Phi, y, 1e-8)
    np.testing.assert_allclose(a, np.ones(m), atol=1e-3)


def test_ridge_fit_duplicate_columns_symmetric():
    gen = rng.substream(5, rng.MC, 64)
    base = gen.standard_normal((300, 1))
    Phi = np.hstack([base, base, gen.standard_normal((300, 2))])
    y = gen.standard_normal(300)
    a = ridge_fit(Phi, y, 1e-3)
    assert a[0] == pytest.approx(a[1], rel=1e-9)


def test_ridge_fit_rank_deficient_at_zero_lambda():
    Phi = np.ones((50, 3))  # rank one
    y = np.ones(50)
    with pytest.raises(RankDeficientError):
        ridge_fit(Phi, y, 0.0)


def test_ridge_fit_residual_invariant():
    gen = rng.substream(12, rng.MC, 67)
    Phi = gen.standard_normal((500, 10))
    y = Phi @ gen.standard_normal(10) + 0.05 * gen.standard_normal(500)
    N = Phi.shape[0]
    for lam in (0.0, 1e-4, 1e-1):
        a = ridge_fit(Phi, y, lam)
        G = Phi.T @ Phi / N + 2 * lam * np.eye(10)
        b = Phi.T @ y / N
        assert np.linalg.norm(G @ a - b) <= 1e-8 * np.linalg.norm(b)


def test_ridge_norm_monotone_in_lambda():
    gen = rng.substream(6, rng.MC, 65)
    Phi = gen.standard_normal((400, 8))
    y = Phi @ gen.standard_normal(8) + 0.1 * gen.standard_normal(400)
    norms = [np.linalg.norm(ridge_fit(Phi, y, lam)) for lam in (0.0, 1e-3, 1e-2, 0.1, 1.0, 10.0)]
    assert all(n1 >= n2 - 1e-12 for n1, n2 in zip(norms, norms[1:]))


def test_select_lambda_single_entry_grid():
    target, link = _teacher(d=8, P=2)
    V = np.eye(2, 8)
    cfg = RidgeConfig(N=400, lambda_grid=(1e-3,), N_val=200, N_test=1000)
    a, lam, val = select_lambda(V, link, target, cfg, seed=1)
    assert lam == 1e-3


def test_select_lambda_noiseless_prefers_grid_minimum():
    target, link = _teacher(d=8, P=2)
    V = np.eye(2, 8)  # exact teacher features: bias-only regime
    cfg = RidgeConfig(N=2000, lambda_grid=(1e-6, 1e-3, 1e-1, 1.0), N_val=1000, N_test=1000)
    a, lam, val = select_lambda(V, link, target, cfg, seed=2)
    assert lam == 1e-6
    assert val < 1e-6


def test_eval_test_error_teacher_copy_and_null():
    target, link = _teacher(d=9, P=3)
    copy = LearnerModel(a=np.ones(3), V=np.eye(3, 9))
    gen = rng.substream(7, rng.TEST_ERROR)
    res = eval_test_error(copy, target, 50_000, gen)
    assert res.mse == pytest.approx(0.0, abs=1e-20)
    assert res.l1 == pytest.approx(0.0, abs=1e-12)

    null = LearnerModel(a=np.zeros(3), V=np.eye(3, 9))
    res = eval_test_error(null, target, 200_000, rng.substream(8, rng.TEST_ERROR))
    # E f*^2 = 2P for the pair link
    assert abs(res.mse - 2 * 3) < 3 * res.mse_se


def test_indicator_weights_stage2_bound():
    # Lemma-style construction: near-recovered first layer achieves
    # mse <= 10 L P^2 eps_v
    gen = rng.substream(9, rng.MC, 66)
    d, P, L = 16, 4, 2
    target, link = _teacher(d=d, P=P, L=L)
    eps_v = 1e-2
    m = P + 3
    V = gen.standard_normal((m, d))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    for p in range(P):
        u = gen.standard_normal(d)
        u[p] = 0.0
        u /= np.linalg.norm(u)
        V[p] = math.sqrt(1 - eps_v) * np.eye(d)[p] + math.sqrt(eps_v) * u
    a = indicator_weights(V, P)
    assert a.sum() == P
    learner = LearnerModel(a=a, V=V)
    res = eval_test_error(learner, target, 400_000, rng.substream(10, rng.TEST_ERROR))
    assert res.mse <= 10 * L * P**2 * eps_v + 3 * res.mse_se
