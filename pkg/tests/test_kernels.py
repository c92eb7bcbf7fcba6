"""Tests for the sweep kernels: jit and numpy backends agree, and chunked
parallel evaluation reproduces the serial result exactly."""

import numpy as np
import pytest
import scipy.linalg as sla

from rbkit import kernels
from rbkit.estimators import _run_chunked, make_estimator
from rbkit.harness import build_problem, make_training_grid
from rbkit.rbm import empty_basis, empty_model, extend_basis
from rbkit.truth import truth_solve


def _random_inputs(seed=0, M=64, N=6, Qa=2, Qf=1):
    rng = np.random.default_rng(seed)
    theta_a = rng.uniform(0.5, 2.0, (M, Qa))
    theta_f = rng.uniform(0.5, 2.0, (M, Qf))
    alpha = rng.uniform(0.5, 1.5, M)
    a_blocks = np.stack([np.eye(N) + 0.05 * rng.standard_normal((N, N))
                         for _ in range(Qa)])
    f_blocks = rng.standard_normal((Qf, N))
    L = rng.standard_normal((40, N * Qa))
    C = rng.standard_normal((40, Qf))
    cc = C.T @ C
    cl = C.T @ L
    ll = L.T @ L
    rs = np.triu(rng.standard_normal((N, N))) + 3.0 * np.eye(N)
    return theta_a, theta_f, alpha, a_blocks, f_blocks, cc, cl, ll, rs


needs_numba = pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba missing")


@needs_numba
def test_classical_jit_matches_numpy():
    ta, tf, al, ab, fb, cc, cl, ll, _ = _random_inputs()
    v_np, cl_np = kernels.classical_sweep_numpy(ta, tf, al, ab, fb, cc, cl, ll)
    v_jit, cl_jit = kernels.classical_sweep_jit(ta, tf, al, ab, fb, cc, cl, ll)
    assert np.allclose(v_jit, v_np, rtol=1e-13, atol=0.0)
    assert np.array_equal(cl_jit, cl_np)


@needs_numba
def test_stable_jit_matches_numpy():
    ta, tf, al, ab, fb, _, _, _, _ = _random_inputs(1)
    rng = np.random.default_rng(2)
    w = rng.standard_normal((1, 1))
    qtc = rng.standard_normal((8, 1))
    rzt = rng.standard_normal((8, ab.shape[0] * ab.shape[1]))
    v_np = kernels.stable_sweep_numpy(ta, tf, al, ab, fb, w, qtc, rzt)
    v_jit = kernels.stable_sweep_jit(ta, tf, al, ab, fb, w, qtc, rzt)
    assert np.allclose(v_jit, v_np, rtol=1e-13, atol=0.0)


@needs_numba
def test_lebesgue_jit_matches_numpy():
    ta, tf, _, ab, fb, _, _, _, rs = _random_inputs(3)
    v_np = kernels.lebesgue_sweep_numpy(ta, tf, ab, fb, rs)
    v_jit = kernels.lebesgue_sweep_jit(ta, tf, ab, fb, rs)
    assert np.allclose(v_jit, v_np, rtol=1e-13, atol=0.0)


def test_lebesgue_back_substitution_matches_solve_triangular():
    ta, tf, _, ab, fb, _, _, _, rs = _random_inputs(4, M=8)
    values = kernels.lebesgue_sweep_numpy(ta, tf, ab, fb, rs)
    for i in range(ta.shape[0]):
        A = np.tensordot(ta[i], ab, axes=1)
        u = np.linalg.solve(A, tf[i] @ fb)
        c = sla.solve_triangular(rs, u, lower=False)
        assert values[i] == pytest.approx(np.sum(np.abs(c)), rel=1e-12)


def test_clamp_flags_from_negative_quadratic():
    # hand-built tables where the quadratic cancels exactly to rounding noise
    rng = np.random.default_rng(5)
    N, Qa, Qf = 1, 1, 1
    v = rng.standard_normal(30)
    L = v[:, None]
    C = v[:, None] * (1.0 + 1e-16)
    theta_a = np.ones((1, Qa))
    theta_f = np.ones((1, Qf))
    ab = np.ones((Qa, N, N))
    fb = np.ones((Qf, N))  # reduced solve yields u = 1, so c = 1
    values, clamped = kernels.classical_sweep_numpy(
        theta_a, theta_f, np.ones(1), ab, fb, C.T @ C, C.T @ L, L.T @ L
    )
    assert values[0] <= 1e-6 * np.linalg.norm(v)
    assert clamped.dtype == np.bool_


def test_chunked_concatenation_is_order_preserving():
    def fn(lo, hi):
        return np.arange(lo, hi, dtype=float)

    for workers in (1, 2, 3, 8):
        out = _run_chunked(fn, 23, workers)
        assert np.array_equal(out, np.arange(23, dtype=float))


def test_parallel_sweep_bit_identical_to_serial():
    _, _, op = build_problem("oned-continuous", 16)
    basis = empty_basis(op.dim, op.gram)
    model = empty_model(2, 1)
    for mu in [[-0.8], [-0.1], [0.5], [0.9]]:
        basis, model = extend_basis(basis, model, truth_solve(op, mu), op)
    train = make_training_grid(op.spec.param_domain, [101])
    ta = op.theta_a_values(train)
    tf = op.theta_f_values(train)
    alpha = np.ones(train.shape[0])
    for kind in ("classical", "stable", "lebesgue"):
        est = make_estimator(kind)
        est.refresh(op, basis, model)
        serial = est.sweep(op, basis, model, ta, tf, alpha, workers=1)
        parallel = est.sweep(op, basis, model, ta, tf, alpha, workers=8)
        assert np.array_equal(serial, parallel), kind


def test_backend_selection_flag():
    # the active backend is one of the two concrete implementations
    if kernels.USE_JIT:
        assert kernels.classical_sweep is kernels.classical_sweep_jit
    else:
        assert kernels.classical_sweep is kernels.classical_sweep_numpy
