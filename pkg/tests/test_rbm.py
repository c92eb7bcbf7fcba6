"""Tests for reduced-basis assembly, reduced solves, Lagrange coefficients,
and the greedy loop."""

import numpy as np
import pytest

from rbkit.rbm import (
    DependentSnapshotError,
    GreedyConfig,
    empty_basis,
    empty_model,
    extend_basis,
    greedy,
    lagrange_coefficients,
    rb_solve,
    reconstruct,
)
from rbkit.estimators import make_estimator
from rbkit.harness import build_problem, make_training_grid
from rbkit.truth import AffineOperator, assemble, load_vector, truth_solve


def _build_basis(op, mus):
    """Basis/model pair from snapshots at the given parameters."""
    basis = empty_basis(op.dim, gram=op.gram)
    model = empty_model(len(op.a_components), len(op.f_components))
    for mu in mus:
        basis, model = extend_basis(basis, model, truth_solve(op, mu), op)
    return basis, model


@pytest.fixture(scope="module")
def oned():
    _, _, op = build_problem("oned-continuous", 16)
    return op


@pytest.fixture(scope="module")
def oned_basis(oned):
    mus = [[-0.9], [-0.5], [0.0], [0.4], [0.7], [0.95]]
    return _build_basis(oned, mus)


# ---------------------------------------------------------------------------
# rb_solve / reconstruct


def test_rb_solve_reproduces_single_snapshot(oned):
    mu = [0.3]
    snap = truth_solve(oned, mu)
    basis, model = _build_basis(oned, [mu])
    u_rb = reconstruct(basis, rb_solve(model, oned, mu))
    assert np.linalg.norm(u_rb - snap.values) <= 1e-10 * np.linalg.norm(snap.values)


def test_rb_solve_zero_load(oned, oned_basis):
    basis, model = oned_basis
    op0 = AffineOperator(
        spec=oned.spec,
        a_components=oned.a_components,
        f_components=oned.f_components,
        theta_a=oned.theta_a,
        theta_f=[lambda mu: 0.0],
        gram=oned.gram,
    )
    u_hat = rb_solve(model, op0, [0.2])
    assert np.allclose(u_hat, 0.0)


def test_rb_solve_galerkin_orthogonality(oned):
    basis, model = _build_basis(oned, [[-0.8], [-0.3], [0.1], [0.5], [0.9]])
    mu = [0.23]
    u_hat = rb_solve(model, oned, mu)
    r = load_vector(oned, mu) - assemble(oned, mu) @ reconstruct(basis, u_hat)
    # the residual of the reduced solution is orthogonal to the reduced space
    defect = basis.xi.T @ r
    scale = np.linalg.norm(load_vector(oned, mu))
    assert np.max(np.abs(defect)) <= 1e-10 * scale


def test_rb_solve_empty_model_raises(oned):
    with pytest.raises(ValueError):
        rb_solve(empty_model(2, 1), oned, [0.0])


def test_reconstruct_trivial(oned_basis):
    basis, _ = oned_basis
    n = basis.size
    assert np.array_equal(reconstruct(basis, np.eye(n)[:, 0]), basis.xi[:, 0])
    assert np.array_equal(reconstruct(basis, np.zeros(n)), np.zeros(basis.xi.shape[0]))
    rng = np.random.default_rng(0)
    u, v = rng.standard_normal(n), rng.standard_normal(n)
    lhs = reconstruct(basis, u + v)
    rhs = reconstruct(basis, u) + reconstruct(basis, v)
    assert np.linalg.norm(lhs - rhs) <= 1e-14 * max(np.linalg.norm(lhs), 1.0)


# ---------------------------------------------------------------------------
# lagrange_coefficients


def test_lagrange_triangular_definition(oned_basis):
    basis, _ = oned_basis
    R = basis.chol_coeffs
    n = basis.size
    for j in [0, n - 1]:
        c = lagrange_coefficients(basis, R[:, j])
        assert np.allclose(c, np.eye(n)[:, j], atol=1e-10)


def test_lagrange_single_snapshot(oned):
    basis, _ = _build_basis(oned, [[0.1]])
    u_hat = np.array([2.5])
    c = lagrange_coefficients(basis, u_hat)
    assert c[0] == pytest.approx(2.5 / basis.chol_coeffs[0, 0], rel=1e-14)


def test_lagrange_matches_snapshot_basis_galerkin_oracle(oned, oned_basis):
    basis, model = oned_basis
    mu = [0.33]
    # oracle: assemble the reduced system directly in the raw snapshot basis
    S = basis.xi @ basis.chol_coeffs  # snapshot columns
    A = assemble(oned, mu)
    f = load_vector(oned, mu)
    c_ref = np.linalg.solve(S.T @ A @ S, S.T @ f)
    c = lagrange_coefficients(basis, rb_solve(model, oned, mu))
    assert np.linalg.norm(c - c_ref) <= 1e-8 * max(np.linalg.norm(c_ref), 1.0)


def test_lagrange_kronecker_at_snapshots(oned, oned_basis):
    basis, model = oned_basis
    for n, mu in enumerate(basis.sample_set):
        c = lagrange_coefficients(basis, rb_solve(model, oned, mu))
        assert np.max(np.abs(c - np.eye(basis.size)[:, n])) <= 1e-8


def test_lagrange_warns_when_ill_conditioned(oned_basis):
    basis, _ = oned_basis
    bad = type(basis)(
        sample_set=basis.sample_set,
        xi=basis.xi,
        chol_coeffs=np.diag(np.logspace(0, -14, basis.size)),
        gram=basis.gram,
    )
    with pytest.warns(RuntimeWarning):
        lagrange_coefficients(bad, np.ones(basis.size))


# ---------------------------------------------------------------------------
# extend_basis


def test_extend_empty_basis(oned):
    snap = truth_solve(oned, [0.2])
    basis, model = extend_basis(
        empty_basis(oned.dim, oned.gram), empty_model(2, 1), snap, oned
    )
    assert basis.size == 1
    xi = basis.xi[:, 0]
    assert np.linalg.norm(xi) == pytest.approx(1.0, rel=1e-12)
    for q, Aq in enumerate(oned.a_components):
        assert model.a_blocks[q, 0, 0] == pytest.approx(xi @ Aq @ xi, rel=1e-12)


def test_extend_duplicate_snapshot_rejected(oned):
    snap = truth_solve(oned, [0.2])
    basis, model = _build_basis(oned, [[0.2]])
    near = truth_solve(oned, [0.2000000001])
    with pytest.raises(DependentSnapshotError):
        extend_basis(basis, model, near, oned)
    with pytest.raises(ValueError):
        extend_basis(basis, model, snap, oned)


def test_extend_matches_batch_assembly_oracle(oned):
    basis, model = _build_basis(oned, [[-0.4], [0.6]])
    Xi = basis.xi
    for q, Aq in enumerate(oned.a_components):
        assert np.allclose(model.a_blocks[q], Xi.T @ Aq @ Xi, atol=1e-12)
    for q, fq in enumerate(oned.f_components):
        assert np.allclose(model.f_blocks[q], Xi.T @ fq, atol=1e-12)


def test_extend_nesting_bit_identical(oned):
    basis2, model2 = _build_basis(oned, [[-0.4], [0.6]])
    basis3, model3 = extend_basis(basis2, model2, truth_solve(oned, [0.1]), oned)
    assert np.array_equal(model3.a_blocks[:, :2, :2], model2.a_blocks)
    assert np.array_equal(model3.f_blocks[:, :2], model2.f_blocks)
    assert np.array_equal(basis3.xi[:, :2], basis2.xi)
    assert np.array_equal(basis3.chol_coeffs[:2, :2], basis2.chol_coeffs)


def test_snapshot_reproduction_through_chol_coeffs(oned, oned_basis):
    basis, _ = oned_basis
    S = basis.xi @ basis.chol_coeffs
    for m, mu in enumerate(basis.sample_set):
        u = truth_solve(oned, mu).values
        assert np.linalg.norm(S[:, m] - u) <= 1e-10 * np.linalg.norm(u)


# ---------------------------------------------------------------------------
# greedy


def _greedy_setup(op, count=24, **kwargs):
    train = make_training_grid(op.spec.param_domain, [count])
    defaults = dict(eps_tol=1e-12, N_max=8, training_set=train,
                    estimator_kind="stable")
    defaults.update(kwargs)
    cfg = GreedyConfig(**defaults)
    est = make_estimator(cfg.estimator_kind, alpha_mode=cfg.alpha_mode)
    return cfg, est


def test_greedy_immediate_tolerance_hit(oned):
    cfg, est = _greedy_setup(oned, eps_tol=1e30)
    basis, model, history, _ = greedy(cfg, oned, est)
    assert basis.size == 1
    assert len(history.records) == 2  # seeded pick plus one recorded sweep
    assert not history.saturated


def test_greedy_nmax_cap(oned):
    cfg, est = _greedy_setup(oned, N_max=3)
    basis, _, history, _ = greedy(cfg, oned, est)
    assert basis.size == 3
    assert len(history.records) == 3  # seed + 2 sweeps
    assert history.estimates.shape == (2,)


def test_greedy_estimates_decrease_overall(oned):
    cfg, est = _greedy_setup(oned, N_max=8)
    _, _, history, _ = greedy(cfg, oned, est)
    eps = history.estimates
    assert eps[-1] < 1e-2 * eps[0]


def test_greedy_sample_set_distinct(oned):
    cfg, est = _greedy_setup(oned, N_max=8)
    basis, _, _, _ = greedy(cfg, oned, est)
    mus = [tuple(mu) for mu in basis.sample_set]
    assert len(set(mus)) == len(mus)


def test_greedy_seed_determinism(oned):
    runs = []
    for _ in range(2):
        cfg, est = _greedy_setup(oned, N_max=6, seed=3)
        _, _, history, _ = greedy(cfg, oned, est)
        runs.append(history.estimates)
    assert np.array_equal(runs[0], runs[1])


def test_greedy_different_seed_changes_first_pick(oned):
    firsts = set()
    for seed in range(6):
        cfg, est = _greedy_setup(oned, N_max=2, seed=seed)
        _, _, history, _ = greedy(cfg, oned, est)
        firsts.add(float(history.records[0].mu[0]))
    assert len(firsts) > 1


def test_greedy_saturates_on_tiny_training_set(oned):
    cfg, est = _greedy_setup(oned, count=2, N_max=10, eps_tol=1e-30)
    basis, _, history, _ = greedy(cfg, oned, est)
    assert history.saturated
    assert basis.size <= 2


def test_greedy_config_validation():
    train = np.array([[0.0], [1.0]])
    with pytest.raises(ValueError):
        GreedyConfig(eps_tol=0.0, N_max=5, training_set=train)
    with pytest.raises(ValueError):
        GreedyConfig(eps_tol=1e-6, N_max=0, training_set=train)
    with pytest.raises(ValueError):
        GreedyConfig(eps_tol=1e-6, N_max=5, training_set=train,
                     estimator_kind="nope")
    with pytest.raises(ValueError):
        GreedyConfig(eps_tol=1e-6, N_max=5, training_set=np.zeros((0, 1)))


def test_greedy_lebesgue_builds_usable_basis(oned):
    cfg, est = _greedy_setup(oned, N_max=6, estimator_kind="lebesgue")
    basis, model, history, _ = greedy(cfg, oned, est)
    assert basis.size == 6
    # the built space approximates an unseen parameter reasonably well
    mu = [0.37]
    u = truth_solve(oned, mu).values
    u_rb = reconstruct(basis, rb_solve(model, oned, mu))
    assert np.linalg.norm(u - u_rb) <= 1e-2 * np.linalg.norm(u)
