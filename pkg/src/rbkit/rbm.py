"""Reduced-basis machinery: snapshot basis management, reduced-model
assembly, reduced solves, Lagrange-coefficient recovery, and the greedy
sample-selection loop.
"""

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .numerics import DEFAULT_DROP_TOL, GramSpec, _mgs_coeffs, solve_dense
from .truth import Snapshot, truth_solve

__all__ = [
    "DependentSnapshotError",
    "ReducedBasis",
    "ReducedModel",
    "GreedyConfig",
    "GreedyRecord",
    "GreedyHistory",
    "empty_basis",
    "empty_model",
    "rb_solve",
    "lagrange_coefficients",
    "extend_basis",
    "reconstruct",
    "greedy",
]


class DependentSnapshotError(RuntimeError):
    """A new snapshot is numerically dependent on the current basis."""


@dataclass
class ReducedBasis:
    """Orthonormal snapshot basis with its triangular change-of-basis factor.

    ``xi`` holds the gram-orthonormal basis columns, ``chol_coeffs`` the
    upper-triangular factor R with snapshots = xi @ R, and ``sample_set``
    the selected parameters in greedy order.
    """

    sample_set: list
    xi: np.ndarray
    chol_coeffs: np.ndarray
    gram: GramSpec = field(default_factory=GramSpec)

    @property
    def size(self):
        return self.xi.shape[1]


@dataclass
class ReducedModel:
    """Parameter-independent N x N reduced blocks and reduced load vectors."""

    a_blocks: np.ndarray  # (Q_a, N, N), entry [q, n, m] = a^q(xi_m, xi_n)
    f_blocks: np.ndarray  # (Q_f, N), entry [q, n] = f^q(xi_n)

    @property
    def size(self):
        return self.a_blocks.shape[1]


@dataclass
class GreedyConfig:
    eps_tol: float
    N_max: int
    training_set: np.ndarray  # (M, p)
    estimator_kind: str = "stable"
    seed: int = 0
    alpha_mode: str = "unit"
    validate: str = "none"  # none | argmax | full

    def __post_init__(self):
        if self.eps_tol <= 0:
            raise ValueError("eps_tol must be positive")
        if self.N_max < 1:
            raise ValueError("N_max must be at least 1")
        self.training_set = np.atleast_2d(np.asarray(self.training_set, dtype=float))
        if self.training_set.shape[0] == 0:
            raise ValueError("training set must be nonempty")
        if self.estimator_kind not in ("classical", "stable", "lebesgue"):
            raise ValueError(f"unknown estimator kind {self.estimator_kind!r}")
        if self.alpha_mode not in ("unit", "exact-eig"):
            raise ValueError(f"unknown alpha mode {self.alpha_mode!r}")
        if self.validate not in ("none", "argmax", "full"):
            raise ValueError(f"unknown validate mode {self.validate!r}")


@dataclass
class GreedyRecord:
    n: int  # basis size when the sweep ran (0 for the seeded initial pick)
    mu: np.ndarray
    estimate: float
    seconds: float
    true_error_argmax: float | None = None
    true_error_max: float | None = None


@dataclass
class GreedyHistory:
    records: list = field(default_factory=list)
    saturated: bool = False

    @property
    def estimates(self):
        return np.array([r.estimate for r in self.records[1:]])


def empty_basis(dim, gram=None):
    return ReducedBasis(
        sample_set=[],
        xi=np.zeros((dim, 0)),
        chol_coeffs=np.zeros((0, 0)),
        gram=gram if gram is not None else GramSpec(),
    )


def empty_model(Q_a, Q_f):
    return ReducedModel(
        a_blocks=np.zeros((Q_a, 0, 0)), f_blocks=np.zeros((Q_f, 0))
    )


def rb_solve(model, op, mu):
    """Solve the reduced Galerkin system at mu in the orthonormal basis."""
    if model.size == 0:
        raise ValueError("reduced model is empty")
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    theta_a = np.array([th(mu) for th in op.theta_a])
    theta_f = np.array([th(mu) for th in op.theta_f])
    A = np.tensordot(theta_a, model.a_blocks, axes=1)
    rhs = theta_f @ model.f_blocks
    return solve_dense(A, rhs)


def lagrange_coefficients(basis, u_hat):
    """Snapshot-basis (cardinal Lagrange) coefficients c with R c = u_hat."""
    R = basis.chol_coeffs
    if R.shape[0] != len(u_hat):
        raise ValueError("coefficient length does not match basis size")
    cond = np.linalg.cond(R) if R.size else 0.0
    if cond > 1e12:
        warnings.warn(
            f"change-of-basis factor is ill conditioned (cond ~ {cond:.2e}); "
            "Lagrange coefficients may be inaccurate",
            RuntimeWarning,
            stacklevel=2,
        )
    return sla.solve_triangular(R, np.asarray(u_hat, dtype=float), lower=False)


def reconstruct(basis, u_hat):
    """Truth-space vector of the reduced solution: xi @ u_hat."""
    return basis.xi @ np.asarray(u_hat, dtype=float)


def extend_basis(basis, model, snapshot, op, drop_tol=DEFAULT_DROP_TOL):
    """Append one snapshot: orthonormalize it against the basis and grow the
    reduced blocks by one row and one column, leaving old entries untouched.

    Raises :class:`DependentSnapshotError` when the snapshot adds no stable
    new direction; the greedy driver treats that as a stopping signal.
    """
    for mu_prev in basis.sample_set:
        if np.array_equal(mu_prev, snapshot.mu):
            raise ValueError("parameter already in the sample set")
    gram = basis.gram
    v = np.asarray(snapshot.values, dtype=float)
    orig = gram.norm(v)
    coeffs, w = _mgs_coeffs(basis.xi, v, gram)
    wnorm = gram.norm(w)
    if orig == 0.0 or wnorm < drop_tol * orig:
        raise DependentSnapshotError(
            f"snapshot at mu={snapshot.mu} is dependent on the current basis "
            f"(projection residual {wnorm:.3e} vs norm {orig:.3e})"
        )
    xi_new = w / wnorm
    N = basis.size
    new_xi = np.column_stack([basis.xi, xi_new])
    new_R = np.zeros((N + 1, N + 1))
    new_R[:N, :N] = basis.chol_coeffs
    new_R[:N, N] = coeffs
    new_R[N, N] = wnorm
    new_basis = ReducedBasis(
        sample_set=basis.sample_set + [np.array(snapshot.mu, dtype=float)],
        xi=new_xi,
        chol_coeffs=new_R,
        gram=gram,
    )

    Qa = len(op.a_components)
    Qf = len(op.f_components)
    a_blocks = np.zeros((Qa, N + 1, N + 1))
    a_blocks[:, :N, :N] = model.a_blocks
    for q, Aq in enumerate(op.a_components):
        a_blocks[q, :, N] = new_xi.T @ (Aq @ xi_new)
        a_blocks[q, N, :N] = xi_new @ (Aq @ basis.xi)
    f_blocks = np.zeros((Qf, N + 1))
    f_blocks[:, :N] = model.f_blocks
    for q, fq in enumerate(op.f_components):
        f_blocks[q, N] = xi_new @ fq
    return new_basis, ReducedModel(a_blocks=a_blocks, f_blocks=f_blocks)


def _true_errors(op, basis, model, mus):
    errs = np.empty(len(mus))
    for i, mu in enumerate(mus):
        u_truth = truth_solve(op, mu)
        u_rb = reconstruct(basis, rb_solve(model, op, mu))
        errs[i] = basis.gram.norm(u_truth.values - u_rb)
    return errs


def greedy(config, op, estimator, workers=1):
    """Greedy construction of the reduced space, driven by ``estimator``.

    The first sample is a seed-deterministic uniform draw from the training
    set.  Each sweep evaluates the estimator at every not-yet-selected
    training point, selects the argmax (ties broken by lowest index), records
    the estimate, and stops once it falls to ``eps_tol`` or the basis reaches
    ``N_max`` or saturates.

    Returns ``(basis, model, history, estimator)``.
    """
    train = config.training_set
    M = train.shape[0]
    rng = np.random.default_rng(config.seed)
    first = int(rng.integers(M))

    history = GreedyHistory()
    t0 = time.perf_counter()
    snapshot = truth_solve(op, train[first])
    basis = empty_basis(op.dim, gram=op.gram)
    model = empty_model(len(op.a_components), len(op.f_components))
    basis, model = extend_basis(basis, model, snapshot, op)
    estimator.refresh(op, basis, model)
    history.records.append(
        GreedyRecord(0, train[first].copy(), float("nan"), time.perf_counter() - t0)
    )
    selected = [first]

    theta_a = op.theta_a_values(train)
    theta_f = op.theta_f_values(train)
    alpha = estimator.alpha_values(op, train)

    n = 1
    while n < config.N_max:
        t0 = time.perf_counter()
        values = estimator.sweep(op, basis, model, theta_a, theta_f, alpha, workers)
        masked = values.copy()
        masked[selected] = -np.inf
        best = int(np.argmax(masked))
        if masked[best] == -np.inf or np.max(values[selected]) > values[best]:
            # an already-selected point is the strict maximizer: re-selecting
            # it would force a dependent snapshot
            history.saturated = True
            break
        record = GreedyRecord(
            n, train[best].copy(), float(values[best]), time.perf_counter() - t0
        )
        if config.validate in ("argmax", "full"):
            record.true_error_argmax = float(
                _true_errors(op, basis, model, [train[best]])[0]
            )
        if config.validate == "full":
            record.true_error_max = float(np.max(_true_errors(op, basis, model, train)))
        record.seconds = time.perf_counter() - t0
        history.records.append(record)
        if record.estimate <= config.eps_tol:
            break
        snapshot = truth_solve(op, train[best])
        try:
            basis, model = extend_basis(basis, model, snapshot, op)
        except DependentSnapshotError:
            history.saturated = True
            break
        estimator.refresh(op, basis, model)
        selected.append(best)
        n += 1
    return basis, model, history, estimator
