"""Hot inner loops for the greedy sweep.

One greedy sweep evaluates the reduced solve plus an error indicator at every
training parameter, which dominates offline runtime once the training grid is
large.  The loops below are compiled with numba when available; setting the
environment variable ``RBKIT_NO_JIT=1`` selects the pure-numpy fallback (the
same functions, uncompiled).  Both backends run the identical code path, so a
given backend is deterministic run to run and chunk-parallel sweeps reduce to
the same numbers as serial ones.

All kernels take precomputed theta tables, ``theta_a (M, Q_a)`` and
``theta_f (M, Q_f)``, the reduced blocks ``a_blocks (Q_a, N, N)`` and
``f_blocks (Q_f, N)``, and return one indicator value per parameter.  The
residual-coefficient ordering is snapshot-major: ``c[m*Q_a + q]``.
"""

import os

import numpy as np

__all__ = [
    "USE_JIT",
    "HAVE_NUMBA",
    "classical_sweep",
    "stable_sweep",
    "lebesgue_sweep",
    "classical_sweep_numpy",
    "stable_sweep_numpy",
    "lebesgue_sweep_numpy",
    "classical_sweep_jit",
    "stable_sweep_jit",
    "lebesgue_sweep_jit",
]

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_JIT = HAVE_NUMBA and os.environ.get("RBKIT_NO_JIT", "") not in ("1", "true", "yes")


def _classical_sweep_impl(theta_a, theta_f, alpha, a_blocks, f_blocks, cc, cl, ll):
    """Expanded-quadratic residual estimate per parameter; returns
    (values, clamped) where clamped marks parameters whose squared form went
    negative in floating point and was clamped at zero."""
    M = theta_a.shape[0]
    Qa = a_blocks.shape[0]
    Qf = f_blocks.shape[0]
    N = a_blocks.shape[1]
    values = np.empty(M)
    clamped = np.zeros(M, dtype=np.bool_)
    for i in range(M):
        A = np.zeros((N, N))
        for q in range(Qa):
            A += theta_a[i, q] * a_blocks[q]
        rhs = np.zeros(N)
        for q in range(Qf):
            rhs += theta_f[i, q] * f_blocks[q]
        u = np.linalg.solve(A, rhs)
        c = np.empty(N * Qa)
        for m in range(N):
            for q in range(Qa):
                c[m * Qa + q] = theta_a[i, q] * u[m]
        tf = theta_f[i]
        quad = np.dot(np.dot(tf, cc), tf) + np.dot(np.dot(c, ll), c) - 2.0 * np.dot(
            np.dot(tf, cl), c
        )
        if quad < 0.0:
            clamped[i] = True
            quad = 0.0
        values[i] = np.sqrt(quad) / alpha[i]
    return values, clamped


def _stable_sweep_impl(theta_a, theta_f, alpha, a_blocks, f_blocks, w_coords, qtc, rzt):
    """Pythagorean-split residual estimate per parameter (never clamped)."""
    M = theta_a.shape[0]
    Qa = a_blocks.shape[0]
    Qf = f_blocks.shape[0]
    N = a_blocks.shape[1]
    values = np.empty(M)
    for i in range(M):
        A = np.zeros((N, N))
        for q in range(Qa):
            A += theta_a[i, q] * a_blocks[q]
        rhs = np.zeros(N)
        for q in range(Qf):
            rhs += theta_f[i, q] * f_blocks[q]
        u = np.linalg.solve(A, rhs)
        c = np.empty(N * Qa)
        for m in range(N):
            for q in range(Qa):
                c[m * Qa + q] = theta_a[i, q] * u[m]
        tf = theta_f[i]
        t1 = np.dot(w_coords, tf)
        t2 = np.dot(qtc, tf) - np.dot(rzt, c)
        values[i] = np.sqrt(np.dot(t1, t1) + np.dot(t2, t2)) / alpha[i]
    return values


def _lebesgue_sweep_impl(theta_a, theta_f, a_blocks, f_blocks, rs):
    """Sum of absolute snapshot-basis (Lagrange) coefficients per parameter.

    ``rs`` is the upper-triangular change-of-basis factor with
    snapshots = basis @ rs; the Lagrange coefficients solve rs c = u by
    back substitution.
    """
    M = theta_a.shape[0]
    Qa = a_blocks.shape[0]
    Qf = f_blocks.shape[0]
    N = a_blocks.shape[1]
    values = np.empty(M)
    for i in range(M):
        A = np.zeros((N, N))
        for q in range(Qa):
            A += theta_a[i, q] * a_blocks[q]
        rhs = np.zeros(N)
        for q in range(Qf):
            rhs += theta_f[i, q] * f_blocks[q]
        u = np.linalg.solve(A, rhs)
        c = np.empty(N)
        for m in range(N - 1, -1, -1):
            s = u[m]
            for k in range(m + 1, N):
                s -= rs[m, k] * c[k]
            c[m] = s / rs[m, m]
        acc = 0.0
        for m in range(N):
            acc += abs(c[m])
        values[i] = acc
    return values


classical_sweep_numpy = _classical_sweep_impl
stable_sweep_numpy = _stable_sweep_impl
lebesgue_sweep_numpy = _lebesgue_sweep_impl

if HAVE_NUMBA:
    classical_sweep_jit = njit(cache=True)(_classical_sweep_impl)
    stable_sweep_jit = njit(cache=True)(_stable_sweep_impl)
    lebesgue_sweep_jit = njit(cache=True)(_lebesgue_sweep_impl)
else:  # pragma: no cover
    classical_sweep_jit = None
    stable_sweep_jit = None
    lebesgue_sweep_jit = None

if USE_JIT:
    classical_sweep = classical_sweep_jit
    stable_sweep = stable_sweep_jit
    lebesgue_sweep = lebesgue_sweep_jit
else:
    classical_sweep = classical_sweep_numpy
    stable_sweep = stable_sweep_numpy
    lebesgue_sweep = lebesgue_sweep_numpy
