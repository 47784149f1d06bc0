"""Exact derivatives through the layered flow-time chain.

The link-time Jacobian is diagonal (separable volume-delay), the composite
OD sensitivity is B A diag(d) A^T B^T, and the backward pass propagates
caller-supplied objective partials down to a path-flow gradient:

    p3 = dZ/dt_P
    p2 = dZ/dt_L + A^T p3
    p1 = dZ/df_L + diag(d) p2
    grad_fP = A p1

A is |P|x|L| throughout; the A^T in the p2 recursion is fixed by dimensional
analysis and validated against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFiniteEvaluation


@dataclass(frozen=True)
class LinkTimeJacobian:
    """Diagonal of dt_L/df_L: d = t0 * alpha * beta / C * (f/C)^(beta-1)."""

    diagonal: np.ndarray


@dataclass(frozen=True)
class ObjectiveGradients:
    """Caller-supplied partials of the objective at the current chain point."""

    dZ_dfL: np.ndarray
    dZ_dtL: np.ndarray
    dZ_dtP: np.ndarray


@dataclass(frozen=True)
class AdjointState:
    p3: np.ndarray
    p2: np.ndarray
    p1: np.ndarray
    grad_fP: np.ndarray
    lam: np.ndarray | None = None
    mu: np.ndarray | None = None


def link_time_jacobian(f_L, params):
    """Elementwise derivative of the BPR function at the given link flows."""
    f = np.asarray(f_L, dtype=float)
    if f.shape != (params.n_links,):
        raise DimensionMismatch(f"expected {params.n_links} link flows, got {f.shape}")
    ratio = f / params.capacity
    d = params.t0 * params.alpha * params.beta / params.capacity * ratio ** (params.beta - 1.0)
    return LinkTimeJacobian(diagonal=d)


def od_sensitivity(incidence, jac):
    """Composite dt_OD/df_OD = B A diag(d) A^T B^T as a dense symmetric matrix."""
    d = np.asarray(jac.diagonal, dtype=float)
    if d.shape != (incidence.n_links,):
        raise DimensionMismatch(f"expected {incidence.n_links} diagonal entries, got {d.shape}")
    M = (incidence.B @ incidence.A).toarray()  # |OD| x |L|
    return (M * d) @ M.T


def adjoint_backward(incidence, jac, grads):
    """Backward pass turning objective partials into a path-flow gradient."""
    d = np.asarray(jac.diagonal, dtype=float)
    dZ_dfL = np.asarray(grads.dZ_dfL, dtype=float)
    dZ_dtL = np.asarray(grads.dZ_dtL, dtype=float)
    dZ_dtP = np.asarray(grads.dZ_dtP, dtype=float)
    n_l, n_p = incidence.n_links, incidence.n_paths
    if dZ_dfL.shape != (n_l,) or dZ_dtL.shape != (n_l,) or dZ_dtP.shape != (n_p,):
        raise DimensionMismatch("objective partials do not match incidence dimensions")
    if d.shape != (n_l,):
        raise DimensionMismatch("Jacobian diagonal does not match link count")
    p3 = dZ_dtP
    p2 = dZ_dtL + incidence.A.T @ p3
    p1 = dZ_dfL + d * p2
    grad_fP = incidence.A @ p1
    return AdjointState(
        p3=p3,
        p2=p2,
        p1=p1,
        grad_fP=grad_fP,
        lam=np.zeros(incidence.n_ods),
        mu=np.zeros(n_p),
    )


def default_fd_step(point):
    """Per-coordinate central-difference step: 1e-4 * max(1, |x_i|)."""
    x = np.asarray(point, dtype=float)
    return 1e-4 * np.maximum(1.0, np.abs(x))


def finite_diff_check(func, point, analytic_jacobian, h=None):
    """Max relative error of an analytic Jacobian against central differences.

    `func` maps an n-vector to an m-vector; `analytic_jacobian` is an (m, n)
    array or a callable returning the Jacobian-vector product for a basis
    direction. Per-coordinate relative error uses denominator
    max(1e-12, |analytic entry|).
    """
    x = np.asarray(point, dtype=float)
    n = x.shape[0]
    steps = np.full(n, float(h)) if h is not None else default_fd_step(x)
    if np.any(steps <= 0):
        raise ValueError("step must be positive")

    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = steps[i]
        f_plus = np.asarray(func(x + e), dtype=float)
        f_minus = np.asarray(func(x - e), dtype=float)
        if not (np.all(np.isfinite(f_plus)) and np.all(np.isfinite(f_minus))):
            raise NonFiniteEvaluation(f"function returned non-finite values near coordinate {i}")
        cols.append((f_plus - f_minus) / (2.0 * steps[i]))
    fd = np.column_stack(cols)

    if callable(analytic_jacobian):
        acols = []
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            acols.append(np.asarray(analytic_jacobian(e), dtype=float))
        analytic = np.column_stack(acols)
    else:
        analytic = np.asarray(analytic_jacobian, dtype=float)
    if analytic.shape != fd.shape:
        raise DimensionMismatch(f"analytic Jacobian shape {analytic.shape} != {fd.shape}")

    denom = np.maximum(1e-12, np.abs(analytic))
    return float(np.max(np.abs(fd - analytic) / denom))
