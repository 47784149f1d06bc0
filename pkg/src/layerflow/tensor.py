"""Dense named-axis tensors with CP and Tucker decompositions.

Unfolding convention, fixed and tested: mode-n fibers become rows after
moving axis n to the front; the remaining axes flatten in C order (original
axis order, last axis fastest). CP uses alternating least squares with
normal equations against the matched Khatri-Rao product; Tucker uses the
higher-order SVD with per-mode Gram eigendecompositions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BadMode, BadRanks, DimensionMismatch, RankDeficiencyWarning, ZeroNorm

_REGULARIZATION = 1e-10


@dataclass(frozen=True)
class NamedTensor:
    """Dense real tensor with one unique name per axis."""

    axis_names: tuple[str, ...]
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        names = tuple(self.axis_names)
        if len(names) != data.ndim:
            raise DimensionMismatch(f"{len(names)} axis names for a {data.ndim}-way tensor")
        if len(set(names)) != len(names):
            raise ValueError("axis names must be unique")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "axis_names", names)

    @property
    def shape(self):
        return self.data.shape

    @property
    def n_modes(self):
        return self.data.ndim


@dataclass(frozen=True)
class CPModel:
    """Sum-of-rank-one model: weights (descending) and unit-norm factor columns.

    fit_history holds the fit after each completed ALS sweep; its last entry
    is the reported fit of the model.
    """

    weights: np.ndarray
    factors: tuple[np.ndarray, ...]
    axis_names: tuple[str, ...]
    fit_history: np.ndarray | None = None

    @property
    def rank(self):
        return self.weights.shape[0]

    @property
    def final_fit(self):
        return float(self.fit_history[-1]) if self.fit_history is not None else None


@dataclass(frozen=True)
class TuckerModel:
    """Core tensor plus per-mode column-orthonormal factors."""

    core: NamedTensor
    factors: tuple[np.ndarray, ...]
    axis_names: tuple[str, ...]


def _check_mode(X, n):
    if not 0 <= n < X.n_modes:
        raise BadMode(f"mode {n} out of range for a {X.n_modes}-way tensor")


def mode_unfold(X, n):
    """Matrix with the mode-n fibers as rows."""
    _check_mode(X, n)
    return np.moveaxis(X.data, n, 0).reshape(X.shape[n], -1)


def mode_refold(M, n, shape, axis_names):
    """Inverse of mode_unfold for the given target shape."""
    shape = tuple(shape)
    if not 0 <= n < len(shape):
        raise BadMode(f"mode {n} out of range for shape {shape}")
    lead = (shape[n],) + shape[:n] + shape[n + 1:]
    return NamedTensor(tuple(axis_names), np.moveaxis(np.asarray(M).reshape(lead), 0, n))


def mode_n_product(X, M, n):
    """Contract mode n with the rows of M: extent of mode n becomes M's row count."""
    _check_mode(X, n)
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[1] != X.shape[n]:
        raise DimensionMismatch(
            f"matrix with {X.shape[n]} columns required for mode {n}, got {M.shape}"
        )
    out = np.moveaxis(np.tensordot(M, X.data, axes=(1, n)), 0, n)
    return NamedTensor(X.axis_names, out)


def khatri_rao(matrices):
    """Column-wise Kronecker product; first matrix's row index varies slowest."""
    out = matrices[0]
    for M in matrices[1:]:
        r = out.shape[1]
        out = (out[:, None, :] * M[None, :, :]).reshape(-1, r)
    return out


def fit(X, X_hat):
    """1 - ||X - X_hat||_F / ||X||_F."""
    if X.shape != X_hat.shape:
        raise DimensionMismatch(f"shape mismatch {X.shape} vs {X_hat.shape}")
    norm = np.linalg.norm(X.data)
    if norm == 0.0:
        raise ZeroNorm("fit undefined for a zero reference tensor")
    return 1.0 - np.linalg.norm(X.data - X_hat.data) / norm


def cp_reconstruct(model):
    """Assemble sum_r weight_r * outer(factor columns r)."""
    shape = tuple(f.shape[0] for f in model.factors)
    data = np.zeros(shape)
    for r in range(model.rank):
        comp = model.weights[r]
        block = model.factors[0][:, r]
        for f in model.factors[1:]:
            block = np.multiply.outer(block, f[:, r])
        data = data + comp * block
    return NamedTensor(model.axis_names, data.reshape(shape))


def cp_als(X, rank, tol=1e-10, max_sweeps=200, seed=0):
    """CP decomposition by alternating least squares.

    Each sweep solves the normal equations for one factor against the
    matched unfolding, absorbing column norms into the weights; stops when
    the relative fit change drops below tol. Deterministic for a fixed seed.
    """
    if rank < 1:
        raise BadRanks(f"rank must be >= 1, got {rank}")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    rng = np.random.default_rng(seed)
    n_modes = X.n_modes
    factors = []
    for extent in X.shape:
        F = rng.uniform(0.1, 1.0, size=(extent, rank))
        factors.append(F / np.linalg.norm(F, axis=0))
    weights = np.ones(rank)

    norm_x = np.linalg.norm(X.data)
    if norm_x == 0.0:
        raise ZeroNorm("cannot decompose a zero tensor")
    unfoldings = [mode_unfold(X, n) for n in range(n_modes)]

    history = []
    last_fit = -np.inf
    for _ in range(max_sweeps):
        for n in range(n_modes):
            others = [m for m in range(n_modes) if m != n]
            gram = np.ones((rank, rank))
            for m in others:
                gram *= factors[m].T @ factors[m]
            kr = khatri_rao([factors[m] for m in others])
            rhs = unfoldings[n] @ kr  # extent_n x rank
            gram_w = gram * np.outer(weights, weights)
            rhs_w = rhs * weights
            if np.linalg.cond(gram_w) > 1.0 / _REGULARIZATION:
                warnings.warn("rank-deficient ALS system; regularizing", RankDeficiencyWarning)
                gram_w = gram_w + _REGULARIZATION * np.eye(rank)
            F = np.linalg.solve(gram_w, rhs_w.T).T
            norms = np.linalg.norm(F, axis=0)
            norms = np.where(norms > 0, norms, 1.0)
            factors[n] = F / norms
            weights = weights * norms
        current = fit(X, cp_reconstruct(CPModel(weights, tuple(factors), X.axis_names)))
        history.append(current)
        if abs(current - last_fit) < tol:
            break
        last_fit = current

    order = np.argsort(-weights, kind="stable")
    return CPModel(
        weights=weights[order],
        factors=tuple(F[:, order] for F in factors),
        axis_names=X.axis_names,
        fit_history=np.array(history),
    )


def tucker_hosvd(X, ranks):
    """Truncated higher-order SVD.

    Per-mode factors are the leading eigenvectors of the unfolding Gram
    matrix, with a deterministic sign (largest-magnitude entry positive);
    the core is X contracted with the factor transposes.
    """
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != X.n_modes:
        raise BadRanks(f"{X.n_modes} ranks required, got {len(ranks)}")
    for n, (r, extent) in enumerate(zip(ranks, X.shape)):
        if not 1 <= r <= extent:
            raise BadRanks(f"mode {n}: rank {r} outside [1, {extent}]")

    factors = []
    for n in range(X.n_modes):
        unfolding = mode_unfold(X, n)
        gram = unfolding @ unfolding.T
        eigvals, eigvecs = np.linalg.eigh(gram)
        idx = np.argsort(eigvals)[::-1][: ranks[n]]
        U = eigvecs[:, idx]
        for c in range(U.shape[1]):
            pivot = np.argmax(np.abs(U[:, c]))
            if U[pivot, c] < 0:
                U[:, c] = -U[:, c]
        factors.append(U)

    core = X
    for n, U in enumerate(factors):
        core = mode_n_product(core, U.T, n)
    return TuckerModel(core=core, factors=tuple(factors), axis_names=X.axis_names)


def tucker_reconstruct(model):
    """Expand a Tucker model back to a full tensor."""
    out = model.core
    for n, U in enumerate(model.factors):
        out = mode_n_product(out, U, n)
    return NamedTensor(model.axis_names, out.data)
