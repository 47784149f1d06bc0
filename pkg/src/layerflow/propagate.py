"""Forward flow propagation, link performance, and backward time propagation.

The layered chain runs f_OD -> f_P -> f_L through the transposed mapping
matrices, prices links with the BPR volume-delay function, and aggregates
times back up: t_L -> t_P -> t_OD. All operations are pure functions over
immutable inputs; every vector is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NegativeDemand, NoPathForOD

import scipy.sparse as sp


@dataclass(frozen=True)
class BprParams:
    """Per-link BPR parameters (free-flow time, capacity, alpha, beta)."""

    t0: np.ndarray
    capacity: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        for name in ("t0", "capacity", "alpha", "beta"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.t0.shape[0]
        if any(getattr(self, k).shape != (n,) for k in ("capacity", "alpha", "beta")):
            raise DimensionMismatch("BPR parameter vectors must share one length")
        if np.any(self.t0 <= 0) or np.any(self.capacity <= 0):
            raise ValueError("free-flow times and capacities must be positive")
        if np.any(self.alpha < 0) or np.any(self.beta < 1):
            raise ValueError("require alpha >= 0 and beta >= 1")

    @classmethod
    def from_network(cls, network):
        return cls(
            t0=[lk.free_flow_time for lk in network.links],
            capacity=[lk.capacity for lk in network.links],
            alpha=[lk.bpr_alpha for lk in network.links],
            beta=[lk.bpr_beta for lk in network.links],
        )

    @property
    def n_links(self):
        return self.t0.shape[0]


@dataclass(frozen=True)
class FlowState:
    """Flows at the three layers. f_P is None for link-based solver results."""

    f_OD: np.ndarray
    f_P: np.ndarray | None
    f_L: np.ndarray


@dataclass(frozen=True)
class TimeState:
    """Travel times at the three layers. Path/OD layers may be None for
    link-based solver results."""

    t_L: np.ndarray
    t_P: np.ndarray | None
    t_OD: np.ndarray | None


def forward_flows(incidence, f_OD):
    """Propagate OD demand down to path and link flows: f_P = B^T f_OD, f_L = A^T f_P."""
    f_od = np.asarray(f_OD, dtype=float)
    if f_od.shape != (incidence.n_ods,):
        raise DimensionMismatch(f"expected {incidence.n_ods} OD demands, got {f_od.shape}")
    if np.any(f_od < 0):
        raise NegativeDemand("OD demands must be nonnegative")
    f_p = incidence.B.T @ f_od
    f_l = incidence.A.T @ f_p
    return FlowState(f_OD=f_od, f_P=f_p, f_L=f_l)


def bpr(f_L, params):
    """BPR volume-delay: t = t0 * (1 + alpha * (f/C)^beta)."""
    f = np.asarray(f_L, dtype=float)
    if f.shape != (params.n_links,):
        raise DimensionMismatch(f"expected {params.n_links} link flows, got {f.shape}")
    return params.t0 * (1.0 + params.alpha * (f / params.capacity) ** params.beta)


def backward_times(incidence, t_L):
    """Aggregate link times up the layers: t_P = A t_L, t_OD = B t_P."""
    t_l = np.asarray(t_L, dtype=float)
    if t_l.shape != (incidence.n_links,):
        raise DimensionMismatch(f"expected {incidence.n_links} link times, got {t_l.shape}")
    t_p = incidence.A @ t_l
    t_od = incidence.B @ t_p
    return t_p, t_od


def od_time_flow_weighted(f_P, t_P, f_OD, incidence):
    """Flow-weighted average OD time; min path time where demand is zero.

    t_od = sum_p f_p t_p / f_od over the OD's paths for f_od > 0. An OD with
    no path raises NoPathForOD.
    """
    f_p = np.asarray(f_P, dtype=float)
    t_p = np.asarray(t_P, dtype=float)
    f_od = np.asarray(f_OD, dtype=float)
    out = np.empty(incidence.n_ods)
    for od_index, path_idx in enumerate(incidence.paths_by_od()):
        if path_idx.size == 0:
            raise NoPathForOD(f"OD index {od_index} has no path")
        if f_od[od_index] > 0:
            out[od_index] = float(f_p[path_idx] @ t_p[path_idx]) / f_od[od_index]
        else:
            out[od_index] = float(np.min(t_p[path_idx]))
    return out


def logit_choice(t_P, theta, support):
    """Path-choice probabilities from a logit model over each OD's paths.

    b_{od,p} = exp(-theta t_p) / sum over the OD's paths, computed with a
    max-shift so large theta*t does not overflow. `support` is the binary
    OD-to-path indicator (or an IncidenceSet, whose indicator is used).
    """
    if hasattr(support, "B_indicator"):
        support = support.B_indicator
    t_p = np.asarray(t_P, dtype=float)
    if not np.isfinite(theta):
        raise ValueError("theta must be finite")
    support = support.tocsr()
    n_ods, n_paths = support.shape
    rows, cols, vals = [], [], []
    for od_index in range(n_ods):
        path_idx = support.indices[support.indptr[od_index]:support.indptr[od_index + 1]]
        if path_idx.size == 0:
            continue
        u = -theta * t_p[path_idx]
        u -= u.max()
        w = np.exp(u)
        w /= w.sum()
        rows.extend([od_index] * path_idx.size)
        cols.extend(path_idx.tolist())
        vals.extend(w.tolist())
    return sp.csr_array((vals, (rows, cols)), shape=(n_ods, n_paths))


def full_chain(f_OD, incidence, params):
    """Composite pass: forward flows, BPR link times, backward times."""
    flows = forward_flows(incidence, f_OD)
    t_l = bpr(flows.f_L, params)
    t_p, t_od = backward_times(incidence, t_l)
    return flows, TimeState(t_L=t_l, t_P=t_p, t_OD=t_od)
