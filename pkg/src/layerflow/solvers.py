"""Equilibrium and optimal assignment on the layered network.

Two user-equilibrium solvers are provided as cross-checking routes: a
path-based gradient projection (shifts flow toward each OD's current
minimum-time path) and a link-based Frank-Wolfe (all-or-nothing direction
plus exact bisection line search on the Beckmann objective). System-optimal
assignment reuses gradient projection on marginal costs, which for BPR is
the same function with alpha scaled by (beta + 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import network as net
from .errors import DimensionMismatch, ZeroTotalCost
from .propagate import BprParams, FlowState, TimeState, bpr


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 1000
    gap_tolerance: float = 1e-4
    step_rule: str = "diminishing"  # fixed | diminishing | line_search
    step_size: float | None = None  # fixed step or s0 for diminishing
    seed: int = 0

    def __post_init__(self):
        if self.gap_tolerance <= 0:
            raise ValueError("gap_tolerance must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.step_rule not in ("fixed", "diminishing", "line_search"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")


@dataclass(frozen=True)
class AssignmentResult:
    flows: FlowState
    times: TimeState
    od_times: np.ndarray
    gap_history: np.ndarray
    objective_history: np.ndarray
    iterations: int
    converged: bool
    mean_cost: float  # total system time per unit demand

    @property
    def total_system_time(self):
        return float(self.flows.f_L @ self.times.t_L)


def beckmann_objective(f_L, params):
    """Sum of link integrals of the BPR function, in closed form:
    t0*f + t0*alpha*C/(beta+1) * (f/C)^(beta+1)."""
    f = np.asarray(f_L, dtype=float)
    if f.shape != (params.n_links,):
        raise DimensionMismatch(f"expected {params.n_links} link flows, got {f.shape}")
    ratio = f / params.capacity
    integral = params.t0 * f + params.t0 * params.alpha * params.capacity / (
        params.beta + 1.0
    ) * ratio ** (params.beta + 1.0)
    return float(np.sum(integral))


def relative_gap(f_P, t_P, f_OD, incidence):
    """(total path cost - all-on-best-path cost) / total path cost, in [0, 1]."""
    f_p = np.asarray(f_P, dtype=float)
    t_p = np.asarray(t_P, dtype=float)
    f_od = np.asarray(f_OD, dtype=float)
    total = float(f_p @ t_p)
    if total == 0.0:
        raise ZeroTotalCost("relative gap undefined: total path cost is zero")
    best = 0.0
    for od_index, path_idx in enumerate(incidence.paths_by_od()):
        if path_idx.size == 0 or f_od[od_index] <= 0:
            continue
        best += f_od[od_index] * float(np.min(t_p[path_idx]))
    return (total - best) / total


def _uniform_start(incidence, f_OD):
    """Demand split evenly over each OD's paths."""
    f_p = np.zeros(incidence.n_paths)
    for od_index, path_idx in enumerate(incidence.paths_by_od()):
        if path_idx.size:
            f_p[path_idx] = f_OD[od_index] / path_idx.size
    return f_p


def _default_s0(incidence, f_P, params):
    """1 / max link-time derivative at the starting flows (plus epsilon)."""
    from .adjoint import link_time_jacobian

    f_l = incidence.A.T @ f_P
    d = link_time_jacobian(f_l, params).diagonal
    return 1.0 / (float(np.max(d)) + 1e-12)


def solve_ue_gradient_projection(network, incidence, config=SolverConfig(), params=None):
    """Path-based user equilibrium via gradient projection.

    Each iteration shifts flow on every OD from costlier paths toward the
    current minimum-time path by step * (t_p - t_min), clipping at zero; the
    minimum path absorbs the difference so OD totals are conserved exactly.
    """
    if params is None:
        params = BprParams.from_network(network)
    f_od = network.demand_vector
    f_p = _uniform_start(incidence, f_od)
    by_od = incidence.paths_by_od()
    s0 = config.step_size if config.step_size is not None else _default_s0(incidence, f_p, params)

    gaps, objectives = [], []
    converged = False
    iterations = 0
    for k in range(1, config.max_iterations + 1):
        iterations = k
        f_l = incidence.A.T @ f_p
        t_l = bpr(f_l, params)
        t_p = incidence.A @ t_l
        gap = relative_gap(f_p, t_p, f_od, incidence)
        gaps.append(gap)
        objectives.append(beckmann_objective(f_l, params))
        if gap <= config.gap_tolerance:
            converged = True
            break

        if config.step_rule == "fixed":
            step = s0
        elif config.step_rule == "diminishing":
            step = s0 / k
        else:  # line_search: halve until the Beckmann objective does not increase
            step = s0
            base = objectives[-1]
            for _ in range(30):
                trial = _gp_shift(f_p, t_p, f_od, by_od, step)
                if beckmann_objective(incidence.A.T @ trial, params) <= base + 1e-15:
                    break
                step *= 0.5
        f_p = _gp_shift(f_p, t_p, f_od, by_od, step)

    f_l = incidence.A.T @ f_p
    t_l = bpr(f_l, params)
    t_p = incidence.A @ t_l
    from .propagate import od_time_flow_weighted

    od_times = od_time_flow_weighted(f_p, t_p, f_od, incidence)
    total_demand = float(np.sum(f_od))
    mean_cost = float(f_l @ t_l) / total_demand if total_demand > 0 else 0.0
    return AssignmentResult(
        flows=FlowState(f_OD=f_od, f_P=f_p, f_L=f_l),
        times=TimeState(t_L=t_l, t_P=t_p, t_OD=od_times),
        od_times=od_times,
        gap_history=np.array(gaps),
        objective_history=np.array(objectives),
        iterations=iterations,
        converged=converged,
        mean_cost=mean_cost,
    )


def _gp_shift(f_p, t_p, f_od, by_od, step):
    """One projection sweep: move flow toward each OD's min-time path."""
    new = f_p.copy()
    for od_index, path_idx in enumerate(by_od):
        if path_idx.size <= 1 or f_od[od_index] <= 0:
            continue
        times = t_p[path_idx]
        best_local = int(np.argmin(times))
        t_min = times[best_local]
        moved = 0.0
        for j, p in enumerate(path_idx):
            if j == best_local:
                continue
            shift = min(new[p], step * (times[j] - t_min))
            new[p] -= shift
            moved += shift
        new[path_idx[best_local]] += moved
    return new


def _all_or_nothing(network, costs):
    """Link flows with every OD's demand on its current shortest path."""
    f_l = np.zeros(network.n_links)
    trees = {}
    for od in network.od_pairs:
        if od.demand <= 0:
            continue
        if od.origin not in trees:
            trees[od.origin] = net.shortest_path(network, costs, od.origin)
        labels, pred = trees[od.origin]
        if not math.isfinite(labels[od.destination]):
            raise net.DisconnectedOD(f"no path from {od.origin} to {od.destination}")
        node = od.destination
        while node != od.origin:
            link_idx = pred[node]
            f_l[link_idx] += od.demand
            node = network.links[link_idx].from_node
    return f_l


def _sp_od_times(network, costs):
    """Shortest-path time per OD pair at the given link costs."""
    out = np.zeros(len(network.od_pairs))
    trees = {}
    for i, od in enumerate(network.od_pairs):
        if od.origin not in trees:
            trees[od.origin] = net.shortest_path(network, costs, od.origin)
        out[i] = trees[od.origin][0][od.destination]
    return out


def solve_ue_frank_wolfe(network, config=SolverConfig(), params=None):
    """Link-based user equilibrium via Frank-Wolfe with exact bisection
    line search on the Beckmann objective. Path-layer results are None."""
    if params is None:
        params = BprParams.from_network(network)
    f_od = network.demand_vector
    total_demand = float(np.sum(f_od))

    f_l = _all_or_nothing(network, bpr(np.zeros(network.n_links), params))
    gaps, objectives = [], []
    converged = False
    iterations = 0
    for k in range(1, config.max_iterations + 1):
        iterations = k
        t_l = bpr(f_l, params)
        tstt = float(f_l @ t_l)
        sptt = float(f_od @ _sp_od_times(network, t_l))
        if tstt == 0.0:
            gap = 0.0
        else:
            gap = (tstt - sptt) / tstt
        gaps.append(gap)
        objectives.append(beckmann_objective(f_l, params))
        if gap <= config.gap_tolerance:
            converged = True
            break

        aon = _all_or_nothing(network, t_l)
        direction = aon - f_l
        # exact line search: bisection on d/dgamma Beckmann(f + gamma*dir)
        gamma = _bisect_line_search(f_l, direction, params)
        f_l = f_l + gamma * direction

    t_l = bpr(f_l, params)
    od_times = _sp_od_times(network, t_l)
    mean_cost = float(f_l @ t_l) / total_demand if total_demand > 0 else 0.0
    return AssignmentResult(
        flows=FlowState(f_OD=f_od, f_P=None, f_L=f_l),
        times=TimeState(t_L=t_l, t_P=None, t_OD=od_times),
        od_times=od_times,
        gap_history=np.array(gaps),
        objective_history=np.array(objectives),
        iterations=iterations,
        converged=converged,
        mean_cost=mean_cost,
    )


def _bisect_line_search(f_l, direction, params, iters=60):
    def deriv(gamma):
        return float(direction @ bpr(f_l + gamma * direction, params))

    lo, hi = 0.0, 1.0
    if deriv(0.0) >= 0.0:
        return 0.0
    if deriv(1.0) <= 0.0:
        return 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if deriv(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def marginal_cost_params(params):
    """BPR parameters of the marginal cost t + f t': alpha -> alpha*(beta+1)."""
    return BprParams(
        t0=params.t0,
        capacity=params.capacity,
        alpha=params.alpha * (params.beta + 1.0),
        beta=params.beta,
    )


def solve_so(network, incidence, config=SolverConfig(), params=None):
    """System-optimal assignment: gradient projection on marginal costs.

    The returned times and mean cost are evaluated with the true (not
    marginal) BPR function at the optimal flows; gap history refers to the
    marginal-cost equilibrium.
    """
    if params is None:
        params = BprParams.from_network(network)
    marginal = marginal_cost_params(params)
    inner = solve_ue_gradient_projection(network, incidence, config, params=marginal)

    f_p, f_l, f_od = inner.flows.f_P, inner.flows.f_L, inner.flows.f_OD
    t_l = bpr(f_l, params)
    t_p = incidence.A @ t_l
    from .propagate import od_time_flow_weighted

    od_times = od_time_flow_weighted(f_p, t_p, f_od, incidence)
    total_demand = float(np.sum(f_od))
    mean_cost = float(f_l @ t_l) / total_demand if total_demand > 0 else 0.0
    return replace(
        inner,
        times=TimeState(t_L=t_l, t_P=t_p, t_OD=od_times),
        od_times=od_times,
        mean_cost=mean_cost,
    )
