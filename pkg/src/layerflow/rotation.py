"""Multi-day rotation analysis on the two-route Pigou network.

Route a has constant unit travel time; route b costs x^beta where x is its
flow. Total demand is normalized to 1. A binary group-by-day schedule swaps
participating groups between coordinated and equilibrium assignments;
participants split half-and-half between the two alternating patterns.

Closed forms (demand 1, participation rate p, sensitivity beta >= 1):

    mean participant time      (1 + (1 - p/2)^beta) / 2
    mean non-participant time  (1 - p/2)^beta
    system cost                p/2 + (1 - p/2)^(beta+1)
    rotation benefit           1 - system cost   (~ beta*p/2 for small p)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, OutOfRange


@dataclass(frozen=True)
class PigouInstance:
    beta: float = 1.0

    def __post_init__(self):
        if self.beta < 1:
            raise OutOfRange(f"beta must be >= 1, got {self.beta}")


@dataclass(frozen=True)
class RotationSchedule:
    """Binary groups-by-days matrix R plus per-group demand shares.

    R[i, d] = 1 means group i follows its coordinated (system-optimal)
    assignment on day d. Shares sum to the participation rate p.
    """

    R: np.ndarray
    shares: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        shares = np.asarray(self.shares, dtype=float)
        if R.ndim != 2:
            raise DimensionMismatch("R must be a groups-by-days matrix")
        if shares.shape != (R.shape[0],):
            raise DimensionMismatch("one share per group required")
        if not np.all((R == 0) | (R == 1)):
            raise ValueError("R entries must be 0 or 1")
        if np.any(shares < 0) or shares.sum() > 1 + 1e-12:
            raise OutOfRange("shares must be nonnegative with sum <= 1")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "shares", shares)

    @property
    def participation_rate(self):
        return float(self.shares.sum())

    @property
    def n_days(self):
        return self.R.shape[1]


@dataclass(frozen=True)
class RotationOutcome:
    """Two-day rotation results: the day-by-group cube plus summary scalars.

    Groups are ordered (pattern-1 participants, pattern-2 participants,
    non-participants); cube arrays are indexed [day, group].
    """

    p: float
    beta: float
    routes: tuple
    flows: np.ndarray
    times: np.ndarray
    t_participant: float
    t_nonparticipant: float
    system_cost: float
    delta: float
    delta_approx: float
    poa: float


def pigou_ue(instance):
    """Equilibrium: everyone on route b. Returns ((flow_a, flow_b), mean cost)."""
    return (0.0, 1.0), 1.0


def pigou_so(instance):
    """System optimum of (1-x) + x^(beta+1): x* = (beta+1)^(-1/beta)."""
    beta = instance.beta
    x = (beta + 1.0) ** (-1.0 / beta)
    cost = (1.0 - x) + x ** (beta + 1.0)
    return (1.0 - x, x), cost


def day_flows(schedule, x_so, x_ue):
    """Aggregate per-day flows from a rotation schedule.

    x_so and x_ue are (n_groups, k) arrays of each group's flow vector under
    the coordinated and equilibrium assignments; the day-d aggregate is
    sum_i R[i,d]*x_so[i] + (1-R[i,d])*x_ue[i], returned as (n_days, k).
    """
    x_so = np.atleast_2d(np.asarray(x_so, dtype=float))
    x_ue = np.atleast_2d(np.asarray(x_ue, dtype=float))
    R = schedule.R
    if x_so.shape != x_ue.shape or x_so.shape[0] != R.shape[0]:
        raise DimensionMismatch("per-group flow arrays must match the schedule's group count")
    return np.einsum("id,ik->dk", R, x_so) + np.einsum("id,ik->dk", 1.0 - R, x_ue)


def _check_p_beta(p, beta):
    if not 0.0 <= p <= 1.0:
        raise OutOfRange(f"participation rate must lie in [0, 1], got {p}")
    if beta < 1:
        raise OutOfRange(f"beta must be >= 1, got {beta}")


def microsimulate_two_days(p, beta):
    """Explicit two-day rotation run, independent of the closed forms.

    Builds the alternating schedule, aggregates flows with day_flows, prices
    route b at the aggregate, and averages what each group experiences.
    Returns (routes, flows, times, t_participant, t_nonparticipant,
    system_cost); cube arrays are (2 days, 3 groups).
    """
    _check_p_beta(p, beta)
    half = p / 2.0
    # Groups: two alternating participant halves, then non-participants.
    schedule = RotationSchedule(
        R=np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]),
        shares=np.array([half, half, 1.0 - p]),
    )
    # Flow vectors over routes (a, b): coordinated puts a participant group
    # on route a; the equilibrium assignment is route b for everyone.
    x_so = np.array([[half, 0.0], [half, 0.0], [0.0, 1.0 - p]])
    x_ue = np.array([[0.0, half], [0.0, half], [0.0, 1.0 - p]])
    aggregate = day_flows(schedule, x_so, x_ue)  # (2 days, 2 routes)

    routes = []
    flows = np.empty((2, 3))
    times = np.empty((2, 3))
    for day in range(2):
        f_a, f_b = aggregate[day]
        t_route = {"a": 1.0, "b": f_b**beta}
        day_routes = []
        for g in range(3):
            on_so = schedule.R[g, day] == 1.0 and g < 2
            route = "a" if on_so else "b"
            day_routes.append(route)
            flows[day, g] = f_a if route == "a" else f_b
            times[day, g] = t_route[route]
        routes.append(tuple(day_routes))

    shares = schedule.shares
    per_group_avg = times.mean(axis=0)
    t_part = float(per_group_avg[:2].mean())  # the two halves are symmetric
    t_nonpart = float(per_group_avg[2])
    system_cost = float((times @ shares).mean())
    return tuple(routes), flows, times, t_part, t_nonpart, system_cost


def evaluate_rotation(p, beta):
    """Two-day rotation outcome at participation rate p and sensitivity beta.

    Summary scalars come from the closed forms; the returned cube comes from
    the two-day microsimulation (the two must reconcile, which tests assert
    at 1e-12).
    """
    _check_p_beta(p, beta)
    routes, flows, times, _, _, _ = microsimulate_two_days(p, beta)
    t_part = (1.0 + (1.0 - p / 2.0) ** beta) / 2.0
    t_nonpart = (1.0 - p / 2.0) ** beta
    system_cost = p / 2.0 + (1.0 - p / 2.0) ** (beta + 1.0)
    so_cost = pigou_so(PigouInstance(beta))[1]
    return RotationOutcome(
        p=p,
        beta=beta,
        routes=routes,
        flows=flows,
        times=times,
        t_participant=t_part,
        t_nonparticipant=t_nonpart,
        system_cost=system_cost,
        delta=1.0 - system_cost,
        delta_approx=beta * p / 2.0,
        poa=system_cost / so_cost,
    )


def poa(p, beta):
    """Rotation system cost over the system-optimal mean cost.

    At p = 0 this is the classic equilibrium-over-optimum ratio.
    """
    return evaluate_rotation(p, beta).poa


def pareto_check(p, beta):
    """Whether rotation strictly improves both groups over pure equilibrium.

    Returns (improved, margin) with margin = 1 - max(participant,
    non-participant mean time).
    """
    outcome = evaluate_rotation(p, beta)
    worst = max(outcome.t_participant, outcome.t_nonparticipant)
    return (outcome.t_participant < 1.0 and outcome.t_nonparticipant < 1.0), 1.0 - worst
