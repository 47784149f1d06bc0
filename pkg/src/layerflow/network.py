"""Network data model, GMNS-style CSV ingestion, shortest paths, and incidence assembly.

Links are renumbered internally to dense 0-based indices (ascending original
link_id); all matrices and path link sequences use these indices. Original ids
are kept on the Link records for I/O.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import (
    DanglingNodeReference,
    DisconnectedOD,
    MissingColumn,
    NegativeCost,
    NegativeDemand,
    NonPositiveCapacity,
    NonPositiveFreeFlowTime,
    RowSumViolation,
)

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class Node:
    node_id: int
    x: float | None = None
    y: float | None = None


@dataclass(frozen=True)
class Link:
    link_id: int
    from_node: int
    to_node: int
    free_flow_time: float
    capacity: float
    bpr_alpha: float
    bpr_beta: float


@dataclass(frozen=True)
class ODPair:
    origin: int
    destination: int
    demand: float


@dataclass(frozen=True)
class Path:
    """A simple path, stored as a sequence of internal link indices."""

    path_id: int
    od_index: int
    link_sequence: tuple[int, ...]


@dataclass(frozen=True)
class Network:
    """Immutable directed network with BPR link attributes and an OD table."""

    nodes: tuple[Node, ...]
    links: tuple[Link, ...]
    od_pairs: tuple[ODPair, ...]

    @property
    def n_links(self):
        return len(self.links)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def demand_vector(self):
        return np.array([od.demand for od in self.od_pairs], dtype=float)

    @property
    def free_flow_times(self):
        return np.array([lk.free_flow_time for lk in self.links], dtype=float)

    def node_index(self, node_id):
        return self._node_index[node_id]

    def outgoing(self, node_id):
        """Links leaving node_id as (link_index, to_node) pairs, ascending link index."""
        return self._adjacency.get(node_id, ())

    def __post_init__(self):
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise DanglingNodeReference("duplicate node ids in node table")
        object.__setattr__(self, "_node_index", {nid: i for i, nid in enumerate(ids)})
        adjacency: dict[int, list[tuple[int, int]]] = {}
        for idx, lk in enumerate(self.links):
            adjacency.setdefault(lk.from_node, []).append((idx, lk.to_node))
        object.__setattr__(
            self, "_adjacency", {n: tuple(sorted(out)) for n, out in adjacency.items()}
        )


@dataclass(frozen=True)
class PathSet:
    """Deterministically ordered collection of paths over a Network's OD list."""

    paths: tuple[Path, ...]
    n_ods: int

    def __len__(self):
        return len(self.paths)

    def paths_for_od(self, od_index):
        return tuple(p for p in self.paths if p.od_index == od_index)


@dataclass(frozen=True)
class IncidenceSet:
    """Path-to-link incidence A, OD-to-path choice matrix B, and its support indicator.

    A is |P|x|L| binary, B is |OD|x|P| row-stochastic on demanded ODs, and
    B_indicator marks which paths serve which OD pair. Stored as CSR.
    """

    A: sp.csr_array
    B: sp.csr_array
    B_indicator: sp.csr_array

    def __post_init__(self):
        n_paths = self.A.shape[0]
        if self.B.shape[1] != n_paths or self.B_indicator.shape != self.B.shape:
            raise ValueError("inconsistent incidence dimensions")
        a = self.A.tocoo()
        if a.nnz and not np.all((a.data == 1.0)):
            raise ValueError("A must be binary")
        # support of B must lie inside the indicator support
        mask = self.B_indicator.toarray() > 0
        b = self.B.toarray()
        if np.any((b != 0) & ~mask):
            raise ValueError("B has mass outside the indicator support")

    @property
    def n_paths(self):
        return self.A.shape[0]

    @property
    def n_links(self):
        return self.A.shape[1]

    @property
    def n_ods(self):
        return self.B.shape[0]

    def paths_by_od(self):
        """List of path-index arrays, one per OD row of the indicator."""
        ind = self.B_indicator.tocsr()
        return [ind.indices[ind.indptr[i]:ind.indptr[i + 1]] for i in range(self.n_ods)]


# ---------------------------------------------------------------------------
# GMNS ingestion
# ---------------------------------------------------------------------------

NODE_COLUMNS = ("node_id", "x_coord", "y_coord")
LINK_COLUMNS = (
    "link_id",
    "from_node_id",
    "to_node_id",
    "free_flow_time",
    "capacity",
    "bpr_alpha",
    "bpr_beta",
)
DEMAND_COLUMNS = ("o_zone_id", "d_zone_id", "volume")


def _read_rows(path, required):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise MissingColumn(f"{path}: missing column '{col}'")
        return list(reader)


def load_gmns(node_csv, link_csv, demand_csv):
    """Load a Network from GMNS-style node/link/demand CSV files.

    Ordering is deterministic: nodes and links ascend by id, OD pairs by
    (origin, destination).
    """
    node_rows = _read_rows(node_csv, ("node_id",))
    nodes = []
    for row in node_rows:
        x = row.get("x_coord")
        y = row.get("y_coord")
        nodes.append(
            Node(
                node_id=int(row["node_id"]),
                x=float(x) if x not in (None, "") else None,
                y=float(y) if y not in (None, "") else None,
            )
        )
    nodes.sort(key=lambda n: n.node_id)
    node_ids = {n.node_id for n in nodes}

    link_rows = _read_rows(link_csv, LINK_COLUMNS)
    links = []
    for i, row in enumerate(link_rows, start=2):  # header is line 1
        lk = Link(
            link_id=int(row["link_id"]),
            from_node=int(row["from_node_id"]),
            to_node=int(row["to_node_id"]),
            free_flow_time=float(row["free_flow_time"]),
            capacity=float(row["capacity"]),
            bpr_alpha=float(row["bpr_alpha"]),
            bpr_beta=float(row["bpr_beta"]),
        )
        if lk.from_node not in node_ids:
            raise DanglingNodeReference(f"{link_csv} row {i}: unknown from_node_id {lk.from_node}")
        if lk.to_node not in node_ids:
            raise DanglingNodeReference(f"{link_csv} row {i}: unknown to_node_id {lk.to_node}")
        if lk.capacity <= 0:
            raise NonPositiveCapacity(f"{link_csv} row {i}: capacity {lk.capacity} must be > 0")
        if lk.free_flow_time <= 0:
            raise NonPositiveFreeFlowTime(
                f"{link_csv} row {i}: free_flow_time {lk.free_flow_time} must be > 0"
            )
        links.append(lk)
    links.sort(key=lambda l: l.link_id)

    demand_rows = _read_rows(demand_csv, DEMAND_COLUMNS)
    od_pairs = []
    seen = set()
    for i, row in enumerate(demand_rows, start=2):
        o, d = int(row["o_zone_id"]), int(row["d_zone_id"])
        vol = float(row["volume"])
        if o not in node_ids:
            raise DanglingNodeReference(f"{demand_csv} row {i}: unknown o_zone_id {o}")
        if d not in node_ids:
            raise DanglingNodeReference(f"{demand_csv} row {i}: unknown d_zone_id {d}")
        if vol < 0:
            raise NegativeDemand(f"{demand_csv} row {i}: volume {vol} must be >= 0")
        if (o, d) in seen:
            raise DanglingNodeReference(f"{demand_csv} row {i}: duplicate OD pair ({o},{d})")
        seen.add((o, d))
        od_pairs.append(ODPair(o, d, vol))
    od_pairs.sort(key=lambda od: (od.origin, od.destination))

    return Network(tuple(nodes), tuple(links), tuple(od_pairs))


# ---------------------------------------------------------------------------
# Shortest paths
# ---------------------------------------------------------------------------


def shortest_path(network, link_costs, origin):
    """Dijkstra tree from origin under the given per-link costs.

    Returns (labels, pred_link): dicts keyed by node id. Unreachable nodes get
    label +inf and pred_link None. Equal-cost alternatives resolve to the
    smaller incoming link index.
    """
    costs = np.asarray(link_costs, dtype=float)
    if costs.shape != (network.n_links,):
        raise NegativeCost(f"expected {network.n_links} link costs, got shape {costs.shape}")
    if np.any(costs < 0) or not np.all(np.isfinite(costs)):
        raise NegativeCost("link costs must be nonnegative and finite")

    labels = {n.node_id: math.inf for n in network.nodes}
    pred_link: dict[int, int | None] = {n.node_id: None for n in network.nodes}
    labels[origin] = 0.0
    heap = [(0.0, origin)]
    done = set()
    while heap:
        dist, u = heapq.heappop(heap)
        if u in done or dist > labels[u]:
            continue
        done.add(u)
        for link_idx, v in network.outgoing(u):
            if v in done:
                continue
            nd = dist + costs[link_idx]
            if nd < labels[v] or (nd == labels[v] and (pred_link[v] is None or link_idx < pred_link[v])):
                if nd < labels[v]:
                    heapq.heappush(heap, (nd, v))
                labels[v] = nd
                pred_link[v] = link_idx
    return labels, pred_link


def _trace_path(network, pred_link, origin, destination):
    """Walk predecessor links back from destination; None if unreachable."""
    seq = []
    node = destination
    while node != origin:
        link_idx = pred_link.get(node)
        if link_idx is None:
            return None
        seq.append(link_idx)
        node = network.links[link_idx].from_node
    seq.reverse()
    return tuple(seq)


def generate_paths(network, rounds=1):
    """Seed a static path set with repeated shortest-path rounds.

    Round 1 uses free-flow times. Each later round loads demand uniformly over
    the paths found so far, prices links with BPR, and appends any new shortest
    paths. Raises DisconnectedOD when a positive-demand pair has no path.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    from .propagate import BprParams, bpr  # local import to avoid a cycle

    demanded = [i for i, od in enumerate(network.od_pairs) if od.demand > 0]
    paths: list[Path] = []
    seen: set[tuple[int, tuple[int, ...]]] = set()
    params = BprParams.from_network(network)

    for rnd in range(rounds):
        if rnd == 0:
            costs = network.free_flow_times
        else:
            inc = build_incidence_set_uniform(network, PathSet(tuple(paths), len(network.od_pairs)))
            f_p = inc.B.T @ network.demand_vector
            f_l = inc.A.T @ f_p
            costs = bpr(f_l, params)
        trees = {}
        for od_index in demanded:
            od = network.od_pairs[od_index]
            if od.origin not in trees:
                trees[od.origin] = shortest_path(network, costs, od.origin)
            labels, pred = trees[od.origin]
            if not math.isfinite(labels[od.destination]):
                raise DisconnectedOD(
                    f"no path from {od.origin} to {od.destination} (demand {od.demand})"
                )
            seq = _trace_path(network, pred, od.origin, od.destination)
            key = (od_index, seq)
            if key not in seen:
                seen.add(key)
                paths.append(Path(path_id=len(paths), od_index=od_index, link_sequence=seq))
    return PathSet(tuple(paths), len(network.od_pairs))


# ---------------------------------------------------------------------------
# Incidence / choice matrices
# ---------------------------------------------------------------------------


def build_incidence(path_set, n_links):
    """Binary path-to-link incidence: A[p, l] = 1 iff link l lies on path p."""
    rows, cols = [], []
    for p in path_set.paths:
        for link_idx in p.link_sequence:
            if link_idx >= n_links:
                raise ValueError(f"path {p.path_id} references link index {link_idx} >= {n_links}")
            rows.append(p.path_id)
            cols.append(link_idx)
    data = np.ones(len(rows), dtype=float)
    return sp.csr_array((data, (rows, cols)), shape=(len(path_set.paths), n_links))


def build_support_indicator(path_set):
    """Binary OD-to-path indicator: 1 iff the path serves the OD pair."""
    rows = [p.od_index for p in path_set.paths]
    cols = [p.path_id for p in path_set.paths]
    data = np.ones(len(rows), dtype=float)
    return sp.csr_array((data, (rows, cols)), shape=(path_set.n_ods, len(path_set.paths)))


def build_choice_matrix(path_set, probabilities):
    """Row-stochastic OD-to-path matrix B plus its support indicator.

    probabilities is a per-path vector; each demanded OD's entries must be
    nonnegative and sum to 1 within 1e-12.
    """
    probs = np.asarray(probabilities, dtype=float)
    if probs.shape != (len(path_set.paths),):
        raise ValueError(f"expected {len(path_set.paths)} probabilities, got {probs.shape}")
    if np.any(probs < 0):
        raise RowSumViolation(-1, "negative entry")
    indicator = build_support_indicator(path_set)
    row_sums = np.zeros(path_set.n_ods)
    for p in path_set.paths:
        row_sums[p.od_index] += probs[p.path_id]
    has_path = np.asarray(indicator.sum(axis=1)).ravel() > 0
    for od_index in np.nonzero(has_path)[0]:
        if abs(row_sums[od_index] - 1.0) > ROW_SUM_TOL:
            raise RowSumViolation(int(od_index), row_sums[od_index])
    rows = [p.od_index for p in path_set.paths]
    cols = [p.path_id for p in path_set.paths]
    B = sp.csr_array((probs, (rows, cols)), shape=indicator.shape)
    return B, indicator


def build_incidence_set(path_set, n_links, probabilities):
    B, indicator = build_choice_matrix(path_set, probabilities)
    return IncidenceSet(A=build_incidence(path_set, n_links), B=B, B_indicator=indicator)


def build_incidence_set_uniform(network, path_set):
    """IncidenceSet with a uniform choice matrix over each OD's current paths."""
    counts = np.zeros(path_set.n_ods)
    for p in path_set.paths:
        counts[p.od_index] += 1
    probs = np.array([1.0 / counts[p.od_index] for p in path_set.paths])
    return build_incidence_set(path_set, network.n_links, probs)


def node_divergence(network, path_set, path_flows):
    """Per-OD node balance of the link flows induced by path flows.

    Returns an (n_ods, n_nodes) array; row od should equal +demand at the
    origin, -demand at the destination, and 0 elsewhere. Used as the
    link-based conservation oracle.
    """
    flows = np.asarray(path_flows, dtype=float)
    out = np.zeros((path_set.n_ods, network.n_nodes))
    for p in path_set.paths:
        for link_idx in p.link_sequence:
            lk = network.links[link_idx]
            out[p.od_index, network.node_index(lk.from_node)] += flows[p.path_id]
            out[p.od_index, network.node_index(lk.to_node)] -= flows[p.path_id]
    return out
