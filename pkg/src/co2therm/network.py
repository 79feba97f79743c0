"""Coupled flow/thermal zone graphs and the tree-cotree flow decomposition.

The building is modeled as one set of zones carrying two edge sets: oriented
flow edges (advective air exchange) and undirected thermal edges (conductive
paths).  Mass balance at the constrained zones leaves only a subset of edge
flows free; ``tree_cotree_decompose`` splits the flow edges into independent
(cotree) and dependent (tree) ones, and ``solve_dependent_flows`` recovers a
balance-consistent flow field from the independent values.

Sign convention: a flow value is positive in the direction from -> to of its
edge, and the orientation coefficient of an edge at a zone is +1 when the
edge leaves that zone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import NetworkError

INTERIOR = "interior"
BOUNDARY = "boundary"

#: Mass-balance residual tolerance for solved flow fields [m^3/s].
MASS_BALANCE_TOL = 1e-12


@dataclass(frozen=True)
class Zone:
    id: str
    kind: str = INTERIOR
    volume: float | None = None


@dataclass(frozen=True)
class FlowEdge:
    """Oriented air-exchange path; flow is signed along src -> dst."""

    id: str
    src: str
    dst: str


@dataclass(frozen=True)
class ThermalEdge:
    """Undirected conductive path between two zones."""

    id: str
    a: str
    b: str

    def pair(self) -> frozenset[str]:
        return frozenset((self.a, self.b))


@dataclass(frozen=True)
class ZoneNetwork:
    zones: tuple[Zone, ...]
    flow_edges: tuple[FlowEdge, ...]
    thermal_edges: tuple[ThermalEdge, ...]
    constrained: frozenset[str]
    preferred_independent: tuple[str, ...] = ()

    @cached_property
    def zone_index(self) -> dict[str, int]:
        return {z.id: i for i, z in enumerate(self.zones)}

    @cached_property
    def interior_ids(self) -> tuple[str, ...]:
        return tuple(z.id for z in self.zones if z.kind == INTERIOR)

    @cached_property
    def boundary_ids(self) -> tuple[str, ...]:
        return tuple(z.id for z in self.zones if z.kind == BOUNDARY)

    @cached_property
    def flow_edge_index(self) -> dict[str, int]:
        return {e.id: i for i, e in enumerate(self.flow_edges)}

    @cached_property
    def thermal_edge_index(self) -> dict[str, int]:
        return {e.id: i for i, e in enumerate(self.thermal_edges)}

    @cached_property
    def volumes(self) -> dict[str, float]:
        return {z.id: z.volume for z in self.zones if z.volume is not None}

    def flow_edges_at(self, zone_id: str) -> tuple[FlowEdge, ...]:
        return tuple(e for e in self.flow_edges if zone_id in (e.src, e.dst))

    def orientation(self, edge: FlowEdge, zone_id: str) -> int:
        """+1 if ``edge`` leaves ``zone_id``, -1 if it enters it."""
        if edge.src == zone_id:
            return 1
        if edge.dst == zone_id:
            return -1
        raise NetworkError(f"edge {edge.id!r} is not incident to zone {zone_id!r}")


@dataclass(frozen=True)
class TreeCotree:
    """Partition of the flow edges into dependent (tree) and independent sets.

    ``tree_edges`` are listed in the leaf-elimination order produced by the
    decomposition; ``eliminators`` gives, for each tree edge, the constrained
    zone whose mass balance determines it.
    """

    tree_edges: tuple[str, ...]
    cotree_edges: tuple[str, ...]
    eliminators: tuple[str, ...] = field(repr=False)


@dataclass(frozen=True)
class FlowAssignment:
    """Signed flow per flow-edge id, consistent with nodal mass balance."""

    flows: dict[str, float]

    def as_array(self, network: ZoneNetwork) -> np.ndarray:
        return np.array([self.flows[e.id] for e in network.flow_edges])


def _check_connected(zones: list[Zone], edges: list[FlowEdge]) -> None:
    if not zones:
        raise NetworkError("network has no zones")
    adj: dict[str, list[str]] = {z.id: [] for z in zones}
    for e in edges:
        adj[e.src].append(e.dst)
        adj[e.dst].append(e.src)
    seen = {zones[0].id}
    stack = [zones[0].id]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    missing = [z.id for z in zones if z.id not in seen]
    if missing:
        raise NetworkError(f"flow graph is disconnected; unreachable zones: {missing}")


def build_network(config: dict) -> ZoneNetwork:
    """Validate a structured network description and freeze it.

    ``config`` carries ``zones`` ({id, volume, kind}), ``flow_edges``
    ({id, from, to}), ``thermal_edges`` ({id, a, b}), ``constrained`` and
    optionally ``preferred_independent``.
    """
    allowed = {"schema_version", "zones", "flow_edges", "thermal_edges",
               "constrained", "preferred_independent"}
    unknown = set(config) - allowed
    if unknown:
        raise NetworkError(f"unknown network config keys: {sorted(unknown)}")
    if config.get("schema_version", 1) != 1:
        raise NetworkError(
            f"unsupported network schema_version {config['schema_version']}")
    for key in ("zones", "flow_edges", "thermal_edges", "constrained"):
        if key not in config:
            raise NetworkError(f"network config missing {key!r}")

    zones: list[Zone] = []
    for raw in config["zones"]:
        kind = raw.get("kind", INTERIOR)
        if kind not in (INTERIOR, BOUNDARY):
            raise NetworkError(f"zone {raw.get('id')!r}: unknown kind {kind!r}")
        volume = raw.get("volume")
        if kind == INTERIOR:
            if volume is None or volume <= 0:
                raise NetworkError(f"zone {raw.get('id')!r}: interior zones need volume > 0")
        zones.append(Zone(id=str(raw["id"]), kind=kind,
                          volume=None if volume is None else float(volume)))

    ids = [z.id for z in zones]
    if len(set(ids)) != len(ids):
        raise NetworkError("duplicate zone ids")
    id_set = set(ids)

    flow_edges: list[FlowEdge] = []
    for raw in config["flow_edges"]:
        e = FlowEdge(id=str(raw["id"]), src=str(raw["from"]), dst=str(raw["to"]))
        for z in (e.src, e.dst):
            if z not in id_set:
                raise NetworkError(f"flow edge {e.id!r}: unknown zone {z!r}")
        if e.src == e.dst:
            raise NetworkError(f"flow edge {e.id!r}: self-loop at {e.src!r}")
        flow_edges.append(e)
    eids = [e.id for e in flow_edges]
    if len(set(eids)) != len(eids):
        raise NetworkError("duplicate flow edge ids")
    pairs = [frozenset((e.src, e.dst)) for e in flow_edges]
    if len(set(pairs)) != len(pairs):
        raise NetworkError("more than one flow edge between the same zone pair")

    thermal_edges: list[ThermalEdge] = []
    for raw in config["thermal_edges"]:
        e = ThermalEdge(id=str(raw["id"]), a=str(raw["a"]), b=str(raw["b"]))
        for z in (e.a, e.b):
            if z not in id_set:
                raise NetworkError(f"thermal edge {e.id!r}: unknown zone {z!r}")
        if e.a == e.b:
            raise NetworkError(f"thermal edge {e.id!r}: self-loop at {e.a!r}")
        thermal_edges.append(e)
    tids = [e.id for e in thermal_edges]
    if len(set(tids)) != len(tids):
        raise NetworkError("duplicate thermal edge ids")
    tpairs = [e.pair() for e in thermal_edges]
    if len(set(tpairs)) != len(tpairs):
        raise NetworkError("more than one thermal edge between the same zone pair")

    # Convective paths conduct too: every flow pair must have a thermal twin.
    tpair_set = set(tpairs)
    for e in flow_edges:
        if frozenset((e.src, e.dst)) not in tpair_set:
            raise NetworkError(
                f"flow edge {e.id!r} has no matching thermal edge between "
                f"{e.src!r} and {e.dst!r}")

    _check_connected(zones, flow_edges)

    interior = {z.id for z in zones if z.kind == INTERIOR}
    constrained = frozenset(str(z) for z in config["constrained"])
    bad = constrained - interior
    if bad:
        raise NetworkError(f"constrained zones must be interior: {sorted(bad)}")

    preferred = tuple(str(e) for e in config.get("preferred_independent", ()))
    for pid in preferred:
        if pid not in set(eids):
            raise NetworkError(f"preferred independent edge {pid!r} does not exist")

    return ZoneNetwork(zones=tuple(zones), flow_edges=tuple(flow_edges),
                       thermal_edges=tuple(thermal_edges), constrained=constrained,
                       preferred_independent=preferred)


def independent_flow_count(network: ZoneNetwork) -> int:
    """Number of freely choosable edge flows under nodal mass balance."""
    n_zones = len(network.zones)
    n_edges = len(network.flow_edges)
    n_free = n_zones - len(network.constrained)
    if n_free == 0:
        # All balances enforced; one is redundant by conservation.
        return n_edges - n_zones + 1
    return n_edges - len(network.constrained)


def tree_cotree_decompose(network: ZoneNetwork,
                          preferred_independent: list[str] | tuple[str, ...]) -> TreeCotree:
    """Split flow edges into independent (cotree) and dependent (tree) sets.

    The preferred edges become the cotree if the remaining tree edges admit a
    leaf-elimination order over the constrained-zone balances; otherwise the
    choice does not form a valid cotree and a ``NetworkError`` is raised.
    """
    preferred = tuple(str(e) for e in preferred_independent)
    expected = independent_flow_count(network)
    if len(preferred) != expected:
        raise NetworkError(
            f"need exactly {expected} independent edges, got {len(preferred)}")
    if len(set(preferred)) != len(preferred):
        raise NetworkError("duplicate edges in preferred independent set")
    for pid in preferred:
        if pid not in network.flow_edge_index:
            raise NetworkError(f"unknown flow edge {pid!r} in preferred set")

    cotree = set(preferred)
    tree = [e for e in network.flow_edges if e.id not in cotree]

    # One balance equation per constrained node; if every node is constrained
    # one equation is redundant and the last zone acts as the slack node.
    eliminating = set(network.constrained)
    if len(network.constrained) == len(network.zones):
        eliminating.discard(network.zones[-1].id)

    unresolved: dict[str, set[str]] = {z.id: set() for z in network.zones}
    for e in tree:
        unresolved[e.src].add(e.id)
        unresolved[e.dst].add(e.id)

    order: list[tuple[str, str]] = []  # (edge id, eliminating zone id)
    active = [z.id for z in network.zones if z.id in eliminating]
    resolved: set[str] = set()
    progress = True
    while progress:
        progress = False
        for zid in active:
            if len(unresolved[zid]) == 1:
                eid = next(iter(unresolved[zid]))
                order.append((eid, zid))
                resolved.add(eid)
                edge = network.flow_edges[network.flow_edge_index[eid]]
                unresolved[edge.src].discard(eid)
                unresolved[edge.dst].discard(eid)
                active.remove(zid)
                progress = True
                break
    if len(resolved) != len(tree):
        raise NetworkError(
            "preferred independent set is not a valid cotree: dependent flows "
            "cannot be eliminated from the constrained balances")

    return TreeCotree(tree_edges=tuple(e for e, _ in order),
                      cotree_edges=preferred,
                      eliminators=tuple(z for _, z in order))


def solve_dependent_flows(decomp: TreeCotree, network: ZoneNetwork,
                          independent_flows) -> FlowAssignment:
    """Resolve all edge flows from the independent (cotree) values.

    Each tree edge is determined in elimination order by the mass balance of
    its eliminating zone; the result satisfies every constrained balance to
    within ``MASS_BALANCE_TOL``.
    """
    q_ind = np.asarray(independent_flows, dtype=float)
    if q_ind.shape != (len(decomp.cotree_edges),):
        raise NetworkError(
            f"expected {len(decomp.cotree_edges)} independent flows, "
            f"got shape {q_ind.shape}")

    flows: dict[str, float] = dict(zip(decomp.cotree_edges, q_ind.tolist()))
    edges = {e.id: e for e in network.flow_edges}
    for eid, zid in zip(decomp.tree_edges, decomp.eliminators):
        balance = 0.0
        for other in network.flow_edges_at(zid):
            if other.id == eid:
                continue
            balance += network.orientation(other, zid) * flows[other.id]
        flows[eid] = -balance * network.orientation(edges[eid], zid)

    assignment = FlowAssignment(flows=flows)
    residual = mass_balance_residuals(assignment, network)
    worst = max(abs(v) for v in residual.values()) if residual else 0.0
    if worst > MASS_BALANCE_TOL * max(1.0, float(np.max(np.abs(q_ind), initial=0.0))):
        raise NetworkError(f"dependent solve left residual {worst:.3e} m^3/s")
    return assignment


def mass_balance_residuals(assignment: FlowAssignment,
                           network: ZoneNetwork) -> dict[str, float]:
    """Net outflow per constrained zone (zero for a consistent field)."""
    res = {}
    for zid in sorted(network.constrained):
        total = 0.0
        for e in network.flow_edges_at(zid):
            total += network.orientation(e, zid) * assignment.flows[e.id]
        res[zid] = total
    return res


def dependent_flow_matrix(network: ZoneNetwork, decomp: TreeCotree) -> np.ndarray:
    """Linear map from independent flows to all edge flows.

    Returns ``T`` of shape (n_flow_edges, n_independent) with
    ``q_all = T @ q_independent`` in network edge order.  Exists because the
    dependent solve is linear in the independent flows.
    """
    n_ind = len(decomp.cotree_edges)
    n_edges = len(network.flow_edges)
    T = np.zeros((n_edges, n_ind))
    for j in range(n_ind):
        unit = np.zeros(n_ind)
        unit[j] = 1.0
        assignment = solve_dependent_flows(decomp, network, unit)
        T[:, j] = assignment.as_array(network)
    return T
