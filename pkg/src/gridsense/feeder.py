"""Radial feeder graph: validation, canonicalization, and incidence/path algebra.

A feeder is a tree rooted at the substation (bus 0).  The reduced incidence
matrix M (substation row removed) is invertible for a radial connected
network, and its inverse is the negated path matrix: M^-1 = -P, where
P[l, i] = 1 iff line l lies on the path from the root to bus i.  All matrix
algebra downstream of this module uses P; M is never inverted numerically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CycleDetected,
    Disconnected,
    DuplicateEdge,
    InvalidFeeder,
    NoFeasibleConfiguration,
    UnknownLine,
)

# Default squared-voltage service bounds (0.95^2, 1.05^2 p.u.)
DEFAULT_V_MIN = 0.95**2
DEFAULT_V_MAX = 1.05**2


@dataclass(frozen=True)
class Bus:
    """Network bus. Bus 0 is the substation; ids must be contiguous 0..N."""

    id: int
    v_min: float = DEFAULT_V_MIN
    v_max: float = DEFAULT_V_MAX

    def __post_init__(self):
        if self.id < 0:
            raise InvalidFeeder(f"bus id must be nonnegative, got {self.id}")
        if not (0.0 < self.v_min < self.v_max):
            raise InvalidFeeder(
                f"bus {self.id}: need 0 < v_min < v_max, got [{self.v_min}, {self.v_max}]"
            )


@dataclass(frozen=True)
class Line:
    """Distribution line. After canonicalization from_bus is the root-closer end."""

    id: int
    from_bus: int
    to_bus: int
    switchable: bool = False

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise CycleDetected(f"line {self.id} is a self-loop at bus {self.from_bus}")


@dataclass(frozen=True)
class FeederTopology:
    """One validated radial configuration with its matrix algebra precomputed.

    Immutable after construction; safe to share across threads.  Lines are
    stored in breadth-first order from the root, reoriented so that
    ``from_bus`` is always closer to the root, which makes the line order
    topological (parents precede children).  Column ``j`` of M / row ``j``
    of P corresponds to ``lines[j]``.
    """

    name: str
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    M: np.ndarray        # N x L reduced incidence matrix
    M_full: np.ndarray   # (N+1) x L incidence matrix including the root row
    P: np.ndarray        # L x N path matrix, entries in {0, 1}
    paths: tuple[frozenset, ...]       # per bus 0..N: line ids on the root path
    downstream: dict                   # line id -> frozenset of downstream bus ids
    line_index: dict                   # line id -> column position
    depth: tuple[int, ...]             # per bus 0..N: graph distance from root

    @property
    def n_buses(self) -> int:
        """Number of non-root buses N."""
        return len(self.buses) - 1

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def line_ids(self) -> tuple:
        return tuple(ln.id for ln in self.lines)

    def children_lines(self) -> list:
        """Per bus id, column positions of lines leaving that bus."""
        kids = [[] for _ in range(self.n_buses + 1)]
        for j, ln in enumerate(self.lines):
            kids[ln.from_bus].append(j)
        return kids


def _validate_buses(buses) -> tuple:
    by_id = {}
    for b in buses:
        if b.id in by_id:
            raise InvalidFeeder(f"duplicate bus id {b.id}")
        by_id[b.id] = b
    if 0 not in by_id:
        raise InvalidFeeder("bus 0 (substation) is missing")
    n = len(by_id) - 1
    missing = set(range(n + 1)) - set(by_id)
    if missing:
        raise InvalidFeeder(
            f"bus ids must be contiguous 0..{n}; missing {sorted(missing)[:5]}"
        )
    return tuple(by_id[i] for i in range(n + 1))


def _active_lines(lines, active_switch_states):
    states = dict(active_switch_states or {})
    switchable_ids = {ln.id for ln in lines if ln.switchable}
    unknown = set(states) - switchable_ids
    if unknown:
        raise UnknownLine(f"switch states reference non-switchable lines {sorted(unknown)}")
    active = []
    seen_ids = set()
    for ln in lines:
        if ln.id in seen_ids:
            raise InvalidFeeder(f"duplicate line id {ln.id}")
        seen_ids.add(ln.id)
        if ln.switchable and not states.get(ln.id, False):
            continue
        active.append(ln)
    return active


def build_topology(buses, lines, active_switch_states=None, name="base") -> FeederTopology:
    """Validate and canonicalize one radial configuration.

    ``lines`` may be oriented arbitrarily; canonicalization reorients each so
    the sending end is the bus closer to the root and orders lines
    breadth-first, making the result independent of input order/orientation.

    Raises CycleDetected, Disconnected, or DuplicateEdge when the active line
    set is not a spanning tree of the buses.
    """
    bus_tuple = _validate_buses(buses)
    n = len(bus_tuple) - 1
    active = _active_lines(lines, active_switch_states)

    # union-find over active edges: cycles first, then reachability
    parent = list(range(n + 1))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    adjacency = [[] for _ in range(n + 1)]
    seen_pairs = set()
    for ln in active:
        for end in (ln.from_bus, ln.to_bus):
            if not (0 <= end <= n):
                raise InvalidFeeder(f"line {ln.id} references unknown bus {end}")
        pair = (min(ln.from_bus, ln.to_bus), max(ln.from_bus, ln.to_bus))
        if pair in seen_pairs:
            raise DuplicateEdge(f"buses {pair[0]}-{pair[1]} are connected by more than one active line")
        seen_pairs.add(pair)
        ra, rb = find(ln.from_bus), find(ln.to_bus)
        if ra == rb:
            raise CycleDetected(
                f"line {ln.id} ({ln.from_bus}-{ln.to_bus}) closes a loop in the active network"
            )
        parent[ra] = rb
        adjacency[ln.from_bus].append(ln)
        adjacency[ln.to_bus].append(ln)

    unreachable = [i for i in range(1, n + 1) if find(i) != find(0)]
    if unreachable:
        raise Disconnected(
            f"{len(unreachable)} bus(es) unreachable from the substation, e.g. {unreachable[:5]}"
        )
    # connected and acyclic over N+1 buses implies exactly N active lines

    # breadth-first canonicalization from the root
    order: list[Line] = []
    depth = [0] * (n + 1)
    parent_line = [None] * (n + 1)
    visited = [False] * (n + 1)
    visited[0] = True
    frontier = [0]
    while frontier:
        nxt = []
        for i in frontier:
            out = []
            for ln in adjacency[i]:
                j = ln.to_bus if ln.from_bus == i else ln.from_bus
                if visited[j]:
                    continue
                out.append((j, ln))
            for j, ln in sorted(out, key=lambda t: t[0]):
                visited[j] = True
                depth[j] = depth[i] + 1
                oriented = Line(ln.id, i, j, ln.switchable)
                parent_line[j] = oriented
                order.append(oriented)
                nxt.append(j)
        frontier = nxt

    L = len(order)
    M_full = np.zeros((n + 1, L))
    P = np.zeros((L, n), dtype=float)
    paths = [frozenset()] * (n + 1)
    line_index = {}
    for col, ln in enumerate(order):
        line_index[ln.id] = col
        M_full[ln.from_bus, col] = 1.0
        M_full[ln.to_bus, col] = -1.0
    # lines are in breadth-first order, so each sending end's path is complete
    for col, ln in enumerate(order):
        up = paths[ln.from_bus] | {ln.id}
        paths[ln.to_bus] = up
        for lid in up:
            P[line_index[lid], ln.to_bus - 1] = 1.0
    M = M_full[1:, :]

    downstream = {
        ln.id: frozenset(int(i) + 1 for i in np.flatnonzero(P[col]))
        for col, ln in enumerate(order)
    }
    return FeederTopology(
        name=name,
        buses=bus_tuple,
        lines=tuple(order),
        M=M,
        M_full=M_full,
        P=P,
        paths=tuple(paths),
        downstream=downstream,
        line_index=line_index,
        depth=tuple(depth),
    )


def downstream_buses(topology: FeederTopology, line_id) -> frozenset:
    """Buses whose root path traverses the given line (support of that P row)."""
    try:
        return topology.downstream[line_id]
    except KeyError:
        raise UnknownLine(f"line {line_id} is not part of configuration {topology.name!r}") from None


@dataclass(frozen=True)
class ConfigurationSet:
    """Feasible switch patterns of a feeder.

    ``configs`` is an ordered list of (name, {switch line id: bool}) pairs;
    ``z_vectors`` optionally overrides the r-to-x ratio of individual lines
    per configuration ({config name: {line id: z}}), defaulting to the base
    feeder's per-line ratios.
    """

    switches: tuple
    configs: tuple
    z_vectors: dict = field(default_factory=dict)

    def names(self) -> tuple:
        return tuple(name for name, _ in self.configs)


@dataclass
class EnumerationResult:
    topologies: list
    rejected: dict  # config name -> error

    def __iter__(self):
        return iter(self.topologies)

    def __len__(self):
        return len(self.topologies)


def enumerate_configurations(config_set: ConfigurationSet, buses, base_lines) -> EnumerationResult:
    """Build one validated topology per feasible configuration.

    Non-radial configurations are collected in ``rejected`` with their
    diagnostics rather than aborting, unless nothing survives.
    """
    topologies = []
    rejected = {}
    for cfg_name, states in config_set.configs:
        try:
            topologies.append(build_topology(buses, base_lines, states, name=cfg_name))
        except (CycleDetected, Disconnected, DuplicateEdge) as err:
            rejected[cfg_name] = err
    if not topologies:
        raise NoFeasibleConfiguration(
            "all {} configurations are infeasible: {}".format(
                len(config_set.configs),
                "; ".join(f"{k}: {v}" for k, v in rejected.items()),
            )
        )
    return EnumerationResult(topologies, rejected)


class FeederModel:
    """A feeder description file: buses, lines with impedances, switch configurations.

    Impedances are per-unit on the declared base.  ``pd``/``qd`` hold the
    nominal per-bus demand (p.u., index = bus id, entry 0 unused).
    """

    def __init__(self, buses, lines, r, x, configurations, pd=None, qd=None,
                 name="feeder", base_mva=1.0, base_kv=1.0, line_names=None):
        self.buses = _validate_buses(buses)
        self.lines = tuple(lines)
        self.r = dict(r)
        self.x = dict(x)
        self.configurations = configurations
        n = len(self.buses)
        self.pd = np.zeros(n) if pd is None else np.asarray(pd, dtype=float)
        self.qd = np.zeros(n) if qd is None else np.asarray(qd, dtype=float)
        self.name = name
        self.base_mva = base_mva
        self.base_kv = base_kv
        self.line_names = dict(line_names or {})
        self._topologies = None

    @property
    def n_buses(self) -> int:
        return len(self.buses) - 1

    def topologies(self) -> EnumerationResult:
        if self._topologies is None:
            self._topologies = enumerate_configurations(
                self.configurations, self.buses, self.lines
            )
        return self._topologies

    def topology(self, name) -> FeederTopology:
        for topo in self.topologies().topologies:
            if topo.name == name:
                return topo
        raise InvalidFeeder(f"no feasible configuration named {name!r}")

    def z_for(self, topology: FeederTopology) -> np.ndarray:
        """r-to-x ratio vector for a configuration, aligned to its line order."""
        override = self.configurations.z_vectors.get(topology.name, {})
        z = np.empty(topology.n_lines)
        for col, ln in enumerate(topology.lines):
            if ln.id in override:
                z[col] = override[ln.id]
            else:
                z[col] = self.r[ln.id] / self.x[ln.id]
        return z

    def params_for(self, topology: FeederTopology):
        """True line parameters of a configuration (for simulation/validation)."""
        from .sensitivity import LineParameters

        r = np.array([self.r[ln.id] for ln in topology.lines])
        x = np.array([self.x[ln.id] for ln in topology.lines])
        return LineParameters.from_rx(r, x)


def load_feeder(path) -> FeederModel:
    """Parse a feeder description JSON file."""
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    try:
        buses = []
        pd = {}
        qd = {}
        for b in doc["buses"]:
            kwargs = {}
            if "v_min" in b:
                kwargs["v_min"] = float(b["v_min"])
            if "v_max" in b:
                kwargs["v_max"] = float(b["v_max"])
            buses.append(Bus(int(b["id"]), **kwargs))
            pd[int(b["id"])] = float(b.get("pd", 0.0))
            qd[int(b["id"])] = float(b.get("qd", 0.0))
        lines = []
        r = {}
        x = {}
        line_names = {}
        name_to_id = {}
        for ln in doc["lines"]:
            lid = int(ln["id"])
            lines.append(Line(lid, int(ln["from"]), int(ln["to"]),
                              switchable=bool(ln.get("switch", False))))
            r[lid] = float(ln["r"])
            x[lid] = float(ln["x"])
            if x[lid] <= 0:
                raise InvalidFeeder(f"line {lid}: reactance must be positive")
            if r[lid] < 0:
                raise InvalidFeeder(f"line {lid}: resistance must be nonnegative")
            if "name" in ln:
                line_names[lid] = ln["name"]
                name_to_id[ln["name"]] = lid
        switches = tuple(ln.id for ln in lines if ln.switchable)
        configs = []
        z_vectors = {}
        for cfg in doc.get("configurations", []):
            states = {}
            for key, val in cfg["switch_states"].items():
                if key in name_to_id:
                    lid = name_to_id[key]
                elif key.isdigit() and int(key) in r:
                    lid = int(key)
                else:
                    raise InvalidFeeder(f"configuration {cfg['name']!r}: unknown switch {key!r}")
                states[lid] = bool(val)
            configs.append((str(cfg["name"]), states))
            if "z" in cfg:
                z_vectors[str(cfg["name"])] = {
                    (name_to_id.get(k) or int(k)): float(v) for k, v in cfg["z"].items()
                }
        base = doc.get("base", {})
        n = len(buses)
        pd_vec = np.zeros(n)
        qd_vec = np.zeros(n)
        for bid, val in pd.items():
            pd_vec[bid] = val
        for bid, val in qd.items():
            qd_vec[bid] = val
        return FeederModel(
            buses, lines, r, x,
            ConfigurationSet(switches, tuple(configs), z_vectors),
            pd=pd_vec, qd=qd_vec,
            name=doc.get("name", path.stem),
            base_mva=float(base.get("mva", 1.0)),
            base_kv=float(base.get("kv", 1.0)),
            line_names=line_names,
        )
    except KeyError as err:
        raise InvalidFeeder(f"feeder file {path}: missing field {err}") from None
