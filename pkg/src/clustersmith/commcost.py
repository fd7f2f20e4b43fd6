"""Transfer path resolution and single-transfer timing.

Timing model per link: ``a / lane_fraction + b + latency`` where
``a = bytes / bandwidth`` scales with lane width and ``b`` is a fixed
per-link overhead that does not.  Halving the lanes therefore yields
``2a + b`` rather than double the time.

Routing is widest-path (maximum bottleneck bandwidth), ties broken by
fewer hops then by lexicographically smallest node-id sequence.  With
GDR disabled, GPU<->NIC/DPU transfers must pass through host memory; the
resulting route may legitimately revisit a node (out and back through a
memory controller), so routes are walks, not necessarily simple paths.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from .errors import InvalidLaneFraction, Unreachable, UnknownNode
from .topology import Link, NodeKind, TopologyGraph

GB = 1e9  # bytes
US = 1e-6  # seconds

ALLOWED_FRACTIONS = (1.0, 0.5, 0.25)


@dataclass(frozen=True)
class TransferRequest:
    src: str
    dst: str
    bytes: float

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError("src and dst must differ")
        if self.bytes < 0:
            raise ValueError("bytes must be >= 0")


@dataclass(frozen=True)
class ResolvedPath:
    nodes: tuple[str, ...]
    links: tuple[Link, ...]
    bottleneck_bandwidth: float  # GB/s
    total_latency: float         # microseconds
    total_b: float               # microseconds

    @property
    def hops(self) -> int:
        return len(self.links)


def link_time(nbytes: float, link: Link, lane_fraction: float = 1.0) -> float:
    """Seconds to move nbytes across one link at a given lane fraction."""
    if lane_fraction not in ALLOWED_FRACTIONS:
        raise InvalidLaneFraction(
            f"lane_fraction must be one of {ALLOWED_FRACTIONS}, got {lane_fraction}"
        )
    a = nbytes / (link.bandwidth * GB)
    return a / lane_fraction + link.extra_overhead_b * US + link.latency * US


def path_time(nbytes: float, path: ResolvedPath) -> float:
    """Cut-through composition: one payload term at the bottleneck rate."""
    transfer = nbytes / (path.bottleneck_bandwidth * GB) if path.links else 0.0
    return (path.total_latency + path.total_b) * US + transfer


def _pair_links(g: TopologyGraph) -> dict:
    """Best link per unordered node pair: max bandwidth, then min overhead,
    then declaration order."""
    best = {}
    for l in g.links:
        key = frozenset((l.endpoint_a, l.endpoint_b))
        cur = best.get(key)
        if cur is None or (l.bandwidth, -(l.latency + l.extra_overhead_b)) > (
            cur.bandwidth, -(cur.latency + cur.extra_overhead_b)
        ):
            best[key] = l
    return best


def _needs_host_memory(g: TopologyGraph, src: str, dst: str) -> bool:
    if g.gdr:
        return False
    kinds = {g.node(src).kind, g.node(dst).kind}
    return NodeKind.GPU in kinds and (
        NodeKind.NIC in kinds or NodeKind.DPU in kinds
    )


def resolve_path(g: TopologyGraph, src: str, dst: str) -> ResolvedPath:
    """Widest route from src to dst, honoring the host-memory constraint.

    Search runs over states (node, mem_seen) so the host-memory detour is
    handled uniformly: the goal is (dst, 1) and mem_seen starts at 1 when
    the constraint does not apply.
    """
    src_node = g.node(src)
    dst_node = g.node(dst)
    if src == dst:
        raise ValueError("src and dst must differ")
    constrained = _needs_host_memory(g, src, dst)
    pair = _pair_links(g)
    neigh = {n.id: [] for n in g.nodes}
    for key, link in pair.items():
        a, b = tuple(key)
        neigh[a].append((b, link))
        neigh[b].append((a, link))

    def is_mem(node_id):
        return g.node(node_id).kind == NodeKind.HOST_MEMORY

    start = (src, 0 if constrained and not is_mem(src) else 1)
    goal_flag = 1

    # Pass 1: maximum bottleneck bandwidth over the state graph.
    width = {start: float("inf")}
    heap = [(-float("inf"), start)]
    while heap:
        negw, state = heapq.heappop(heap)
        w = -negw
        if w < width.get(state, 0.0):
            continue
        node, flag = state
        for nxt, link in neigh[node]:
            nflag = 1 if flag or is_mem(nxt) else 0
            nw = min(w, link.bandwidth)
            nstate = (nxt, nflag)
            if nw > width.get(nstate, 0.0):
                width[nstate] = nw
                heapq.heappush(heap, (-nw, nstate))
    goal = (dst, goal_flag)
    if goal not in width:
        raise Unreachable(f"no route from {src!r} to {dst!r}"
                          + (" honoring host-memory staging" if constrained else ""))
    bottleneck = width[goal]

    # Pass 2: hop distances to the goal on the >= bottleneck subgraph.
    sub = {s: [] for s in ((n.id, f) for n in g.nodes for f in (0, 1))}
    for node in neigh:
        for nxt, link in neigh[node]:
            if link.bandwidth >= bottleneck:
                for flag in (0, 1):
                    nflag = 1 if flag or is_mem(nxt) else 0
                    sub[(node, flag)].append(((nxt, nflag), link))
    rev = {s: [] for s in sub}
    for s, outs in sub.items():
        for t, _ in outs:
            rev[t].append(s)
    dist = {goal: 0}
    frontier = [goal]
    while frontier:
        nxt_front = []
        for state in frontier:
            for prev in rev[state]:
                if prev not in dist:
                    dist[prev] = dist[state] + 1
                    nxt_front.append(prev)
        frontier = nxt_front

    if start not in dist:
        raise Unreachable(f"no route from {src!r} to {dst!r}")

    # Pass 3: walk greedily toward the goal, smallest node id first.
    state = start
    node_seq = [src]
    link_seq = []
    while state != goal:
        candidates = [
            (t, link) for t, link in sub[state]
            if dist.get(t, -1) == dist[state] - 1
        ]
        t, link = min(candidates, key=lambda c: c[0][0])
        node_seq.append(t[0])
        link_seq.append(link)
        state = t

    return ResolvedPath(
        nodes=tuple(node_seq),
        links=tuple(link_seq),
        bottleneck_bandwidth=min(l.bandwidth for l in link_seq),
        total_latency=sum(l.latency for l in link_seq),
        total_b=sum(l.extra_overhead_b for l in link_seq),
    )
