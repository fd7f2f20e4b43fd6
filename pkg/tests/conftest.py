import random

import pytest

from clustersmith.topology import (
    Link,
    LinkKind,
    Node,
    NodeKind,
    TopologyGraph,
    build_graph,
    load_preset,
)


@pytest.fixture
def nvlink4() -> TopologyGraph:
    return load_preset("nvlink4.topo")


@pytest.fixture
def dual_socket() -> TopologyGraph:
    return load_preset("dual-socket-pcie-switch.topo")


def random_graph(rng: random.Random, max_nodes: int = 8,
                 connected: bool = True) -> TopologyGraph:
    """Random valid topology; spanning tree first when connectivity is
    required, then extra chords."""
    n = rng.randint(1, max_nodes)
    kinds = list(NodeKind)
    link_kinds = list(LinkKind)
    nodes = []
    for i in range(n):
        labels = ()
        if rng.random() < 0.3:
            labels = (("rack", str(rng.randint(0, 3))),)
        nodes.append(Node(
            id=f"n{i}",
            kind=rng.choice(kinds),
            socket_index=rng.randint(0, 1) if rng.random() < 0.3 else None,
            labels=labels,
        ))
    links = []

    def make_link(i, j):
        kind = rng.choice(link_kinds)
        lanes = None
        if kind == LinkKind.PCIE and rng.random() < 0.5:
            lanes = rng.choice([1, 2, 4, 8, 16])
        return Link(
            endpoint_a=f"n{i}", endpoint_b=f"n{j}", kind=kind,
            bandwidth=rng.uniform(0.5, 100.0),
            latency=rng.uniform(0.0, 5.0) if rng.random() < 0.5 else 0.0,
            lanes=lanes,
            extra_overhead_b=rng.uniform(0.0, 2.0) if rng.random() < 0.5 else 0.0,
            duplex=rng.random() < 0.9,
        )

    if connected:
        for i in range(1, n):
            links.append(make_link(rng.randint(0, i - 1), i))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.15 and not any(
                {l.endpoint_a, l.endpoint_b} == {f"n{i}", f"n{j}"} for l in links
            ):
                links.append(make_link(i, j))
    return build_graph(nodes, links, gdr=rng.random() < 0.5)


def enumerate_simple_paths(g: TopologyGraph, src: str, dst: str):
    """All simple paths src->dst as (node sequence, link sequence)."""
    adj = {node.id: [] for node in g.nodes}
    for l in g.links:
        adj[l.endpoint_a].append((l.endpoint_b, l))
        adj[l.endpoint_b].append((l.endpoint_a, l))
    out = []

    def walk(node, seq, links, seen):
        if node == dst:
            out.append((tuple(seq), tuple(links)))
            return
        for nxt, link in adj[node]:
            if nxt not in seen:
                seen.add(nxt)
                walk(nxt, seq + [nxt], links + [link], seen)
                seen.remove(nxt)

    walk(src, [src], [], {src})
    return out


def best_path_by_enumeration(g: TopologyGraph, src: str, dst: str):
    """Widest / fewest-hops / lexicographic best simple path, or None."""
    paths = enumerate_simple_paths(g, src, dst)
    if not paths:
        return None
    return min(
        paths,
        key=lambda p: (-min(l.bandwidth for l in p[1]), len(p[1]), p[0]),
    )


def time_stepped_sim(flows, sw, dt: float = 1e-6):
    """Independent brute-force integrator for the switch model.

    Advances in fixed dt steps; every active flow drains at
    min(cap, upstream/k).  Only used as an oracle.
    """
    remaining = {f.id: f.bytes for f in flows}
    starts = {f.id: f.release + f.offset for f in flows}
    completions = {}
    t = 0.0
    upstream = sw.upstream_bandwidth * 1e9
    cap = sw.per_flow_cap * 1e9
    peak = 0
    while len(completions) < len(flows):
        active = [fid for fid in remaining
                  if starts[fid] <= t and fid not in completions]
        peak = max(peak, len(active))
        if active:
            rate = min(cap, upstream / len(active))
            for fid in active:
                remaining[fid] -= rate * dt
                if remaining[fid] <= 0 and fid not in completions:
                    completions[fid] = t + dt
        t += dt
    return completions, peak
