"""
Networks as Graph Modelling Language files.

Vectors and matrices travel as quoted, space-separated decimal strings (matrices
row-major) with the tokens INF (Unavailable cost) and UNB (Unbounded capacity).
Both directions go through networkx: the network becomes a `MultiDiGraph` with
nodes and links added in id order, so attribute order and number formatting are
fixed and identical networks give identical bytes.

networkx numbers the nodes itself; the agent id is the node label and the agent's
own label travels as `name`. Links are keyed by their id.

    graph [
      directed 1
      multigraph 1
      resources "power water"
      timestep "15min"
      node [
        id 0
        label "0"
        name "A0"
        techmatrix "0.0 0.0 0.0 0.0"
        providercosts "0.5 INF"
        finaldemand "0.0 0.0"
        fdpriority -1
      ]
      edge [
        source 0
        target 1
        key 0
        linkid 0
        cost "0.05 INF"
        capacity "UNB 200.0"
        priority 1
      ]
    ]
"""

from __future__ import annotations

import logging
import math
from pathlib import Path

import networkx as nx

from sosim.core import UNAVAILABLE, UNBOUNDED, Agent, InfraLink, Network, ResourceCatalog, TechnologyMatrix

__all__ = ["GmlError", "ParseError", "SchemaError", "dumps_gml", "loads_gml", "read_gml", "to_graph", "write_gml"]

log = logging.getLogger(__name__)

INF = "INF"
UNB = "UNB"

NODE_ATTRIBUTES = ("name", "techmatrix", "providercosts", "finaldemand", "fdpriority")
EDGE_ATTRIBUTES = ("linkid", "cost", "capacity", "priority")


class GmlError(ValueError):
    pass


class ParseError(GmlError):
    """The text is not well-formed GML (or its graph structure is inconsistent)."""


class SchemaError(GmlError):
    """Well-formed GML that does not describe a network: missing attributes, wrong lengths, bad tokens."""


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------


def _vector(values, marker: str) -> str:
    return " ".join(marker if v is None or v is UNAVAILABLE or v is UNBOUNDED else repr(float(v)) for v in values)


def to_graph(net: Network) -> nx.MultiDiGraph:
    """The network as a networkx multigraph carrying the GML attributes."""
    names = net.catalog.names
    if any(not name or name.split() != [name] for name in names):
        raise GmlError(f"resource names must be single words to be written: {names}")
    graph = nx.MultiDiGraph(resources=" ".join(names), timestep=net.timestep)
    for agent_id in sorted(net.agents):
        agent = net.agents[agent_id]
        graph.add_node(
            agent_id,
            name=agent.label,
            techmatrix=_vector([v for row in agent.tech.entries for v in row], INF),
            providercosts=_vector(agent.provider_costs, INF),
            finaldemand=_vector(agent.final_demand, INF),
            fdpriority=-1 if agent.final_demand_priority is None else agent.final_demand_priority,
        )
    for link_id in sorted(net.links):
        link = net.links[link_id]
        graph.add_edge(
            link.source,
            link.target,
            key=link.id,
            linkid=link.id,
            cost=_vector(link.transport_cost, INF),
            capacity=_vector(link.capacity, UNB),
            priority=link.priority,
        )
    return graph


def dumps_gml(net: Network) -> str:
    return "\n".join(nx.generate_gml(to_graph(net))) + "\n"


def write_gml(net: Network, destination: Path | str) -> int:
    """Write `net` to `destination`; returns the number of bytes written."""
    data = dumps_gml(net).encode()
    Path(destination).write_bytes(data)
    log.debug("wrote %d agents, %d links to %s", len(net.agents), len(net.links), destination)
    return len(data)


# ---------------------------------------------------------------------------
# Reading
# ---------------------------------------------------------------------------


def _require(attrs: dict, key: str, where: str):
    if key not in attrs:
        raise SchemaError(f"{where}: missing attribute {key!r}")
    return attrs[key]


def _integer(value, key: str, where: str) -> int:
    if isinstance(value, int) and not isinstance(value, bool):
        return value
    try:
        return int(str(value))
    except ValueError:
        raise SchemaError(f"{where}: {key} is not an integer: {value!r}") from None


def _tokens(value, key: str, where: str, size: int) -> list[str]:
    if not isinstance(value, str):
        value = str(value)
    tokens = value.split()
    if len(tokens) != size:
        raise SchemaError(f"{where}: {key} has {len(tokens)} values, expected {size}")
    return tokens


def _parse(attrs: dict, key: str, where: str, size: int, marker: str | None = None, marked=None) -> tuple:
    out = []
    for token in _tokens(_require(attrs, key, where), key, where, size):
        if marker is not None and token == marker:
            out.append(marked)
            continue
        try:
            value = float(token)
        except ValueError:
            value = math.nan
        if not math.isfinite(value):
            raise SchemaError(f"{where}: {key} has unreadable value {token!r}")
        out.append(value)
    return tuple(out)


def _warn_unknown(attrs: dict, known: tuple[str, ...], where: str):
    for key in sorted(set(attrs) - set(known)):
        log.warning("%s: ignoring unknown attribute %r", where, key)


def loads_gml(text: str) -> Network:
    try:
        graph = nx.parse_gml(text, label="label")
    except nx.NetworkXError as e:
        raise ParseError(str(e)) from e
    if not graph.is_multigraph() or not graph.is_directed():
        raise ParseError("expected a directed multigraph (directed 1, multigraph 1)")

    resources = _require(graph.graph, "resources", "graph")
    catalog = ResourceCatalog(tuple(str(resources).split()))
    R = len(catalog)
    timestep = str(graph.graph.get("timestep", "15min"))
    _warn_unknown(graph.graph, ("resources", "timestep"), "graph")

    agents = {}
    for node, attrs in graph.nodes(data=True):
        agent_id = _integer(node, "label", f"node {node!r}")
        where = f"node {agent_id}"
        _warn_unknown(attrs, NODE_ATTRIBUTES, where)
        cells = _parse(attrs, "techmatrix", where, R * R)
        priority = _integer(_require(attrs, "fdpriority", where), "fdpriority", where)
        agents[agent_id] = Agent(
            id=agent_id,
            label=str(attrs.get("name", f"A{agent_id}")),
            tech=TechnologyMatrix(tuple(cells[i * R : (i + 1) * R] for i in range(R))),
            provider_costs=_parse(attrs, "providercosts", where, R, INF, None),
            final_demand=_parse(attrs, "finaldemand", where, R),
            final_demand_priority=None if priority < 0 else priority,
        )

    links = {}
    for source, target, attrs in graph.edges(data=True):
        where = f"edge {source}->{target}"
        _warn_unknown(attrs, EDGE_ATTRIBUTES, where)
        link_id = _integer(_require(attrs, "linkid", where), "linkid", where)
        where = f"edge {link_id} ({source}->{target})"
        if link_id in links:
            raise SchemaError(f"{where}: duplicate link id")
        links[link_id] = InfraLink(
            link_id,
            _integer(source, "source", where),
            _integer(target, "target", where),
            _parse(attrs, "cost", where, R, INF, UNAVAILABLE),
            _parse(attrs, "capacity", where, R, UNB, UNBOUNDED),
            _integer(_require(attrs, "priority", where), "priority", where),
        )

    return Network(catalog, agents, links, timestep)


def read_gml(source: Path | str) -> Network:
    """Load a network written by `write_gml` (or by hand in the same shape)."""
    path = Path(source)
    net = loads_gml(path.read_text())
    log.debug("read %d agents, %d links from %s", len(net.agents), len(net.links), path)
    return net
