"""Attributed social graphs: node/edge types, generators, structural metrics, JSON and DOT I/O."""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Union

SCHEMA_VERSION = 1
EDGE_KINDS = ("reply", "comment", "mention")
PROVENANCES = ("synthetic", "llm-sim", "real")

NodeId = Union[int, str]


class ContractError(ValueError):
    """A precondition of an operation does not hold for its input."""


class GraphParseError(ValueError):
    pass


class Emotion(str, Enum):
    POSITIVE = "positive"
    NEUTRAL = "neutral"
    NEGATIVE = "negative"

    @property
    def score(self) -> float:
        return _EMOTION_SCORE[self]

    @property
    def index(self) -> int:
        """Class index used by the learning code (positive first)."""
        return _EMOTION_ORDER.index(self)

    @classmethod
    def parse(cls, value: "Emotion | str") -> "Emotion":
        if isinstance(value, Emotion):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown emotion label {value!r}") from None

    @classmethod
    def from_index(cls, idx: int) -> "Emotion":
        return _EMOTION_ORDER[idx]


_EMOTION_ORDER = (Emotion.POSITIVE, Emotion.NEUTRAL, Emotion.NEGATIVE)
_EMOTION_SCORE = {Emotion.POSITIVE: 1.0, Emotion.NEUTRAL: 0.0, Emotion.NEGATIVE: -1.0}
EMOTIONS = _EMOTION_ORDER


def node_key(node_id: NodeId) -> tuple:
    """Sort key giving ints numeric order and placing them before strings."""
    if isinstance(node_id, int) and not isinstance(node_id, bool):
        return (0, node_id, "")
    return (1, 0, str(node_id))


def _check_unit(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        raise ValueError(f"{name} {value!r} outside [0, 1]")


@dataclass
class NodeState:
    id: NodeId
    emotion: Emotion = Emotion.NEUTRAL
    credibility: float = 0.5
    susceptibility: float = 0.5
    post_frequency: int = 0
    activation_round: int | None = None
    # emotion before any diffusion; None means "same as emotion"
    initial_emotion: Emotion | None = None
    account_age: float | None = None

    def __post_init__(self) -> None:
        self.emotion = Emotion.parse(self.emotion)
        if self.initial_emotion is not None:
            self.initial_emotion = Emotion.parse(self.initial_emotion)
        _check_unit("credibility", self.credibility)
        _check_unit("susceptibility", self.susceptibility)
        if self.post_frequency < 0:
            raise ValueError(f"post_frequency {self.post_frequency} is negative")
        if self.activation_round is not None and self.activation_round < 0:
            raise ValueError(f"activation_round {self.activation_round} is negative")

    @property
    def start_emotion(self) -> Emotion:
        return self.initial_emotion if self.initial_emotion is not None else self.emotion


@dataclass(frozen=True)
class Edge:
    source: NodeId
    target: NodeId
    kind: str = "reply"
    weight: float = 1.0
    depth: int | None = None
    text_length: int | None = None
    emotion: Emotion | None = None

    def __post_init__(self) -> None:
        if self.source == self.target:
            raise ValueError(f"self-loop on node {self.source!r}")
        if not self.weight > 0:
            raise ValueError(f"edge weight must be positive, got {self.weight!r}")
        if self.depth is not None and self.depth < 0:
            raise ValueError("edge depth is negative")
        if self.text_length is not None and self.text_length < 0:
            raise ValueError("edge text_length is negative")
        if self.emotion is not None:
            object.__setattr__(self, "emotion", Emotion.parse(self.emotion))


@dataclass
class Graph:
    directed: bool
    nodes: dict[NodeId, NodeState] = field(default_factory=dict)
    edges: list[Edge] = field(default_factory=list)
    provenance: str = "synthetic"
    seed: int | None = None
    schema_version: int = SCHEMA_VERSION
    meta: dict = field(default_factory=dict)
    _adj: dict | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    # construction

    def add_node(self, node: NodeState) -> None:
        if node.id in self.nodes:
            raise ValueError(f"duplicate node id {node.id!r}")
        self.nodes[node.id] = node
        self._adj = None

    def add_edge(self, edge: Edge) -> Edge:
        for end in (edge.source, edge.target):
            if end not in self.nodes:
                raise ValueError(f"edge endpoint {end!r} is not a node")
        if not self.directed and node_key(edge.target) < node_key(edge.source):
            edge = replace(edge, source=edge.target, target=edge.source)
        self.edges.append(edge)
        self._adj = None
        return edge

    def copy(self) -> "Graph":
        return Graph(
            directed=self.directed,
            nodes={k: replace(v) for k, v in self.nodes.items()},
            edges=list(self.edges),
            provenance=self.provenance,
            seed=self.seed,
            schema_version=self.schema_version,
            meta=json.loads(json.dumps(self.meta)),
        )

    # queries

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def sorted_ids(self) -> list[NodeId]:
        return sorted(self.nodes, key=node_key)

    def _adjacency(self) -> dict:
        if self._adj is None:
            out: dict[NodeId, dict[NodeId, list[Edge]]] = {n: {} for n in self.nodes}
            both: dict[NodeId, set] = {n: set() for n in self.nodes}
            deg: Counter = Counter({n: 0 for n in self.nodes})
            for e in self.edges:
                out[e.source].setdefault(e.target, []).append(e)
                if not self.directed:
                    out[e.target].setdefault(e.source, []).append(e)
                both[e.source].add(e.target)
                both[e.target].add(e.source)
                deg[e.source] += 1
                deg[e.target] += 1
            self._adj = {"out": out, "both": both, "deg": deg}
        return self._adj

    def neighbors(self, node: NodeId) -> list[NodeId]:
        """Nodes reachable over one edge (out-neighbors when directed), sorted."""
        return sorted(self._adjacency()["out"][node], key=node_key)

    def edges_between(self, u: NodeId, v: NodeId) -> list[Edge]:
        """Edges usable to go from u to v (either orientation when undirected)."""
        return list(self._adjacency()["out"][u].get(v, ()))

    def undirected_neighbors(self, node: NodeId) -> set:
        return self._adjacency()["both"][node]

    def degree(self, node: NodeId) -> int:
        """Edge endpoints at node (in + out when directed; multi-edges counted)."""
        return self._adjacency()["deg"][node]


# ---------------------------------------------------------------------------
# generators


def generate_er_graph(
    n: int,
    p_edge: float,
    rng_seed: int,
    kinds: Iterable[str] = EDGE_KINDS,
) -> Graph:
    """Undirected G(n, p) graph; each edge gets a kind drawn uniformly from ``kinds``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not (0.0 <= p_edge <= 1.0):
        raise ValueError(f"p_edge {p_edge!r} outside [0, 1]")
    kinds = tuple(kinds)
    rng = random.Random(rng_seed)
    g = Graph(directed=False, provenance="synthetic", seed=rng_seed)
    for i in range(n):
        g.add_node(NodeState(id=i))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p_edge:
                g.add_edge(Edge(i, j, kind=rng.choice(kinds)))
    return g


def generate_chain_graphs(num_chains: int, chain_len: int, rng_seed: int = 0) -> Graph:
    """Disjoint directed reply chains A -> B -> C -> ..., one fresh user per position.

    Node ids are consecutive integers, chain ``i`` occupying
    ``i*chain_len .. (i+1)*chain_len - 1``.  The seed is only recorded.
    """
    if num_chains < 1:
        raise ValueError(f"num_chains must be >= 1, got {num_chains}")
    if chain_len < 2:
        raise ValueError(f"chain_len must be >= 2, got {chain_len}")
    g = Graph(directed=True, provenance="llm-sim", seed=rng_seed)
    for c in range(num_chains):
        base = c * chain_len
        for k in range(chain_len):
            g.add_node(NodeState(id=base + k))
        for k in range(chain_len - 1):
            g.add_edge(Edge(base + k, base + k + 1, kind="reply", depth=k + 1))
    return g


def init_node_attributes(
    graph: Graph,
    emotion_dist: Mapping[Emotion | str, float],
    rng_seed: int,
) -> Graph:
    """Return a copy with emotions drawn from ``emotion_dist`` and U[0,1] credibility/susceptibility.

    Nodes are visited in ascending id order, three draws per node.
    """
    labels = list(EMOTIONS)
    weights = [0.0, 0.0, 0.0]
    for key, w in emotion_dist.items():
        if w < 0:
            raise ValueError(f"negative weight {w!r} for {key!r}")
        weights[Emotion.parse(key).index] += float(w)
    if sum(weights) <= 0:
        raise ValueError("emotion distribution has no positive weight")
    out = graph.copy()
    if not out.nodes:
        return out
    rng = random.Random(rng_seed)
    for nid in out.sorted_ids():
        node = out.nodes[nid]
        node.emotion = rng.choices(labels, weights=weights)[0]
        node.credibility = rng.random()
        node.susceptibility = rng.random()
    out._adj = None
    return out


# ---------------------------------------------------------------------------
# structural metrics


@dataclass(frozen=True)
class DegreeStats:
    node_count: int
    edge_count: int
    average_degree: float
    max_degree: int
    degree_histogram: dict[int, int]

    def to_dict(self) -> dict:
        return {
            "node_count": self.node_count,
            "edge_count": self.edge_count,
            "average_degree": self.average_degree,
            "max_degree": self.max_degree,
            "degree_histogram": {str(k): v for k, v in sorted(self.degree_histogram.items())},
        }


def clustering_coefficient(graph: Graph) -> float:
    """Average local clustering on the simple undirected projection."""
    if not graph.nodes:
        return 0.0
    total = 0.0
    for v in graph.nodes:
        nbrs = graph.undirected_neighbors(v)
        k = len(nbrs)
        if k < 2:
            continue
        links = 0
        for a in nbrs:
            links += len(graph.undirected_neighbors(a) & nbrs)
        # each neighbor-neighbor link was seen from both ends
        total += (links / 2) / (k * (k - 1) / 2)
    return total / len(graph.nodes)


def reciprocity(graph: Graph) -> float:
    """Fraction of distinct directed pairs (u, v) whose reverse (v, u) is also present."""
    if not graph.directed:
        raise ContractError("reciprocity is defined for directed graphs only")
    pairs = {(e.source, e.target) for e in graph.edges}
    if not pairs:
        return 0.0
    return sum((v, u) in pairs for u, v in pairs) / len(pairs)


def degree_stats(graph: Graph) -> DegreeStats:
    n = graph.node_count
    degrees = [graph.degree(v) for v in graph.nodes]
    return DegreeStats(
        node_count=n,
        edge_count=graph.edge_count,
        average_degree=(2 * graph.edge_count / n) if n else 0.0,
        max_degree=max(degrees, default=0),
        degree_histogram=dict(sorted(Counter(degrees).items())),
    )


def hub_scores(graph: Graph) -> dict[NodeId, float]:
    """Degree centrality scaled so the best-connected node scores 1.0."""
    if not graph.nodes:
        raise ContractError("hub scores need a nonempty graph")
    degs = {v: graph.degree(v) for v in graph.nodes}
    top = max(degs.values())
    if top == 0:
        return {v: 0.0 for v in degs}
    return {v: d / top for v, d in degs.items()}


def weakly_connected_components(graph: Graph) -> list[list[NodeId]]:
    parent = {v: v for v in graph.nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in graph.edges:
        a, b = find(e.source), find(e.target)
        if a != b:
            parent[a] = b
    groups: dict = {}
    for v in graph.sorted_ids():
        groups.setdefault(find(v), []).append(v)
    return sorted(groups.values(), key=lambda c: node_key(c[0]))


def top_k_subgraph(graph: Graph, k: int = 50) -> Graph:
    """Induced subgraph on the ``k`` highest-degree nodes (ties broken by id)."""
    ranked = sorted(graph.nodes, key=lambda v: (-graph.degree(v), node_key(v)))
    keep = set(ranked[: max(k, 0)])
    sub = Graph(
        directed=graph.directed,
        provenance=graph.provenance,
        seed=graph.seed,
        meta={"top_k": k},
    )
    for v in graph.sorted_ids():
        if v in keep:
            sub.add_node(replace(graph.nodes[v]))
    for e in graph.edges:
        if e.source in keep and e.target in keep:
            sub.add_edge(e)
    return sub


def structural_summary(graph: Graph) -> dict:
    stats = degree_stats(graph)
    return {
        "directed": graph.directed,
        "provenance": graph.provenance,
        **stats.to_dict(),
        "clustering": clustering_coefficient(graph),
        "reciprocity": reciprocity(graph) if graph.directed else None,
        "components": len(weakly_connected_components(graph)),
    }


# ---------------------------------------------------------------------------
# serialization


def _node_doc(node: NodeState) -> dict:
    doc = {
        "id": node.id,
        "emotion": node.emotion.value,
        "credibility": node.credibility,
        "susceptibility": node.susceptibility,
        "post_frequency": node.post_frequency,
    }
    if node.activation_round is not None:
        doc["activation_round"] = node.activation_round
    if node.initial_emotion is not None:
        doc["initial_emotion"] = node.initial_emotion.value
    if node.account_age is not None:
        doc["account_age"] = node.account_age
    return doc


def _edge_doc(edge: Edge) -> dict:
    doc = {"source": edge.source, "target": edge.target, "kind": edge.kind, "weight": edge.weight}
    for key in ("depth", "text_length"):
        val = getattr(edge, key)
        if val is not None:
            doc[key] = val
    if edge.emotion is not None:
        doc["emotion"] = edge.emotion.value
    return doc


def graph_to_dict(graph: Graph) -> dict:
    doc = {
        "schema_version": graph.schema_version,
        "directed": graph.directed,
        "provenance": graph.provenance,
        "seed": graph.seed,
        "nodes": [_node_doc(graph.nodes[v]) for v in graph.sorted_ids()],
        "edges": [_edge_doc(e) for e in graph.edges],
    }
    if graph.meta:
        doc["meta"] = graph.meta
    return doc


def serialize_graph(graph: Graph) -> bytes:
    return (json.dumps(graph_to_dict(graph), indent=1, ensure_ascii=False) + "\n").encode("utf-8")


def graph_from_dict(doc: Mapping) -> Graph:
    if not isinstance(doc, Mapping):
        raise GraphParseError("graph document must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise GraphParseError(f"schema_version {version!r} not supported (expected {SCHEMA_VERSION})")
    try:
        g = Graph(
            directed=bool(doc["directed"]),
            provenance=doc.get("provenance", "synthetic"),
            seed=doc.get("seed"),
            meta=dict(doc.get("meta") or {}),
        )
    except (KeyError, ValueError) as exc:
        raise GraphParseError(f"graph header: {exc}") from None
    for i, nd in enumerate(doc.get("nodes", [])):
        try:
            g.add_node(
                NodeState(
                    id=nd["id"],
                    emotion=nd["emotion"],
                    credibility=float(nd["credibility"]),
                    susceptibility=float(nd["susceptibility"]),
                    post_frequency=int(nd.get("post_frequency", 0)),
                    activation_round=nd.get("activation_round"),
                    initial_emotion=nd.get("initial_emotion"),
                    account_age=nd.get("account_age"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise GraphParseError(f"node[{i}] ({nd.get('id')!r}): {exc}") from None
    for i, ed in enumerate(doc.get("edges", [])):
        try:
            g.add_edge(
                Edge(
                    source=ed["source"],
                    target=ed["target"],
                    kind=ed.get("kind", "reply"),
                    weight=float(ed.get("weight", 1.0)),
                    depth=ed.get("depth"),
                    text_length=ed.get("text_length"),
                    emotion=ed.get("emotion"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise GraphParseError(
                f"edge[{i}] ({ed.get('source')!r} -> {ed.get('target')!r}): {exc}"
            ) from None
    return g


def deserialize_graph(data: bytes | str) -> Graph:
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise GraphParseError(f"not valid JSON: {exc}") from None
    return graph_from_dict(doc)


def load_graph(path) -> Graph:
    with open(path, "rb") as fh:
        return deserialize_graph(fh.read())


def save_graph(graph: Graph, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_graph(graph))


DOT_COLORS = {Emotion.POSITIVE: "forestgreen", Emotion.NEUTRAL: "gray60", Emotion.NEGATIVE: "firebrick"}


def to_dot(graph: Graph, name: str = "G") -> str:
    """Graphviz source: nodes colored by emotion, edges labelled by kind."""
    arrow = "->" if graph.directed else "--"
    lines = [f"{'digraph' if graph.directed else 'graph'} {json.dumps(name)} {{"]
    for v in graph.sorted_ids():
        node = graph.nodes[v]
        attrs = f'color="{DOT_COLORS[node.emotion]}", emotion="{node.emotion.value}"'
        if node.activation_round is not None:
            attrs += f', round="{node.activation_round}"'
        lines.append(f"  {json.dumps(str(v))} [{attrs}];")
    for e in graph.edges:
        lines.append(f'  {json.dumps(str(e.source))} {arrow} {json.dumps(str(e.target))} [label="{e.kind}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
