"""Round-based emotion propagation with random, theory-driven and enhanced-IC strategies.

A run starts from one emotionally active seed node. In every synchronous
round each eligible sender tries its not-yet-infected neighbors in ascending
(source, target) order; a success copies the sender's emotion to the target.
The outcome is scored with a composite reward of spread, polarization and
credibility terms.
"""

from __future__ import annotations

import json
import logging
import math
import random
import statistics
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Mapping

from . import __version__
from .graph import (
    Emotion,
    Graph,
    NodeId,
    generate_er_graph,
    hub_scores,
    init_node_attributes,
    node_key,
)
from .seeding import derive_seed

log = logging.getLogger(__name__)

STRATEGIES = ("random", "theory", "eic")
STRATEGY_TITLES = {"random": "Random", "theory": "Theory", "eic": "eIC"}
DEFAULT_KIND_WEIGHTS = {"reply": 1.0, "comment": 1.0, "mention": 0.8}
DEFAULT_MAX_ROUNDS = 2
# natural log; swap for math.log10 / math.log2 to test other readings of the spread term
SPREAD_LOG = math.log1p


@dataclass(frozen=True)
class StrategyParams:
    strategy: str = "random"
    p_fixed: float = 0.3
    neutral_intensity: float = 0.5
    base_p: float = 0.10
    kind_weights: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_KIND_WEIGHTS))
    # senders go quiet this many rounds after activation; None keeps them active
    recovery_rounds: int | None = None

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        for name in ("p_fixed", "neutral_intensity", "base_p"):
            val = getattr(self, name)
            if not (0.0 <= val <= 1.0):
                raise ValueError(f"{name} {val!r} outside [0, 1]")
        for kind, w in self.kind_weights.items():
            if not w > 0:
                raise ValueError(f"kind weight for {kind!r} must be positive, got {w!r}")
        if self.recovery_rounds is not None and self.recovery_rounds < 1:
            raise ValueError("recovery_rounds must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind_weights"] = dict(sorted(self.kind_weights.items()))
        return d

    @classmethod
    def from_dict(cls, doc: Mapping) -> "StrategyParams":
        known = {k: doc[k] for k in cls.__dataclass_fields__ if k in doc}
        if "kind_weights" in known:
            known["kind_weights"] = dict(known["kind_weights"])
        return cls(**known)


@dataclass(frozen=True)
class RewardWeights:
    spread: float = 1.0
    polar: float = 1.0
    cred: float = 1.0


@dataclass(frozen=True)
class PropagationEvent:
    round: int
    source: NodeId
    target: NodeId
    emotion_transmitted: Emotion
    probability_used: float
    success: bool
    # target credibility, kept so the reward can be recomputed from the trace alone
    credibility: float

    def to_dict(self) -> dict:
        return {
            "type": "event",
            "round": self.round,
            "source": self.source,
            "target": self.target,
            "emotion_transmitted": self.emotion_transmitted.value,
            "probability_used": self.probability_used,
            "success": self.success,
            "credibility": self.credibility,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PropagationEvent":
        return cls(
            round=d["round"],
            source=d["source"],
            target=d["target"],
            emotion_transmitted=Emotion.parse(d["emotion_transmitted"]),
            probability_used=d["probability_used"],
            success=d["success"],
            credibility=d["credibility"],
        )


@dataclass(frozen=True)
class RewardBreakdown:
    r_spread: float
    r_polar: float
    r_cred: float
    total: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DiffusionTrace:
    seed_node: NodeId
    rng_seed: int
    params: StrategyParams
    events: list[PropagationEvent] = field(default_factory=list)
    round_sizes: list[int] = field(default_factory=lambda: [0])
    reward: RewardBreakdown | None = None
    warnings: list[str] = field(default_factory=list)
    graph_info: dict = field(default_factory=dict)

    @property
    def infected(self) -> list[NodeId]:
        """Nodes activated during the run, seed excluded, in activation order."""
        return [e.target for e in self.events if e.success]

    @property
    def spread(self) -> int:
        return sum(1 for e in self.events if e.success)

    def to_jsonl(self) -> str:
        lines = [json.dumps(e.to_dict()) for e in self.events]
        summary = {
            "type": "summary",
            "tool_version": __version__,
            "seed_node": self.seed_node,
            "rng_seed": self.rng_seed,
            "params": self.params.to_dict(),
            "graph": self.graph_info,
            "round_sizes": self.round_sizes,
            "spread": self.spread,
            "reward": self.reward.to_dict() if self.reward else None,
            "warnings": self.warnings,
        }
        lines.append(json.dumps(summary))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "DiffusionTrace":
        events = []
        summary = None
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("type") == "event":
                events.append(PropagationEvent.from_dict(rec))
            elif rec.get("type") == "summary":
                summary = rec
            else:
                raise ValueError(f"line {lineno}: unknown record type {rec.get('type')!r}")
        if summary is None:
            raise ValueError("trace has no summary record")
        rw = summary.get("reward")
        return cls(
            seed_node=summary["seed_node"],
            rng_seed=summary["rng_seed"],
            params=StrategyParams.from_dict(summary["params"]),
            events=events,
            round_sizes=list(summary["round_sizes"]),
            reward=RewardBreakdown(**rw) if rw else None,
            warnings=list(summary.get("warnings", [])),
            graph_info=summary.get("graph", {}),
        )


@dataclass
class SimulationState:
    graph: Graph
    seed_node: NodeId
    round: int = 0
    activated: dict = field(default_factory=dict)
    emotions: dict = field(default_factory=dict)
    attempted: set = field(default_factory=set)
    warnings: list[str] = field(default_factory=list)
    recovery_rounds: int | None = None

    @classmethod
    def start(cls, graph: Graph, seed_node: NodeId, recovery_rounds: int | None = None) -> "SimulationState":
        return cls(
            graph=graph,
            seed_node=seed_node,
            activated={seed_node: 0},
            emotions={v: n.emotion for v, n in graph.nodes.items()},
            recovery_rounds=recovery_rounds,
        )

    def senders(self) -> list[NodeId]:
        out = []
        for v, r in self.activated.items():
            if self.recovery_rounds is not None and self.round - r >= self.recovery_rounds:
                continue
            out.append(v)
        return sorted(out, key=node_key)


def _run_round(
    state: SimulationState,
    rng: random.Random,
    prob: Callable[[NodeId, NodeId], float],
    once_per_pair: bool = False,
) -> list[PropagationEvent]:
    r = state.round + 1
    graph = state.graph
    newly: dict[NodeId, NodeId] = {}
    events = []
    for u in state.senders():
        for v in graph.neighbors(u):
            if v in state.activated or v in newly:
                continue
            if once_per_pair:
                if (u, v) in state.attempted:
                    continue
                state.attempted.add((u, v))
            p = prob(u, v)
            success = rng.random() < p
            events.append(
                PropagationEvent(
                    round=r,
                    source=u,
                    target=v,
                    emotion_transmitted=state.emotions[u],
                    probability_used=p,
                    success=success,
                    credibility=graph.nodes[v].credibility,
                )
            )
            if success:
                newly[v] = u
    for v, u in newly.items():
        state.activated[v] = r
        state.emotions[v] = state.emotions[u]
    state.round = r
    return events


def step_random(state: SimulationState, params: StrategyParams, rng: random.Random) -> list[PropagationEvent]:
    return _run_round(state, rng, lambda u, v: params.p_fixed)


def emotional_intensity(emotion: Emotion, neutral_intensity: float) -> float:
    return neutral_intensity if emotion is Emotion.NEUTRAL else 1.0


def step_theory(state: SimulationState, params: StrategyParams, rng: random.Random) -> list[PropagationEvent]:
    nodes = state.graph.nodes

    def prob(u, v):
        intensity = emotional_intensity(state.emotions[u], params.neutral_intensity)
        return nodes[u].credibility * intensity * nodes[v].susceptibility

    return _run_round(state, rng, prob)


def step_eic(
    state: SimulationState,
    params: StrategyParams,
    rng: random.Random,
    hubs: Mapping[NodeId, float],
) -> list[PropagationEvent]:
    """Independent cascade: every ordered pair gets a single attempt per run."""

    def kind_weight(kind: str) -> float:
        if kind in params.kind_weights:
            return params.kind_weights[kind]
        msg = f"unknown edge kind {kind!r}; using weight 1.0"
        if msg not in state.warnings:
            state.warnings.append(msg)
            log.warning(msg)
        return 1.0

    def prob(u, v):
        # parallel edges: the strongest interaction kind counts
        w = max(kind_weight(e.kind) for e in state.graph.edges_between(u, v))
        return min(1.0, params.base_p * w * (1.0 + hubs[u]))

    return _run_round(state, rng, prob, once_per_pair=True)


def _pvariance(values: list[float]) -> float:
    if len(values) <= 1:
        return 0.0
    return statistics.pvariance(values)


def reward(trace: DiffusionTrace, weights: RewardWeights = RewardWeights()) -> RewardBreakdown:
    hits = [e for e in trace.events if e.success]
    r_spread = SPREAD_LOG(len(hits))
    var = _pvariance([e.emotion_transmitted.score for e in hits])
    r_polar = -var if var else 0.0
    r_cred = math.fsum(e.credibility for e in hits)
    total = weights.spread * r_spread + weights.polar * r_polar + weights.cred * r_cred
    return RewardBreakdown(r_spread=r_spread, r_polar=r_polar, r_cred=r_cred, total=total)


def run_simulation(
    graph: Graph,
    params: StrategyParams,
    seed_node: NodeId,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
    rng_seed: int = 0,
    weights: RewardWeights = RewardWeights(),
) -> DiffusionTrace:
    if seed_node not in graph.nodes:
        raise ValueError(f"seed node {seed_node!r} is not in the graph")
    if max_rounds < 1:
        raise ValueError(f"max_rounds must be >= 1, got {max_rounds}")
    rng = random.Random(rng_seed)
    state = SimulationState.start(graph, seed_node, params.recovery_rounds)
    hubs = hub_scores(graph) if params.strategy == "eic" else None
    trace = DiffusionTrace(
        seed_node=seed_node,
        rng_seed=rng_seed,
        params=params,
        graph_info={
            "provenance": graph.provenance,
            "seed": graph.seed,
            "nodes": graph.node_count,
            "edges": graph.edge_count,
        },
    )
    while state.round < max_rounds:
        if params.strategy == "random":
            events = step_random(state, params, rng)
        elif params.strategy == "theory":
            events = step_theory(state, params, rng)
        else:
            events = step_eic(state, params, rng, hubs)
        trace.events.extend(events)
        trace.round_sizes.append(len(state.activated) - 1)
        log.info("round %d: %d attempts, %d infected so far", state.round, len(events), trace.round_sizes[-1])
        if not any(e.success for e in events):
            break
    trace.warnings = list(state.warnings)
    trace.reward = reward(trace, weights)
    return trace


# ---------------------------------------------------------------------------
# batch experiments


def default_strategies() -> dict[str, StrategyParams]:
    return {name: StrategyParams(strategy=name) for name in STRATEGIES}


@dataclass
class BatchConfig:
    master_seed: int = 2025
    n_nodes: int = 10
    p_edge: float = 0.5
    emotion_dist: Mapping[str, float] = field(
        default_factory=lambda: {"positive": 1.0, "neutral": 1.0, "negative": 1.0}
    )
    max_rounds: int = DEFAULT_MAX_ROUNDS
    strategies: Mapping[str, StrategyParams] = field(default_factory=default_strategies)
    weights: RewardWeights = RewardWeights()

    def to_dict(self) -> dict:
        return {
            "master_seed": self.master_seed,
            "n_nodes": self.n_nodes,
            "p_edge": self.p_edge,
            "emotion_dist": dict(self.emotion_dist),
            "max_rounds": self.max_rounds,
            "strategies": {k: v.to_dict() for k, v in self.strategies.items()},
            "weights": asdict(self.weights),
        }


@dataclass
class StrategySummary:
    strategy: str
    spreads: list[int]
    rewards: list[float]

    @property
    def avg_spread(self) -> float:
        return math.fsum(self.spreads) / len(self.spreads)

    @property
    def avg_reward(self) -> float:
        return math.fsum(self.rewards) / len(self.rewards)

    @property
    def max_spread(self) -> int:
        return max(self.spreads)

    @property
    def min_spread(self) -> int:
        return min(self.spreads)

    @property
    def max_reward(self) -> float:
        return max(self.rewards)

    @property
    def min_reward(self) -> float:
        return min(self.rewards)

    def to_dict(self) -> dict:
        return {
            "avg_spread": self.avg_spread,
            "avg_reward": self.avg_reward,
            "max_spread": self.max_spread,
            "min_spread": self.min_spread,
            "max_reward": self.max_reward,
            "min_reward": self.min_reward,
        }


@dataclass
class BatchSummary:
    runs: int
    config: dict
    per_strategy: dict[str, StrategySummary]

    def to_dict(self) -> dict:
        return {
            "tool_version": __version__,
            "runs": self.runs,
            "config": self.config,
            "strategies": {k: v.to_dict() for k, v in self.per_strategy.items()},
        }

    def to_table(self) -> str:
        header = ["Strategy", "Avg. Spread", "Avg. Reward", "Max Spread", "Min Spread", "Max Reward", "Min Reward"]
        rows = [header]
        for name, s in self.per_strategy.items():
            rows.append([
                STRATEGY_TITLES.get(name, name),
                f"{s.avg_spread:.2f}",
                f"{s.avg_reward:.3f}",
                str(s.max_spread),
                str(s.min_spread),
                f"{s.max_reward:.3f}",
                f"{s.min_reward:.3f}",
            ])
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        out = []
        for row in rows:
            cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
            out.append("  ".join(cells).rstrip())
        return "\n".join(out) + "\n"

    def ordering_holds(self, names: Iterable[str] = STRATEGIES) -> bool:
        """Mean spread and mean reward both strictly decrease along ``names``."""
        s = [self.per_strategy[n] for n in names]
        return all(a.avg_spread > b.avg_spread and a.avg_reward > b.avg_reward for a, b in zip(s, s[1:]))


def single_run(config: BatchConfig, strategy: str, run: int) -> DiffusionTrace:
    """One (graph, attributes, simulation) triple with seeds derived from its coordinates."""
    ms = config.master_seed
    graph = generate_er_graph(config.n_nodes, config.p_edge, derive_seed(ms, strategy, run, "graph"))
    graph = init_node_attributes(graph, config.emotion_dist, derive_seed(ms, strategy, run, "attrs"))
    seed_node = random.Random(derive_seed(ms, strategy, run, "seed-node")).choice(graph.sorted_ids())
    return run_simulation(
        graph,
        config.strategies[strategy],
        seed_node,
        config.max_rounds,
        derive_seed(ms, strategy, run, "sim"),
        config.weights,
    )


def batch_experiment(config: BatchConfig, n_runs: int) -> BatchSummary:
    if n_runs < 1:
        raise ValueError(f"n_runs must be >= 1, got {n_runs}")
    per = {}
    for name in config.strategies:
        traces = [single_run(config, name, i) for i in range(n_runs)]
        per[name] = StrategySummary(
            strategy=name,
            spreads=[t.spread for t in traces],
            rewards=[t.reward.total for t in traces],
        )
    return BatchSummary(runs=n_runs, config=config.to_dict(), per_strategy=per)

