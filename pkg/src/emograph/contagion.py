"""LLM-driven emotion contagion: prompting, reply classification, recursive diffusion, drift metrics."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources

import numpy as np

from . import __version__
from .graph import EMOTIONS, ContractError, Edge, Emotion, Graph, NodeId, NodeState, node_key
from .propagation import DiffusionTrace
from .providers import GenerationProvider, MockProvider, ProviderError
from .seeding import derive_seed
from .sentiment import Classifier, SentimentScore, classify_sentiment

log = logging.getLogger(__name__)

SYSTEM_PREAMBLE = (
    "You are role-playing a member of an online discussion forum. "
    "Answer with the text of a single short reply and nothing else."
)
TONE_INSTRUCTIONS = {
    Emotion.POSITIVE: "Reply in a positive, supportive tone.",
    Emotion.NEUTRAL: "Maintain a neutral tone: state facts without expressing approval or disapproval.",
    Emotion.NEGATIVE: "Reply in a critical, negative tone.",
}
PROMPT_TEMPLATE = (
    "You are user {receiver} (susceptibility to other users' mood: {susceptibility:.2f}).\n"
    "User {sender} (emotional state: {sender_emotion}; credibility: {credibility:.2f}) "
    "reached you through a {kind}; this is turn {round} of the thread.\n"
    "Write one short reply as user {receiver}. {instruction}"
)


@dataclass(frozen=True)
class Prompt:
    system_preamble: str
    sender_id: NodeId
    sender_emotion: Emotion
    sender_credibility: float
    receiver_id: NodeId
    receiver_susceptibility: float
    edge_kind: str
    round: int
    tone: Emotion

    @property
    def instruction(self) -> str:
        return TONE_INSTRUCTIONS[self.tone]

    def render(self) -> str:
        return PROMPT_TEMPLATE.format(
            receiver=self.receiver_id,
            susceptibility=self.receiver_susceptibility,
            sender=self.sender_id,
            sender_emotion=self.sender_emotion.value,
            credibility=self.sender_credibility,
            kind=self.edge_kind,
            round=self.round,
            instruction=self.instruction,
        )

    def messages(self) -> list[dict]:
        return [
            {"role": "system", "content": self.system_preamble},
            {"role": "user", "content": self.render()},
        ]

    @cached_property
    def hash(self) -> str:
        body = self.system_preamble + "\n" + self.render()
        return hashlib.sha256(body.encode("utf-8")).hexdigest()[:16]


def build_prompt(
    sender: NodeState,
    receiver: NodeState,
    edge: Edge,
    tone: Emotion | str,
    round_no: int = 1,
) -> Prompt:
    return Prompt(
        system_preamble=SYSTEM_PREAMBLE,
        sender_id=sender.id,
        sender_emotion=sender.emotion,
        sender_credibility=sender.credibility,
        receiver_id=receiver.id,
        receiver_susceptibility=receiver.susceptibility,
        edge_kind=edge.kind,
        round=round_no,
        tone=Emotion.parse(tone),
    )


@dataclass(frozen=True)
class ReplyRecord:
    round: int
    source: NodeId
    target: NodeId
    source_label: Emotion
    tone: Emotion
    prompt_hash: str
    reply: str
    score: SentimentScore

    def to_dict(self) -> dict:
        return {
            "type": "reply",
            "round": self.round,
            "source": self.source,
            "target": self.target,
            "source_label": self.source_label.value,
            "tone": self.tone.value,
            "prompt_hash": self.prompt_hash,
            "reply": self.reply,
            **self.score.to_dict(),
        }


@dataclass
class LlmTrace:
    seed_node: NodeId
    seed_label: Emotion
    records: list[ReplyRecord] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    graph: Graph | None = None
    config: dict = field(default_factory=dict)

    def to_jsonl(self) -> str:
        lines = [json.dumps(r.to_dict(), ensure_ascii=False) for r in self.records]
        lines += [json.dumps({"type": "error", **e}) for e in self.errors]
        shares = positivity_share_by_round(self) if self.records else {}
        lines.append(json.dumps({
            "type": "summary",
            "tool_version": __version__,
            "config": self.config,
            "seed_node": self.seed_node,
            "seed_label": self.seed_label.value,
            "replies": len(self.records),
            "errors": len(self.errors),
            "diagnostics": self.diagnostics,
            "shares_by_round": {str(r): v for r, v in shares.items()},
        }))
        return "\n".join(lines) + "\n"


def _first_edge(graph: Graph, u: NodeId, v: NodeId) -> Edge:
    return graph.edges_between(u, v)[0]


def run_llm_diffusion(
    graph: Graph,
    seed_node: NodeId,
    rounds: int,
    provider: GenerationProvider,
    tone_policy: str = "sender",
    rng_seed: int = 0,
    classifier: Classifier = classify_sentiment,
    max_tokens: int = 128,
    temperature: float = 0.0,
    max_in_flight: int = 1,
) -> LlmTrace:
    """Breadth-wise reply cascade from ``seed_node``.

    Each node activated in round r-1 gets one reply from every still-inactive
    neighbor in round r; the classified reply becomes that neighbor's emotion.
    ``tone_policy`` is ``"sender"`` (instruct with the sender's current label)
    or an emotion name to use the same instruction throughout.
    """
    if seed_node not in graph.nodes:
        raise ValueError(f"seed node {seed_node!r} is not in the graph")
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    fixed_tone = None if tone_policy == "sender" else Emotion.parse(tone_policy)

    labels: dict[NodeId, Emotion] = {seed_node: graph.nodes[seed_node].emotion}
    activated: dict[NodeId, int] = {seed_node: 0}
    parents: dict[NodeId, tuple[NodeId, ReplyRecord]] = {}
    trace = LlmTrace(
        seed_node=seed_node,
        seed_label=labels[seed_node],
        config={
            "rounds": rounds,
            "tone_policy": tone_policy,
            "rng_seed": rng_seed,
            "max_tokens": max_tokens,
            "temperature": temperature,
        },
    )
    frontier = [seed_node]
    pool = ThreadPoolExecutor(max_workers=max_in_flight) if max_in_flight > 1 else None
    try:
        for r in range(1, rounds + 1):
            pairs = []
            claimed = set()
            for u in sorted(frontier, key=node_key):
                for v in graph.neighbors(u):
                    if v in activated or v in claimed:
                        continue
                    claimed.add(v)
                    pairs.append((u, v))
            if not pairs:
                break
            prompts = []
            for u, v in pairs:
                sender = graph.nodes[u]
                sender_view = NodeState(
                    id=u, emotion=labels[u], credibility=sender.credibility,
                    susceptibility=sender.susceptibility,
                )
                tone = fixed_tone or labels[u]
                prompts.append(build_prompt(sender_view, graph.nodes[v], _first_edge(graph, u, v), tone, r))

            def ask(i: int):
                u, v = pairs[i]
                try:
                    text = provider.generate(
                        prompts[i], max_tokens=max_tokens, temperature=temperature,
                        seed=derive_seed(rng_seed, r, u, v),
                    )
                    return text, None
                except ProviderError as exc:
                    return None, exc

            results = list(pool.map(ask, range(len(pairs)))) if pool else [ask(i) for i in range(len(pairs))]

            next_frontier = []
            for (u, v), prompt, (text, err) in zip(pairs, prompts, results):
                if err is not None:
                    trace.errors.append({"round": r, "source": u, "target": v, "error": str(err)})
                    continue
                score = classifier(text)
                rec = ReplyRecord(
                    round=r, source=u, target=v, source_label=labels[u], tone=prompt.tone,
                    prompt_hash=prompt.hash, reply=text, score=score,
                )
                trace.records.append(rec)
                activated[v] = r
                labels[v] = score.label
                parents[v] = (u, rec)
                next_frontier.append(v)
            if not next_frontier:
                msg = f"round {r}: all {len(pairs)} provider requests failed; stopping"
                log.warning(msg)
                trace.diagnostics.append(msg)
                break
            log.info("round %d: %d replies", r, len(next_frontier))
            frontier = next_frontier
    finally:
        if pool:
            pool.shutdown()

    trace.graph = _diffusion_graph(graph, activated, labels, parents)
    return trace


def _diffusion_graph(graph: Graph, activated: dict, labels: dict, parents: dict) -> Graph:
    out = Graph(directed=True, provenance="llm-sim", seed=graph.seed)
    for v in sorted(activated, key=node_key):
        src = graph.nodes[v]
        out.add_node(NodeState(
            id=v,
            emotion=labels[v],
            credibility=src.credibility,
            susceptibility=src.susceptibility,
            post_frequency=1 if v in parents else 0,
            activation_round=activated[v],
            initial_emotion=src.emotion,
        ))
    for v in sorted(parents, key=lambda x: (activated[x], node_key(x))):
        u, rec = parents[v]
        out.add_edge(Edge(
            u, v, kind=_first_edge(graph, u, v).kind, depth=rec.round,
            text_length=len(rec.reply), emotion=rec.score.label,
        ))
    return out


# ---------------------------------------------------------------------------
# drift metrics


def _shares(labels: list[Emotion]) -> dict[str, float]:
    n = len(labels)
    return {e.value: (sum(1 for x in labels if x is e) / n if n else 0.0) for e in EMOTIONS}


def positivity_share_by_round(trace: LlmTrace) -> dict[int, dict[str, float]]:
    if not trace.records:
        raise ContractError("trace has no reply records")
    by_round: dict[int, list[Emotion]] = {}
    for rec in trace.records:
        by_round.setdefault(rec.round, []).append(rec.score.label)
    return {r: _shares(v) for r, v in sorted(by_round.items())}


@dataclass(frozen=True)
class TransitionMatrix:
    matrix: np.ndarray
    counts: np.ndarray
    unobserved: tuple[Emotion, ...]

    def to_dict(self) -> dict:
        return {
            "order": [e.value for e in EMOTIONS],
            "matrix": self.matrix.tolist(),
            "counts": self.counts.astype(int).tolist(),
            "unobserved_rows": [e.value for e in self.unobserved],
        }


def sentiment_transition_matrix(trace: LlmTrace) -> TransitionMatrix:
    """Row a, column b: share of replies to a sender labelled a that came out labelled b.

    Rows with no observations are uniform and listed in ``unobserved``.
    """
    counts = np.zeros((3, 3))
    for rec in trace.records:
        counts[rec.source_label.index, rec.score.label.index] += 1
    matrix = np.full((3, 3), 1.0 / 3.0)
    unobserved = []
    for i, e in enumerate(EMOTIONS):
        total = counts[i].sum()
        if total:
            matrix[i] = counts[i] / total
        else:
            unobserved.append(e)
    return TransitionMatrix(matrix=matrix, counts=counts, unobserved=tuple(unobserved))


def _activations(trace) -> list[tuple[int, Emotion]]:
    if isinstance(trace, LlmTrace):
        return [(r.round, r.score.label) for r in trace.records]
    if isinstance(trace, DiffusionTrace):
        return [(e.round, e.emotion_transmitted) for e in trace.events if e.success]
    raise TypeError(f"cannot profile {type(trace).__name__}")


def diffusion_profile(trace) -> dict:
    acts = _activations(trace)
    if not acts:
        return {"depth": 0, "breadth": 0, "drift": 0.0, "label_distribution": _shares([])}
    first = min(r for r, _ in acts)
    last = max(r for r, _ in acts)
    first_d = _shares([e for r, e in acts if r == first])
    last_d = _shares([e for r, e in acts if r == last])
    return {
        "depth": last,
        "breadth": len(acts),
        "drift": sum(abs(first_d[k] - last_d[k]) for k in first_d),
        "label_distribution": _shares([e for _, e in acts]),
    }


def compare_diffusion(trace_a, trace_b) -> dict:
    """Depth, breadth and emotional drift of two traces (LLM or baseline) and their deltas.

    ``distribution_l1`` is the L1 distance between the two traces' overall
    label distributions (2.0 for disjoint single-label cascades).
    """
    a, b = diffusion_profile(trace_a), diffusion_profile(trace_b)
    if not a["breadth"] and not b["breadth"]:
        raise ContractError("both traces are empty")
    return {
        "a": a,
        "b": b,
        "delta": {
            "depth": b["depth"] - a["depth"],
            "breadth": b["breadth"] - a["breadth"],
            "drift": b["drift"] - a["drift"],
        },
        "distribution_l1": sum(
            abs(a["label_distribution"][k] - b["label_distribution"][k]) for k in a["label_distribution"]
        ),
    }


# ---------------------------------------------------------------------------
# the shipped neutral-seed scenario


POSITIVITY_SEED = 31


def positivity_fixture_graph() -> Graph:
    """Neutral seed 31 with 31 neighbors (0..30), each leading to one fresh leaf (32..62)."""
    g = Graph(directed=False, provenance="llm-sim", seed=0)
    g.add_node(NodeState(id=POSITIVITY_SEED, emotion=Emotion.NEUTRAL, credibility=0.8, susceptibility=0.5))
    for i in range(31):
        g.add_node(NodeState(id=i, emotion=Emotion.NEUTRAL, credibility=0.5, susceptibility=0.5))
        g.add_node(NodeState(id=32 + i, emotion=Emotion.NEUTRAL, credibility=0.5, susceptibility=0.5))
    for i in range(31):
        g.add_edge(Edge(POSITIVITY_SEED, i, kind="reply"))
        g.add_edge(Edge(i, 32 + i, kind="reply"))
    return g


def positivity_script_text() -> str:
    return resources.files("emograph").joinpath("data/positivity_script.jsonl").read_text("utf-8")


def positivity_provider() -> MockProvider:
    return MockProvider.from_jsonl(positivity_script_text())
