"""Two-layer graph convolution for node emotion prediction, trained by full-batch gradient descent."""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .graph import EMOTIONS, ContractError, Edge, Emotion, Graph, NodeId, NodeState

FEATURE_COLUMNS = ("emotion_positive", "emotion_neutral", "emotion_negative", "credibility", "post_frequency")
N_CLASSES = 3
LAYERS = ("gcn", "mean")
KIND_MULTIPLIERS = {"reply": 1.0, "comment": 1.0, "mention": 0.8}


class DegenerateTaskError(ValueError):
    """Training data has fewer than two emotion classes."""


@dataclass
class FeatureSet:
    X: np.ndarray
    labels: np.ndarray
    node_ids: list[NodeId]

    @property
    def index(self) -> dict[NodeId, int]:
        return {v: i for i, v in enumerate(self.node_ids)}


def build_features(graph: Graph) -> FeatureSet:
    """Rows in ascending node id: [start-emotion one-hot, credibility, post_frequency / max]."""
    ids = graph.sorted_ids()
    n = len(ids)
    X = np.zeros((n, len(FEATURE_COLUMNS)))
    labels = np.zeros(n, dtype=int)
    max_posts = max((graph.nodes[v].post_frequency for v in ids), default=0)
    for i, v in enumerate(ids):
        node = graph.nodes[v]
        if node.emotion is None or node.credibility is None or node.post_frequency is None:
            raise ValueError(f"node {v!r} lacks emotion, credibility or post_frequency")
        X[i, node.start_emotion.index] = 1.0
        X[i, 3] = node.credibility
        X[i, 4] = node.post_frequency / max_posts if max_posts else 0.0
        labels[i] = node.emotion.index
    return FeatureSet(X=X, labels=labels, node_ids=ids)


def _dense_adjacency(graph: Graph, ids: list[NodeId], edge_weighting: bool) -> np.ndarray:
    idx = {v: i for i, v in enumerate(ids)}
    n = len(ids)
    directed = np.zeros((n, n))
    for e in graph.edges:
        w = e.weight * KIND_MULTIPLIERS.get(e.kind, 1.0) if edge_weighting else 1.0
        i, j = idx[e.source], idx[e.target]
        if edge_weighting:
            directed[i, j] += w
        else:
            directed[i, j] = 1.0
    A = np.maximum(directed, directed.T)
    return A


def normalized_adjacency(graph: Graph, edge_weighting: bool = False, ids: list[NodeId] | None = None) -> np.ndarray:
    """Symmetric D^-1/2 (A + I) D^-1/2 over the symmetrized adjacency."""
    ids = graph.sorted_ids() if ids is None else ids
    A = _dense_adjacency(graph, ids, edge_weighting) + np.eye(len(ids))
    d_inv_sqrt = 1.0 / np.sqrt(A.sum(axis=1))
    return A * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]


def mean_adjacency(graph: Graph, edge_weighting: bool = False, ids: list[NodeId] | None = None) -> np.ndarray:
    """Row-normalized A + I: each node averages itself and its neighbors."""
    ids = graph.sorted_ids() if ids is None else ids
    A = _dense_adjacency(graph, ids, edge_weighting) + np.eye(len(ids))
    return A / A.sum(axis=1, keepdims=True)


def propagation_matrix(graph: Graph, layer: str = "gcn", edge_weighting: bool = False) -> np.ndarray:
    if layer == "gcn":
        return normalized_adjacency(graph, edge_weighting)
    if layer == "mean":
        return mean_adjacency(graph, edge_weighting)
    raise ValueError(f"unknown layer kind {layer!r}")


@dataclass
class GcnParams:
    W0: np.ndarray
    W1: np.ndarray
    layer: str = "gcn"

    def __post_init__(self) -> None:
        if self.layer not in LAYERS:
            raise ValueError(f"unknown layer kind {self.layer!r}")
        if self.W0.ndim != 2 or self.W1.ndim != 2 or self.W0.shape[1] != self.W1.shape[0]:
            raise ContractError(f"inconsistent weight shapes {self.W0.shape} and {self.W1.shape}")
        if self.W1.shape[1] != N_CLASSES:
            raise ContractError(f"output layer must have {N_CLASSES} columns, got {self.W1.shape[1]}")

    @classmethod
    def init(cls, d: int, hidden: int, seed: int, layer: str = "gcn") -> "GcnParams":
        rng = np.random.default_rng(seed)

        def glorot(fan_in, fan_out):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_in, fan_out))

        return cls(W0=glorot(d, hidden), W1=glorot(hidden, N_CLASSES), layer=layer)

    def copy(self) -> "GcnParams":
        return GcnParams(self.W0.copy(), self.W1.copy(), self.layer)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def gcn_forward(params: GcnParams, X: np.ndarray, adj: np.ndarray) -> tuple[np.ndarray, dict]:
    n = X.shape[0]
    if adj.shape != (n, n):
        raise ContractError(f"adjacency shape {adj.shape} does not match {n} feature rows")
    if X.shape[1] != params.W0.shape[0]:
        raise ContractError(f"feature width {X.shape[1]} does not match W0 rows {params.W0.shape[0]}")
    AX = adj @ X
    Z1 = AX @ params.W0
    H1 = np.maximum(Z1, 0.0)
    AH = adj @ H1
    logits = AH @ params.W1
    return logits, {"AX": AX, "Z1": Z1, "H1": H1, "AH": AH}


def loss_and_gradients(
    params: GcnParams,
    X: np.ndarray,
    adj: np.ndarray,
    labels: np.ndarray,
    mask: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean softmax cross-entropy over masked nodes, with gradients for W0 and W1."""
    mask = np.asarray(mask, dtype=bool)
    m = int(mask.sum())
    if m == 0:
        raise ContractError("loss mask selects no nodes")
    logits, cache = gcn_forward(params, X, adj)
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.flatnonzero(mask)
    loss = float(-log_probs[rows, labels[rows]].sum() / m)

    dlogits = np.exp(log_probs)
    dlogits[np.arange(len(labels)), labels] -= 1.0
    dlogits[~mask] = 0.0
    dlogits /= m
    gW1 = cache["AH"].T @ dlogits
    dH1 = adj.T @ (dlogits @ params.W1.T)
    dZ1 = dH1 * (cache["Z1"] > 0)
    gW0 = cache["AX"].T @ dZ1
    return loss, {"W0": gW0, "W1": gW1}


# ---------------------------------------------------------------------------
# metrics


@dataclass
class Metrics:
    accuracy: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    support: list[int]
    confusion: list[list[int]]
    n: int

    @property
    def macro_f1(self) -> float:
        return sum(self.f1) / N_CLASSES

    def f1_for(self, emotion: Emotion | str) -> float:
        return self.f1[Emotion.parse(emotion).index]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class": {
                e.value: {
                    "precision": self.precision[i],
                    "recall": self.recall[i],
                    "f1": self.f1[i],
                    "support": self.support[i],
                }
                for i, e in enumerate(EMOTIONS)
            },
            "confusion": self.confusion,
        }

    def confusion_text(self) -> str:
        names = [e.value for e in EMOTIONS]
        width = max(len(x) for x in names) + 2
        lines = ["true \\ pred".ljust(width + 2) + "".join(n.rjust(width) for n in names)]
        for name, row in zip(names, self.confusion):
            lines.append(name.ljust(width + 2) + "".join(str(c).rjust(width) for c in row))
        return "\n".join(lines) + "\n"


def classification_metrics(y_true, y_pred) -> Metrics:
    """Per-class precision/recall/F1; any 0/0 ratio is taken as 0."""
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    conf = np.zeros((N_CLASSES, N_CLASSES), dtype=int)
    np.add.at(conf, (y_true, y_pred), 1)
    precision, recall, f1 = [], [], []
    for c in range(N_CLASSES):
        tp = conf[c, c]
        predicted = conf[:, c].sum()
        actual = conf[c, :].sum()
        p = tp / predicted if predicted else 0.0
        r = tp / actual if actual else 0.0
        precision.append(float(p))
        recall.append(float(r))
        f1.append(float(2 * p * r / (p + r)) if (p + r) else 0.0)
    n = len(y_true)
    return Metrics(
        accuracy=float(np.trace(conf) / n) if n else 0.0,
        precision=precision,
        recall=recall,
        f1=f1,
        support=[int(s) for s in conf.sum(axis=1)],
        confusion=conf.tolist(),
        n=n,
    )


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    hidden: int = 16
    lr: float = 0.05
    epochs: int = 200
    split_seed: int = 0
    init_seed: int = 0
    train_fraction: float = 0.7
    layer: str = "gcn"
    edge_weighting: bool = False

    def __post_init__(self) -> None:
        if self.hidden < 1 or self.epochs < 0 or not self.lr > 0:
            raise ValueError("hidden >= 1, epochs >= 0 and lr > 0 required")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction {self.train_fraction!r} outside (0, 1)")
        if self.layer not in LAYERS:
            raise ValueError(f"unknown layer kind {self.layer!r}")


@dataclass
class TrainReport:
    losses: list[float]
    train: Metrics
    test: Metrics
    config: TrainConfig
    n_train: int
    n_test: int
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "tool_version": __version__,
            "config": asdict(self.config),
            "split_seed": self.config.split_seed,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "loss": self.losses,
            "train": self.train.to_dict(),
            "test": self.test.to_dict(),
            **self.extra,
        }


def stratified_split(labels: np.ndarray, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-class shuffle; each class with >= 2 members lands on both sides."""
    rng = np.random.default_rng(seed)
    train = np.zeros(len(labels), dtype=bool)
    for c in range(N_CLASSES):
        members = np.flatnonzero(labels == c)
        if len(members) == 0:
            continue
        members = rng.permutation(members)
        k = int(round(train_fraction * len(members)))
        k = min(max(k, 1), len(members) - 1) if len(members) >= 2 else 1
        train[members[:k]] = True
    return train, ~train


def train(graph: Graph, config: TrainConfig = TrainConfig()) -> tuple[TrainReport, GcnParams]:
    feats = build_features(graph)
    present = sorted(set(feats.labels.tolist()))
    if len(present) < 2:
        only = Emotion.from_index(present[0]).value if present else "none"
        raise DegenerateTaskError(f"graph has a single emotion class ({only}); nothing to learn")
    adj = propagation_matrix(graph, config.layer, config.edge_weighting)
    train_mask, test_mask = stratified_split(feats.labels, config.train_fraction, config.split_seed)
    params = GcnParams.init(feats.X.shape[1], config.hidden, config.init_seed, config.layer)
    losses = []
    for _ in range(config.epochs):
        loss, grads = loss_and_gradients(params, feats.X, adj, feats.labels, train_mask)
        losses.append(loss)
        params.W0 -= config.lr * grads["W0"]
        params.W1 -= config.lr * grads["W1"]
    pred = predict(params, feats.X, adj)
    report = TrainReport(
        losses=losses,
        train=classification_metrics(feats.labels[train_mask], pred[train_mask]),
        test=classification_metrics(feats.labels[test_mask], pred[test_mask]),
        config=config,
        n_train=int(train_mask.sum()),
        n_test=int(test_mask.sum()),
    )
    return report, params


def predict(params: GcnParams, X: np.ndarray, adj: np.ndarray) -> np.ndarray:
    logits, _ = gcn_forward(params, X, adj)
    return logits.argmax(axis=1)


def evaluate(
    params: GcnParams,
    graph: Graph,
    mask: np.ndarray | None = None,
    edge_weighting: bool = False,
) -> Metrics:
    feats = build_features(graph)
    adj = propagation_matrix(graph, params.layer, edge_weighting)
    pred = predict(params, feats.X, adj)
    if mask is None:
        mask = np.ones(len(feats.labels), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ContractError("evaluation mask selects no nodes")
    return classification_metrics(feats.labels[mask], pred[mask])


def cross_domain_eval(params: GcnParams, graph: Graph, edge_weighting: bool = False) -> Metrics:
    """Score a model fitted elsewhere on every node of ``graph``, without refitting."""
    if params.W0.shape[0] != len(FEATURE_COLUMNS):
        raise ContractError(
            f"model expects {params.W0.shape[0]} features, graph provides {len(FEATURE_COLUMNS)}"
        )
    return evaluate(params, graph, None, edge_weighting)


# ---------------------------------------------------------------------------
# model files


def model_to_dict(params: GcnParams, config: TrainConfig | None = None) -> dict:
    return {
        "tool_version": __version__,
        "layer": params.layer,
        "feature_columns": list(FEATURE_COLUMNS),
        "shapes": {"W0": list(params.W0.shape), "W1": list(params.W1.shape)},
        "W0": params.W0.tolist(),
        "W1": params.W1.tolist(),
        "config": asdict(config) if config else None,
        "seeds": {"split": config.split_seed, "init": config.init_seed} if config else None,
    }


def model_from_dict(doc: dict) -> GcnParams:
    W0 = np.asarray(doc["W0"], dtype=float).reshape(doc["shapes"]["W0"])
    W1 = np.asarray(doc["W1"], dtype=float).reshape(doc["shapes"]["W1"])
    if not (np.isfinite(W0).all() and np.isfinite(W1).all()):
        raise ValueError("model weights contain non-finite values")
    return GcnParams(W0=W0, W1=W1, layer=doc.get("layer", "gcn"))


def save_model(params: GcnParams, path, config: TrainConfig | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(params, config), fh, indent=1)
        fh.write("\n")


def load_model(path) -> GcnParams:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# labelled simulated graph recipe


@dataclass(frozen=True)
class ChainRecipe:
    """Reply chains whose final labels mix tone inheritance with each user's own disposition."""

    num_chains: int = 100
    chain_len: int = 5
    prior: tuple[float, float, float] = (0.5, 0.25, 0.25)
    inherit: float = 0.15
    noise: float = 0.1
    seed: int = 7


def labeled_chain_graph(recipe: ChainRecipe = ChainRecipe()) -> Graph:
    """Disjoint directed reply chains with sentiment-labelled edges.

    Each user's ``initial_emotion`` is drawn from ``prior``. Along a chain the
    final label copies the parent's final label with probability ``inherit``
    (tone carried through the thread), is redrawn from ``prior`` with
    probability ``noise``, and otherwise stays the user's own disposition.
    """
    rng = random.Random(recipe.seed)
    g = Graph(directed=True, provenance="llm-sim", seed=recipe.seed, meta={"recipe": asdict(recipe)})
    labels = list(EMOTIONS)
    for c in range(recipe.num_chains):
        parent_final = None
        for k in range(recipe.chain_len):
            nid = c * recipe.chain_len + k
            initial = rng.choices(labels, weights=recipe.prior)[0]
            credibility = rng.random()
            roll = rng.random()
            if parent_final is None:
                final = initial
            elif roll < recipe.inherit:
                final = parent_final
            elif roll < recipe.inherit + recipe.noise:
                final = rng.choices(labels, weights=recipe.prior)[0]
            else:
                final = initial
            g.add_node(NodeState(
                id=nid,
                emotion=final,
                initial_emotion=initial,
                credibility=credibility,
                susceptibility=0.5,
                post_frequency=1 if k > 0 else 0,
                activation_round=k,
            ))
            if parent_final is not None:
                g.add_edge(Edge(nid - 1, nid, kind="reply", depth=k, emotion=final))
            parent_final = final
    return g


# training settings that go with the default ChainRecipe
CHAIN_RECIPE_TRAIN = TrainConfig(hidden=16, lr=0.2, epochs=500, split_seed=0, init_seed=0)
