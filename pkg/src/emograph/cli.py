"""``emograph`` command line: one subcommand per pipeline stage, files in between."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .contagion import (
    POSITIVITY_SEED,
    positivity_fixture_graph,
    positivity_provider,
    positivity_share_by_round,
    run_llm_diffusion,
    sentiment_transition_matrix,
)
from .graph import (
    ContractError,
    Graph,
    GraphParseError,
    generate_chain_graphs,
    generate_er_graph,
    init_node_attributes,
    load_graph,
    serialize_graph,
    structural_summary,
    to_dot,
    top_k_subgraph,
)
from .ingest import RecordParseError, build_real_graph, parse_interaction_records
from .learn import (
    ChainRecipe,
    DegenerateTaskError,
    TrainConfig,
    cross_domain_eval,
    labeled_chain_graph,
    load_model,
    save_model,
    train,
)
from .propagation import (
    DEFAULT_MAX_ROUNDS,
    STRATEGIES,
    BatchConfig,
    StrategyParams,
    batch_experiment,
    run_simulation,
)
from .providers import HttpChatProvider, MockProvider, ProviderConfigError
from .seeding import derive_seed

log = logging.getLogger("emograph")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_CONFIG = 4
EXIT_ASSERTION = 5
EXIT_DEGENERATE = 6

# options naming files; echoed as content digests, not paths, so reruns elsewhere match
PATH_OPTIONS = {
    "out", "out_dir", "report", "dot", "graph", "graph_a", "graph_b", "input",
    "script", "model", "out_model", "table", "subgraph_out", "config",
}


class ConfigError(Exception):
    pass


class AssertionFailed(Exception):
    pass


def _unit(text: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not 0.0 <= val <= 1.0:
        raise argparse.ArgumentTypeError(f"{val} is outside [0, 1]")
    return val


def _positive_int(text: str) -> int:
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if val < 1:
        raise argparse.ArgumentTypeError(f"{val} must be >= 1")
    return val


def _dist(text: str) -> dict[str, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three weights: positive,neutral,negative")
    try:
        w = [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad weights {text!r}") from None
    if min(w) < 0 or sum(w) <= 0:
        raise argparse.ArgumentTypeError("weights must be nonnegative with a positive sum")
    return dict(zip(("positive", "neutral", "negative"), w))


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return "sha256:" + h.hexdigest()


def _echo(args: argparse.Namespace) -> dict:
    """Run configuration for provenance: flag values, with input files replaced by digests."""
    out = {"command": args.command, "tool_version": __version__}
    for key, val in sorted(vars(args).items()):
        if key in ("func", "command", "verbose") or val is None:
            continue
        if key in PATH_OPTIONS:
            p = Path(val)
            if key in ("graph", "graph_a", "graph_b", "input", "script", "model") and p.is_file():
                out[key] = _digest(p)
            continue
        out[key] = val
    return out


def _write(path, data: bytes | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    path.write_bytes(data)


def _write_json(path, doc) -> None:
    _write(path, json.dumps(doc, indent=1, ensure_ascii=False) + "\n")


def _emit_graph(graph: Graph, args: argparse.Namespace, path) -> None:
    graph.meta = {**graph.meta, "generated_by": _echo(args)}
    _write(path, serialize_graph(graph))
    if getattr(args, "dot", None):
        _write(args.dot, to_dot(graph))


def _resolve_node(graph: Graph, text: str):
    if text in graph.nodes:
        return text
    try:
        as_int = int(text)
    except ValueError:
        as_int = None
    if as_int is not None and as_int in graph.nodes:
        return as_int
    raise ConfigError(f"seed node {text!r} is not in the graph")


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_graph(args) -> int:
    if args.chains is not None:
        if args.labeled:
            graph = labeled_chain_graph(ChainRecipe(num_chains=args.chains, chain_len=args.chain_len, seed=args.seed))
        else:
            graph = generate_chain_graphs(args.chains, args.chain_len, args.seed)
            graph = init_node_attributes(graph, args.emotion_dist, derive_seed(args.seed, "attrs"))
    else:
        graph = generate_er_graph(args.nodes, args.edge_prob, args.seed)
        graph = init_node_attributes(graph, args.emotion_dist, derive_seed(args.seed, "attrs"))
    _emit_graph(graph, args, args.out)
    print(f"wrote {graph.node_count} nodes / {graph.edge_count} edges to {args.out}")
    return EXIT_OK


def _strategy_params(args) -> StrategyParams:
    kw = {"strategy": args.strategy}
    for name in ("p_fixed", "base_p", "neutral_intensity"):
        if getattr(args, name, None) is not None:
            kw[name] = getattr(args, name)
    return StrategyParams(**kw)


def cmd_simulate(args) -> int:
    graph = load_graph(args.graph)
    seed_node = _resolve_node(graph, args.seed_node)
    trace = run_simulation(graph, _strategy_params(args), seed_node, args.rounds, args.rng_seed)
    text = trace.to_jsonl()
    # config echo rides on the terminal summary record
    lines = text.splitlines()
    summary = json.loads(lines[-1])
    summary["config"] = _echo(args)
    lines[-1] = json.dumps(summary)
    _write(args.out, "\n".join(lines) + "\n")
    r = trace.reward
    print(f"spread {trace.spread}, reward {r.total:.3f} (spread {r.r_spread:.3f}, polar {r.r_polar:.3f}, cred {r.r_cred:.3f})")
    return EXIT_OK


def cmd_batch(args) -> int:
    strategies = {}
    for name in STRATEGIES:
        kw = {"strategy": name}
        if name == "random" and args.p_fixed is not None:
            kw["p_fixed"] = args.p_fixed
        if name == "eic" and args.base_p is not None:
            kw["base_p"] = args.base_p
        strategies[name] = StrategyParams(**kw)
    config = BatchConfig(
        master_seed=args.seed,
        n_nodes=args.nodes,
        p_edge=args.edge_prob,
        max_rounds=args.rounds,
        strategies=strategies,
    )
    summary = batch_experiment(config, args.runs)
    doc = summary.to_dict()
    doc["echo"] = _echo(args)
    table = summary.to_table()
    if args.out:
        _write_json(args.out, doc)
        _write(Path(args.table) if args.table else Path(args.out).with_suffix(".txt"), table)
    sys.stdout.write(table)
    if args.assert_ordering:
        zero_min = all(s.min_spread == 0 for s in summary.per_strategy.values())
        if not summary.ordering_holds():
            raise AssertionFailed("mean spread/reward ordering Random > Theory > eIC does not hold")
        if not zero_min:
            raise AssertionFailed("some strategy never failed to spread (min spread > 0)")
        print("ordering Random > Theory > eIC holds for spread and reward; min spread 0 for all")
    return EXIT_OK


def cmd_llm_diffuse(args) -> int:
    if args.provider == "http":
        try:
            provider = HttpChatProvider.from_env(model=args.model)
        except ProviderConfigError as exc:
            raise ConfigError(str(exc)) from None
    else:
        provider = MockProvider.from_file(args.script) if args.script else positivity_provider()
    graph = load_graph(args.graph) if args.graph else positivity_fixture_graph()
    seed_node = _resolve_node(graph, args.seed_node) if args.seed_node is not None else POSITIVITY_SEED
    if seed_node not in graph.nodes:
        raise ConfigError(f"seed node {seed_node!r} is not in the graph")
    trace = run_llm_diffusion(
        graph, seed_node, args.rounds, provider,
        tone_policy=args.tone_policy, rng_seed=args.rng_seed,
        temperature=args.temperature, max_tokens=args.max_tokens, max_in_flight=args.max_in_flight,
    )
    trace.config = {**trace.config, "echo": _echo(args)}
    out = Path(args.out_dir)
    _write(out / "trace.jsonl", trace.to_jsonl())
    _emit_graph(trace.graph, args, out / "graph.json")
    analysis = {"tool_version": __version__, "config": _echo(args)}
    if trace.records:
        shares = positivity_share_by_round(trace)
        analysis["shares_by_round"] = {str(r): v for r, v in shares.items()}
        analysis["transition"] = sentiment_transition_matrix(trace).to_dict()
        for r, v in shares.items():
            print(f"round {r}: " + ", ".join(f"{k} {v[k]:.3f}" for k in v))
    analysis["structure"] = structural_summary(trace.graph)
    analysis["errors"] = len(trace.errors)
    analysis["diagnostics"] = trace.diagnostics
    _write_json(out / "analysis.json", analysis)
    return EXIT_OK


def cmd_ingest(args) -> int:
    records, report = parse_interaction_records(args.input, args.format)
    graph = build_real_graph(records, trust_external=args.trust_external)
    _emit_graph(graph, args, args.out)
    rep = {"tool_version": __version__, "config": _echo(args), "accepted": len(records), **report.to_dict()}
    if args.report:
        _write_json(args.report, rep)
    print(f"accepted {len(records)} records, rejected {report.total} {dict(sorted(report.counts.items()))}; "
          f"{graph.node_count} nodes / {graph.edge_count} edges")
    return EXIT_OK


def cmd_metrics(args) -> int:
    graph = load_graph(args.graph)
    doc = {"tool_version": __version__, "config": _echo(args), **structural_summary(graph)}
    if args.out:
        _write_json(args.out, doc)
    for k in ("node_count", "edge_count", "average_degree", "max_degree", "clustering", "reciprocity", "components"):
        print(f"{k:>15}: {doc[k]}")
    return EXIT_OK


COMPARE_ROWS = ("node_count", "edge_count", "average_degree", "max_degree", "clustering", "reciprocity", "components")


def _fmt(v) -> str:
    if v is None:
        return "-"
    return f"{v:.4f}" if isinstance(v, float) else str(v)


def cmd_compare(args) -> int:
    a, b = load_graph(args.graph_a), load_graph(args.graph_b)
    ma, mb = structural_summary(a), structural_summary(b)
    sa, sb = top_k_subgraph(a, args.top_k), top_k_subgraph(b, args.top_k)
    flags = []
    for key in ("clustering", "reciprocity"):
        va, vb = ma[key] or 0.0, mb[key] or 0.0
        if (va == 0) != (vb == 0):
            flags.append(f"{key}: {_fmt(va)} vs {_fmt(vb)}")
    doc = {
        "tool_version": __version__,
        "config": _echo(args),
        "a": ma,
        "b": mb,
        "top_k": {"k": args.top_k, "a": structural_summary(sa), "b": structural_summary(sb)},
        "flags": flags,
    }
    if args.out:
        _write_json(args.out, doc)
    if args.subgraph_out:
        _emit_graph(sb, args, args.subgraph_out)
    print(f"{'metric':>15}  {'A':>10}  {'B':>10}")
    for key in COMPARE_ROWS:
        print(f"{key:>15}  {_fmt(ma[key]):>10}  {_fmt(mb[key]):>10}")
    for f in flags:
        print(f"structural contrast -> {f}")
    return EXIT_OK


def cmd_train(args) -> int:
    graph = load_graph(args.graph)
    config = TrainConfig(
        hidden=args.hidden, lr=args.lr, epochs=args.epochs, split_seed=args.split_seed,
        init_seed=args.init_seed, train_fraction=args.train_fraction, layer=args.layer,
        edge_weighting=args.edge_weighting,
    )
    report, params = train(graph, config)
    if args.out_model:
        save_model(params, args.out_model, config)
    doc = report.to_dict()
    doc["echo"] = _echo(args)
    if args.report:
        _write_json(args.report, doc)
        _write(Path(args.report).with_suffix(".confusion.txt"), report.test.confusion_text())
    t = report.test
    print(f"test accuracy {t.accuracy:.3f}, macro-F1 {t.macro_f1:.3f}, "
          f"F1 pos/neu/neg {t.f1[0]:.3f}/{t.f1[1]:.3f}/{t.f1[2]:.3f}")
    sys.stdout.write(t.confusion_text())
    return EXIT_OK


def cmd_cross_eval(args) -> int:
    params = load_model(args.model)
    graph = load_graph(args.graph)
    metrics = cross_domain_eval(params, graph, args.edge_weighting)
    doc = {"tool_version": __version__, "config": _echo(args), "metrics": metrics.to_dict()}
    if args.out:
        _write_json(args.out, doc)
    print(f"accuracy {metrics.accuracy:.3f}, macro-F1 {metrics.macro_f1:.3f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emograph", description=__doc__)
    parser.add_argument("--version", action="version", version=f"emograph {__version__}")
    parser.add_argument("--config", help="JSON file of option defaults; flags override it")
    parser.add_argument("-v", "--verbose", action="store_true", help="log one line per round")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-graph", help="synthetic ER graph or disjoint reply chains")
    p.add_argument("--nodes", type=_positive_int, default=10)
    p.add_argument("--edge-prob", type=_unit, default=0.5)
    p.add_argument("--chains", type=_positive_int)
    p.add_argument("--chain-len", type=int, default=4)
    p.add_argument("--labeled", action="store_true", help="chains with sentiment-labelled final states")
    p.add_argument("--emotion-dist", type=_dist, default=_dist("1,1,1"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--dot")
    p.set_defaults(func=cmd_gen_graph)

    p = sub.add_parser("simulate", help="one propagation run")
    p.add_argument("--graph", required=True)
    p.add_argument("--strategy", choices=STRATEGIES, required=True)
    p.add_argument("--seed-node", default="0")
    p.add_argument("--rounds", type=_positive_int, default=DEFAULT_MAX_ROUNDS)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--p-fixed", type=_unit)
    p.add_argument("--base-p", type=_unit)
    p.add_argument("--neutral-intensity", type=_unit)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("batch", help="repeated runs of every strategy, summarised as a strategy table")
    p.add_argument("--runs", type=_positive_int, default=50)
    p.add_argument("--seed", type=int, default=2025, help="master seed")
    p.add_argument("--nodes", type=_positive_int, default=10)
    p.add_argument("--edge-prob", type=_unit, default=0.5)
    p.add_argument("--rounds", type=_positive_int, default=DEFAULT_MAX_ROUNDS)
    p.add_argument("--p-fixed", type=_unit)
    p.add_argument("--base-p", type=_unit)
    p.add_argument("--out")
    p.add_argument("--table")
    p.add_argument("--assert-ordering", action="store_true")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("llm-diffuse", help="reply cascade through a text generator")
    p.add_argument("--provider", choices=("mock", "http"), default="mock")
    p.add_argument("--script", help="mock reply script (JSONL); default: bundled neutral-seed scenario")
    p.add_argument("--graph", help="default: bundled 31-neighbor neutral-seed graph")
    p.add_argument("--seed-node")
    p.add_argument("--rounds", type=_positive_int, default=2)
    p.add_argument("--tone-policy", default="sender")
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--max-tokens", type=_positive_int, default=128)
    p.add_argument("--max-in-flight", type=_positive_int, default=1)
    p.add_argument("--model")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--dot")
    p.set_defaults(func=cmd_llm_diffuse)

    p = sub.add_parser("ingest", help="build the real reply graph from records")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("csv", "jsonl"))
    p.add_argument("--trust-external", action="store_true", help="use label columns present in the file")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--dot")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("metrics", help="structural metrics of one graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("compare", help="side-by-side metrics of two graphs")
    p.add_argument("--graph-a", required=True)
    p.add_argument("--graph-b", required=True)
    p.add_argument("--top-k", type=_positive_int, default=50)
    p.add_argument("--out")
    p.add_argument("--subgraph-out", help="write graph B's top-k subgraph here")
    p.add_argument("--dot")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("train", help="fit the GCN on a labelled graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--hidden", type=_positive_int, default=16)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--init-seed", type=int, default=0)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--layer", choices=("gcn", "mean"), default="gcn")
    p.add_argument("--edge-weighting", action="store_true")
    p.add_argument("--out-model")
    p.add_argument("--report")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cross-eval", help="score a saved model on another graph")
    p.add_argument("--model", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--edge-weighting", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cross_eval)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        doc = json.loads(Path(known.config).read_text("utf-8"))
    except OSError as exc:
        raise FileNotFoundError(f"{known.config}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{known.config}: invalid JSON ({exc})") from None
    command = next((a for a in rest if not a.startswith("-")), None)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    if command not in subparsers.choices:
        return
    section = doc.get(command, doc)
    sp = subparsers.choices[command]
    dests = {a.dest for a in sp._actions}
    values = {k.replace("-", "_"): v for k, v in section.items() if not isinstance(v, dict)}
    unknown = sorted(set(values) - dests)
    if unknown:
        raise ConfigError(f"{known.config}: unknown option(s) for {command}: {', '.join(unknown)}")
    sp.set_defaults(**values)
    # config-supplied values satisfy required flags
    for action in sp._actions:
        if action.dest in values:
            action.required = False


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"emograph: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"emograph: {exc}", file=sys.stderr)
        return EXIT_IO
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"emograph: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssertionFailed as exc:
        print(f"emograph: assertion failed: {exc}", file=sys.stderr)
        return EXIT_ASSERTION
    except DegenerateTaskError as exc:
        print(f"emograph: refusing to train: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (OSError, GraphParseError, RecordParseError) as exc:
        print(f"emograph: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, ContractError) as exc:
        print(f"emograph: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
