"""Command-line entry points.

Exit codes: 0 success, 1 validation/input error, 2 runtime error, 64 usage
error (unknown flags or subcommands).
"""
from __future__ import annotations

import json
import pathlib
import sys

import click

from . import agents as agents_mod
from . import evalharness, graphbuild, localize, oracle, refine, simulator
from .dataset import TelemetryDataset
from .errors import CausalOpsError, ConfigError, ParseError, ValidationError
from .ingest import load_topology

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2
EXIT_USAGE = 64


@click.group()
def cli():
    """Causal-graph construction, validation, and fault localization for
    model-serving telemetry."""


@cli.command()
@click.option("--scenario", "scale", type=click.Choice(["S", "M", "L"]), default="S")
@click.option("--fault", default="none",
              type=click.Choice(list(simulator.FAULTS) + ["suite"]))
@click.option("--magnitude", type=float, default=None)
@click.option("--target", default="")
@click.option("--onset", type=float, default=0.0)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), required=True)
def simulate(scale, fault, magnitude, target, onset, seed, out):
    """Run the model-serving simulator and write dataset/trace/truth/fault
    files."""
    outdir = pathlib.Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    config = simulator.ScenarioConfig.for_scenario(scale, seed=seed)
    if fault == "suite":
        specs = simulator.scenario_suite(scale)
    elif fault == simulator.FAULT_NONE:
        specs = [simulator.FaultSpec()]
    else:
        spec = next(
            (s for s in simulator.scenario_suite(scale)
             if s.fault == fault
             and (magnitude is None or s.magnitude == magnitude)
             and (not target or s.target == target)),
            None,
        )
        if spec is None:
            if magnitude is None:
                raise ConfigError(f"no suite entry matches fault {fault!r}; "
                                  "pass --magnitude/--target for a custom spec")
            spec = simulator.FaultSpec(fault=fault, magnitude=magnitude,
                                       onset_s=onset, target=target)
        specs = [spec]
    for i, spec in enumerate(specs):
        tag = f"{spec.fault}" if len(specs) == 1 else f"{i:02d}_{spec.fault}"
        result = simulator.run(config, fault=spec)
        (outdir / f"dataset_{tag}.csv").write_bytes(result.dataset.to_csv())
        (outdir / "trace.json").write_bytes(result.trace_bytes)
        (outdir / "truth_confounder.json").write_bytes(
            graphbuild.export_confounder(result.ground_truth.confounder_graph))
        (outdir / "truth_causal.json").write_bytes(
            graphbuild.export_causal(result.ground_truth.causal_graph))
        (outdir / f"fault_{tag}.json").write_text(
            json.dumps(result.fault_meta, indent=2, sort_keys=True) + "\n")
        for w in result.warnings:
            click.echo(f"warning: {w}", err=True)
    click.echo(f"wrote {len(specs)} run(s) to {outdir}")


def _make_backend(spec: str):
    if spec == "http":
        import os

        url = os.environ.get("ANSWER_BACKEND_URL")
        if not url:
            raise ConfigError("http backend needs ANSWER_BACKEND_URL")
        return oracle.HttpChatBackend(
            url=url,
            model=os.environ.get("ANSWER_BACKEND_MODEL", "default"),
            token=os.environ.get("ANSWER_BACKEND_TOKEN"),
            temperature=float(os.environ.get("ANSWER_BACKEND_TEMPERATURE", "0")),
        )
    if spec.startswith("oracle:"):
        ref = graphbuild.import_graph(pathlib.Path(spec[7:]).read_text())
        return oracle.GroundTruthBackend(_as_confounder(ref))
    if spec.startswith("noisy:"):
        _, path, p = spec.split(":", 2)
        ref = graphbuild.import_graph(pathlib.Path(path).read_text())
        return oracle.NoisyBackend(_as_confounder(ref), flip_p=float(p))
    raise ConfigError(f"unknown backend {spec!r} (http | oracle:PATH | noisy:PATH:P)")


def _as_confounder(graph):
    if isinstance(graph, graphbuild.ConfounderGraph):
        return graph
    g = graphbuild.ConfounderGraph(nodes=dict(graph.nodes))
    for src, dst in graph.edge_set():
        g.add_edge(src, dst)
    return g


@cli.command("build-graph")
@click.option("--trace", type=click.Path(exists=True), required=True)
@click.option("--metrics", type=click.Path(exists=True), required=True)
@click.option("--common", type=click.Path(exists=True), required=True)
@click.option("--backend", "backend_spec", required=True,
              help="http | oracle:PATH | noisy:PATH:P")
@click.option("--repeats", type=int, default=3, help="max voting rounds per pair")
@click.option("--cache", "cache_path", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), required=True)
def build_graph(trace, metrics, common, backend_spec, repeats, cache_path, out):
    """Build confounder + causal graphs from a system description via
    pairwise causal queries."""
    outdir = pathlib.Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    topology = load_topology(
        pathlib.Path(trace).read_bytes(),
        pathlib.Path(metrics).read_bytes(),
        pathlib.Path(common).read_bytes(),
    )
    agents, _, pairs = agents_mod.expand(topology)
    agents_by_id = {a.component.instance_id: a for a in agents}
    backend = _make_backend(backend_spec)
    cache = oracle.SemanticCache(path=cache_path)
    verdicts = oracle.resolve_all(pairs, backend, agents_by_id,
                                  cache=cache, max_rounds=repeats)
    conf = graphbuild.assemble(verdicts)
    causal = graphbuild.collapse(conf)
    (outdir / "confounder_graph.json").write_bytes(graphbuild.export_confounder(conf))
    (outdir / "causal_graph.json").write_bytes(graphbuild.export_causal(causal))
    suggested = refine.suggested_pairs_from_verdicts(verdicts)
    (outdir / "suggested_pairs.json").write_text(
        json.dumps([list(p) for p in suggested], indent=2) + "\n")
    click.echo(f"nodes={len(causal.nodes)} edges={len(causal.edges)} -> {outdir}")


@cli.command()
@click.option("--graph", "graph_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--alpha", type=float, default=0.05)
@click.option("--decisions", "decisions_spec", default="interactive",
              help="interactive | FILE | truth:PATH")
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), default=None)
def validate(graph_path, data_path, alpha, decisions_spec, seed, out):
    """Statistically screen a causal graph and apply reviewer verdicts."""
    graph = _load_causal(graph_path)
    data = TelemetryDataset.from_csv(pathlib.Path(data_path).read_bytes())
    session = refine.RefinementSession(graph=graph, data=data, alpha=alpha, seed=seed)
    if decisions_spec == "interactive":
        reviewer = _interactive_reviewer
    elif decisions_spec.startswith("truth:"):
        truth = _load_causal(decisions_spec[6:])
        reviewer = refine.truth_reviewer(truth)
    else:
        reviewer = refine.file_reviewer(refine.load_decisions_file(decisions_spec))
    refined = session.run(reviewer)
    text = graphbuild.export_causal(refined)
    if out:
        pathlib.Path(out).write_bytes(text)
    else:
        click.echo(text)
    click.echo(
        f"phase={session.phase} accepted={session.accepted}/{session.proposed}",
        err=True,
    )


def _interactive_reviewer(batch):
    verdicts = []
    for c in batch:
        click.echo(f"[{c.kind}] {c.edge[0]} -> {c.edge[1]}  evidence={c.evidence}"
                   + ("  (changes connectivity)" if c.connectivity_changing else ""))
        ans = click.prompt("accept? [y/N]", default="n", show_default=False)
        decision = refine.ACCEPT if ans.strip().lower().startswith("y") else refine.REJECT
        verdicts.append(refine.Verdict(c, decision, "interactive"))
    return verdicts


def _load_causal(path) -> graphbuild.CausalGraph:
    graph = graphbuild.import_graph(pathlib.Path(path).read_text())
    if isinstance(graph, graphbuild.ConfounderGraph):
        return graphbuild.collapse(graph)
    return graph


@cli.command("localize")
@click.option("--graph", "graph_path", type=click.Path(exists=True), required=True)
@click.option("--normal", type=click.Path(exists=True), required=True)
@click.option("--anomalous", type=click.Path(exists=True), required=True)
@click.option("--symptom", required=True)
@click.option("--topk", type=int, default=3)
@click.option("--seed", type=int, default=0)
@click.option("--permutations", type=int, default=localize.SAMPLED_PERMUTATIONS)
def localize_cmd(graph_path, normal, anomalous, symptom, topk, seed, permutations):
    """Rank root-cause candidates for a symptom's distribution shift."""
    graph = _load_causal(graph_path)
    normal_ds = TelemetryDataset.from_csv(pathlib.Path(normal).read_bytes())
    anomalous_ds = TelemetryDataset.from_csv(pathlib.Path(anomalous).read_bytes())
    report = localize.distribution_change(
        graph, normal_ds, anomalous_ds, symptom,
        permutations=permutations, seed=seed, top_k=topk,
    )
    click.echo(json.dumps(report.to_obj(), indent=2, sort_keys=True))


@cli.command()
@click.option("--pred", type=click.Path(exists=True), required=True)
@click.option("--truth", type=click.Path(exists=True), required=True)
@click.option("--skeleton", is_flag=True, default=False)
def evaluate(pred, truth, skeleton):
    """Directed-edge F1 of a predicted graph against a reference graph."""
    score = evalharness.edge_f1(_load_causal(pred), _load_causal(truth), skeleton)
    click.echo(json.dumps(score.to_obj(), indent=2, sort_keys=True))


@cli.command("baseline-pc")
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--alpha", type=float, default=0.05)
@click.option("--out", type=click.Path(), default=None)
def baseline_pc(data_path, alpha, out):
    """Constraint-based (PC) causal discovery baseline from data alone."""
    from . import stats

    data = TelemetryDataset.from_csv(pathlib.Path(data_path).read_bytes())
    graph = stats.pc_baseline(data, alpha=alpha)
    text = graphbuild.export_causal(graph)
    if out:
        pathlib.Path(out).write_bytes(text)
    else:
        click.echo(text)


@cli.command("dump-pairs")
@click.option("--trace", type=click.Path(exists=True), required=True)
@click.option("--metrics", type=click.Path(exists=True), required=True)
@click.option("--common", type=click.Path(exists=True), required=True)
def dump_pairs(trace, metrics, common):
    """Emit candidate metric pairs as JSON lines for audit."""
    topology = load_topology(
        pathlib.Path(trace).read_bytes(),
        pathlib.Path(metrics).read_bytes(),
        pathlib.Path(common).read_bytes(),
    )
    _, _, pairs = agents_mod.expand(topology)
    for p in pairs:
        click.echo(json.dumps({
            "a": p.a.id, "b": p.b.id,
            "locality": p.locality,
            "interaction": p.interaction.kind if p.interaction else None,
            "perspective": p.perspective,
        }, sort_keys=True))


@cli.command()
@click.option("--port", type=int, default=8000)
@click.option("--host", default="127.0.0.1")
@click.option("--state-dir", type=click.Path(), default=None)
@click.option("--static-dir", type=click.Path(), default=None)
def serve(port, host, state_dir, static_dir):
    """Run the HTTP review service."""
    import uvicorn

    from .service import create_app

    app = create_app(state_dir=state_dir, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except click.exceptions.NoSuchOption as e:
        click.echo(e.format_message(), err=True)
        click.echo(cli.get_help(click.Context(cli)), err=True)
        return EXIT_USAGE
    except click.UsageError as e:
        click.echo(e.format_message(), err=True)
        return EXIT_USAGE
    except click.exceptions.Abort:
        return EXIT_RUNTIME
    except click.exceptions.Exit as e:
        return int(e.exit_code)
    except (ParseError, ValidationError, ConfigError) as e:
        click.echo(f"error: {e}", err=True)
        return EXIT_INVALID
    except (CausalOpsError, OSError) as e:
        click.echo(f"error: {e}", err=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
