"""Command-line entry point.

Subcommands: generate (SBM -> graph files), train (graph -> model file),
attack (single-target probe, LPS to stdout), evaluate (config -> report CSV)
and sweep (one report per privacy budget).  Every stochastic component hangs
off --seed.  Exit codes: 0 success, 1 usage, 2 data, 3 numeric failure.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from .attacks import ATTACK_METHODS, AttackSpec, compute_lps_table, select_predictions
from .defenses import DEFENSE_KINDS, DefenseSpec, apply_defense
from .distances import DistanceMetric
from .evaluation import (ConfigError, ExperimentError, build_candidate_set,
                         config_from_file, estimate_degree, parse_config_text,
                         report_to_csv, run_experiment, sweep_epsilons,
                         write_report_csv)
from .graph import (GraphFormatError, GraphValidationError, generate_sbm,
                    load_graph, write_graph)
from .models import (ARCHITECTURES, ModelConfig, ModelFormatError, NumericError,
                     read_model, write_model)
from .service import ServiceConfig, VictimService
from .training import TrainConfig, TrainingError, train

_USAGE_ERRORS = (ConfigError, FileNotFoundError, IsADirectoryError, ValueError)
_DATA_ERRORS = (GraphFormatError, GraphValidationError, ModelFormatError)
_NUMERIC_ERRORS = (NumericError, TrainingError, FloatingPointError)


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ExperimentError):
        return _exit_code(exc.cause)
    if isinstance(exc, _DATA_ERRORS):
        return 2
    if isinstance(exc, _NUMERIC_ERRORS):
        return 3
    if isinstance(exc, _USAGE_ERRORS):
        return 1
    return 1


@click.group(context_settings={"help_option_names": ["--help"]})
def cli():
    """Edge-privacy attack laboratory for inductive GNNs."""


def _existing(path: str) -> str:
    if not Path(path).is_file():
        raise ConfigError(f"missing file: {path}")
    return path


# ---------------------------------------------------------------------------

@cli.command()
@click.option("--blocks", type=int, required=True)
@click.option("--nodes-per-block", type=int, required=True)
@click.option("--p-in", type=float, required=True)
@click.option("--p-out", type=float, required=True)
@click.option("--feature-dim", type=int, required=True)
@click.option("--feature-noise", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--edges", "edges_path", type=str, required=True, help="output edge file")
@click.option("--features", "features_path", type=str, required=True, help="output feature CSV")
@click.option("--labels", "labels_path", type=str, default=None, help="output label CSV")
def generate(blocks, nodes_per_block, p_in, p_out, feature_dim, feature_noise,
             seed, edges_path, features_path, labels_path):
    """Generate a stochastic-block-model graph and write it to files."""
    graph = generate_sbm(blocks, nodes_per_block, p_in, p_out, feature_dim,
                         feature_noise, seed=seed)
    write_graph(graph, edges_path, features_path, labels_path)
    click.echo(f"wrote {graph.num_nodes} nodes, {graph.num_edges} edges", err=True)


@cli.command("train")
@click.option("--edges", "edges_path", type=str, required=True)
@click.option("--features", "features_path", type=str, required=True)
@click.option("--labels", "labels_path", type=str, required=True)
@click.option("--arch", type=click.Choice(ARCHITECTURES), default="gcn", show_default=True)
@click.option("--hidden-dim", type=int, default=32, show_default=True)
@click.option("--depth", type=int, default=4, show_default=True)
@click.option("--epochs", type=int, default=200, show_default=True)
@click.option("--learning-rate", type=float, default=0.01, show_default=True)
@click.option("--optimizer", type=click.Choice(["adam", "sgd"]), default="adam", show_default=True)
@click.option("--weight-init-scale", type=float, default=1.0, show_default=True)
@click.option("--defense", type=click.Choice(DEFENSE_KINDS), default="none", show_default=True)
@click.option("--defense-epsilon", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--model-out", type=str, required=True)
@click.option("--loss-curve", type=str, default=None, help="optional loss-curve CSV")
def train_cmd(edges_path, features_path, labels_path, arch, hidden_dim, depth,
              epochs, learning_rate, optimizer, weight_init_scale, defense,
              defense_epsilon, seed, model_out, loss_curve):
    """Train a GNN (on the defended graph, if a defense is chosen)."""
    for p in (edges_path, features_path, labels_path):
        _existing(p)
    graph = load_graph(edges_path, features_path, labels_path)
    spec = DefenseSpec(defense, defense_epsilon, seed=seed) if defense != "none" \
        else DefenseSpec()
    graph = apply_defense(graph, spec)
    model = train(
        ModelConfig(arch=arch, hidden_dim=hidden_dim, depth=depth),
        graph,
        TrainConfig(epochs=epochs, learning_rate=learning_rate, optimizer=optimizer,
                    seed=seed, weight_init_scale=weight_init_scale),
        curve_path=loss_curve,
    )
    write_model(model, model_out)
    click.echo(f"wrote model to {model_out}", err=True)


@cli.command("attack")
@click.option("--model", "model_path", type=str, required=True)
@click.option("--edges", "edges_path", type=str, required=True)
@click.option("--features", "features_path", type=str, required=True)
@click.option("--labels", "labels_path", type=str, default=None)
@click.option("--method", type=click.Choice(ATTACK_METHODS), required=True)
@click.option("--metric", type=click.Choice([m.value for m in DistanceMetric]),
              default=None, help="distance metric for sim/sim2/inf2")
@click.option("--alpha", type=float, default=1e-4, show_default=True)
@click.option("--aux-strategy", type=click.Choice(
    ["random", "duplication", "mean", "dataset_typical", "median"]),
    default="random", show_default=True)
@click.option("--target", type=int, required=True)
@click.option("--d-hat", type=int, default=None,
              help="prediction budget; defaults to the target's true degree")
@click.option("--mask-top-k", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--lps-dump", type=str, default=None, help="optional LPS dump CSV")
def attack_cmd(model_path, edges_path, features_path, labels_path, method, metric,
               alpha, aux_strategy, target, d_hat, mask_top_k, seed, lps_dump):
    """Attack one target; prints per-candidate LPS and predictions."""
    _existing(model_path)
    _existing(edges_path)
    _existing(features_path)
    model = read_model(model_path)
    graph = load_graph(edges_path, features_path, labels_path)
    if not 0 <= target < graph.num_nodes:
        raise ConfigError(f"target {target} out of range [0, {graph.num_nodes})")
    positives, negatives = build_candidate_set(graph, target)
    candidates = sorted(positives | negatives)
    if not candidates:
        raise ConfigError(f"target {target} has no 1-hop or 2-hop candidates")
    spec = AttackSpec(method=method, metric=metric, alpha=alpha,
                      aux_strategy=aux_strategy)
    service = VictimService(model, graph, ServiceConfig(mask_top_k=mask_top_k))
    rng = np.random.default_rng(seed)
    table = compute_lps_table(service, target, candidates, spec, rng)
    budget = graph.degree(target) if d_hat is None else d_hat
    predicted = select_predictions(table.scores, budget,
                                   exclude_zero=method != "sim2")
    click.echo("candidate,lps,predicted,is_neighbor")
    for c in candidates:
        click.echo(f"{c},{table.scores[c]!r},{int(predicted[c])},{int(c in positives)}")
    if lps_dump:
        from .attacks import write_lps_dump
        write_lps_dump([table], lps_dump)


def _overrides(seed, jobs, num_targets, arch, timings, set_kv):
    overrides = {}
    if set_kv:
        overrides.update(parse_config_text("\n".join(set_kv), source="--set"))
    for key, value in (("seed", seed), ("jobs", jobs), ("num_targets", num_targets),
                       ("arch", arch)):
        if value is not None:
            overrides[key] = value
    if timings:
        overrides["timings"] = True
    return overrides


@cli.command("evaluate")
@click.option("--config", "config_path", type=str, required=True)
@click.option("--report", "report_path", type=str, default=None,
              help="report CSV path (stdout when omitted)")
@click.option("--seed", type=int, default=None)
@click.option("--jobs", type=int, default=None, help="target-level parallelism")
@click.option("--num-targets", type=int, default=None)
@click.option("--arch", type=click.Choice(ARCHITECTURES), default=None)
@click.option("--timings", is_flag=True,
              help="record wall times (breaks byte-for-byte reproducibility)")
@click.option("--set", "set_kv", multiple=True, metavar="KEY=VALUE",
              help="override any config key (repeatable)")
def evaluate_cmd(config_path, report_path, seed, jobs, num_targets, arch,
                 timings, set_kv):
    """Run the full evaluation protocol from a config file."""
    _existing(config_path)
    cfg = config_from_file(config_path,
                           _overrides(seed, jobs, num_targets, arch, timings, set_kv))
    report = run_experiment(cfg)
    for note in report.notes:
        click.echo(f"note: {note}", err=True)
    if report_path:
        write_report_csv(report, report_path)
        click.echo(f"wrote report to {report_path}", err=True)
    else:
        click.echo(report_to_csv(report), nl=False)


@cli.command("sweep")
@click.option("--config", "config_path", type=str, required=True)
@click.option("--epsilons", type=str, required=True,
              help="comma-separated privacy budgets, e.g. 2,4,6,8,10")
@click.option("--report-dir", type=str, required=True)
@click.option("--seed", type=int, default=None)
@click.option("--jobs", type=int, default=None)
@click.option("--num-targets", type=int, default=None)
@click.option("--arch", type=click.Choice(ARCHITECTURES), default=None)
@click.option("--timings", is_flag=True)
@click.option("--set", "set_kv", multiple=True, metavar="KEY=VALUE")
def sweep_cmd(config_path, epsilons, report_dir, seed, jobs, num_targets, arch,
              timings, set_kv):
    """Evaluate once per privacy budget and emit plot-ready CSVs."""
    _existing(config_path)
    try:
        eps_list = [float(x) for x in epsilons.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--epsilons must be a comma list of numbers, got {epsilons!r}")
    if not eps_list:
        raise ConfigError("--epsilons is empty")
    cfg = config_from_file(config_path,
                           _overrides(seed, jobs, num_targets, arch, timings, set_kv))
    out_dir = Path(report_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = ["epsilon,attack,arch,d_hat_mode,degree_range,precision,recall,f1,auc"]
    for eps, report in sweep_epsilons(cfg, eps_list):
        path = out_dir / f"report_eps{eps:g}.csv"
        write_report_csv(report, path)
        click.echo(f"wrote {path}", err=True)
        for row in report.rows:
            summary.append(
                f"{eps:g},{row.attack},{row.arch},{row.d_hat_mode},{row.degree_range},"
                f"{row.precision:.6f},{row.recall:.6f},{row.f1:.6f},{row.auc:.6f}"
            )
    summary_path = out_dir / "sweep_summary.csv"
    summary_path.write_text("\n".join(summary) + "\n")
    click.echo(f"wrote {summary_path}", err=True)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except ExperimentError as exc:
        click.echo(f"error: {exc}", err=True)
        return _exit_code(exc)
    except (*_DATA_ERRORS, *_NUMERIC_ERRORS, *_USAGE_ERRORS) as exc:
        click.echo(f"error: {exc}", err=True)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
