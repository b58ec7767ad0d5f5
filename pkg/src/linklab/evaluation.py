"""Evaluation protocol: targets, candidate sets, metrics and orchestration.

run_experiment wires the full pipeline: load/generate a graph, apply the
defense once, train, serve, pick targets by degree range, score every
(attack, candidate) pair exactly once, then re-threshold per degree-estimate
mode.  Ground truth (candidate sets, true degrees) always comes from the
original graph; the defended graph is only what the model is trained on and
serves from, so defense experiments measure leakage about the real edges.

Targets are independent work units: with jobs > 1 they run on worker
threads, each with its own serving-graph copy, and results are reduced in
sorted target order so reports are identical regardless of scheduling.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .attacks import (ATTACK_METHODS, AttackSpec, LpsTable, aux_features,  # noqa: F401
                      compute_lps_table, select_predictions)
from .baselines import lsa0_scores, lta_scores
from .defenses import DEFENSE_KINDS, DefenseSpec, apply_defense
from .graph import Graph, generate_sbm, k_hop_neighbors, load_graph
from .models import ARCHITECTURES, ModelConfig
from .service import ServiceConfig, VictimService
from .training import TrainConfig, train

DEGREE_RANGES = ("low", "unconstrained", "high")
D_HAT_MODES = ("floor08", "exact", "ceil12")
SCORERS = ATTACK_METHODS + ("lsa0", "lta")


class ConfigError(ValueError):
    """Bad experiment configuration (schema violation, unknown enum)."""


class ExperimentError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


# ---------------------------------------------------------------------------
# protocol operations
# ---------------------------------------------------------------------------

def select_targets(graph: Graph, n: int, degree_range: str,
                   thresholds: tuple[int, int], seed: int = 0) -> list[int]:
    """Uniform sample (without replacement) of nodes in the degree range.

    unconstrained: degree > 3; low: 3 < degree <= low_max;
    high: degree >= high_min.  Returns all qualifying nodes (with a warning)
    when fewer than n qualify.
    """
    if n < 1:
        raise ValueError("num_targets must be >= 1")
    if degree_range not in DEGREE_RANGES:
        raise ValueError(f"unknown degree range {degree_range!r}; valid: {DEGREE_RANGES}")
    low_max, high_min = thresholds
    if low_max >= high_min:
        raise ValueError("degree thresholds require low_max < high_min")
    degs = graph.degrees()
    if degree_range == "low":
        pool = np.flatnonzero((degs > 3) & (degs <= low_max))
    elif degree_range == "high":
        pool = np.flatnonzero(degs >= high_min)
    else:
        pool = np.flatnonzero(degs > 3)
    if pool.size <= n:
        if pool.size < n:
            warnings.warn(
                f"only {pool.size} nodes match degree range {degree_range!r}; "
                f"requested {n}"
            )
        return sorted(int(v) for v in pool)
    rng = np.random.default_rng(seed)
    picked = rng.choice(pool, size=n, replace=False)
    return sorted(int(v) for v in picked)


def build_candidate_set(graph: Graph, t: int) -> tuple[set, set]:
    """(positives = 1-hop neighbors, negatives = exact-2-hop nodes) of t."""
    positives = set(int(v) for v in graph.neighbors(t))
    negatives = k_hop_neighbors(graph, t, 2)
    return positives, negatives


def estimate_degree(d: int, mode: str) -> int:
    """floor(0.8 d), d, or ceil(1.2 d), computed in exact integer arithmetic."""
    if d < 0:
        raise ValueError("degree must be >= 0")
    if mode == "floor08":
        return (4 * d) // 5
    if mode == "exact":
        return d
    if mode == "ceil12":
        return (6 * d + 4) // 5
    raise ValueError(f"unknown d_hat mode {mode!r}; valid: {D_HAT_MODES}")


@dataclass(frozen=True)
class PrfResult:
    precision: float
    recall: float
    f1: float
    degenerate_precision: bool = False


def metrics(predicted, truth) -> PrfResult:
    """Precision/recall/F1 with the empty-prediction convention.

    With zero predicted positives, precision is reported as 1.0 and the
    result is flagged degenerate so reports stay auditable.
    """
    predicted = np.asarray(predicted, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if predicted.shape != truth.shape:
        raise ValueError("predicted and truth must have equal length")
    tp = int(np.sum(predicted & truth))
    fp = int(np.sum(predicted & ~truth))
    fn = int(np.sum(~predicted & truth))
    degenerate = (tp + fp) == 0
    precision = 1.0 if degenerate else tp / (tp + fp)
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    f1 = 0.0 if (precision + recall) == 0 else 2 * precision * recall / (precision + recall)
    return PrfResult(precision, recall, f1, degenerate)


def auc(scores, truth) -> float:
    """Probability a random positive outscores a random negative, ties as 1/2.

    Computed via average ranks (Mann-Whitney U).  Raises when either class
    is empty.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=bool)
    if scores.shape != truth.shape:
        raise ValueError("scores and truth must have equal length")
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: one class is empty")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank
        i = j + 1
    u = ranks[truth].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


# ---------------------------------------------------------------------------
# experiment configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    # graph source: file triple takes precedence over SBM parameters
    edges_path: str | None = None
    features_path: str | None = None
    labels_path: str | None = None
    sbm_blocks: int = 4
    sbm_nodes_per_block: int = 100
    sbm_p_in: float = 0.1
    sbm_p_out: float = 0.005
    sbm_feature_dim: int = 16
    sbm_feature_noise: float = 0.1
    # model / training
    arch: str = "gcn"
    hidden_dim: int = 32
    depth: int = 4
    epochs: int = 200
    learning_rate: float = 0.01
    optimizer: str = "adam"
    weight_init_scale: float = 1.0
    # defense and masking
    defense: str = "none"
    defense_epsilon: float = 0.0
    mask_top_k: int | None = None
    # attacks
    attacks: tuple = ("inf3",)
    sim_metric: str = "correlation"
    inf2_metric: str = "cosine"
    alpha: float = 1e-4
    aux_strategy: str = "random"
    # protocol
    num_targets: int = 100
    degree_range: str = "unconstrained"
    low_max: int = 5
    high_min: int = 10
    d_hat_modes: tuple = ("floor08", "exact", "ceil12")
    seed: int = 0
    jobs: int = 1
    timings: bool = False

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ConfigError(f"arch: unknown value {self.arch!r}")
        if self.defense not in DEFENSE_KINDS:
            raise ConfigError(f"defense: unknown value {self.defense!r}")
        if self.degree_range not in DEGREE_RANGES:
            raise ConfigError(f"degree_range: unknown value {self.degree_range!r}")
        for mode in self.d_hat_modes:
            if mode not in D_HAT_MODES:
                raise ConfigError(f"d_hat_modes: unknown value {mode!r}")
        for name in self.attacks:
            if name not in SCORERS:
                raise ConfigError(f"attacks: unknown value {name!r}")
        if self.num_targets < 1:
            raise ConfigError("num_targets must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")


_LIST_KEYS = {"attacks", "d_hat_modes"}
_OPTIONAL_INT_KEYS = {"mask_top_k"}


def _coerce(key: str, raw: str, target_type):
    raw = raw.strip()
    if key in _LIST_KEYS:
        return tuple(x.strip() for x in raw.split(",") if x.strip())
    if key in _OPTIONAL_INT_KEYS:
        return None if raw.lower() in ("none", "") else int(raw)
    if key.endswith("_path"):
        return raw
    if target_type is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse the flat 'key = value' config format ('#' starts a comment)."""
    defaults = ExperimentConfig()
    types = {f.name: type(getattr(defaults, f.name)) for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"{source}: line {lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(key, raw, types[key])
        except ValueError as exc:
            raise ConfigError(f"{source}: line {lineno}: key {key!r}: {exc}") from None
    return values


def config_from_file(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    values = parse_config_text(text, source=str(path))
    if overrides:
        for key, value in overrides.items():
            if value is not None:
                values[key] = value
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

@dataclass
class ReportRow:
    attack: str
    arch: str
    defense_epsilon: float
    d_hat_mode: str
    degree_range: str
    precision: float
    recall: float
    f1: float
    auc: float
    wall_time: float | None = None


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)


def _attack_spec(cfg: ExperimentConfig, name: str) -> AttackSpec | None:
    if name in ("lsa0", "lta"):
        return None
    metric = None
    if name in ("sim", "sim2"):
        metric = cfg.sim_metric
    elif name == "inf2":
        metric = cfg.inf2_metric
    return AttackSpec(method=name, metric=metric, alpha=cfg.alpha,
                      aux_strategy=cfg.aux_strategy)


def _score_target(cfg, model, served_graph, base_graph, t):
    """All attacks and d_hat modes for one target; returns a result dict."""
    positives, negatives = build_candidate_set(base_graph, t)
    if not negatives:
        return {"target": t, "skipped": "empty negative set"}
    candidates = sorted(positives | negatives)
    truth = [c in positives for c in candidates]
    d = base_graph.degree(t)
    service = VictimService(model, served_graph.copy(),
                            ServiceConfig(mask_top_k=cfg.mask_top_k))
    out = {"target": t, "skipped": None, "attacks": {}}
    for ai, name in enumerate(cfg.attacks):
        started = time.perf_counter()
        if name == "lsa0":
            table = lsa0_scores(service, t, candidates)
        elif name == "lta":
            table = lta_scores(service, t, candidates, alpha=cfg.alpha)
        else:
            spec = _attack_spec(cfg, name)
            rng = np.random.default_rng([cfg.seed, t, ai])
            table = compute_lps_table(service, t, candidates, spec, rng)
        scores = [table.scores[c] for c in candidates]
        entry = {
            "auc": auc(scores, truth),
            "elapsed": time.perf_counter() - started,
            "modes": {},
        }
        for mode in cfg.d_hat_modes:
            predicted_map = select_predictions(
                table.scores, estimate_degree(d, mode),
                exclude_zero=name != "sim2",
            )
            entry["modes"][mode] = metrics([predicted_map[c] for c in candidates], truth)
        out["attacks"][name] = entry
    return out


def build_base_graph(cfg: ExperimentConfig) -> Graph:
    if cfg.edges_path is not None or cfg.features_path is not None:
        if cfg.edges_path is None or cfg.features_path is None:
            raise ConfigError("edges_path and features_path must be given together")
        return load_graph(cfg.edges_path, cfg.features_path, cfg.labels_path)
    return generate_sbm(cfg.sbm_blocks, cfg.sbm_nodes_per_block, cfg.sbm_p_in,
                        cfg.sbm_p_out, cfg.sbm_feature_dim,
                        cfg.sbm_feature_noise, seed=cfg.seed)


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    report = ExperimentReport()

    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except Exception as exc:
            raise ExperimentError(name, exc) from exc

    base = stage("load", build_base_graph, cfg)
    defense_spec = DefenseSpec(cfg.defense, cfg.defense_epsilon, seed=cfg.seed) \
        if cfg.defense != "none" else DefenseSpec()
    served = stage("defense", apply_defense, base, defense_spec)
    model_cfg = ModelConfig(arch=cfg.arch, hidden_dim=cfg.hidden_dim, depth=cfg.depth)
    train_cfg = TrainConfig(epochs=cfg.epochs, learning_rate=cfg.learning_rate,
                            optimizer=cfg.optimizer, seed=cfg.seed,
                            weight_init_scale=cfg.weight_init_scale)
    model = stage("train", train, model_cfg, served, train_cfg)
    targets = stage("select-targets", select_targets, base, cfg.num_targets,
                    cfg.degree_range, (cfg.low_max, cfg.high_min), cfg.seed)
    if not targets:
        report.notes.append("no targets match the degree range; empty report")
        return report

    def worker(t):
        return _score_target(cfg, model, served, base, t)

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(worker, targets))
    else:
        results = [worker(t) for t in targets]
    results = {r["target"]: r for r in results}

    scored = []
    for t in sorted(results):
        if results[t]["skipped"]:
            report.notes.append(f"target {t}: {results[t]['skipped']}; skipped")
        else:
            scored.append(results[t])
    if not scored:
        report.notes.append("all targets skipped; empty report")
        return report

    stage("aggregate", _aggregate, cfg, scored, report)
    return report


def _aggregate(cfg, scored, report):
    degenerate = 0
    for name in cfg.attacks:
        auc_mean = float(np.mean([r["attacks"][name]["auc"] for r in scored]))
        elapsed = sum(r["attacks"][name]["elapsed"] for r in scored)
        for mode in cfg.d_hat_modes:
            prfs = [r["attacks"][name]["modes"][mode] for r in scored]
            degenerate += sum(p.degenerate_precision for p in prfs)
            report.rows.append(ReportRow(
                attack=name,
                arch=cfg.arch,
                defense_epsilon=cfg.defense_epsilon if cfg.defense != "none" else 0.0,
                d_hat_mode=mode,
                degree_range=cfg.degree_range,
                precision=float(np.mean([p.precision for p in prfs])),
                recall=float(np.mean([p.recall for p in prfs])),
                f1=float(np.mean([p.f1 for p in prfs])),
                auc=auc_mean,
                wall_time=elapsed if cfg.timings else None,
            ))
    report.notes.append(f"targets scored: {len(scored)}")
    if degenerate:
        report.notes.append(
            f"degenerate precision (no predicted positives) in {degenerate} "
            "target/mode cells, reported as 1.0"
        )


REPORT_COLUMNS = ("attack", "arch", "defense_epsilon", "d_hat_mode",
                  "degree_range", "precision", "recall", "f1", "auc", "wall_time")


def report_to_csv(report: ExperimentReport) -> str:
    """Render the report; wall_time stays empty unless timings were enabled.

    (Measured timings vary run to run, which would break the byte-identical
    reproducibility contract of `evaluate`, so they are opt-in.)
    """
    lines = [",".join(REPORT_COLUMNS)]
    for row in report.rows:
        wt = "" if row.wall_time is None else f"{row.wall_time:.3f}"
        lines.append(
            f"{row.attack},{row.arch},{row.defense_epsilon:.6g},{row.d_hat_mode},"
            f"{row.degree_range},{row.precision:.6f},{row.recall:.6f},"
            f"{row.f1:.6f},{row.auc:.6f},{wt}"
        )
    return "\n".join(lines) + "\n"


def write_report_csv(report: ExperimentReport, path) -> None:
    with open(path, "w") as fh:
        fh.write(report_to_csv(report))


def sweep_epsilons(cfg: ExperimentConfig, epsilons) -> list[tuple[float, ExperimentReport]]:
    """Run the experiment once per privacy budget; shares everything else."""
    if cfg.defense == "none":
        raise ConfigError("sweep requires a non-none defense in the config")
    out = []
    for eps in epsilons:
        out.append((eps, run_experiment(replace(cfg, defense_epsilon=float(eps)))))
    return out
