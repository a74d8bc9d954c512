"""Configuration-driven experiment runner.

Each replication simulates an observed panel, recreates coupled all-control /
all-treated twins for the ground-truth effect path, runs the estimator (plus
the resampling CI when enabled), and the harness aggregates estimates, truth,
coverage, and CI widths into machine-readable CSV/JSON reports. Outputs are a
pure function of (config, seed): no timestamps, stable float formatting.
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from .core import (
    AssignmentMode,
    ExperimentDesign,
    InterferenceSpec,
    LinearOutcomeParams,
    NoiseSpec,
    PanelData,
    StreamFactory,
)
from .estimation import ClampBounds, estimate_tte_trajectory
from .gaussian_sim import simulate_with_truth
from .graphs import degree_histogram, gen_er, gen_rgg, load_edge_list
from .inference import ResampleSpec, resample_tte_ci
from .scenarios import (
    LiMParams,
    MRTParams,
    QueueParams,
    scenario_counterfactual_pair,
    simulate_binary_mrt,
    simulate_jsq_queue,
    simulate_linear_in_means,
)

PAPER_SCALE_REPLICATIONS = 5000


class ConfigError(ValueError):
    pass


class Scenario(Enum):
    GAUSSIAN_LINEAR = "GaussianLinear"
    LINEAR_IN_MEANS = "LinearInMeans"
    BINARY_MRT = "BinaryMRT"
    JSQ_QUEUE = "JsqQueue"
    FILE_GRAPH_LIM = "FileGraphLiM"


_MODE_BY_SCENARIO = {
    Scenario.GAUSSIAN_LINEAR: AssignmentMode.TWO_STAGE_STATIC,
    Scenario.LINEAR_IN_MEANS: AssignmentMode.STAGGERED_ROLLOUT,
    Scenario.BINARY_MRT: AssignmentMode.MICRO_RANDOMIZED,
    Scenario.JSQ_QUEUE: AssignmentMode.TWO_STAGE_STATIC,
    Scenario.FILE_GRAPH_LIM: AssignmentMode.STAGGERED_ROLLOUT,
}


@dataclass
class ExperimentConfig:
    scenario: Scenario
    n_units: int
    t1: int
    t2: int
    pi1: float
    pi2: float
    output_dir: str
    burn_in: int = 10
    replications: int = 200
    master_seed: int = 0
    clamp_low: Optional[float] = None
    clamp_high: Optional[float] = None
    resample_q: Optional[float] = None
    resample_b: int = 500
    resample_level: float = 0.95
    scenario_params: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be >= 0")
        if self.n_units < 2:
            raise ConfigError("n_units must be >= 2")
        try:
            self.design()
            self.clamp()
            if self.resample_q is not None:
                self.resample_spec()
            _build_scenario_params(self)
        except (ValueError, OSError) as exc:
            raise ConfigError(str(exc)) from exc

    def design(self) -> ExperimentDesign:
        return ExperimentDesign(
            pi1=self.pi1,
            pi2=self.pi2,
            t1=self.t1,
            t2=self.t2,
            mode=_MODE_BY_SCENARIO[self.scenario],
        )

    def clamp(self) -> ClampBounds:
        return ClampBounds(low=self.clamp_low, high=self.clamp_high)

    def resample_spec(self) -> Optional[ResampleSpec]:
        if self.resample_q is None:
            return None
        return ResampleSpec(
            q=self.resample_q, b_samples=self.resample_b, level=self.resample_level
        )

    def to_dict(self) -> dict:
        d = {
            "scenario": self.scenario.value,
            "n_units": self.n_units,
            "t1": self.t1,
            "t2": self.t2,
            "pi1": self.pi1,
            "pi2": self.pi2,
            "output_dir": self.output_dir,
            "burn_in": self.burn_in,
            "replications": self.replications,
            "master_seed": self.master_seed,
            "clamp_low": self.clamp_low,
            "clamp_high": self.clamp_high,
            "resample_q": self.resample_q,
            "resample_b": self.resample_b,
            "resample_level": self.resample_level,
            "scenario_params": self.scenario_params,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        try:
            d["scenario"] = Scenario(d["scenario"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad or missing scenario: {exc}") from exc
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        missing = {"n_units", "t1", "t2", "pi1", "pi2", "output_dir"} - set(d)
        if missing:
            raise ConfigError(f"missing config fields: {sorted(missing)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)


# ---------------------------------------------------------------------------
# Scenario dispatch


def _build_scenario_params(config: ExperimentConfig):
    sp = dict(config.scenario_params)
    scen = config.scenario
    if scen is Scenario.GAUSSIAN_LINEAR:
        outcome = LinearOutcomeParams(
            delta=sp.pop("delta", 0.0),
            xi=sp.pop("xi", 0.5),
            lam=sp.pop("lam", 1.0),
            gamma=sp.pop("gamma", 0.0),
            theta_bar=sp.pop("theta_bar", 0.0),
            unit_coef_sd=tuple(sp.pop("unit_coef_sd", (0.0,) * 5)),
        )
        interference = InterferenceSpec(
            mu=sp.pop("mu", 1.0),
            sigma=sp.pop("sigma", 0.5),
            mu_t=sp.pop("mu_t", 0.0),
            sigma_t=sp.pop("sigma_t", 0.0),
            resample_time_varying=sp.pop("resample_time_varying", True),
        )
        noise = NoiseSpec(sigma_e=sp.pop("sigma_e", 0.3))
        dtype = np.float32 if sp.pop("dtype", "float64") == "float32" else np.float64
        parsed = (outcome, interference, noise, dtype)
    elif scen in (Scenario.LINEAR_IN_MEANS, Scenario.FILE_GRAPH_LIM):
        params = LiMParams(
            alpha=sp.pop("alpha", -1.0),
            beta=sp.pop("beta", 0.8),
            delta=sp.pop("delta", 1.0),
            gamma=sp.pop("gamma", 1.0),
            kappa=sp.pop("kappa", 8.0),
        )
        edge_file = sp.pop("edge_file", None)
        if scen is Scenario.FILE_GRAPH_LIM:
            if edge_file is None:
                raise ConfigError("FileGraphLiM needs scenario_params.edge_file")
            if not Path(edge_file).is_file():
                raise ConfigError(f"edge_file not found: {edge_file}")
        noise_redraw = sp.pop("noise_redraw", True)
        parsed = (params, edge_file, noise_redraw)
    elif scen is Scenario.BINARY_MRT:
        parsed = MRTParams(
            alpha=sp.pop("alpha", 0.5),
            beta=sp.pop("beta", 0.04),
            gamma=sp.pop("gamma", 0.04),
            delta=sp.pop("delta", 0.01),
            p_edge=sp.pop("p_edge", 3.0 / config.n_units),
        )
    elif scen is Scenario.JSQ_QUEUE:
        parsed = (
            QueueParams(
                arrival_rate_factor=sp.pop("arrival_rate_factor", 0.95),
                base_service_rate=sp.pop("base_service_rate", 1.0),
                treated_service_rate=sp.pop("treated_service_rate", 2.0),
            ),
            sp.pop("queue_cap", 1024),
        )
    else:  # pragma: no cover
        raise ConfigError(f"unhandled scenario {scen}")
    if sp:
        raise ConfigError(f"unknown scenario_params keys: {sorted(sp)}")
    return parsed


_FILE_GRAPH_CACHE: dict[str, object] = {}


def _file_graph(edge_file: str):
    if edge_file not in _FILE_GRAPH_CACHE:
        _FILE_GRAPH_CACHE[edge_file] = load_edge_list(edge_file)
    return _FILE_GRAPH_CACHE[edge_file]


def _simulate_replication(
    config: ExperimentConfig, streams: StreamFactory
) -> tuple[PanelData, np.ndarray]:
    """Observed panel and coupled ground-truth effect path for one replication."""
    design = config.design()
    scen = config.scenario
    parsed = _build_scenario_params(config)
    if scen is Scenario.GAUSSIAN_LINEAR:
        outcome, interference, noise, dtype = parsed
        return simulate_with_truth(
            config.n_units,
            design,
            outcome,
            interference,
            noise,
            streams,
            burn_in=config.burn_in,
            dtype=dtype,
        )
    if scen in (Scenario.LINEAR_IN_MEANS, Scenario.FILE_GRAPH_LIM):
        params, edge_file, noise_redraw = parsed
        if scen is Scenario.FILE_GRAPH_LIM:
            graph = _file_graph(edge_file)
            noise_mode = "gaussian"
        else:
            graph = gen_rgg(config.n_units, params.kappa, streams.stream("graph"))
            noise_mode = "homophily"

        def sim(d, s):
            return simulate_linear_in_means(
                graph,
                params,
                d,
                s,
                noise_mode=noise_mode,
                burn_in=config.burn_in,
                noise_redraw=noise_redraw,
            )

    elif scen is Scenario.BINARY_MRT:
        params = parsed
        graph = gen_er(config.n_units, params.p_edge, streams.stream("graph"))

        def sim(d, s):
            return simulate_binary_mrt(graph, params, d, s, burn_in=config.burn_in)

    else:  # JSQ_QUEUE
        params, queue_cap = parsed

        def sim(d, s):
            return simulate_jsq_queue(
                config.n_units,
                params,
                d,
                s,
                burn_in=config.burn_in,
                queue_cap=queue_cap,
            )

    panel = sim(design, streams)
    _, _, truth = scenario_counterfactual_pair(sim, design, streams)
    return panel, truth


@dataclass
class ReplicationResult:
    replication_id: int
    estimate: Optional[np.ndarray] = None
    ci_low: Optional[np.ndarray] = None
    ci_high: Optional[np.ndarray] = None
    truth: Optional[np.ndarray] = None
    error: Optional[str] = None


def run_replication(config: ExperimentConfig, replication_id: int) -> ReplicationResult:
    streams = StreamFactory(config.master_seed).child(f"rep{replication_id}")
    try:
        panel, truth = _simulate_replication(config, streams)
        clamp = config.clamp()
        report = estimate_tte_trajectory(
            panel,
            config.design(),
            clamp,
            replication_id=replication_id,
            seed=config.master_seed,
        )
        ci_low = ci_high = None
        spec = config.resample_spec()
        if spec is not None:
            ci = resample_tte_ci(
                panel, config.design(), clamp, spec, streams.stream("resample")
            )
            ci_low, ci_high = ci.ci_low, ci.ci_high
        return ReplicationResult(
            replication_id=replication_id,
            estimate=report.estimate,
            ci_low=ci_low,
            ci_high=ci_high,
            truth=truth,
        )
    except Exception as exc:  # recorded, not fatal: one bad replication
        return ReplicationResult(replication_id=replication_id, error=repr(exc))


# ---------------------------------------------------------------------------
# Aggregation and reporting


def coverage_report(
    estimates: np.ndarray,
    ci_low: Optional[np.ndarray],
    ci_high: Optional[np.ndarray],
    truths: np.ndarray,
) -> dict[str, np.ndarray]:
    """Per-time coverage, bias, RMSE, and mean CI width across replications."""
    if estimates.shape[0] < 1:
        raise ValueError("need at least one successful replication")
    err = estimates - truths
    out = {
        "bias": err.mean(axis=0),
        "rmse": np.sqrt((err**2).mean(axis=0)),
        "mean_estimate": estimates.mean(axis=0),
        "mean_truth": truths.mean(axis=0),
    }
    if ci_low is not None and ci_high is not None:
        covered = (truths >= ci_low) & (truths <= ci_high)
        out["coverage"] = covered.mean(axis=0)
        out["mean_ci_width"] = (ci_high - ci_low).mean(axis=0)
    else:
        nan = np.full(estimates.shape[1], np.nan)
        out["coverage"] = nan
        out["mean_ci_width"] = nan
    return out


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return "" if np.isnan(x) else repr(x)


@dataclass
class RunResult:
    output_dir: Path
    n_success: int
    n_failed: int
    aggregate: dict[str, np.ndarray]


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> RunResult:
    """Run all replications and write replication, aggregate, and summary files."""
    config.validate()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if workers is None:
        workers = int(os.environ.get("TTELAB_WORKERS", "1"))
    rep_ids = list(range(config.replications))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_replication, [config] * len(rep_ids), rep_ids))
    else:
        results = [run_replication(config, r) for r in rep_ids]
    results.sort(key=lambda r: r.replication_id)

    ok = [r for r in results if r.error is None]
    failed = [r for r in results if r.error is not None]

    with open(out_dir / "replications.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["replication", "seed", "t", "estimate", "ci_low", "ci_high", "truth"])
        for r in ok:
            for t in range(len(r.estimate)):
                writer.writerow(
                    [
                        r.replication_id,
                        config.master_seed,
                        t,
                        _fmt(r.estimate[t]),
                        _fmt(r.ci_low[t]) if r.ci_low is not None else "",
                        _fmt(r.ci_high[t]) if r.ci_high is not None else "",
                        _fmt(r.truth[t]),
                    ]
                )

    aggregate: dict[str, np.ndarray] = {}
    if ok:
        est = np.vstack([r.estimate for r in ok])
        truths = np.vstack([r.truth for r in ok])
        has_ci = all(r.ci_low is not None for r in ok)
        lo = np.vstack([r.ci_low for r in ok]) if has_ci else None
        hi = np.vstack([r.ci_high for r in ok]) if has_ci else None
        aggregate = coverage_report(est, lo, hi, truths)
        aggregate["est_q025"] = np.quantile(est, 0.025, axis=0)
        aggregate["est_q975"] = np.quantile(est, 0.975, axis=0)
        cols = [
            "mean_estimate",
            "mean_truth",
            "est_q025",
            "est_q975",
            "coverage",
            "mean_ci_width",
            "bias",
            "rmse",
        ]
        with open(out_dir / "aggregate.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["t"] + cols)
            for t in range(est.shape[1]):
                writer.writerow([t] + [_fmt(aggregate[c][t]) for c in cols])

    summary = {
        "config": config.to_dict(),
        "replications_configured": config.replications,
        "replications_succeeded": len(ok),
        "replications_failed": len(failed),
        "failures": [
            {"replication": r.replication_id, "reason": r.error} for r in failed
        ],
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return RunResult(
        output_dir=out_dir,
        n_success=len(ok),
        n_failed=len(failed),
        aggregate=aggregate,
    )


_TRAJECTORY_FIGURES = {"fig2", "fig3", "fig5"}


def emit_figure_data(run_dir: str | Path, figure_id: str, out_path: str | Path) -> Path:
    """Write one tidy CSV per figure panel from a finished run directory.

    Trajectory panels use the cross-replication 2.5/97.5 percentile band as
    (ci_low, ci_high); fig4 is the degree histogram of the configured graph.
    """
    run_dir = Path(run_dir)
    out_path = Path(out_path)
    if figure_id in _TRAJECTORY_FIGURES:
        agg = run_dir / "aggregate.csv"
        if not agg.is_file():
            raise FileNotFoundError(f"no aggregate in {run_dir} (0 successful replications?)")
        with open(agg, newline="") as f:
            rows = list(csv.DictReader(f))
        if not rows:
            raise ValueError("empty aggregate")
        with open(out_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["t", "mean_estimate", "ci_low", "ci_high", "mean_truth"])
            for row in rows:
                writer.writerow(
                    [
                        row["t"],
                        row["mean_estimate"],
                        row["est_q025"],
                        row["est_q975"],
                        row["mean_truth"],
                    ]
                )
        return out_path
    if figure_id == "fig4":
        summary = json.loads((run_dir / "summary.json").read_text())
        config = ExperimentConfig.from_dict(summary["config"])
        if config.scenario is Scenario.FILE_GRAPH_LIM:
            graph = _file_graph(config.scenario_params["edge_file"])
        elif config.scenario is Scenario.LINEAR_IN_MEANS:
            params, _, _ = _build_scenario_params(config)
            streams = StreamFactory(config.master_seed).child("rep0")
            graph = gen_rgg(config.n_units, params.kappa, streams.stream("graph"))
        elif config.scenario is Scenario.BINARY_MRT:
            params = _build_scenario_params(config)
            streams = StreamFactory(config.master_seed).child("rep0")
            graph = gen_er(config.n_units, params.p_edge, streams.stream("graph"))
        else:
            raise ValueError(f"scenario {config.scenario.value} has no graph for fig4")
        hist = degree_histogram(graph)
        with open(out_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["degree", "count"])
            for deg, count in hist:
                writer.writerow([int(deg), int(count)])
        return out_path
    raise ValueError(f"unknown figure id {figure_id!r}")
