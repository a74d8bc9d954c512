"""Shared domain types, panel validation, and seeded RNG stream bookkeeping."""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

_MASK64 = (1 << 64) - 1


class DivergenceError(RuntimeError):
    """Raised when a simulated or forecast trajectory blows up."""


class SingularFitError(ValueError):
    """Raised when a regression has a degenerate (zero-variance) predictor."""


class NonIdentifiableError(ValueError):
    """Raised when a design does not identify the requested parameters."""


# ---------------------------------------------------------------------------
# RNG streams


def spawn_stream(master_seed: int, stream_label: str) -> np.random.Generator:
    """Deterministic, collision-free RNG sub-stream keyed by (seed, label).

    The label is hashed into the SeedSequence spawn key so identical inputs
    give bit-identical draws on every platform and distinct labels give
    statistically independent streams.
    """
    digest = hashlib.sha256(stream_label.encode("utf-8")).digest()
    key = tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))
    seq = np.random.SeedSequence(entropy=master_seed & _MASK64, spawn_key=key)
    return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class StreamFactory:
    """Factory of labeled RNG streams sharing one master seed.

    Counterfactual twin runs re-derive streams by label, so any draw that is
    not behind a treatment-specific label is automatically shared (common
    random numbers).
    """

    master_seed: int
    prefix: str = ""

    def stream(self, label: str) -> np.random.Generator:
        return spawn_stream(self.master_seed, self.prefix + label)

    def child(self, label: str) -> "StreamFactory":
        return StreamFactory(self.master_seed, f"{self.prefix}{label}/")


# ---------------------------------------------------------------------------
# Experiment design


class AssignmentMode(Enum):
    TWO_STAGE_STATIC = "two_stage_static"
    STAGGERED_ROLLOUT = "staggered_rollout"
    MICRO_RANDOMIZED = "micro_randomized"


@dataclass(frozen=True)
class ExperimentDesign:
    """Two-stage treatment probability schedule.

    Transitions t = 0..t1-1 (producing outcomes 1..t1) run at probability
    ``pi1``; transitions t1..t1+t2-1 run at ``pi2``.
    """

    pi1: float
    pi2: float
    t1: int
    t2: int
    mode: AssignmentMode = AssignmentMode.TWO_STAGE_STATIC
    all_control_override: bool = False
    all_treated_override: bool = False

    def __post_init__(self):
        if not (0.0 <= self.pi1 <= 1.0 and 0.0 <= self.pi2 <= 1.0):
            raise ValueError("treatment probabilities must lie in [0, 1]")
        if self.t1 < 1 or self.t2 < 1:
            raise ValueError("stage lengths must be positive")
        overridden = self.all_control_override or self.all_treated_override
        if self.pi1 == self.pi2 and not overridden:
            raise ValueError("pi1 == pi2 is not identifiable without an override flag")
        if self.mode is AssignmentMode.STAGGERED_ROLLOUT and self.pi2 < self.pi1:
            raise ValueError("staggered roll-out requires pi2 >= pi1")

    @property
    def horizon(self) -> int:
        return self.t1 + self.t2

    def pi_at(self, t: int) -> float:
        """Treatment probability in effect for transition t -> t+1."""
        if self.all_control_override:
            return 0.0
        if self.all_treated_override:
            return 1.0
        return self.pi1 if t < self.t1 else self.pi2

    def with_override(self, treated: bool) -> "ExperimentDesign":
        return replace(
            self,
            all_control_override=not treated,
            all_treated_override=treated,
        )


@dataclass(frozen=True)
class InterferenceSpec:
    """Scales of the fixed and time-varying Gaussian mixing matrices.

    ``mu``/``mu_t`` are pre-division by N, ``sigma``/``sigma_t`` pre-division
    by sqrt(N).
    """

    mu: float
    sigma: float
    mu_t: float = 0.0
    sigma_t: float = 0.0
    resample_time_varying: bool = True

    def __post_init__(self):
        if self.sigma < 0 or self.sigma_t < 0:
            raise ValueError("interference sd scales must be >= 0")

    @property
    def mean_total(self) -> float:
        return self.mu + self.mu_t

    @property
    def var_total(self) -> float:
        return self.sigma**2 + self.sigma_t**2

    def is_unit_mean(self, tol: float = 1e-12) -> bool:
        """True when the overall mean follows the mu + mu_t = 1 convention."""
        return abs(self.mean_total - 1.0) <= tol


@dataclass(frozen=True)
class NoiseSpec:
    sigma_e: float = 0.0

    def __post_init__(self):
        if self.sigma_e < 0:
            raise ValueError("sigma_e must be >= 0")


@dataclass(frozen=True)
class LinearOutcomeParams:
    """Population means of the linear outcome family
    g(y, w) = delta + xi*y + lam*w + gamma*y*w + theta_bar,

    with optional per-unit coefficient heterogeneity for simulation.
    ``unit_coef_sd`` holds per-coefficient sds in the order
    (delta, xi, lam, gamma, theta_bar); zeros mean homogeneous units.
    """

    delta: float
    xi: float
    lam: float
    gamma: float
    theta_bar: float = 0.0
    unit_coef_sd: tuple[float, float, float, float, float] = (0.0,) * 5

    def __post_init__(self):
        vals = (self.delta, self.xi, self.lam, self.gamma, self.theta_bar)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("all coefficient means must be finite")
        if len(self.unit_coef_sd) != 5 or any(s < 0 for s in self.unit_coef_sd):
            raise ValueError("unit_coef_sd must be 5 nonnegative entries")

    @property
    def means(self) -> np.ndarray:
        return np.array(
            [self.delta, self.xi, self.lam, self.gamma, self.theta_bar]
        )


@dataclass(frozen=True)
class SEState:
    """Mean and sd of the Gaussian outcome limit at one time."""

    nu: float
    rho: float

    def __post_init__(self):
        if not (np.isfinite(self.nu) and np.isfinite(self.rho)):
            raise ValueError("state must be finite")
        if self.rho < 0:
            raise ValueError("rho must be >= 0")


# ---------------------------------------------------------------------------
# Panel data


@dataclass(frozen=True)
class PanelData:
    """Observed outcomes (N x T+1) and the treatment matrix (T x N).

    ``outcomes[:, t]`` is the outcome vector at time t; ``treatments[t]`` is
    the assignment in effect during the transition t -> t+1.
    """

    outcomes: np.ndarray
    treatments: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "outcomes", np.asarray(self.outcomes, dtype=float))
        object.__setattr__(self, "treatments", np.asarray(self.treatments, dtype=float))

    @property
    def n_units(self) -> int:
        return self.outcomes.shape[0]

    @property
    def horizon(self) -> int:
        return self.outcomes.shape[1] - 1


@dataclass(frozen=True)
class PanelValidation:
    ok: bool
    violations: tuple[str, ...]


def validate_panel(panel: PanelData) -> PanelValidation:
    """Check all PanelData invariants; failures are reported, not raised."""
    violations: list[str] = []
    y, w = panel.outcomes, panel.treatments
    if y.ndim != 2 or w.ndim != 2:
        violations.append("outcomes and treatments must be 2-d")
        return PanelValidation(False, tuple(violations))
    n, tp1 = y.shape
    if n < 1 or tp1 < 2:
        violations.append(f"outcomes shape {y.shape} needs N >= 1 and T >= 1")
    if w.shape != (tp1 - 1, n):
        violations.append(
            f"treatments shape {w.shape} does not match expected ({tp1 - 1}, {n})"
        )
    bad = np.argwhere(~np.isfinite(y))
    for i, t in bad[:20]:
        violations.append(f"non-finite outcome at unit {i}, time {t}")
    if len(bad) > 20:
        violations.append(f"... {len(bad) - 20} more non-finite outcomes")
    bad_w = np.argwhere(~np.isfinite(w))
    for t, i in bad_w[:20]:
        violations.append(f"non-finite treatment at time {t}, unit {i}")
    return PanelValidation(not violations, tuple(violations))


# ---------------------------------------------------------------------------
# TTE report


@dataclass(frozen=True)
class TTEReport:
    estimate: np.ndarray
    ci_low: Optional[np.ndarray] = None
    ci_high: Optional[np.ndarray] = None
    ground_truth: Optional[np.ndarray] = None
    replication_id: int = 0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "estimate", np.asarray(self.estimate, dtype=float))
        for name in ("ci_low", "ci_high", "ground_truth"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=float))

    def to_dict(self) -> dict:
        def arr(v):
            return None if v is None else [float(x) for x in v]

        return {
            "estimate": arr(self.estimate),
            "ci_low": arr(self.ci_low),
            "ci_high": arr(self.ci_high),
            "ground_truth": arr(self.ground_truth),
            "replication_id": self.replication_id,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TTEReport":
        def arr(v):
            return None if v is None else np.asarray(v, dtype=float)

        return cls(
            estimate=np.asarray(d["estimate"], dtype=float),
            ci_low=arr(d.get("ci_low")),
            ci_high=arr(d.get("ci_high")),
            ground_truth=arr(d.get("ground_truth")),
            replication_id=int(d.get("replication_id", 0)),
            seed=int(d.get("seed", 0)),
        )


def report_to_json(report: TTEReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2) + "\n")


def report_from_json(path: str | Path) -> TTEReport:
    return TTEReport.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Panel CSV format: header `unit,t,outcome,treatment`; treatment at t=0 empty.


def panel_to_csv(panel: PanelData, path: str | Path) -> None:
    y, w = panel.outcomes, panel.treatments
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["unit", "t", "outcome", "treatment"])
        for n in range(panel.n_units):
            for t in range(panel.horizon + 1):
                treat = "" if t == 0 else repr(float(w[t - 1, n]))
                writer.writerow([n, t, repr(float(y[n, t])), treat])


def panel_from_csv(path: str | Path) -> PanelData:
    units: dict[int, dict[int, float]] = {}
    treats: dict[tuple[int, int], float] = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            n, t = int(row["unit"]), int(row["t"])
            units.setdefault(n, {})[t] = float(row["outcome"])
            if row["treatment"] != "":
                treats[(t - 1, n)] = float(row["treatment"])
    n_units = len(units)
    horizon = max(max(ts) for ts in units.values())
    y = np.empty((n_units, horizon + 1))
    w = np.zeros((horizon, n_units))
    for n, ts in units.items():
        for t, v in ts.items():
            y[n, t] = v
    for (t, n), v in treats.items():
        w[t, n] = v
    return PanelData(outcomes=y, treatments=w)
