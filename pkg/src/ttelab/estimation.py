"""Treatment-effect estimation from panel means.

The estimator fits one lag-1 regression of the mean outcome per design stage,
converts the two (slope, intercept) pairs into the outcome-family parameters,
and rolls an all-treated counterfactual mean forward to get the effect path.
An equilibrium single-snapshot contrast and its known bias term are also
provided.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    DivergenceError,
    ExperimentDesign,
    NonIdentifiableError,
    PanelData,
    SingularFitError,
    TTEReport,
)

_OVERFLOW = 1e12


@dataclass(frozen=True)
class RecoveredParams:
    xi_hat: float
    gamma_hat: float
    lambda_hat: float
    # stage-wise regression diagnostics
    b1: float
    a1: float
    b2: float
    a2: float


@dataclass(frozen=True)
class ClampBounds:
    low: Optional[float] = None
    high: Optional[float] = None

    def __post_init__(self):
        if self.low is not None and self.high is not None and self.low > self.high:
            raise ValueError("clamp low must be <= high")

    @property
    def unbounded(self) -> bool:
        return self.low is None and self.high is None

    def apply(self, x):
        if self.low is not None:
            x = np.maximum(x, self.low)
        if self.high is not None:
            x = np.minimum(x, self.high)
        return x


def sample_means(panel: PanelData) -> np.ndarray:
    """Per-time arithmetic mean over units, length T+1."""
    return panel.outcomes.mean(axis=0)


def fit_lag1_ols(means: np.ndarray, start: int, stop: int) -> tuple[float, float]:
    """OLS of means[t+1] on means[t] for t in [start, stop); returns (slope, intercept).

    Centered two-pass sums; a zero-variance predictor raises SingularFitError.
    """
    x = np.asarray(means, dtype=float)[start:stop]
    y = np.asarray(means, dtype=float)[start + 1 : stop + 1]
    if x.shape[0] < 2 or y.shape[0] != x.shape[0]:
        raise ValueError("need at least 2 lag pairs in range")
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    if sxx <= 0.0 or not np.isfinite(sxx):
        raise SingularFitError("predictor has zero variance")
    slope = float(((x - xm) * (y - ym)).sum() / sxx)
    return slope, ym - slope * xm


def recover_params(
    b1: float, a1: float, b2: float, a2: float, pi1: float, pi2: float
) -> RecoveredParams:
    """Invert the stage-wise slopes/intercepts into (xi, gamma, lambda)."""
    if pi1 == pi2:
        raise NonIdentifiableError("pi1 == pi2 does not identify the parameters")
    dpi = pi2 - pi1
    xi = 0.5 * (b2 + b1 - (b2 - b1) * (pi2 + pi1) / dpi)
    gamma = (b2 - b1) / dpi
    lam = (a2 - a1) / dpi
    return RecoveredParams(
        xi_hat=xi, gamma_hat=gamma, lambda_hat=lam, b1=b1, a1=a1, b2=b2, a2=a2
    )


def recover_from_means(means: np.ndarray, design: ExperimentDesign) -> RecoveredParams:
    t1 = design.t1
    b1, a1 = fit_lag1_ols(means, 0, t1)
    b2, a2 = fit_lag1_ols(means, t1, design.horizon)
    return recover_params(b1, a1, b2, a2, design.pi1, design.pi2)


def _tte_recursion(
    means: np.ndarray,
    design: ExperimentDesign,
    params: RecoveredParams,
    clamp: ClampBounds,
) -> np.ndarray:
    """Roll the all-treated counterfactual mean and the effect path forward.

    The clamp applies to the effect path only, after each update.
    """
    xi, gam, lam = params.xi_hat, params.gamma_hat, params.lambda_hat
    t_horizon = design.horizon
    nu1 = means[0]
    tte = np.zeros(t_horizon + 1)
    for t in range(t_horizon):
        pi = design.pi1 if t <= design.t1 - 1 else design.pi2
        nu1_next = (
            means[t + 1]
            + xi * (nu1 - means[t])
            + lam * (1.0 - pi)
            + gam * (nu1 - pi * means[t])
        )
        raw = xi * tte[t] + lam + gam * nu1
        if clamp.unbounded and abs(raw) > _OVERFLOW:
            raise DivergenceError(f"effect recursion diverged at time step {t + 1}")
        tte[t + 1] = clamp.apply(raw)
        nu1 = nu1_next
    return tte


def estimate_tte_from_means(
    means: np.ndarray,
    design: ExperimentDesign,
    clamp: ClampBounds = ClampBounds(),
) -> tuple[np.ndarray, RecoveredParams]:
    """Effect-path estimate from an already computed mean trajectory."""
    means = np.asarray(means, dtype=float)
    if design.t1 < 2 or design.t2 < 2:
        raise ValueError("each stage needs at least 2 lag pairs (t1, t2 >= 2)")
    if means.shape[0] != design.horizon + 1:
        raise ValueError("means length must be t1 + t2 + 1")
    params = recover_from_means(means, design)
    return _tte_recursion(means, design, params, clamp), params


def estimate_tte_trajectory(
    panel: PanelData,
    design: ExperimentDesign,
    clamp: ClampBounds = ClampBounds(),
    replication_id: int = 0,
    seed: int = 0,
) -> TTEReport:
    tte, _ = estimate_tte_from_means(sample_means(panel), design, clamp)
    return TTEReport(estimate=tte, replication_id=replication_id, seed=seed)


def estimate_tte_many(
    means_matrix: np.ndarray,
    design: ExperimentDesign,
    clamp: ClampBounds = ClampBounds(),
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized estimator over a batch of mean trajectories.

    Returns (effect paths, valid mask); rows with a zero-variance stage
    predictor are flagged invalid instead of raising. Each valid row equals
    the scalar estimator output exactly.
    """
    m = np.asarray(means_matrix, dtype=float)
    if design.t1 < 2 or design.t2 < 2:
        raise ValueError("each stage needs at least 2 lag pairs (t1, t2 >= 2)")
    b, tp1 = m.shape
    t1, t_horizon = design.t1, design.horizon
    if tp1 != t_horizon + 1:
        raise ValueError("means length must be t1 + t2 + 1")

    def stage_fit(start, stop):
        x = m[:, start:stop]
        y = m[:, start + 1 : stop + 1]
        xm = x.mean(axis=1, keepdims=True)
        ym = y.mean(axis=1, keepdims=True)
        sxx = ((x - xm) ** 2).sum(axis=1)
        ok = (sxx > 0.0) & np.isfinite(sxx)
        sxy = ((x - xm) * (y - ym)).sum(axis=1)
        slope = np.divide(sxy, sxx, out=np.zeros(b), where=ok)
        intercept = ym[:, 0] - slope * xm[:, 0]
        return slope, intercept, ok

    b1, a1, ok1 = stage_fit(0, t1)
    b2, a2, ok2 = stage_fit(t1, t_horizon)
    valid = ok1 & ok2
    dpi = design.pi2 - design.pi1
    if dpi == 0.0:
        raise NonIdentifiableError("pi1 == pi2 does not identify the parameters")
    xi = 0.5 * (b2 + b1 - (b2 - b1) * (design.pi2 + design.pi1) / dpi)
    gam = (b2 - b1) / dpi
    lam = (a2 - a1) / dpi

    nu1 = m[:, 0].copy()
    tte = np.zeros((b, t_horizon + 1))
    for t in range(t_horizon):
        pi = design.pi1 if t <= t1 - 1 else design.pi2
        nu1_next = (
            m[:, t + 1]
            + xi * (nu1 - m[:, t])
            + lam * (1.0 - pi)
            + gam * (nu1 - pi * m[:, t])
        )
        tte[:, t + 1] = clamp.apply(xi * tte[:, t] + lam + gam * nu1)
        nu1 = nu1_next
    with np.errstate(invalid="ignore"):
        valid &= np.isfinite(tte).all(axis=1)
    return tte, valid


def tte_equilibrium(
    mean_pi1: float, mean_pi2: float, pi1: float, pi2: float
) -> float:
    """Single-snapshot contrast (mean_pi2 - mean_pi1) / (pi2 - pi1)."""
    if pi1 == pi2:
        raise NonIdentifiableError("pi1 == pi2")
    return (mean_pi2 - mean_pi1) / (pi2 - pi1)


def equilibrium_bias(
    xi: float,
    gamma: float,
    pi1: float,
    pi2: float,
    mean_pi1: float,
    mean_pi2: float,
    mean_all1: float,
) -> float:
    """Asymptotic bias of the equilibrium contrast; exactly 0 when gamma = 0."""
    if gamma == 0.0:
        return 0.0
    if pi1 == pi2:
        raise NonIdentifiableError("pi1 == pi2")
    if xi == 1.0:
        raise ZeroDivisionError("xi = 1 is a pole of the bias expression")
    inner = (pi2 * mean_pi2 - pi1 * mean_pi1) / (pi2 - pi1) - mean_all1
    return gamma / (1.0 - xi) * inner
