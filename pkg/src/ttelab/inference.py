"""Resampling confidence intervals for the estimated effect path.

Units are resampled B times by independent Bernoulli(q) inclusion, the full
estimator is rerun on each row-subset, and the band is mean +/- z * sd of the
B effect paths (a percentile variant exists for diagnostics). Subsamples that
are too small or give a singular fit are redrawn so B stays fixed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import ExperimentDesign, PanelData
from .estimation import ClampBounds, estimate_tte_many


class InferenceFailure(RuntimeError):
    """Raised when the subsample retry budget is exhausted."""


@dataclass(frozen=True)
class ResampleSpec:
    q: float
    b_samples: int = 500
    level: float = 0.95
    percentile: bool = False

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError("q must lie in (0, 1)")
        if self.b_samples < 2:
            raise ValueError("need at least 2 resamples")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")


@dataclass(frozen=True)
class CIResult:
    center: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_redrawn: int


def resample_tte_ci(
    panel: PanelData,
    design: ExperimentDesign,
    clamp: ClampBounds,
    spec: ResampleSpec,
    rng: np.random.Generator,
) -> CIResult:
    """Per-time CI band from B Bernoulli(q) unit subsamples.

    Retained rows keep their original treatment assignments. The band is
    additionally clipped to the clamp bounds.
    """
    n = panel.n_units
    if spec.q * n < 10:
        raise ValueError("expected subsample size q*N must be >= 10")
    y = panel.outcomes
    b_target = spec.b_samples
    budget = 10 * b_target
    drawn = 0
    n_redrawn = 0
    collected: list[np.ndarray] = []
    n_have = 0
    while n_have < b_target:
        batch = b_target - n_have
        if drawn + batch > budget:
            batch = budget - drawn
            if batch <= 0:
                raise InferenceFailure(
                    f"retry budget ({budget}) exhausted with {n_have}/{b_target} valid subsamples"
                )
        mask = (rng.random((batch, n)) < spec.q).astype(float)
        counts = mask.sum(axis=1)
        size_ok = counts >= 2
        means = np.divide(
            mask @ y,
            counts[:, None],
            out=np.zeros((batch, y.shape[1])),
            where=size_ok[:, None],
        )
        tte, fit_ok = estimate_tte_many(means, design, clamp)
        valid = size_ok & fit_ok
        collected.append(tte[valid])
        n_have += int(valid.sum())
        n_redrawn += int(batch - valid.sum())
        drawn += batch
    paths = np.concatenate(collected, axis=0)[:b_target]

    center = paths.mean(axis=0)
    if spec.percentile:
        alpha = (1.0 - spec.level) / 2.0
        lo = np.quantile(paths, alpha, axis=0)
        hi = np.quantile(paths, 1.0 - alpha, axis=0)
    else:
        z = stats.norm.ppf(0.5 * (1.0 + spec.level))
        sd = paths.std(axis=0, ddof=1)
        lo = center - z * sd
        hi = center + z * sd
    lo = clamp.apply(lo)
    hi = clamp.apply(hi)
    return CIResult(center=center, ci_low=lo, ci_high=hi, n_redrawn=n_redrawn)


_Q_BY_SIZE = {"moderate": (0.4, 0.3, 0.25), "high": (0.2, 0.15, 0.1)}


def default_q(n_units: int, interference_level: str) -> float:
    """Recommended inclusion probability by population size and contention."""
    if interference_level == "low":
        return 0.7
    try:
        small, mid, large = _Q_BY_SIZE[interference_level]
    except KeyError:
        raise ValueError(f"unknown interference level {interference_level!r}") from None
    if n_units <= 500:
        return small
    if n_units <= 2000:
        return mid
    return large
