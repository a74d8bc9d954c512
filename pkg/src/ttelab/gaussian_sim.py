"""Panel simulator with dense Gaussian interference matrices.

Outcomes evolve as Y_{t+1} = (A + B_t) g(Y_t, w(t+1)) + eps_t, where A is a
fixed N x N matrix with i.i.d. Normal(mu/N, sigma^2/N) entries, B_t is an
optional time-varying matrix with Normal(mu_t/N, sigma_t^2/N) entries, and
eps_t is i.i.d. Normal(0, sigma_e^2) observation noise.

Counterfactual twin runs (all-control / all-treated) share A, B_t, the noise,
the per-unit coefficients, and the initial outcomes via labeled RNG streams,
so ground-truth treatment effects are computed under common random numbers.
"""
from __future__ import annotations

import math
from typing import Optional, Sequence, Union

import numpy as np

from .core import (
    AssignmentMode,
    DivergenceError,
    ExperimentDesign,
    InterferenceSpec,
    LinearOutcomeParams,
    NoiseSpec,
    PanelData,
    StreamFactory,
)
from .state_evolution import OutcomeFunction

_OVERFLOW = 1e12
_BLOCK = 1024

ParamsOrG = Union[LinearOutcomeParams, OutcomeFunction]


def sample_fixed_interference(
    n_units: int,
    interference: InterferenceSpec,
    rng: np.random.Generator,
    dtype=np.float64,
) -> np.ndarray:
    """N x N matrix with i.i.d. Normal(mu/N, sigma^2/N) entries."""
    n = n_units
    a = rng.standard_normal((n, n), dtype=dtype)
    a *= interference.sigma / math.sqrt(n)
    a += interference.mu / n
    return a


def draw_treatments(
    design: ExperimentDesign, n_units: int, rng: np.random.Generator
) -> np.ndarray:
    """Assignment matrix (T x N) following the design mode.

    Two-stage static draws one Bernoulli vector per stage (independent
    redraw at the boundary); staggered roll-out tops up stage-1 controls with
    probability (pi2 - pi1)/(1 - pi1); micro-randomized redraws every period.
    """
    t1, t2, n = design.t1, design.t2, n_units
    if design.all_control_override:
        return np.zeros((t1 + t2, n))
    if design.all_treated_override:
        return np.ones((t1 + t2, n))
    mode = design.mode
    if mode is AssignmentMode.MICRO_RANDOMIZED:
        w = np.empty((t1 + t2, n))
        for t in range(t1 + t2):
            w[t] = rng.random(n) < design.pi_at(t)
        return w
    w1 = (rng.random(n) < design.pi1).astype(float)
    if mode is AssignmentMode.STAGGERED_ROLLOUT:
        if design.pi1 >= 1.0:
            w2 = w1.copy()
        else:
            top_up = (design.pi2 - design.pi1) / (1.0 - design.pi1)
            w2 = np.maximum(w1, (rng.random(n) < top_up).astype(float))
    else:
        w2 = (rng.random(n) < design.pi2).astype(float)
    w = np.empty((t1 + t2, n))
    w[:t1] = w1
    w[t1:] = w2
    return w


def _unit_coefs(
    params: LinearOutcomeParams, n_units: int, rng: np.random.Generator
) -> Optional[np.ndarray]:
    """Per-unit coefficient matrix (N x 5), or None when homogeneous."""
    sds = np.asarray(params.unit_coef_sd)
    if not sds.any():
        return None
    return params.means + sds * rng.standard_normal((n_units, 5))


def _eval_g(
    params_or_g: ParamsOrG,
    coefs: Optional[np.ndarray],
    y: np.ndarray,
    w: Union[float, np.ndarray],
) -> np.ndarray:
    if isinstance(params_or_g, OutcomeFunction):
        return np.asarray(params_or_g.evaluator(y, w))
    p = params_or_g
    if coefs is None:
        return p.delta + p.theta_bar + p.xi * y + (p.lam + p.gamma * y) * np.asarray(w)
    d, x, l, c, th = coefs.T
    return d + th + x * y + (l + c * y) * np.asarray(w)


def _streamed_gaussian_matmul(
    rng: np.random.Generator,
    mu: float,
    sigma: float,
    n: int,
    m: np.ndarray,
    out: np.ndarray,
) -> None:
    """Accumulate (mu/n 11^T + sigma/sqrt(n) G) @ m into out without holding G."""
    base = (mu / n) * m.sum(axis=0)
    scale = sigma / math.sqrt(n)
    dtype = m.dtype
    for i0 in range(0, n, _BLOCK):
        rows = min(_BLOCK, n - i0)
        g = rng.standard_normal((rows, n), dtype=dtype)
        out[i0 : i0 + rows] += base + scale * (g @ m)


def _simulate_regimes(
    n_units: int,
    design: ExperimentDesign,
    params_or_g: ParamsOrG,
    interference: InterferenceSpec,
    noise: NoiseSpec,
    streams: StreamFactory,
    regimes: Sequence[str],
    y0: Optional[np.ndarray],
    burn_in: int,
    dtype,
) -> list[PanelData]:
    """Run one coupled simulation for several treatment regimes.

    ``regimes`` entries are "design", "all0", or "all1". All non-treatment
    randomness (A, B_t, noise, coefficients, y0) is shared across regimes,
    both within this call and across separate calls with the same streams.
    """
    n, t_horizon = n_units, design.horizon
    if y0 is None:
        y0 = streams.stream("y0").standard_normal(n)
    else:
        y0 = np.asarray(y0, dtype=float)
        if y0.shape != (n,):
            raise ValueError("y0 must have length n_units")

    coefs = None
    if isinstance(params_or_g, LinearOutcomeParams):
        coefs = _unit_coefs(params_or_g, n, streams.stream("coef"))

    a = sample_fixed_interference(n, interference, streams.stream("A"), dtype=dtype)
    has_tv = interference.mu_t != 0.0 or interference.sigma_t != 0.0
    if has_tv and not interference.resample_time_varying:
        tv = InterferenceSpec(mu=interference.mu_t, sigma=interference.sigma_t)
        a += sample_fixed_interference(n, tv, streams.stream("B_fixed"), dtype=dtype)
        has_tv = False
    rng_tv = streams.stream("B") if has_tv else None
    rng_noise = streams.stream("noise")

    treat_mats: dict[str, np.ndarray] = {}
    for regime in regimes:
        if regime == "design":
            treat_mats[regime] = draw_treatments(design, n, streams.stream("treat"))
        elif regime == "all0":
            treat_mats[regime] = np.zeros((t_horizon, n))
        elif regime == "all1":
            treat_mats[regime] = np.ones((t_horizon, n))
        else:
            raise ValueError(f"unknown regime {regime!r}")

    def step(y_cols: np.ndarray, w_cols: np.ndarray, t_label: int) -> np.ndarray:
        m = np.empty_like(y_cols)
        for r in range(y_cols.shape[1]):
            m[:, r] = _eval_g(params_or_g, coefs, y_cols[:, r], w_cols[:, r])
        out = a @ m
        if rng_tv is not None:
            _streamed_gaussian_matmul(
                rng_tv, interference.mu_t, interference.sigma_t, n, m, out
            )
        if noise.sigma_e > 0:
            out += (noise.sigma_e * rng_noise.standard_normal(n))[:, None].astype(
                dtype, copy=False
            )
        if np.max(np.abs(out)) > _OVERFLOW:
            raise DivergenceError(f"outcome overflow at time step {t_label}")
        return out

    # Burn-in under all-control; regimes share the post-burn-in state.
    y = y0.astype(dtype)[:, None]
    zeros = np.zeros((n, 1))
    for b in range(burn_in):
        y = step(y, zeros, b - burn_in)

    n_reg = len(regimes)
    outcomes = [np.empty((n, t_horizon + 1)) for _ in range(n_reg)]
    for r in range(n_reg):
        outcomes[r][:, 0] = y[:, 0]
    y_cols = np.repeat(y, n_reg, axis=1)
    w_cols = np.empty((n, n_reg), dtype=dtype)
    for t in range(t_horizon):
        for r, regime in enumerate(regimes):
            w_cols[:, r] = treat_mats[regime][t]
        y_cols = step(y_cols, w_cols, t)
        for r in range(n_reg):
            outcomes[r][:, t + 1] = y_cols[:, r]

    return [
        PanelData(outcomes=outcomes[r], treatments=treat_mats[regime])
        for r, regime in enumerate(regimes)
    ]


def simulate_panel(
    n_units: int,
    design: ExperimentDesign,
    params_or_g: ParamsOrG,
    interference: InterferenceSpec,
    noise: NoiseSpec,
    streams: StreamFactory,
    y0: Optional[np.ndarray] = None,
    burn_in: int = 0,
    dtype=np.float64,
) -> PanelData:
    """Simulate one observed panel under the design's assignment mode."""
    regime = "design"
    if design.all_control_override:
        regime = "all0"
    elif design.all_treated_override:
        regime = "all1"
    return _simulate_regimes(
        n_units,
        design,
        params_or_g,
        interference,
        noise,
        streams,
        [regime],
        y0,
        burn_in,
        dtype,
    )[0]


def _truth_from_pair(panel0: PanelData, panel1: PanelData) -> np.ndarray:
    truth = panel1.outcomes.mean(axis=0) - panel0.outcomes.mean(axis=0)
    truth[0] = 0.0  # shared initial state
    return truth


def counterfactual_pair(
    n_units: int,
    design: ExperimentDesign,
    params_or_g: ParamsOrG,
    interference: InterferenceSpec,
    noise: NoiseSpec,
    streams: StreamFactory,
    y0: Optional[np.ndarray] = None,
    burn_in: int = 0,
    dtype=np.float64,
) -> tuple[PanelData, PanelData, np.ndarray]:
    """All-control and all-treated twins plus the ground-truth effect path."""
    panel0, panel1 = _simulate_regimes(
        n_units,
        design,
        params_or_g,
        interference,
        noise,
        streams,
        ["all0", "all1"],
        y0,
        burn_in,
        dtype,
    )
    return panel0, panel1, _truth_from_pair(panel0, panel1)


def simulate_with_truth(
    n_units: int,
    design: ExperimentDesign,
    params_or_g: ParamsOrG,
    interference: InterferenceSpec,
    noise: NoiseSpec,
    streams: StreamFactory,
    y0: Optional[np.ndarray] = None,
    burn_in: int = 0,
    dtype=np.float64,
) -> tuple[PanelData, np.ndarray]:
    """Observed panel plus coupled ground truth, sharing one pass over A/B_t."""
    panel, panel0, panel1 = _simulate_regimes(
        n_units,
        design,
        params_or_g,
        interference,
        noise,
        streams,
        ["design", "all0", "all1"],
        y0,
        burn_in,
        dtype,
    )
    return panel, _truth_from_pair(panel0, panel1)
