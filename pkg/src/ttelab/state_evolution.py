"""One-dimensional forecast of the mean/sd of the outcome distribution.

The recursion maps (nu_t, rho_t) to (nu_{t+1}, rho_{t+1}) via

    nu'    = (mu + mu_t) * E[g(nu + rho*Z, W)]
    rho'^2 = (sigma^2 + sigma_t^2) * E[g(nu + rho*Z, W)^2] + sigma_e^2

with Z ~ N(0,1) and W ~ Bernoulli(pi) independent. For the linear outcome
family both expectations have closed forms; for arbitrary g they are computed
by Gauss-Hermite quadrature or Monte Carlo, with the Bernoulli treatment
always marginalized exactly as a two-point mixture.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core import (
    DivergenceError,
    ExperimentDesign,
    InterferenceSpec,
    LinearOutcomeParams,
    NoiseSpec,
    PanelData,
    SEState,
)

_NEG_VAR_TOL = 1e-12


@dataclass(frozen=True)
class OutcomeFunction:
    """Pluggable outcome map g(y, w) with a declared polynomial growth bound.

    ``evaluator`` must be deterministic, vectorized over ``y`` (ndarray), and
    accept ``w`` as a scalar 0/1 or a broadcastable array.
    """

    evaluator: Callable[[np.ndarray, Union[float, np.ndarray]], np.ndarray]
    growth_order: int = 2


class QuadratureMethod(Enum):
    GAUSS_HERMITE = "gauss_hermite"
    MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class QuadratureSpec:
    method: QuadratureMethod = QuadratureMethod.GAUSS_HERMITE
    nodes_or_draws: int = 64
    mc_seed: Optional[int] = None

    def __post_init__(self):
        if self.nodes_or_draws < 1:
            raise ValueError("nodes_or_draws must be >= 1")


def linear_outcome_function(params: LinearOutcomeParams) -> OutcomeFunction:
    """Linear-family evaluator using the population-mean coefficients."""

    def g(y, w):
        return (
            params.delta
            + params.theta_bar
            + params.xi * y
            + (params.lam + params.gamma * y) * np.asarray(w)
        )

    return OutcomeFunction(evaluator=g, growth_order=2)


def _finish_step(nu_next: float, var_next: float) -> SEState:
    if var_next < -_NEG_VAR_TOL:
        raise DivergenceError(f"negative variance {var_next} in forecast step")
    var_next = max(var_next, 0.0)
    if not (np.isfinite(nu_next) and np.isfinite(var_next)):
        raise DivergenceError("non-finite forecast step (divergent dynamics)")
    return SEState(nu=float(nu_next), rho=float(math.sqrt(var_next)))


def se_step_linear(
    state: SEState,
    params: LinearOutcomeParams,
    treat_prob: float,
    interference: InterferenceSpec,
    noise: NoiseSpec,
) -> SEState:
    """One forecast step for the linear family, in closed form (no sampling)."""
    if not 0.0 <= treat_prob <= 1.0:
        raise ValueError("treat_prob must lie in [0, 1]")
    nu, rho = state.nu, state.rho
    pi = treat_prob
    base = params.delta + params.theta_bar
    e_y = nu
    e_y2 = nu * nu + rho * rho

    e_g = base + params.xi * nu + pi * (params.lam + params.gamma * nu)
    # E[(a + b*Y)^2] = a^2 + 2ab E[Y] + b^2 E[Y^2], mixed over W in {0, 1}
    a1, b1 = base + params.lam, params.xi + params.gamma
    a0, b0 = base, params.xi
    e_g2 = pi * (a1 * a1 + 2 * a1 * b1 * e_y + b1 * b1 * e_y2) + (1 - pi) * (
        a0 * a0 + 2 * a0 * b0 * e_y + b0 * b0 * e_y2
    )
    nu_next = interference.mean_total * e_g
    var_next = interference.var_total * e_g2 + noise.sigma_e**2
    return _finish_step(nu_next, var_next)


def _gaussian_nodes(quad: QuadratureSpec) -> tuple[np.ndarray, np.ndarray]:
    """Points and probability weights for E[f(Z)], Z ~ N(0,1)."""
    if quad.method is QuadratureMethod.GAUSS_HERMITE:
        x, w = np.polynomial.hermite_e.hermegauss(quad.nodes_or_draws)
        return x, w / math.sqrt(2.0 * math.pi)
    rng = np.random.default_rng(quad.mc_seed)
    z = rng.standard_normal(quad.nodes_or_draws)
    return z, np.full(quad.nodes_or_draws, 1.0 / quad.nodes_or_draws)


def se_step_general(
    state: SEState,
    g: OutcomeFunction,
    treat_prob: float,
    interference: InterferenceSpec,
    noise: NoiseSpec,
    quad: QuadratureSpec = QuadratureSpec(),
) -> SEState:
    """One forecast step for an arbitrary outcome map.

    The Gaussian expectation is discretized per ``quad``; the Bernoulli
    treatment is marginalized exactly as a two-point mixture.
    """
    if not 0.0 <= treat_prob <= 1.0:
        raise ValueError("treat_prob must lie in [0, 1]")
    if (
        quad.method is QuadratureMethod.GAUSS_HERMITE
        and quad.nodes_or_draws < g.growth_order + 1
    ):
        raise ValueError(
            f"{quad.nodes_or_draws} nodes insufficient for growth order {g.growth_order}"
        )
    z, wts = _gaussian_nodes(quad)
    y = state.nu + state.rho * z
    pi = treat_prob
    g1 = np.asarray(g.evaluator(y, 1.0), dtype=float)
    g0 = np.asarray(g.evaluator(y, 0.0), dtype=float)
    e_g = pi * float(wts @ g1) + (1 - pi) * float(wts @ g0)
    e_g2 = pi * float(wts @ (g1 * g1)) + (1 - pi) * float(wts @ (g0 * g0))
    if not (np.isfinite(e_g) and np.isfinite(e_g2)):
        raise DivergenceError("non-finite quadrature sum")
    nu_next = interference.mean_total * e_g
    var_next = interference.var_total * e_g2 + noise.sigma_e**2
    return _finish_step(nu_next, var_next)


def se_trajectory(
    init: SEState,
    design: ExperimentDesign,
    params_or_g: Union[LinearOutcomeParams, OutcomeFunction],
    interference: InterferenceSpec,
    noise: NoiseSpec,
    quad: Optional[QuadratureSpec] = None,
) -> list[SEState]:
    """Iterate the forecast over the design horizon; index 0 is ``init``.

    The treatment probability follows the design schedule (pi1 for the first
    stage, pi2 after), or is forced to 0/1 under counterfactual overrides.
    """
    states = [init]
    for t in range(design.horizon):
        pi = design.pi_at(t)
        try:
            if isinstance(params_or_g, LinearOutcomeParams):
                nxt = se_step_linear(states[-1], params_or_g, pi, interference, noise)
            else:
                nxt = se_step_general(
                    states[-1],
                    params_or_g,
                    pi,
                    interference,
                    noise,
                    quad or QuadratureSpec(),
                )
        except DivergenceError as exc:
            raise DivergenceError(f"forecast diverged at step t={t}: {exc}") from exc
        states.append(nxt)
    return states


def trajectory_means(states: Sequence[SEState]) -> np.ndarray:
    return np.array([s.nu for s in states])


def empirical_moments(panel: PanelData) -> np.ndarray:
    """Per-time (mean, sd) with population normalization 1/N; shape (T+1, 2)."""
    if panel.n_units < 2:
        raise ValueError("need N >= 2 for the sd")
    y = panel.outcomes
    mean = y.mean(axis=0)
    second = (y * y).mean(axis=0)
    var = np.maximum(second - mean * mean, 0.0)
    return np.column_stack([mean, np.sqrt(var)])
