"""The four benchmark data-generating processes sharing one panel interface.

Every simulator takes an ExperimentDesign plus a StreamFactory; running it
again with an all-control / all-treated override on the same streams replays
the identical graph, noise, and event randomness, which is how ground-truth
counterfactual twins are produced.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (
    AssignmentMode,
    DivergenceError,
    ExperimentDesign,
    PanelData,
    StreamFactory,
)
from .gaussian_sim import draw_treatments
from .graphs import Graph
from .jsq import draw_poisson_arrivals, run_jsq

_OVERFLOW = 1e12


@dataclass(frozen=True)
class LiMParams:
    """Coefficients of the linear-in-means update plus the RGG degree target."""

    alpha: float = -1.0
    beta: float = 0.8
    delta: float = 1.0
    gamma: float = 1.0
    kappa: float = 8.0

    def __post_init__(self):
        vals = (self.alpha, self.beta, self.delta, self.gamma, self.kappa)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("parameters must be finite")
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0")


@dataclass(frozen=True)
class MRTParams:
    """Success-probability coefficients of the binary contagion update."""

    alpha: float = 0.5
    beta: float = 0.04
    gamma: float = 0.04
    delta: float = 0.01
    p_edge: float = 0.0015

    def __post_init__(self):
        vals = (self.alpha, self.beta, self.gamma, self.delta)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("parameters must be finite")
        if not 0.0 <= self.p_edge <= 1.0:
            raise ValueError("p_edge must lie in [0, 1]")


@dataclass(frozen=True)
class QueueParams:
    arrival_rate_factor: float = 0.95
    base_service_rate: float = 1.0
    treated_service_rate: float = 2.0

    def __post_init__(self):
        if min(
            self.arrival_rate_factor,
            self.base_service_rate,
            self.treated_service_rate,
        ) <= 0:
            raise ValueError("all rates must be > 0")
        if self.arrival_rate_factor >= max(
            self.base_service_rate, self.treated_service_rate
        ):
            raise ValueError("arrival rate exceeds any achievable service capacity")


def simulate_linear_in_means(
    graph: Graph,
    params: LiMParams,
    design: ExperimentDesign,
    streams: StreamFactory,
    noise_mode: str = "homophily",
    burn_in: int = 10,
    noise_redraw: bool = True,
) -> PanelData:
    """Neighbor-average outcome dynamics on a fixed graph.

    y' = alpha + beta * avg_nbr(y) + delta * avg_nbr(w) + gamma * w + eps,
    with neighborhood terms defined as 0 for degree-0 vertices. In homophily
    mode the noise is (first coordinate - 0.5) + N(0,1); in gaussian mode it
    is pure N(0,1). Noise is redrawn each period unless ``noise_redraw`` is
    off. Burn-in runs under all-control from a zero initial state.
    """
    overridden = design.all_control_override or design.all_treated_override
    if design.mode is not AssignmentMode.STAGGERED_ROLLOUT and not overridden:
        raise ValueError("linear-in-means scenario uses a staggered roll-out design")
    if noise_mode not in ("homophily", "gaussian"):
        raise ValueError(f"unknown noise_mode {noise_mode!r}")
    if noise_mode == "homophily" and graph.vertex_positions is None:
        raise ValueError("homophily noise needs vertex positions")

    n = graph.n_vertices
    t_horizon = design.horizon
    adj = graph.adjacency()
    deg = graph.degrees.astype(float)
    inv_deg = np.where(deg > 0, 1.0 / np.maximum(deg, 1.0), 0.0)
    shift = (
        graph.vertex_positions[:, 0] - 0.5 if noise_mode == "homophily" else 0.0
    )
    rng_noise = streams.stream("noise")
    w_mat = draw_treatments(design, n, streams.stream("treat"))

    fixed_eps = None
    if not noise_redraw:
        fixed_eps = shift + rng_noise.standard_normal(n)

    def draw_eps():
        if fixed_eps is not None:
            return fixed_eps
        return shift + rng_noise.standard_normal(n)

    def step(y, w, t_label):
        out = (
            params.alpha
            + params.beta * inv_deg * (adj @ y)
            + params.delta * inv_deg * (adj @ w)
            + params.gamma * w
            + draw_eps()
        )
        if np.max(np.abs(out)) > _OVERFLOW:
            raise DivergenceError(f"outcome overflow at time step {t_label}")
        return out

    y = np.zeros(n)
    zeros = np.zeros(n)
    for b in range(burn_in):
        y = step(y, zeros, b - burn_in)
    outcomes = np.empty((n, t_horizon + 1))
    outcomes[:, 0] = y
    for t in range(t_horizon):
        y = step(y, w_mat[t], t)
        outcomes[:, t + 1] = y
    return PanelData(outcomes=outcomes, treatments=w_mat)


def simulate_binary_mrt(
    graph: Graph,
    params: MRTParams,
    design: ExperimentDesign,
    streams: StreamFactory,
    burn_in: int = 10,
) -> PanelData:
    """Binary contagion outcomes with per-period re-randomized treatment.

    The success probability alpha + beta*w*Z + gamma*y*Z + delta*w*y*Z (Z =
    number of neighbors with outcome 1) is clamped to [0, 1]. Outcomes are
    drawn by thresholding shared uniforms, so twin runs stay coupled.
    """
    overridden = design.all_control_override or design.all_treated_override
    if design.mode is not AssignmentMode.MICRO_RANDOMIZED and not overridden:
        raise ValueError("binary MRT scenario uses a micro-randomized design")
    n = graph.n_vertices
    t_horizon = design.horizon
    adj = graph.adjacency()
    rng_u = streams.stream("outcome")
    w_mat = draw_treatments(design, n, streams.stream("treat"))

    def step(y, w):
        z = adj @ y
        p = (
            params.alpha
            + params.beta * w * z
            + params.gamma * y * z
            + params.delta * w * y * z
        )
        np.clip(p, 0.0, 1.0, out=p)
        return (rng_u.random(n) < p).astype(float)

    y = (streams.stream("y0").random(n) < params.alpha).astype(float)
    zeros = np.zeros(n)
    for _ in range(burn_in):
        y = step(y, zeros)
    outcomes = np.empty((n, t_horizon + 1))
    outcomes[:, 0] = y
    for t in range(t_horizon):
        y = step(y, w_mat[t])
        outcomes[:, t + 1] = y
    return PanelData(outcomes=outcomes, treatments=w_mat)


def simulate_jsq_queue(
    n_servers: int,
    params: QueueParams,
    design: ExperimentDesign,
    streams: StreamFactory,
    burn_in: int = 10,
    queue_cap: int = 1024,
) -> PanelData:
    """Per-server busy time per unit interval under JSQ routing.

    The recorded outcome at time 0 is a final all-control interval; stage-1
    treatment takes effect from interval 1 and is re-randomized independently
    at the stage-2 boundary. Rates change only for services starting after a
    boundary (in-service jobs are not preempted).
    """
    overridden = design.all_control_override or design.all_treated_override
    if design.mode is not AssignmentMode.TWO_STAGE_STATIC and not overridden:
        raise ValueError("queue scenario uses a two-stage static design")
    n = n_servers
    t_horizon = design.horizon
    total_time = burn_in + t_horizon + 1

    if design.all_control_override:
        w1 = w2 = np.zeros(n)
    elif design.all_treated_override:
        w1 = w2 = np.ones(n)
    else:
        rng_t = streams.stream("treat")
        w1 = (rng_t.random(n) < design.pi1).astype(float)
        w2 = (rng_t.random(n) < design.pi2).astype(float)

    base, fast = params.base_service_rate, params.treated_service_rate
    rate1 = base + (fast - base) * w1
    rate2 = base + (fast - base) * w2
    rate_by_interval = np.empty((total_time, n))
    rate_by_interval[: burn_in + 1] = base
    rate_by_interval[burn_in + 1 : burn_in + 1 + design.t1] = rate1
    rate_by_interval[burn_in + 1 + design.t1 :] = rate2

    lam = params.arrival_rate_factor * n
    arrivals = draw_poisson_arrivals(lam, total_time, streams.stream("arrivals"))
    works = streams.stream("work").exponential(1.0, arrivals.shape[0])
    tiebreaks = streams.stream("tiebreak").random(arrivals.shape[0])

    busy = run_jsq(arrivals, works, tiebreaks, rate_by_interval, queue_cap=queue_cap)
    outcomes = busy[burn_in:].T.copy()

    w_mat = np.empty((t_horizon, n))
    w_mat[: design.t1] = w1
    w_mat[design.t1 :] = w2
    return PanelData(outcomes=outcomes, treatments=w_mat)


def scenario_counterfactual_pair(
    sim: Callable[[ExperimentDesign, StreamFactory], PanelData],
    design: ExperimentDesign,
    streams: StreamFactory,
) -> tuple[PanelData, PanelData, np.ndarray]:
    """Ground-truth twins for any simulator with the (design, streams) shape.

    The two runs re-derive every labeled stream, so all non-treatment
    randomness is shared and the effect path is a common-random-number
    contrast. Index 0 is the shared pre-treatment state, so truth[0] = 0.
    """
    panel0 = sim(design.with_override(False), streams)
    panel1 = sim(design.with_override(True), streams)
    truth = panel1.outcomes.mean(axis=0) - panel0.outcomes.mean(axis=0)
    truth[0] = 0.0
    return panel0, panel1, truth
