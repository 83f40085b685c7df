"""Layer-subset optimizer: freeze the inactive layers, update the active ones.

Two step flavors mirror the two algorithm variants:

* ``det_step`` -- exact-gradient sharp-operator step,
  ``X_i <- X_i - gamma_i * sharp(grad_i)``, with the stepsize taken from the
  layer-wise smoothness constants (plain or gradient-dependent inverse).
* ``stoch_step`` -- momentum + LMO step, ``M_i <- (1 - beta_i) M_i + beta_i g_i``
  then ``X_i <- X_i + lmo(M_i, t_i)``; every applied update has primal norm
  exactly t_i.

The momentum convention is deliberately (1 - beta) M + beta g with *small*
beta meaning slow incorporation of fresh gradients: the horizon schedule sets
beta = (K+1)^{-1/2}, which only makes sense under this parametrization (the
mainstream Muon convention is the mirror image).

``run`` owns a model exclusively, splits a seedable stream per iteration so
traces replay bit-identically, and accumulates cost-model units when cost
parameters are supplied.  ``theory_weights`` exposes the per-layer rate
weights the convergence bounds are stated with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import costmodel, geometry, problems, sampling
from .costmodel import CostParams, SmoothnessTable
from .geometry import NormKind

__all__ = [
    "LayerModel",
    "MomentumState",
    "SmoothInverse",
    "GenSmoothInverse",
    "FixedRadius",
    "HorizonSchedule",
    "StepReport",
    "RunResult",
    "det_step",
    "stoch_step",
    "run",
    "TheoryWeights",
    "theory_weights",
    "smooth_rate_rhs",
    "horizon_eta_caps",
    "l0l1_iterations",
]

INIT_STREAM = 0  # stream(seed, 0) feeds initialization; iteration k uses stream(seed, k + 1)


@dataclass
class LayerModel:
    """Ordered layer matrices plus each layer's norm choice; shapes are fixed."""

    layers: list[np.ndarray]
    norms: list[NormKind]

    def __post_init__(self):
        self.layers = [geometry.check_matrix(x) for x in self.layers]
        if len(self.norms) != len(self.layers):
            raise ValueError("need one norm kind per layer")
        if not self.layers:
            raise ValueError("at least one layer required")

    @property
    def b(self) -> int:
        return len(self.layers)

    def copy(self) -> "LayerModel":
        return LayerModel([x.copy() for x in self.layers], list(self.norms))


@dataclass
class MomentumState:
    """Per-layer momentum buffers M_i and parameters beta_i in [0, 1]."""

    m: list[np.ndarray]
    beta: list[float]

    def __post_init__(self):
        if len(self.m) != len(self.beta):
            raise ValueError("need one beta per momentum buffer")
        for bi in self.beta:
            # beta = 1 is the fresh-gradient endpoint of the convex combination
            if not 0.0 <= bi <= 1.0:
                raise ValueError("beta must lie in [0, 1]")


@dataclass(frozen=True)
class SmoothInverse:
    """gamma_i = 1 / L0_{i,S}; exact-gradient path."""


@dataclass(frozen=True)
class GenSmoothInverse:
    """gamma_i = 1 / (L0_{i,S} + L1_{i,S} ||grad_i||_dual); exact-gradient path."""


@dataclass(frozen=True)
class FixedRadius:
    """Constant per-layer LMO radii t_i with momentum parameter beta."""

    radii: tuple[float, ...]
    beta: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "radii", tuple(float(t) for t in self.radii))
        if any(t <= 0 for t in self.radii):
            raise ValueError("radii must be positive")


@dataclass(frozen=True)
class HorizonSchedule:
    """t_i = eta_i / (K+1)^{3/4}, beta = (K+1)^{-1/2}, M0 = stochastic gradient at X0.

    The horizon-dependent radius/momentum schedule of the stochastic
    convergence guarantee.  The bound's eta_i caps involve constants that are
    unknown in practice; the default eta_i = 1 matches the shared-constant
    learning rates the training experiments use, and eta is configurable.
    """

    eta: tuple[float, ...] | None = None

    def radii(self, b: int, horizon: int) -> np.ndarray:
        eta = np.ones(b) if self.eta is None else np.asarray(self.eta, dtype=float)
        if eta.shape != (b,):
            raise ValueError("eta must have one entry per layer")
        return eta / (horizon + 1) ** 0.75

    @staticmethod
    def beta(horizon: int) -> float:
        return 1.0 / math.sqrt(horizon + 1)


StepPolicy = SmoothInverse | GenSmoothInverse | FixedRadius | HorizonSchedule


@dataclass
class StepReport:
    """Per-iteration record of what the step saw and applied."""

    active: frozenset[int]
    f_before: float | None = None
    f_after: float | None = None
    grad_dual_norms: dict[int, float] = field(default_factory=dict)
    applied: dict[int, float] = field(default_factory=dict)  # stepsize or radius, active layers
    momentum_error: dict[int, float] | None = None           # ||M_i - grad_i||_dual
    degenerate: frozenset[int] = frozenset()
    cost_units: float | None = None
    k: int | None = None


@dataclass
class RunResult:
    model: LayerModel
    reports: list[StepReport]
    f_final: float
    cumulative_cost: float | None


def _dual_norms(model: LayerModel, grads: Sequence[np.ndarray]) -> dict[int, float]:
    return {
        i: geometry.dual_norm(model.norms[i - 1], g)
        for i, g in enumerate(grads, start=1)
    }


def _apply_det_updates(
    model: LayerModel,
    grads: Sequence[np.ndarray],
    dual_norms: dict[int, float],
    active: frozenset[int],
    policy: SmoothInverse | GenSmoothInverse,
    table: SmoothnessTable,
) -> dict[int, float]:
    """In-place sharp-operator updates on the active layers; returns stepsizes."""
    key = table.key_for(active)
    applied = {}
    for i in sorted(active):
        l0 = table.require(i, key)
        denom = l0
        if isinstance(policy, GenSmoothInverse):
            denom = l0 + table.require(i, key, "l1") * dual_norms[i]
        if denom <= 0.0:
            raise ValueError(f"non-positive stepsize denominator for layer {i}")
        gamma = 1.0 / denom
        model.layers[i - 1] -= gamma * geometry.sharp(model.norms[i - 1], grads[i - 1])
        applied[i] = gamma
    return applied


def det_step(
    model: LayerModel,
    value_and_grad: Callable[[Sequence[np.ndarray]], tuple[float, list[np.ndarray]]],
    active: frozenset[int],
    policy: SmoothInverse | GenSmoothInverse,
    table: SmoothnessTable,
) -> StepReport:
    """One exact-gradient step on the active layers; frozen layers untouched.

    Updates the model in place: X_i -= gamma_i * sharp(grad_i) for i in the
    active set.  Raises KeyError naming the (layer, set) pair when the table
    lacks a needed constant.
    """
    if not isinstance(policy, (SmoothInverse, GenSmoothInverse)):
        raise TypeError("det_step needs a smoothness-inverse policy")
    f_before, grads = value_and_grad(model.layers)
    norms = _dual_norms(model, grads)
    applied = _apply_det_updates(model, grads, norms, active, policy, table)
    f_after, _ = value_and_grad(model.layers)
    return StepReport(
        active=active,
        f_before=f_before,
        f_after=f_after,
        grad_dual_norms=norms,
        applied=applied,
    )


def stoch_step(
    model: LayerModel,
    grad_oracle: Callable[[Sequence[np.ndarray]], list[np.ndarray]],
    momentum: MomentumState,
    active: frozenset[int],
    radii: Sequence[float],
    ns_config: geometry.NewtonSchulzConfig | None = None,
) -> StepReport:
    """One momentum + LMO step on the active layers.

    For i not active, M_i and X_i are untouched (bit-identical).  For active
    layers the momentum is refreshed from the oracle and the parameters move
    by the radius-t_i LMO step, i.e. a normalized steepest-descent step of
    primal norm exactly t_i.  A zero refreshed momentum leaves the layer in
    place and is flagged degenerate.

    ``ns_config`` switches spectral-norm layers from the exact-SVD LMO to the
    Newton-Schulz approximate orthogonalization (the cheap optimizer path; the
    step norm then only approximates t_i, which is why property tests pin the
    SVD path).
    """
    radii = np.asarray(radii, dtype=float)
    if radii.shape != (model.b,):
        raise ValueError("need one radius per layer")
    grads = grad_oracle(model.layers)
    degenerate = set()
    applied = {}
    for i in sorted(active):
        bi = momentum.beta[i - 1]
        momentum.m[i - 1] = (1.0 - bi) * momentum.m[i - 1] + bi * grads[i - 1]
        m = momentum.m[i - 1]
        t = float(radii[i - 1])
        if ns_config is not None and model.norms[i - 1] == NormKind.SPECTRAL and m.any():
            model.layers[i - 1] -= t * geometry.newton_schulz(m, ns_config)
            applied[i] = t
            continue
        step = geometry.lmo(model.norms[i - 1], m, t)
        if step.degenerate:
            degenerate.add(i)
            continue
        model.layers[i - 1] += step.step
        applied[i] = t
    return StepReport(active=active, applied=applied, degenerate=frozenset(degenerate))


def run(
    problem,
    scheme: sampling.SamplingScheme | sampling.EpochShiftRpt,
    policy: StepPolicy,
    iterations: int,
    seed: int,
    *,
    norms: Sequence[NormKind] | None = None,
    x0: Sequence[np.ndarray] | None = None,
    table: SmoothnessTable | None = None,
    noise: problems.NoiseSpec | None = None,
    cost_params: CostParams | None = None,
    momentum_init: str = "grad",
    newton_schulz_cfg: geometry.NewtonSchulzConfig | None = None,
    on_step: Callable[[int, LayerModel, StepReport], None] | None = None,
) -> RunResult:
    """Drive the optimizer for ``iterations`` steps; deterministic given the seed.

    Stream-splitting rule: stream(seed, 0) feeds initialization draws (e.g.
    the momentum-initializing stochastic gradient), stream(seed, k + 1) feeds
    iteration k, which consumes first the active-set draw, then the gradient
    noise.  Replaying any iteration therefore needs only (seed, k).

    An ``EpochShiftRpt`` scheme is rematerialized each iteration at progress
    k / K.  ``newton_schulz_cfg`` selects the approximate-orthogonalization
    backend for spectral layers on the stochastic path.

    Reports carry exact per-layer dual gradient norms and f values as
    diagnostics (the stochastic path's *updates* see only the noisy oracle).
    """
    b = problem.b
    if scheme.b != b:
        raise ValueError("scheme and problem disagree on layer count")
    norms = list(norms) if norms is not None else [NormKind.EUCLIDEAN] * b
    layers = (
        [np.array(x, dtype=float) for x in x0]
        if x0 is not None
        else [np.zeros(s) for s in problem.shapes]
    )
    model = LayerModel(layers, norms)

    deterministic = isinstance(policy, (SmoothInverse, GenSmoothInverse))
    if deterministic and table is None:
        raise ValueError("smoothness-inverse policies need a SmoothnessTable")

    momentum = None
    radii = None
    if isinstance(policy, FixedRadius):
        if len(policy.radii) != b:
            raise ValueError("need one radius per layer")
        radii = np.asarray(policy.radii)
        beta = [policy.beta] * b
        if momentum_init == "grad":
            init_rng = sampling.stream(seed, INIT_STREAM)
            m0 = problems.stoch_grad(problem, model.layers, noise, init_rng)
        elif momentum_init == "zeros":
            m0 = [np.zeros(s) for s in problem.shapes]
        else:
            raise ValueError("momentum_init must be 'grad' or 'zeros'")
        momentum = MomentumState([m.copy() for m in m0], beta)
    elif isinstance(policy, HorizonSchedule):
        if momentum_init != "grad":
            raise ValueError(
                "the horizon schedule requires gradient momentum initialization"
            )
        radii = policy.radii(b, iterations)
        beta = [HorizonSchedule.beta(iterations)] * b
        init_rng = sampling.stream(seed, INIT_STREAM)
        m0 = problems.stoch_grad(problem, model.layers, noise, init_rng)
        momentum = MomentumState([m.copy() for m in m0], beta)

    reports: list[StepReport] = []
    cumulative = 0.0 if cost_params is not None else None
    f_curr, grads = problem.value_and_grad(model.layers)
    for k in range(iterations):
        rng = sampling.stream(seed, k + 1)
        scheme_k = scheme
        if isinstance(scheme, sampling.EpochShiftRpt):
            scheme_k = scheme.at(k / iterations)
        active = sampling.sample(scheme_k, rng)
        norms_map = _dual_norms(model, grads)

        if deterministic:
            try:
                applied = _apply_det_updates(model, grads, norms_map, active, policy, table)
            except (KeyError, ValueError) as exc:
                raise type(exc)(f"iteration {k}: {exc}") from exc
            report = StepReport(
                active=active,
                grad_dual_norms=norms_map,
                applied=applied,
            )
        else:
            g_stoch = problems.stoch_grad(problem, model.layers, noise, rng)
            report = stoch_step(
                model, lambda _layers: g_stoch, momentum, active, radii,
                ns_config=newton_schulz_cfg,
            )
            report.grad_dual_norms = norms_map
            report.momentum_error = {
                i: geometry.dual_norm(model.norms[i - 1], momentum.m[i - 1] - grads[i - 1])
                for i in range(1, b + 1)
            }

        report.k = k
        report.f_before = f_curr
        f_curr, grads = problem.value_and_grad(model.layers)
        report.f_after = f_curr
        if cost_params is not None:
            report.cost_units = costmodel.iteration_cost(active, cost_params)
            cumulative += report.cost_units
        if on_step is not None:
            on_step(k, model, report)
        reports.append(report)

    return RunResult(model, reports, f_curr, cumulative)


# ---------------------------------------------------------------------------
# Rate weights and iteration-count bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TheoryWeights:
    w: np.ndarray
    mean: float
    regime: str


def theory_weights(
    p: Sequence[float],
    table: SmoothnessTable,
    regime: str,
    eta: Sequence[float] | None = None,
) -> TheoryWeights:
    """Per-layer rate weights for an RPT cutoff distribution.

    smooth:     w_i = sum_{s<=i} p_s / (2 L0_{i,{s..b}})
    l0l1:       w_i = (sum_{s<=i} p_s)^2 / sum_{s<=i} p_s L1_{i,{s..b}}
    stochastic: w_i = (sum_{s<=i} p_s) * eta_i

    Raises if any weight is zero (that layer is never updated and no rate
    holds).
    """
    p = np.asarray(p, dtype=float)
    if regime == "smooth":
        w = costmodel.rpt_smooth_weights(p, table)
    elif regime == "l0l1":
        w = costmodel.rpt_l0l1_weights(p, table)
    elif regime == "stochastic":
        eta_arr = np.ones(table.b) if eta is None else np.asarray(eta, dtype=float)
        w = np.cumsum(p) * eta_arr
    else:
        raise ValueError(f"unknown regime {regime!r}")
    if np.any(w <= 0.0):
        i = int(np.argmin(w)) + 1
        raise ValueError(f"layer {i} never updated (weight 0)")
    return TheoryWeights(w, float(w.mean()), regime)


def smooth_rate_rhs(delta0: float, iterations: int, weights: TheoryWeights) -> float:
    """Right-hand side of the smooth-regime rate: delta0 / (K * mean(w))."""
    return delta0 / (iterations * weights.mean)


def horizon_eta_caps(
    p: Sequence[float],
    table: SmoothnessTable,
    horizon: int,
    rho_ratio: Sequence[float] | float = 1.0,
) -> np.ndarray:
    """Per-layer caps on eta_i^2 under which the horizon-schedule guarantee holds.

    The stochastic bound constrains eta_i^2 by the smaller of a horizon term
    and a sampling term (both built from the L1 constants and the cutoff
    distribution), capped at 1.  ``rho_ratio`` is the per-layer ratio of the
    norm-equivalence constants (1 for Euclidean layers).  Diagnostic only: the
    default eta = 1 mirrors the shared constant learning rate used in training
    practice, and these caps report how conservative that is.
    """
    p = np.asarray(p, dtype=float)
    b = table.b
    rho = np.broadcast_to(np.asarray(rho_ratio, dtype=float), (b,))
    beta = HorizonSchedule.beta(horizon)
    # E[max_l L1_{l, S}] over the cutoff draw
    e_max_l1 = sum(
        p[s - 1] * max(table.require(i, s, "l1") for i in range(s, b + 1))
        for s in range(1, b + 1)
        if p[s - 1] > 0
    )
    caps = np.ones(b)
    cum = np.cumsum(p)
    for i in range(1, b + 1):
        a1 = sum(p[s - 1] * table.require(i, s, "l1") for s in range(1, i + 1) if p[s - 1] > 0)
        if a1 <= 0 or e_max_l1 <= 0:
            continue
        horizon_term = math.sqrt(horizon + 1) / (4.0 * a1 * e_max_l1)
        sampling_term = (
            p[0] / (rho[i - 1] * 16.0 * (1.0 - beta)) / (cum[i - 1] * a1 * e_max_l1)
            if p[0] > 0 and beta < 1.0
            else math.inf
        )
        caps[i - 1] = min(horizon_term, sampling_term, 1.0)
    return caps


def l0l1_iterations(
    p: Sequence[float], table: SmoothnessTable, delta0: float, eps: float
) -> int:
    """Iterations sufficient for the weighted dual-gradient-norm criterion <= eps.

    Two-term bound: a 1/eps^2 term with the mixed L0/L1 sums plus a 1/eps
    term, both normalized by the mean weight.
    """
    p = np.asarray(p, dtype=float)
    tw = theory_weights(p, table, "l0l1")
    b = table.b
    cum = np.cumsum(p)
    total = 0.0
    for i in range(1, b + 1):
        a0 = sum(p[s - 1] * table.require(i, s) for s in range(1, i + 1) if p[s - 1] > 0)
        a1 = sum(
            p[s - 1] * table.require(i, s, "l1") for s in range(1, i + 1) if p[s - 1] > 0
        )
        total += cum[i - 1] ** 2 * a0 / a1**2
    return math.ceil(
        2.0 * delta0 * total / (eps**2 * tw.mean**2) + 2.0 * delta0 / (eps * tw.mean)
    )
