"""Compute-cost model and optimal sampling-probability solvers.

One iteration that activates layers S costs

    cost(S) = c_ov + sum_{i = min S}^{b} c_i + sum_{i in S} c_i_sharp:

backpropagation runs from the last layer down to the smallest active index
(frozen-prefix activations are cached), and each active layer pays its sharp
operator / parameter-update cost.  Expectations of this cost are linear in the
two marginals F_i = P(min S <= i) and Q_i = P(i in S), so every sampling family
with closed-form marginals has a closed-form expected cost.

Dividing the expected per-iteration cost by the convergence-rate weight of the
slowest layer gives the total cost to a target accuracy; minimizing it over
cutoff probabilities is a linear-fractional program.  This module implements

* the exact recursive construction of the optimal cutoff probabilities in the
  layer-wise smooth regime (cost-parameter independent),
* the closed-form optimal block probabilities for partitioned sampling,
* a deterministic grid + refinement solver for the gradient-dependent
  (L0, L1) regimes, where the reduced program has a nonconvex feasible set,
* brute-force simplex-grid oracles used by the verification suites,
* a tau-nice cost scan separating the smoothness factor A(tau) from the
  provably decreasing cost factor B(tau).

Layer and cutoff indices are 1-based; tables key layer-wise constants either
by RPT cutoff s (the active set {s..b}) or by partition block id.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .sampling import (
    FullNetwork,
    PartitionedSubmodel,
    Rpt,
    SamplingScheme,
    marginals,
)

__all__ = [
    "CostParams",
    "TableMode",
    "SmoothnessTable",
    "CostBreakdown",
    "iteration_cost",
    "expected_iteration_cost",
    "total_cost",
    "rpt_smooth_weights",
    "rpt_l0l1_weights",
    "partition_smooth_weights",
    "smooth_recursion_q",
    "optimal_rpt_probs_smooth",
    "full_network_optimal_smooth",
    "PartitionProbs",
    "optimal_partition_probs",
    "L0L1Probs",
    "optimal_rpt_probs_l0l1",
    "rpt_cost_objective_smooth",
    "rpt_cost_objective_l0l1",
    "simplex_grid",
    "brute_force_optimal_probs",
    "TauScanRow",
    "TauScan",
    "tau_nice_cost_scan",
]

L0L1_MAX_LAYERS = 8  # grid solver limit; use partitioned mode beyond this


@dataclass(frozen=True)
class CostParams:
    """Per-iteration cost constants: overhead, per-layer backward/forward, per-layer sharp."""

    c_ov: float
    c: tuple[float, ...]
    c_sharp: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(float(x) for x in self.c))
        object.__setattr__(self, "c_sharp", tuple(float(x) for x in self.c_sharp))
        if self.c_ov < 0.0:
            raise ValueError("c_ov must be >= 0")
        if any(x <= 0.0 for x in self.c):
            raise ValueError("per-layer costs c_i must be > 0")
        if any(x < 0.0 for x in self.c_sharp):
            raise ValueError("sharp costs must be >= 0")
        if len(self.c) != len(self.c_sharp):
            raise ValueError("c and c_sharp must have equal length")

    @property
    def b(self) -> int:
        return len(self.c)

    def to_dict(self) -> dict:
        return {"c_ov": self.c_ov, "c": list(self.c), "c_sharp": list(self.c_sharp)}

    @staticmethod
    def from_dict(spec: dict) -> "CostParams":
        return CostParams(float(spec["c_ov"]), tuple(spec["c"]), tuple(spec["c_sharp"]))


class TableMode(str, enum.Enum):
    RPT_CUTOFF = "rpt_cutoff"  # keys are cutoffs s <= i, set {s..b}
    PARTITION = "partition"    # keys are 1-based block ids containing i


@dataclass
class SmoothnessTable:
    """Layer-wise smoothness constants indexed by (layer, supported-set key).

    ``l0[(i, s)]`` is the constant-curvature term for layer i over the set
    keyed by s; ``l1`` optionally holds the gradient-magnitude coefficients of
    the generalized-smooth model.  ``approximate=True`` marks sampled-secant
    estimates (as opposed to exact quadratic constants).
    """

    mode: TableMode
    b: int
    l0: dict[tuple[int, int], float]
    l1: dict[tuple[int, int], float] | None = None
    approximate: bool = False

    @staticmethod
    def from_rpt_rows(
        rows_l0: Sequence[Sequence[float]],
        rows_l1: Sequence[Sequence[float]] | None = None,
        approximate: bool = False,
    ) -> "SmoothnessTable":
        """Build an RPT-cutoff table from rows ``rows[i-1][s-1] = L_{i, {s..b}}``, s <= i."""
        b = len(rows_l0)
        l0 = {}
        for i, row in enumerate(rows_l0, start=1):
            if len(row) != i:
                raise ValueError(f"row {i} must list constants for cutoffs 1..{i}")
            for s, val in enumerate(row, start=1):
                l0[(i, s)] = float(val)
        l1 = None
        if rows_l1 is not None:
            l1 = {}
            for i, row in enumerate(rows_l1, start=1):
                if len(row) != i:
                    raise ValueError(f"L1 row {i} must list constants for cutoffs 1..{i}")
                for s, val in enumerate(row, start=1):
                    l1[(i, s)] = float(val)
        return SmoothnessTable(TableMode.RPT_CUTOFF, b, l0, l1, approximate)

    def require(self, i: int, key: int, which: str = "l0") -> float:
        table = self.l0 if which == "l0" else self.l1
        if table is None or (i, key) not in table:
            raise KeyError(
                f"missing smoothness constant {which.upper()} for layer {i}, set key {key}"
            )
        return table[(i, key)]

    def key_for(self, active: frozenset[int]) -> int:
        """Set key for an active set: its cutoff (suffix sets) or its block id."""
        if self.mode == TableMode.RPT_CUTOFF:
            s = min(active)
            if active != frozenset(range(s, self.b + 1)):
                raise ValueError(
                    f"active set {sorted(active)} is not a suffix {{s..{self.b}}}; "
                    "an RPT-cutoff table cannot key it"
                )
            return s
        for k in range(1, self.b + 1):
            members = {i for (i, kk) in self.l0 if kk == k}
            if members == set(active):
                return k
        raise ValueError(f"active set {sorted(active)} matches no block of the table")

    def monotonicity_violations(self, tol: float = 1e-12) -> list[str]:
        """Nested-set monotonicity: suffix {s2..b} of {s1..b} cannot have a larger constant."""
        out = []
        if self.mode != TableMode.RPT_CUTOFF:
            return out
        for which, table in (("L0", self.l0), ("L1", self.l1 or {})):
            for i in range(1, self.b + 1):
                for s in range(2, i + 1):
                    if (i, s) in table and (i, s - 1) in table:
                        if table[(i, s)] > table[(i, s - 1)] + tol:
                            out.append(
                                f"{which}[{i},{{{s}..b}}] > {which}[{i},{{{s - 1}..b}}]"
                            )
        return out

    def full_network_l0(self) -> np.ndarray:
        """L0 constants for the full network set (cutoff key 1)."""
        return np.array([self.require(i, 1) for i in range(1, self.b + 1)])

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode.value,
            "b": self.b,
            "l0": [[i, k, v] for (i, k), v in sorted(self.l0.items())],
            "approximate": self.approximate,
        }
        if self.l1 is not None:
            out["l1"] = [[i, k, v] for (i, k), v in sorted(self.l1.items())]
        return out

    @staticmethod
    def from_dict(spec: dict) -> "SmoothnessTable":
        l1 = None
        if spec.get("l1") is not None:
            l1 = {(int(i), int(k)): float(v) for i, k, v in spec["l1"]}
        return SmoothnessTable(
            TableMode(spec["mode"]),
            int(spec["b"]),
            {(int(i), int(k)): float(v) for i, k, v in spec["l0"]},
            l1,
            bool(spec.get("approximate", False)),
        )


@dataclass(frozen=True)
class CostBreakdown:
    """Total expected compute cost K * E[cost(S)] with its per-term decomposition."""

    regime: str
    expected_iteration_cost: float
    iterations: float
    total: float
    terms: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Per-iteration and expected cost
# ---------------------------------------------------------------------------

def iteration_cost(active: frozenset[int], cp: CostParams) -> float:
    """cost(S) = c_ov + sum_{i >= min S} c_i + sum_{i in S} c_sharp_i."""
    if not active:
        raise ValueError("active set must be non-empty")
    if min(active) < 1 or max(active) > cp.b:
        raise ValueError(f"active set {sorted(active)} out of range for b={cp.b}")
    s = min(active)
    return cp.c_ov + sum(cp.c[s - 1 :]) + sum(cp.c_sharp[i - 1] for i in active)


def expected_iteration_cost(scheme: SamplingScheme, cp: CostParams) -> float:
    """Exact expectation via marginals: c_ov + <c, F> + <c_sharp, Q>."""
    if scheme.b != cp.b:
        raise ValueError("scheme and cost params disagree on layer count")
    f, q = marginals(scheme)
    return cp.c_ov + float(np.dot(cp.c, f)) + float(np.dot(cp.c_sharp, q))


# ---------------------------------------------------------------------------
# Convergence-rate weights (per scheme family and smoothness regime)
# ---------------------------------------------------------------------------

def _rpt_l0_matrix(table: SmoothnessTable) -> np.ndarray:
    """Dense (b, b) array L[i-1, s-1] = L0_{i,{s..b}} for s <= i; 0 elsewhere."""
    b = table.b
    out = np.zeros((b, b))
    for i in range(1, b + 1):
        for s in range(1, i + 1):
            out[i - 1, s - 1] = table.require(i, s)
    return out


def _rpt_l1_matrix(table: SmoothnessTable) -> np.ndarray:
    b = table.b
    out = np.zeros((b, b))
    for i in range(1, b + 1):
        for s in range(1, i + 1):
            out[i - 1, s - 1] = table.require(i, s, "l1")
    return out


def rpt_smooth_weights(p: Sequence[float], table: SmoothnessTable) -> np.ndarray:
    """w_i = sum_{s <= i} p_s / (2 L0_{i,{s..b}})."""
    p = np.asarray(p, dtype=float)
    b = table.b
    w = np.zeros(b)
    for i in range(1, b + 1):
        acc = 0.0
        for s in range(1, i + 1):
            if p[s - 1] > 0.0:
                l = table.require(i, s)
                if l <= 0.0:
                    raise ValueError(f"L0 for layer {i}, cutoff {s} must be > 0")
                acc += p[s - 1] / (2.0 * l)
        w[i - 1] = acc
    return w


def rpt_l0l1_weights(p: Sequence[float], table: SmoothnessTable) -> np.ndarray:
    """w_i = (sum_{s<=i} p_s)^2 / sum_{s<=i} p_s L1_{i,{s..b}}."""
    p = np.asarray(p, dtype=float)
    b = table.b
    w = np.zeros(b)
    cum = np.cumsum(p)
    for i in range(1, b + 1):
        denom = 0.0
        for s in range(1, i + 1):
            if p[s - 1] > 0.0:
                denom += p[s - 1] * table.require(i, s, "l1")
        w[i - 1] = cum[i - 1] ** 2 / denom if denom > 0.0 else 0.0
    return w


def partition_smooth_weights(
    scheme: PartitionedSubmodel, table: SmoothnessTable
) -> np.ndarray:
    """w_i = p_{k(i)} / (2 L0_{i, B_{k(i)}})."""
    w = np.zeros(scheme.b)
    for i in range(1, scheme.b + 1):
        k = scheme.block_of(i)
        l = table.require(i, k)
        if l <= 0.0:
            raise ValueError(f"L0 for layer {i}, block {k} must be > 0")
        w[i - 1] = scheme.p[k - 1] / (2.0 * l)
    return w


def _scheme_cutoff_probs(scheme: SamplingScheme) -> np.ndarray:
    if isinstance(scheme, Rpt):
        return np.asarray(scheme.p)
    if isinstance(scheme, FullNetwork):
        p = np.zeros(scheme.b)
        p[0] = 1.0
        return p
    raise ValueError(f"{type(scheme).__name__} has no RPT cutoff distribution")


def total_cost(
    scheme: SamplingScheme,
    cp: CostParams,
    table: SmoothnessTable,
    eps: float,
    regime: str,
    delta0: float = 1.0,
    apply_ceil: bool = True,
) -> CostBreakdown:
    """Total expected cost K(eps) * E[cost(S)] for a target accuracy eps.

    ``regime`` selects the iteration-count formula: ``smooth`` uses
    K = delta0 / (eps * min_i w_i) with the smooth weights; ``l0l1_eps`` and
    ``l0l1_eps2`` keep respectively the 1/eps and 1/eps^2 term of the
    generalized-smooth iteration bound (the analysis splits by which term
    dominates; regime selection is the caller's).  ``apply_ceil=False`` skips
    the ceiling for proportionality checks.
    """
    if eps <= 0.0 or delta0 <= 0.0:
        raise ValueError("eps and delta0 must be positive")
    exp_cost = expected_iteration_cost(scheme, cp)

    if isinstance(scheme, PartitionedSubmodel):
        if table.mode != TableMode.PARTITION:
            raise ValueError("partitioned scheme needs a partition-mode table")
        if regime == "smooth":
            w = partition_smooth_weights(scheme, table)
        else:
            q = np.array([scheme.p[scheme.block_of(i) - 1] for i in range(1, scheme.b + 1)])
            a1 = np.array(
                [table.require(i, scheme.block_of(i), "l1") for i in range(1, scheme.b + 1)]
            )
            w = np.where(a1 > 0, q / a1, 0.0)
            a0 = np.array([table.require(i, scheme.block_of(i)) for i in range(1, scheme.b + 1)])
            ratio_terms = np.where(a1 > 0, q * a0 / a1**2, np.inf)
    else:
        if table.mode != TableMode.RPT_CUTOFF:
            raise ValueError("RPT-style scheme needs an rpt_cutoff-mode table")
        p = _scheme_cutoff_probs(scheme)
        if regime == "smooth":
            w = rpt_smooth_weights(p, table)
        else:
            w = rpt_l0l1_weights(p, table)
            l0m = _rpt_l0_matrix(table)
            l1m = _rpt_l1_matrix(table)
            cum = np.cumsum(p)
            a0 = l0m @ p  # sum_{s<=i} p_s L0_{i,{s..b}}
            a1 = l1m @ p
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio_terms = np.where(a1 > 0, cum**2 * a0 / a1**2, np.inf)

    if np.any(w <= 0.0):
        i = int(np.argmin(w)) + 1
        raise ValueError(f"layer {i} never updated (weight 0); rate bound undefined")

    if regime == "smooth":
        k_raw = delta0 / (eps * float(w.min()))
    elif regime == "l0l1_eps":
        k_raw = 2.0 * delta0 / (eps * float(w.min()))
    elif regime == "l0l1_eps2":
        k_raw = 2.0 * delta0 * float(ratio_terms.sum()) / (eps**2 * float(w.min()) ** 2)
    else:
        raise ValueError(f"unknown regime {regime!r}")

    k = float(math.ceil(k_raw)) if apply_ceil else k_raw
    f, q = marginals(scheme)
    terms = {
        "overhead": cp.c_ov,
        "backward_forward": float(np.dot(cp.c, f)),
        "sharp_update": float(np.dot(cp.c_sharp, q)),
        "min_weight": float(w.min()),
    }
    return CostBreakdown(regime, exp_cost, k, k * exp_cost, terms)


# ---------------------------------------------------------------------------
# Optimal RPT probabilities, smooth regime (exact recursion)
# ---------------------------------------------------------------------------

def smooth_recursion_q(table: SmoothnessTable) -> np.ndarray:
    """Unnormalized solution q of the reduced smooth-regime program.

    q_1 = 2 L0_{1,{1..b}}; r_i = 1 - sum_{s<i} q_s / (2 L0_{i,{s..b}});
    q_i = 2 [r_i]_+ L0_{i,{i..b}}.  Every i with q_i > 0 has its constraint
    tight: sum_{s<=i} q_s / (2 L0_{i,{s..b}}) = 1 (mass could otherwise be
    shifted deeper at a strict gain).
    """
    if table.mode != TableMode.RPT_CUTOFF:
        raise ValueError("recursion needs an rpt_cutoff-mode table")
    b = table.b
    lmat = _rpt_l0_matrix(table)
    if np.any(lmat[np.tril_indices(b)] <= 0.0):
        raise ValueError("all L0 constants for cutoffs s <= i must be present and > 0")
    q = np.zeros(b)
    q[0] = 2.0 * lmat[0, 0]
    for i in range(2, b + 1):
        r = 1.0 - sum(q[s - 1] / (2.0 * lmat[i - 1, s - 1]) for s in range(1, i))
        q[i - 1] = 2.0 * max(r, 0.0) * lmat[i - 1, i - 1]
    return q


def optimal_rpt_probs_smooth(
    table: SmoothnessTable, cp: CostParams | None = None
) -> np.ndarray:
    """Cost-minimizing cutoff probabilities under layer-wise smoothness.

    Normalization of ``smooth_recursion_q``.  The optimum depends only on the
    smoothness constants -- ``cp`` is accepted for interface symmetry and
    deliberately ignored.
    """
    del cp  # optimum is cost-parameter independent
    q = smooth_recursion_q(table)
    return q / q.sum()


def full_network_optimal_smooth(table: SmoothnessTable) -> bool:
    """Whether always updating all layers minimizes the smooth-regime cost.

    Holds iff the first layer attains the maximal full-network constant
    (ties count as optimal, with a non-unique optimum).
    """
    vals = table.full_network_l0()
    return bool(vals[0] >= vals.max())


# ---------------------------------------------------------------------------
# Optimal partitioned-submodel probabilities (closed form)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartitionProbs:
    p: np.ndarray
    min_expected_cost: float | None


def optimal_partition_probs(
    blocks: Sequence[frozenset[int]],
    table: SmoothnessTable,
    objective: str = "smooth",
    cp: CostParams | None = None,
) -> PartitionProbs:
    """Block probabilities proportional to each block's worst-case constant.

    ``objective='smooth'`` uses L0, ``'l0l1_eps'`` the same closed form with
    L1.  When cost params are supplied the minimal total cost
    2 * sum_k d_k * max_{i in B_k} L_{i,B_k} is returned alongside, with
    d_k = c_ov + sum_{j >= min B_k} c_j + sum_{j in B_k} c_sharp_j.
    """
    which = "l0" if objective == "smooth" else "l1"
    if objective not in ("smooth", "l0l1_eps"):
        raise ValueError(f"unknown objective {objective!r}")
    blocks = [frozenset(blk) for blk in blocks]
    if any(len(blk) == 0 for blk in blocks):
        raise ValueError("empty block")
    maxes = []
    for k, blk in enumerate(blocks, start=1):
        vals = [table.require(i, k, which) for i in sorted(blk)]
        if min(vals) <= 0.0:
            raise ValueError(f"block {k} has a non-positive constant")
        maxes.append(max(vals))
    maxes = np.asarray(maxes)
    p = maxes / maxes.sum()
    cost = None
    if cp is not None:
        d = [
            cp.c_ov + sum(cp.c[min(blk) - 1 :]) + sum(cp.c_sharp[j - 1] for j in blk)
            for blk in blocks
        ]
        cost = 2.0 * float(np.dot(d, maxes))
    return PartitionProbs(p, cost)


# ---------------------------------------------------------------------------
# Cost objectives over RPT cutoff probabilities
# ---------------------------------------------------------------------------

def _rpt_d_vector(cp: CostParams) -> np.ndarray:
    """d_i = c_ov + sum_{j >= i} (c_j + c_sharp_j); strictly decreasing in i."""
    tail = np.cumsum((np.asarray(cp.c) + np.asarray(cp.c_sharp))[::-1])[::-1]
    return cp.c_ov + tail


def rpt_cost_objective_smooth(
    p: Sequence[float], table: SmoothnessTable, cp: CostParams
) -> float:
    """Smooth-regime RPT cost ratio: expected iteration cost over min_i w_i."""
    p = np.asarray(p, dtype=float)
    num = float(np.dot(_rpt_d_vector(cp), p))
    den = float(rpt_smooth_weights(p, table).min())
    return num / den if den > 0.0 else math.inf


def rpt_cost_objective_l0l1(
    p: Sequence[float],
    table: SmoothnessTable,
    cp: CostParams,
    regime: str = "eps",
) -> float:
    """(L0, L1)-regime RPT cost objective for a cutoff vector p.

    ``eps``:  (sum_i d_i p_i) / min_i [(sum_{s<=i} p_s)^2 / sum_{s<=i} p_s L1].
    ``eps2``: like ``eps`` but with the 1/eps^2 iteration term, which also
    involves the L0 constants.
    """
    value = _l0l1_objective_grid(
        np.asarray(p, dtype=float)[None, :], table, cp, regime
    )[0]
    return float(value)


def _l0l1_objective_grid(
    grid: np.ndarray, table: SmoothnessTable, cp: CostParams, regime: str
) -> np.ndarray:
    """Vectorized (L0, L1) objective over an (N, b) array of cutoff vectors."""
    if regime not in ("eps", "eps2"):
        raise ValueError(f"unknown regime {regime!r}")
    l1m = _rpt_l1_matrix(table)
    num = grid @ _rpt_d_vector(cp)
    cum = np.cumsum(grid, axis=1)
    a1 = grid @ l1m.T  # a1[:, i-1] = sum_{s<=i} p_s L1_{i,{s..b}}
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(a1 > 0.0, cum**2 / a1, np.where(cum > 0.0, np.inf, 0.0))
    min_ratio = ratio.min(axis=1)
    out = np.full(grid.shape[0], np.inf)
    ok = min_ratio > 0.0
    if regime == "eps":
        out[ok] = num[ok] / min_ratio[ok]
        return out
    l0m = _rpt_l0_matrix(table)
    a0 = grid @ l0m.T
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(a1 > 0.0, cum**2 * a0 / a1**2, np.where(cum > 0.0, np.inf, 0.0))
    out[ok] = terms[ok].sum(axis=1) * num[ok] / min_ratio[ok] ** 2
    return out


def _smooth_objective_grid(
    grid: np.ndarray, table: SmoothnessTable, cp: CostParams
) -> np.ndarray:
    """Vectorized smooth-regime objective over an (N, b) array of cutoff vectors."""
    b = table.b
    inv = np.zeros((b, b))
    for i in range(1, b + 1):
        for s in range(1, i + 1):
            inv[i - 1, s - 1] = 0.5 / table.require(i, s)
    num = grid @ _rpt_d_vector(cp)
    den = (grid @ inv.T).min(axis=1)
    out = np.full(grid.shape[0], np.inf)
    ok = den > 0.0
    out[ok] = num[ok] / den[ok]
    return out


# ---------------------------------------------------------------------------
# Simplex grids and brute-force oracle
# ---------------------------------------------------------------------------

def _compositions(n: int, b: int) -> np.ndarray:
    """All compositions of n into b non-negative parts, ascending lexicographic."""
    if b == 1:
        return np.array([[n]])
    rows = []
    for k in range(n + 1):
        rest = _compositions(n - k, b - 1)
        rows.append(np.hstack([np.full((rest.shape[0], 1), k), rest]))
    return np.vstack(rows)


_GRID_CACHE: dict[tuple[int, int], np.ndarray] = {}


def simplex_grid(b: int, resolution_denominator: int) -> np.ndarray:
    """Probability vectors with entries multiple of 1/n, ascending lexicographic order.

    The returned array is cached and read-only; copy before mutating.
    """
    key = (b, resolution_denominator)
    if key not in _GRID_CACHE:
        grid = _compositions(resolution_denominator, b) / float(resolution_denominator)
        grid.setflags(write=False)
        _GRID_CACHE[key] = grid
    return _GRID_CACHE[key]


def brute_force_optimal_probs(
    objective: Callable[[np.ndarray], float],
    b: int,
    resolution_denominator: int = 200,
) -> np.ndarray:
    """Exhaustive minimizer of ``objective`` over the simplex grid.

    Ties break to the first point in ascending lexicographic order (so a
    constant objective returns (0, ..., 0, 1)).  Test oracle only; the grid has
    C(n + b - 1, b - 1) points.
    """
    grid = simplex_grid(b, resolution_denominator)
    best_val = math.inf
    best = grid[0]
    for row in grid:
        val = objective(row)
        if val < best_val:
            best_val = val
            best = row
    return best.copy()


# ---------------------------------------------------------------------------
# (L0, L1) numeric solver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class L0L1Probs:
    """Solver output plus the first-layer-condition diagnostics."""

    p: np.ndarray
    value: float
    regime: str
    vertex_value: float          # objective at p = (1, 0, ..., 0)
    vertex_beaten: bool          # a strictly better p than the vertex was found
    first_layer_l1_is_max: bool  # L1_{1,[b]} == max_i L1_{i,[b]}


def _default_grid_denominator(b: int) -> int:
    return {1: 1, 2: 200, 3: 100, 4: 40, 5: 24, 6: 14, 7: 10, 8: 8}[b]


def optimal_rpt_probs_l0l1(
    table: SmoothnessTable,
    cp: CostParams,
    regime: str = "eps",
    grid_denominator: int | None = None,
    refine_rounds: int = 60,
) -> L0L1Probs:
    """Best cutoff vector found for the (L0, L1) cost objective.

    The reduced program has a nonconvex feasible set, so this runs a
    deterministic simplex-grid enumeration followed by coordinate-pair mass
    transfers with a halving step (strict-improvement hill descent).  Results
    are reproducible and oracle-checkable; limited to b <= 8.
    """
    b = table.b
    if b > L0L1_MAX_LAYERS:
        raise ValueError(
            f"b={b} exceeds the grid-solver limit {L0L1_MAX_LAYERS}; "
            "group layers and use optimal_partition_probs instead"
        )
    if table.l1 is None:
        raise ValueError("table must carry L1 constants")
    n = grid_denominator or _default_grid_denominator(b)
    grid = simplex_grid(b, n)
    vals = _l0l1_objective_grid(grid, table, cp, regime)
    best_idx = int(np.argmin(vals))
    best = grid[best_idx].copy()
    best_val = float(vals[best_idx])

    step = 1.0 / n
    for _ in range(refine_rounds):
        improved = False
        for i in range(b):
            if best[i] < step - 1e-15:
                continue
            for j in range(b):
                if j == i:
                    continue
                cand = best.copy()
                cand[i] -= step
                cand[j] += step
                val = float(_l0l1_objective_grid(cand[None, :], table, cp, regime)[0])
                if val < best_val:
                    best, best_val, improved = cand, val, True
        if not improved:
            step /= 2.0
            if step < 1e-7:
                break

    vertex = np.zeros(b)
    vertex[0] = 1.0
    vertex_val = float(_l0l1_objective_grid(vertex[None, :], table, cp, regime)[0])
    if vertex_val <= best_val:
        best, best_val = vertex, vertex_val
    full_l1 = np.array([table.require(i, 1, "l1") for i in range(1, b + 1)])
    return L0L1Probs(
        p=best,
        value=best_val,
        regime=regime,
        vertex_value=vertex_val,
        vertex_beaten=best_val < vertex_val,
        first_layer_l1_is_max=bool(full_l1[0] >= full_l1.max()),
    )


# ---------------------------------------------------------------------------
# tau-nice cost scan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TauScanRow:
    tau: int
    smoothness_factor: float  # A(tau) = max_i L_{i,tau}
    cost_factor: float        # B(tau), provably decreasing in tau
    product: float


@dataclass(frozen=True)
class TauScan:
    rows: tuple[TauScanRow, ...]
    cost_factor_strictly_decreasing: bool

    def argmin_tau(self) -> int:
        return min(self.rows, key=lambda r: r.product).tau


def tau_nice_cost_scan(
    cp: CostParams, l0_of: Callable[[int, int], float]
) -> TauScan:
    """Expected-cost factors A(tau) * B(tau) under tau-nice sampling.

    Assumes the constants depend on the layer and the subset size only:
    ``l0_of(i, tau) = L_{i, S}`` for any |S| = tau.  B(tau) collects the cost
    side and is decreasing in tau (strictly when c_ov > 0); A(tau) is the
    worst-case constant.  When the constants do not grow with tau the product
    is minimized at tau = b; when they grow linearly (and any sharp cost is
    positive) at tau = 1.
    """
    b = cp.b
    rows = []
    for tau in range(1, b + 1):
        a = max(l0_of(i, tau) for i in range(1, b + 1))
        denom = math.comb(b - 1, tau - 1)
        bfac = (b / tau) * cp.c_ov + sum(cp.c_sharp)
        bfac += sum(
            cp.c[j - 1] * (b / tau - math.comb(b - j, tau) / denom)
            for j in range(1, b + 1)
        )
        rows.append(TauScanRow(tau, a, bfac, a * bfac))
    strictly = all(
        rows[t].cost_factor < rows[t - 1].cost_factor for t in range(1, len(rows))
    )
    return TauScan(tuple(rows), strictly)
