"""Property and oracle suites behind the ``verify`` CLI command.

Each suite function returns a list of CheckResult; a check compares library
output against an independent oracle (brute-force grid minimization, Monte
Carlo frequencies, finite differences, exact enumeration) or asserts an
identity at a stated tolerance.  The suites double as the implementation of
the acceptance tests, which call them with pinned parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import costmodel, geometry, optimizer, problems, sampling
from .costmodel import CostParams, SmoothnessTable, TableMode
from .geometry import NormKind

__all__ = [
    "CheckResult",
    "SUITES",
    "run_suite",
    "random_rpt_table",
    "random_l1_rpt_table",
    "random_cost_params",
    "rate_check_setup",
    "cost_ratio_setup",
    "geometry_suite",
    "sampling_suite",
    "descent_suite",
    "rates_suite",
    "cost_suite",
    "stochastic_suite",
]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def __repr__(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}"


def _check(name: str, passed, **detail) -> CheckResult:
    return CheckResult(name, bool(passed), detail)


# ---------------------------------------------------------------------------
# Random instance generators (shared by suites and tests)
# ---------------------------------------------------------------------------

def random_rpt_table(
    rng: np.random.Generator, b: int, low: float = 0.2, high: float = 3.0
) -> SmoothnessTable:
    """Random cutoff-keyed L0 table satisfying nested-set monotonicity.

    Row i is drawn and sorted decreasing in the cutoff s, so shrinking the
    active set never increases a constant.
    """
    rows = [np.sort(rng.uniform(low, high, size=i))[::-1].tolist() for i in range(1, b + 1)]
    return SmoothnessTable.from_rpt_rows(rows)


def random_l1_rpt_table(
    rng: np.random.Generator,
    b: int,
    first_layer_max: bool,
    margin: float = 0.1,
) -> SmoothnessTable:
    """Random (L0, L1) table controlling whether L1_{1,[b]} is the row-1 maximum.

    ``first_layer_max=True`` makes L1_{1,[b]} exceed every other full-network
    constant by at least ``margin`` relatively; False caps it at least
    ``margin`` below the maximum.
    """
    rows0 = [np.sort(rng.uniform(0.2, 3.0, size=i))[::-1].tolist() for i in range(1, b + 1)]
    rows1 = [np.sort(rng.uniform(0.5, 2.0, size=i))[::-1].tolist() for i in range(2, b + 1)]
    other_max = max(row[0] for row in rows1)
    if first_layer_max:
        first = other_max * (1.0 + margin) * float(rng.uniform(1.0, 1.5))
    else:
        first = other_max / (1.0 + margin) * float(rng.uniform(0.4, 1.0))
    return SmoothnessTable.from_rpt_rows(rows0, [[first]] + rows1)


def random_cost_params(rng: np.random.Generator, b: int) -> CostParams:
    return CostParams(
        float(rng.uniform(0.0, 1.0)),
        rng.uniform(0.5, 2.0, size=b).tolist(),
        rng.uniform(0.0, 1.0, size=b).tolist(),
    )


def _random_matrix(rng, max_dim=6):
    return rng.standard_normal((int(rng.integers(1, max_dim + 1)), int(rng.integers(1, max_dim + 1))))


# ---------------------------------------------------------------------------
# geometry suite
# ---------------------------------------------------------------------------

def geometry_suite(seed: int = 0, n_matrices: int = 1000, tol: float = 1e-9):
    """LMO/sharp identities over random matrices, per norm kind, at ``tol``."""
    rng = np.random.default_rng(seed)
    results = []
    for kind in (NormKind.EUCLIDEAN, NormKind.SPECTRAL):
        worst = {"normlmo": 0.0, "inplmo": 0.0, "inpsharp": 0.0, "normsharp": 0.0,
                 "consistency": 0.0, "cauchy_schwarz": 0.0}
        for _ in range(n_matrices):
            m = _random_matrix(rng)
            if not m.any():
                continue
            t = float(rng.uniform(0.1, 5.0))
            step = geometry.lmo(kind, m, t).step
            dn = geometry.dual_norm(kind, m)
            sh = geometry.sharp(kind, m)
            worst["normlmo"] = max(worst["normlmo"], abs(geometry.norm(kind, step) - t))
            worst["inplmo"] = max(worst["inplmo"], abs(float(np.sum(m * step)) + t * dn))
            worst["inpsharp"] = max(
                worst["inpsharp"], abs(float(np.sum(m * sh)) - geometry.norm(kind, sh) ** 2)
            )
            worst["normsharp"] = max(worst["normsharp"], abs(dn - geometry.norm(kind, sh)))
            worst["consistency"] = max(
                worst["consistency"],
                float(np.max(np.abs(sh + dn * geometry.lmo(kind, m, 1.0).step))),
            )
            other = rng.standard_normal(m.shape)
            viol = abs(float(np.sum(m * other))) - dn * geometry.norm(kind, other)
            worst["cauchy_schwarz"] = max(worst["cauchy_schwarz"], viol)
        for name, err in worst.items():
            results.append(
                _check(f"geometry/{kind.value}/{name}", err <= tol, max_abs_error=err, tol=tol)
            )
    return results


# ---------------------------------------------------------------------------
# sampling suite
# ---------------------------------------------------------------------------

def _mc_marginals(scheme, draws, seed):
    b = scheme.b
    f = np.zeros(b)
    q = np.zeros(b)
    rng = sampling.stream(seed)
    for _ in range(draws):
        s = sampling.sample(scheme, rng)
        f[min(s) - 1 :] += 1
        for i in s:
            q[i - 1] += 1
    return f / draws, q / draws


def _marginal_check(name, scheme, draws, seed):
    f_emp, q_emp = _mc_marginals(scheme, draws, seed)
    f, q = sampling.marginals(scheme)
    worst_z = 0.0
    ok = True
    for emp, ana in ((f_emp, f), (q_emp, q)):
        for i in range(scheme.b):
            var = ana[i] * (1.0 - ana[i])
            tol = 3.0 * math.sqrt(var / draws) if var > 0 else 0.0
            err = abs(emp[i] - ana[i])
            if err > tol + 1e-12:
                ok = False
            if var > 0:
                worst_z = max(worst_z, err / math.sqrt(var / draws))
    return _check(f"sampling/marginals/{name}", ok, draws=draws, worst_z=worst_z)


def sampling_suite(seed: int = 0, draws: int = 100_000):
    """Monte Carlo marginals vs closed forms (3-sigma binomial), plus structure checks."""
    rng = np.random.default_rng(seed)
    p6 = rng.uniform(0.2, 1.0, size=6)
    p6 /= p6.sum()
    schemes = {
        "rpt_b6": sampling.Rpt(tuple(p6)),
        "tau_nice_8_3": sampling.TauNice(8, 3),
        "tau_submodel_7_3": sampling.TauSubmodel(7, 3, (0.3, 0.25, 0.2, 0.15, 0.1)),
        "partitioned_b6": sampling.PartitionedSubmodel(
            (frozenset({1, 4}), frozenset({2, 5}), frozenset({3, 6})), (0.5, 0.3, 0.2)
        ),
    }
    results = [
        _marginal_check(name, scheme, draws, seed + j)
        for j, (name, scheme) in enumerate(schemes.items())
    ]

    f, q = sampling.marginals(sampling.TauNice(8, 3))
    results.append(
        _check("sampling/tau_nice_q_exact", np.allclose(q, 3.0 / 8.0, atol=0), q=q.tolist())
    )
    f, q = sampling.marginals(schemes["rpt_b6"])
    results.append(
        _check(
            "sampling/rpt_f_equals_q_nondecreasing",
            np.array_equal(f, q) and np.all(np.diff(f) >= 0) and abs(f[-1] - 1) < 1e-12,
        )
    )
    f, q = sampling.marginals(sampling.FullNetwork(5))
    results.append(_check("sampling/full_network_ones", np.all(f == 1) and np.all(q == 1)))

    serial = sampling.PartitionedSubmodel(
        tuple(frozenset({i}) for i in range(1, 5)), (0.1, 0.2, 0.3, 0.4)
    )
    _, q = sampling.marginals(serial)
    sizes = {len(sampling.sample(serial, sampling.stream(seed, k))) for k in range(200)}
    results.append(
        _check(
            "sampling/serial_singleton_blocks",
            np.allclose(q, [0.1, 0.2, 0.3, 0.4]) and sizes == {1},
        )
    )

    worst = 0.0
    for b in (1, 2, 7, 64):
        for alpha in (-4.0, -0.5, 0.0, 0.5, 4.0):
            for progress in (0.0, 0.25, 0.5, 1.0):
                p = sampling.epoch_shift_probs(b, alpha, progress)
                worst = max(worst, abs(float(p.sum()) - 1.0))
    results.append(_check("sampling/epoch_shift_sums_to_one", worst <= 1e-12, worst=worst))
    return results


# ---------------------------------------------------------------------------
# descent suite (deterministic path)
# ---------------------------------------------------------------------------

def _weighted_quadratic(rng, b=3, shape=(2, 2), l_values=(1.0, 2.0, 1.5)):
    """Separable quadratic whose per-layer curvature spectrum spans [L/4, L]."""
    weights = []
    targets = []
    for li in l_values:
        w = np.exp(rng.uniform(np.log(li / 4.0), np.log(li), size=shape))
        w.flat[0] = li  # pin the max so the table constant is exact
        weights.append(w)
        targets.append(rng.standard_normal(shape))
    return problems.SeparableQuadratic(targets, weights)


def rate_check_setup(seed: int = 0):
    """Problem, scheme, table, and start point for the descent/rate checks."""
    rng = np.random.default_rng(seed)
    prob = _weighted_quadratic(rng)
    scheme = sampling.Rpt((0.5, 0.3, 0.2))
    norms = [NormKind.EUCLIDEAN] * 3
    table = problems.smoothness_constants(prob, scheme, norms)
    x0 = [a + rng.standard_normal(a.shape) for a in prob.targets]
    return prob, scheme, table, norms, x0


def descent_suite(seed: int = 0, iterations: int = 300):
    results = []
    prob, scheme, table, norms, x0 = rate_check_setup(seed)

    res = optimizer.run(
        prob, scheme, optimizer.SmoothInverse(), iterations, seed, norms=norms,
        x0=x0, table=table,
    )
    descent_ok = all(r.f_after <= r.f_before + 1e-10 for r in res.reports)
    results.append(_check("descent/monotone_f", descent_ok, iterations=iterations))

    worst_gap = math.inf
    ok = True
    for r in res.reports:
        key = min(r.active)
        bound = sum(
            r.grad_dual_norms[i] ** 2 / (2.0 * table.require(i, key)) for i in r.active
        )
        gap = (r.f_before - r.f_after) - bound
        worst_gap = min(worst_gap, gap)
        if gap < -1e-8:
            ok = False
    results.append(_check("descent/per_step_decrease_bound", ok, worst_slack=worst_gap))

    # freeze invariance: inactive layers bit-identical across a step
    model = optimizer.LayerModel([x.copy() for x in x0], norms)
    rng = np.random.default_rng(seed + 1)
    frozen_ok = True
    for _ in range(50):
        active = sampling.sample(scheme, sampling.stream(seed, int(rng.integers(1e6))))
        before = [x.copy() for x in model.layers]
        optimizer.det_step(model, prob.value_and_grad, active, optimizer.SmoothInverse(), table)
        for i in range(1, prob.b + 1):
            if i not in active and not np.array_equal(before[i - 1], model.layers[i - 1]):
                frozen_ok = False
    results.append(_check("descent/freeze_invariance", frozen_ok))

    # zero-noise stochastic step matches the deterministic direction exactly
    t = 0.1
    model_a = optimizer.LayerModel([x.copy() for x in x0], norms)
    _, grads = prob.value_and_grad(model_a.layers)
    momentum = optimizer.MomentumState([np.zeros_like(g) for g in grads], [1.0] * prob.b)
    optimizer.stoch_step(
        model_a, lambda layers: prob.value_and_grad(layers)[1], momentum,
        frozenset(range(1, prob.b + 1)), [t] * prob.b,
    )
    max_err = 0.0
    for i in range(prob.b):
        expected = x0[i] - (t / np.linalg.norm(grads[i])) * grads[i]
        max_err = max(max_err, float(np.max(np.abs(model_a.layers[i] - expected))))
    results.append(
        _check("descent/zero_noise_matches_det_direction", max_err <= 1e-12, max_err=max_err)
    )
    return results


# ---------------------------------------------------------------------------
# rates suite (deterministic rate bound)
# ---------------------------------------------------------------------------

def rates_suite(seed: int = 0, n_seeds: int = 20, horizons=(10, 100, 1000)):
    """Averaged weighted squared dual gradient norms against the rate bound."""
    prob, scheme, table, norms, x0 = rate_check_setup(seed)
    delta0 = prob.value_and_grad(x0)[0] - prob.f_star
    tw = optimizer.theory_weights(scheme.p, table, "smooth")
    results = []
    for horizon in horizons:
        values = []
        for s in range(n_seeds):
            res = optimizer.run(
                prob, scheme, optimizer.SmoothInverse(), horizon, seed * 1000 + s,
                norms=norms, x0=x0, table=table,
            )
            acc = 0.0
            for r in res.reports:
                acc += sum(
                    tw.w[i - 1] / tw.mean * r.grad_dual_norms[i] ** 2
                    for i in range(1, prob.b + 1)
                )
            values.append(acc / horizon)
        lhs = float(np.mean(values))
        rhs = optimizer.smooth_rate_rhs(delta0, horizon, tw)
        results.append(
            _check(
                f"rates/weighted_grad_bound_K{horizon}",
                lhs <= rhs,
                lhs=lhs, rhs=rhs, margin=1.0 - lhs / rhs, seeds=n_seeds,
            )
        )
    return results


# ---------------------------------------------------------------------------
# cost suite
# ---------------------------------------------------------------------------

def cost_suite(seed: int = 0, quick: bool = False):
    rng = np.random.default_rng(seed)
    results = []
    n_oracle = 100 if quick else 500
    n_equiv = 200 if quick else 1000
    n_l0l1 = 40 if quick else 200

    # (a) recursion value <= every simplex grid point (resolution 1/100) + 1e-9
    worst_excess = -math.inf
    ok = True
    for _ in range(n_oracle):
        b = int(rng.integers(2, 5))
        table = random_rpt_table(rng, b)
        cp = random_cost_params(rng, b)
        p_star = costmodel.optimal_rpt_probs_smooth(table, cp)
        val = costmodel.rpt_cost_objective_smooth(p_star, table, cp)
        grid = costmodel.simplex_grid(b, 100)
        grid_vals = costmodel._smooth_objective_grid(grid, table, cp)
        excess = val - float(grid_vals.min())
        worst_excess = max(worst_excess, excess)
        if excess > 1e-9:
            ok = False
    results.append(
        _check("cost/recursion_beats_grid", ok, tables=n_oracle, worst_excess=worst_excess)
    )

    # (b) full-network-optimality condition <=> recursion returns the vertex
    mismatches = 0
    for _ in range(n_equiv):
        b = int(rng.integers(2, 5))
        table = random_rpt_table(rng, b)
        p_star = costmodel.optimal_rpt_probs_smooth(table)
        is_vertex = bool(np.all(p_star[1:] == 0.0))
        if is_vertex != costmodel.full_network_optimal_smooth(table):
            mismatches += 1
    results.append(
        _check("cost/vertex_condition_equivalence", mismatches == 0,
               tables=n_equiv, mismatches=mismatches)
    )

    # (c) recursion output invariant under cost parameters (bit equality)
    table = random_rpt_table(rng, 4)
    base = costmodel.optimal_rpt_probs_smooth(table, random_cost_params(rng, 4))
    invariant = all(
        np.array_equal(base, costmodel.optimal_rpt_probs_smooth(table, random_cost_params(rng, 4)))
        for _ in range(10)
    )
    results.append(_check("cost/recursion_cost_param_independent", invariant))

    # (d) exchange property: positive mass forces a tight constraint
    worst_slack = 0.0
    ok = True
    for _ in range(100):
        b = int(rng.integers(2, 5))
        table = random_rpt_table(rng, b)
        q = costmodel.smooth_recursion_q(table)
        for i in range(1, b + 1):
            if q[i - 1] > 0:
                lhs = sum(q[s - 1] / (2.0 * table.require(i, s)) for s in range(1, i + 1))
                slack = abs(lhs - 1.0)
                worst_slack = max(worst_slack, slack)
                if slack > 1e-9:
                    ok = False
    results.append(_check("cost/exchange_tightness", ok, worst_slack=worst_slack))

    # (e) partitioned closed form: proportionality, LP dual certificate
    blocks = (frozenset({1, 2}), frozenset({3, 4}))
    l0 = {(1, 1): 2.0, (2, 1): 4.0, (3, 2): 0.5, (4, 2): 1.0}
    ptab = SmoothnessTable(TableMode.PARTITION, 4, l0)
    cp4 = CostParams(0.5, (1.0, 1.0, 1.0, 1.0), (0.2, 0.2, 0.2, 0.2))
    part = costmodel.optimal_partition_probs(blocks, ptab, "smooth", cp4)
    prop_ok = np.allclose(part.p, [0.8, 0.2], atol=0) and abs(part.p.sum() - 1.0) == 0.0
    d = [
        cp4.c_ov + sum(cp4.c[min(blk) - 1 :]) + sum(cp4.c_sharp[j - 1] for j in blk)
        for blk in blocks
    ]
    lam = np.zeros(4)
    dual_ok = True
    for k, blk in enumerate(blocks, start=1):
        i_k = max(blk, key=lambda i: l0[(i, k)])
        lam[i_k - 1] = d[k - 1] * 2.0 * l0[(i_k, k)]
        lhs = sum((0.5 / l0[(i, k)]) * lam[i - 1] for i in blk)
        if abs(lhs - d[k - 1]) > 1e-9:  # per-block dual constraint tight
            dual_ok = False
    # strong duality: dual objective equals the primal optimum 2 sum_k d_k max L
    dual_obj = float(lam.sum())
    primal = sum(d[k] * 2.0 * max(l0[(i, k + 1)] for i in blk) for k, blk in enumerate(blocks))
    results.append(
        _check(
            "cost/partition_probs_and_dual_certificate",
            prop_ok and dual_ok and abs(dual_obj - primal) <= 1e-9
            and abs(part.min_expected_cost - primal) <= 1e-9,
            p=part.p.tolist(), dual_obj=dual_obj, primal=primal,
        )
    )

    # (f) expected iteration cost equals the Monte Carlo mean (3 sigma), per family
    draws = 20_000 if quick else 100_000
    fam_rng = np.random.default_rng(seed + 7)
    fam_schemes = {
        "rpt": sampling.Rpt((0.4, 0.3, 0.2, 0.1)),
        "tau_nice": sampling.TauNice(4, 2),
        "tau_submodel": sampling.TauSubmodel(4, 2, (0.5, 0.3, 0.2)),
        "partitioned": sampling.PartitionedSubmodel(
            (frozenset({1, 3}), frozenset({2, 4})), (0.6, 0.4)
        ),
        "full": sampling.FullNetwork(4),
    }
    for name, scheme in fam_schemes.items():
        cp = random_cost_params(fam_rng, scheme.b)
        analytic = costmodel.expected_iteration_cost(scheme, cp)
        srng = sampling.stream(seed + 11)
        costs = np.array([
            costmodel.iteration_cost(sampling.sample(scheme, srng), cp) for _ in range(draws)
        ])
        err = abs(float(costs.mean()) - analytic)
        tol = 3.0 * float(costs.std()) / math.sqrt(draws) + 1e-12
        results.append(
            _check(f"cost/monte_carlo_expected_cost_{name}", err <= tol, err=err, tol=tol)
        )

    # (g) first-layer L1 condition vs the numeric (L0, L1) solver
    beaten_fail = 0
    vertex_fail = 0
    for _ in range(n_l0l1):
        b = int(rng.integers(2, 4))
        cp = random_cost_params(rng, b)
        t_nonmax = random_l1_rpt_table(rng, b, first_layer_max=False)
        sol = costmodel.optimal_rpt_probs_l0l1(t_nonmax, cp, "eps")
        if not sol.vertex_beaten:
            beaten_fail += 1
        t_max = random_l1_rpt_table(rng, b, first_layer_max=True)
        sol = costmodel.optimal_rpt_probs_l0l1(t_max, cp, "eps")
        if not (np.array_equal(sol.p, np.eye(b)[0]) and sol.first_layer_l1_is_max):
            vertex_fail += 1
    results.append(
        _check("cost/l0l1_first_layer_condition", beaten_fail == 0 and vertex_fail == 0,
               tables=n_l0l1, non_max_not_beaten=beaten_fail, max_not_vertex=vertex_fail)
    )

    # (h) tau-nice scan: constant L -> tau* = b; linear L -> tau* = 1; B decreasing
    cp6 = CostParams(0.4, (1.0, 0.8, 1.2, 0.9, 1.1, 1.0), (0.3,) * 6)
    scan_const = costmodel.tau_nice_cost_scan(cp6, lambda i, tau: 1.3)
    scan_lin = costmodel.tau_nice_cost_scan(cp6, lambda i, tau: 0.5 * tau * (1 + 0.1 * i))
    b_dec_ok = True
    for b in range(2, 13):
        cpb = CostParams(0.3, (1.0,) * b, (0.1,) * b)
        if not costmodel.tau_nice_cost_scan(cpb, lambda i, tau: 1.0).cost_factor_strictly_decreasing:
            b_dec_ok = False
    results.append(
        _check(
            "cost/tau_nice_scan",
            scan_const.argmin_tau() == 6 and scan_lin.argmin_tau() == 1 and b_dec_ok,
            const_argmin=scan_const.argmin_tau(), linear_argmin=scan_lin.argmin_tau(),
        )
    )

    # (i) total-cost structure: eps halving doubles K; degenerate RPT == full network
    table3 = random_rpt_table(rng, 3)
    cp3 = random_cost_params(rng, 3)
    full = sampling.FullNetwork(3)
    bd1 = costmodel.total_cost(full, cp3, table3, 1e-3, "smooth", apply_ceil=False)
    bd2 = costmodel.total_cost(full, cp3, table3, 5e-4, "smooth", apply_ceil=False)
    vertex_rpt = sampling.Rpt((1.0, 0.0, 0.0))
    bd3 = costmodel.total_cost(vertex_rpt, cp3, table3, 1e-3, "smooth", apply_ceil=False)
    results.append(
        _check(
            "cost/total_cost_structure",
            abs(bd2.iterations - 2 * bd1.iterations) <= 1e-9 * bd1.iterations
            and abs(bd3.total - bd1.total) <= 1e-9 * bd1.total
            and abs(bd1.total - bd1.iterations * bd1.expected_iteration_cost) <= 1e-9 * bd1.total,
        )
    )

    # (j) constructed cost-ratio instance: measured vs predicted speedup
    results.append(cost_ratio_check(seed))
    return results


def cost_ratio_setup():
    """A 4-layer instance where full-network training is provably suboptimal.

    Layer-wise constants L = (1, 2, 3, 4): the first layer's constant is the
    smallest, so the full-network optimality condition fails.  Every layer
    shares the same slow curvature mu, and the optimal cutoff distribution
    (uniform, by the recursion) activates layer i with probability L_i / L_4,
    which equalizes the per-layer progress rates: both schemes then need the
    same number of iterations to a target gap, and the whole saving is the
    per-iteration cost.
    """
    l_values = (1.0, 2.0, 3.0, 4.0)
    mu = 0.08
    shape = (2, 2)
    targets = [np.zeros(shape) for _ in l_values]
    weights = []
    for li in l_values:
        w = np.full(shape, mu)
        w[0, 0] = li
        weights.append(w)
    prob = problems.SeparableQuadratic(targets, weights)
    x0 = [np.zeros(shape) for _ in l_values]
    for i in range(3):
        x0[i][0, 0] = 1.0  # fast-direction offsets die in one active step
    x0[3] = np.array([[0.5, 3.0], [3.0, 3.0]])  # slow mass rides layer 4
    cp = CostParams(0.5, (1.0,) * 4, (0.25,) * 4)
    scheme_full = sampling.FullNetwork(4)
    table = problems.smoothness_constants(prob, scheme_full, [NormKind.EUCLIDEAN] * 4)
    p_opt = costmodel.optimal_rpt_probs_smooth(table)
    scheme_rpt = sampling.Rpt(tuple(p_opt))
    return prob, x0, cp, table, scheme_full, scheme_rpt


def cost_ratio_check(seed: int = 0, n_rpt_seeds: int = 5) -> CheckResult:
    """Run full-network vs optimal-RPT to one f-gap target and compare cost ratios."""
    prob, x0, cp, table, scheme_full, scheme_rpt = cost_ratio_setup()
    assert not costmodel.full_network_optimal_smooth(table)
    delta0 = prob.value_and_grad(x0)[0]
    target = 1e-3 * delta0
    norms = [NormKind.EUCLIDEAN] * 4

    def cost_to_target(scheme, run_seed):
        res = optimizer.run(
            prob, scheme, optimizer.SmoothInverse(), 2000, run_seed,
            norms=norms, x0=[x.copy() for x in x0], table=table, cost_params=cp,
        )
        cum = 0.0
        for r in res.reports:
            cum += r.cost_units
            if r.f_after - prob.f_star <= target:
                return cum
        raise RuntimeError("target not reached within the iteration budget")

    cost_full = cost_to_target(scheme_full, seed)
    cost_rpt = float(np.mean([cost_to_target(scheme_rpt, seed + 1 + s) for s in range(n_rpt_seeds)]))
    measured = cost_full / cost_rpt

    pred_full = costmodel.total_cost(scheme_full, cp, table, 1e-6, "smooth", delta0=delta0)
    pred_rpt = costmodel.total_cost(scheme_rpt, cp, table, 1e-6, "smooth", delta0=delta0)
    predicted = pred_full.total / pred_rpt.total
    rel_err = abs(measured - predicted) / predicted
    return _check(
        "cost/constructed_instance_cost_ratio",
        measured >= 1.1 and rel_err <= 0.15,
        measured_ratio=measured, predicted_ratio=predicted, relative_error=rel_err,
    )


# ---------------------------------------------------------------------------
# stochastic suite
# ---------------------------------------------------------------------------

def stochastic_suite(seed: int = 0, quick: bool = False):
    rng = np.random.default_rng(seed)
    results = []
    draws = 2000 if quick else 10_000

    # (a, b) noise is unbiased with the declared per-layer variance
    prob = problems.SeparableQuadratic(
        [rng.standard_normal((2, 3)), rng.standard_normal((3, 2))], [1.0, 2.0]
    )
    x = [rng.standard_normal(s) for s in prob.shapes]
    _, exact = prob.value_and_grad(x)
    spec = problems.NoiseSpec((0.5, 1.5))
    nrng = sampling.stream(seed + 1)
    sums = [np.zeros_like(g) for g in exact]
    sq = [0.0, 0.0]
    for _ in range(draws):
        gs = problems.stoch_grad(prob, x, spec, nrng)
        for i, g in enumerate(gs):
            noise = g - exact[i]
            sums[i] += noise
            sq[i] += float(np.sum(noise * noise))
    bias_ok = True
    for i, s in enumerate(sums):
        entry_std = spec.sigmas[i] / math.sqrt(exact[i].size)
        if np.any(np.abs(s / draws) > 3.0 * entry_std / math.sqrt(draws)):
            bias_ok = False
    var_ok = all(
        abs(sq[i] / draws - spec.sigmas[i] ** 2) <= 0.05 * spec.sigmas[i] ** 2 for i in range(2)
    )
    results.append(_check("stochastic/noise_unbiased", bias_ok, draws=draws))
    results.append(
        _check("stochastic/noise_variance_5pct", var_ok,
               measured=[sq[i] / draws for i in range(2)], target=[s**2 for s in spec.sigmas])
    )
    results.append(_check(
        "stochastic/zero_sigma_exact",
        all(np.array_equal(a, b) for a, b in zip(
            problems.stoch_grad(prob, x, problems.NoiseSpec((0.0, 0.0)), sampling.stream(0)),
            exact,
        )),
    ))

    # (c) every applied stochastic update has primal norm exactly t_i
    qprob, scheme, _table, norms, x0 = rate_check_setup(seed + 2)
    model = optimizer.LayerModel([v.copy() for v in x0], norms)
    momentum = optimizer.MomentumState(
        [np.zeros(s) for s in qprob.shapes], [0.7] * qprob.b
    )
    radii = [0.05, 0.1, 0.2]
    worst = 0.0
    for k in range(100):
        srng = sampling.stream(seed + 3, k)
        active = sampling.sample(scheme, srng)
        before = [m.copy() for m in model.layers]
        rep = optimizer.stoch_step(
            model,
            lambda layers: problems.stoch_grad(qprob, layers, problems.NoiseSpec((0.1,) * 3), srng),
            momentum, active, radii,
        )
        for i in rep.applied:
            step_norm = geometry.norm(norms[i - 1], model.layers[i - 1] - before[i - 1])
            worst = max(worst, abs(step_norm - radii[i - 1]))
        for i in range(1, qprob.b + 1):
            if i not in active:
                assert np.array_equal(before[i - 1], model.layers[i - 1])
    results.append(_check("stochastic/normalized_step_norm", worst <= 1e-9, worst=worst))

    # (d) per-iteration descent inequality with measured momentum error
    table = problems.smoothness_constants(qprob, scheme, norms, with_l1_zeros=True)
    res = optimizer.run(
        qprob, scheme, optimizer.FixedRadius((0.05, 0.05, 0.05), beta=0.4),
        150, seed + 4, norms=norms, x0=x0, table=table,
        noise=problems.NoiseSpec((0.1,) * 3),
    )
    worst_viol = -math.inf
    ok = True
    for r in res.reports:
        key = min(r.active)
        rhs = r.f_before
        for i in r.active:
            t_i = r.applied.get(i, 0.0)
            rhs += 2.0 * t_i * r.momentum_error[i] - t_i * r.grad_dual_norms[i]
            rhs += 0.5 * table.require(i, key) * t_i**2
        viol = r.f_after - rhs
        worst_viol = max(worst_viol, viol)
        if viol > 1e-9:
            ok = False
    results.append(_check("stochastic/descent_lemma_diagnostic", ok, worst_violation=worst_viol))

    # (e) horizon-schedule trend: longer horizons drive the weighted norm lower
    results.append(horizon_trend_check(seed, n_seeds=5 if quick else 20))
    return results


def horizon_trend_check(seed: int = 0, n_seeds: int = 20, k_short: int = 16,
                        k_long: int = 256, required_factor: float = 1.5) -> CheckResult:
    """Running-min weighted dual gradient norm at two horizons of the schedule."""
    rng = np.random.default_rng(seed)
    shape = (2, 2)
    prob = problems.SeparableQuadratic(
        [np.zeros(shape) for _ in range(3)], [1.0, 1.0, 1.0]
    )
    scheme = sampling.Rpt((0.5, 0.3, 0.2))
    norms = [NormKind.EUCLIDEAN] * 3
    x0 = [0.25 * rng.standard_normal(shape) + 0.25 for _ in range(3)]
    noise = problems.NoiseSpec((0.1,) * 3)
    cum = np.cumsum(scheme.p)
    weights = cum / cum.mean()  # eta = 1

    def running_min(horizon, run_seed):
        res = optimizer.run(
            prob, scheme, optimizer.HorizonSchedule(), horizon, run_seed,
            norms=norms, x0=[x.copy() for x in x0], noise=noise,
        )
        best = math.inf
        for r in res.reports:
            val = sum(weights[i - 1] * r.grad_dual_norms[i] for i in range(1, 4))
            best = min(best, val)
        _, g_final = prob.value_and_grad(res.model.layers)
        final = sum(
            weights[i - 1] * geometry.dual_norm(norms[i - 1], g_final[i - 1])
            for i in range(1, 4)
        )
        return min(best, final)

    short = float(np.mean([running_min(k_short, seed * 7919 + s) for s in range(n_seeds)]))
    long = float(np.mean([running_min(k_long, seed * 7919 + s) for s in range(n_seeds)]))
    factor = short / long
    return _check(
        "stochastic/horizon_trend",
        factor >= required_factor,
        k_short=k_short, k_long=k_long, factor=factor, required=required_factor,
        short_min=short, long_min=long,
    )


SUITES = {
    "geometry": geometry_suite,
    "sampling": sampling_suite,
    "descent": descent_suite,
    "rates": rates_suite,
    "cost": cost_suite,
    "stochastic": stochastic_suite,
}


def run_suite(name: str, seed: int = 0) -> list[CheckResult]:
    """Run one named suite, or all of them."""
    if name == "all":
        out = []
        for fn in SUITES.values():
            out.extend(fn(seed))
        return out
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)} or 'all'")
    return SUITES[name](seed)
