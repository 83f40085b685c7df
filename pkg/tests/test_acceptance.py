"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` (or ``droptrain verify
--suite all`` for the underlying property suites).  Every criterion carries a
runtime budget, asserted alongside the substance.
"""

import math
import time

import numpy as np
import pytest

from droptrain import costmodel as cm
from droptrain import optimizer as op
from droptrain import problems as pb
from droptrain import sampling as sp
from droptrain import verify
from droptrain.geometry import NormKind


def _report(num: int, title: str, passed: bool, elapsed: float, budget: float, detail: str):
    status = "PASS" if passed and elapsed <= budget else "FAIL"
    print(
        f"[{status}] criterion {num}: {title} ({detail}; {elapsed:.1f}s of {budget:.0f}s budget)"
    )
    assert passed, f"criterion {num} failed: {detail}"
    assert elapsed <= budget, f"criterion {num} exceeded runtime budget: {elapsed:.1f}s"


def test_criterion_1_geometry_identities():
    t0 = time.time()
    results = verify.geometry_suite(seed=0, n_matrices=1000, tol=1e-9)
    elapsed = time.time() - t0
    identity_checks = [r for r in results if any(
        k in r.name for k in ("normlmo", "inplmo", "inpsharp", "normsharp")
    )]
    assert len(identity_checks) == 8  # four identities x two norm kinds
    worst = max(r.detail["max_abs_error"] for r in identity_checks)
    _report(
        1, "norm-ball identities over 1000 random matrices per kind",
        all(r.passed for r in results), elapsed, 10.0,
        f"worst abs error {worst:.2e} <= 1e-9",
    )


def test_criterion_2_marginals():
    t0 = time.time()
    draws = 100_000
    schemes = {
        "rpt": sp.Rpt((0.3, 0.25, 0.2, 0.15, 0.1)),
        "tau_nice": sp.TauNice(8, 3),
        "tau_submodel": sp.TauSubmodel(7, 3, (0.3, 0.25, 0.2, 0.15, 0.1)),
        "partitioned": sp.PartitionedSubmodel(
            (frozenset({1, 4}), frozenset({2, 5, 6}), frozenset({3})), (0.5, 0.3, 0.2)
        ),
    }
    checks = [
        verify._marginal_check(name, scheme, draws, seed=100 + j)
        for j, (name, scheme) in enumerate(schemes.items())
    ]
    _, q = sp.marginals(sp.TauNice(8, 3))
    exact_q = bool(np.all(q == 3.0 / 8.0))
    elapsed = time.time() - t0
    worst_z = max(c.detail["worst_z"] for c in checks)
    _report(
        2, "empirical marginals match closed forms (1e5 draws, 3-sigma)",
        all(c.passed for c in checks) and exact_q, elapsed, 30.0,
        f"worst z {worst_z:.2f}, tau-nice Q exactly tau/b: {exact_q}",
    )


def test_criterion_3_deterministic_descent_and_rate():
    t0 = time.time()
    descent = [r for r in verify.descent_suite(seed=0) if r.name == "descent/monotone_f"]
    rates = verify.rates_suite(seed=0, n_seeds=20, horizons=(10, 100, 1000))
    elapsed = time.time() - t0
    margins = {r.name.rsplit("K", 1)[1]: r.detail["margin"] for r in rates}
    _report(
        3, "monotone descent and weighted-gradient rate bound (20 seeds)",
        all(r.passed for r in descent + rates), elapsed, 20.0,
        f"bound margins by horizon {margins}",
    )


def test_criterion_4_optimal_probability_oracle():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    n_tables = 500
    grid_ok = vertex_ok = invariant_ok = True
    worst_excess = -math.inf
    for _ in range(n_tables):
        b = int(rng.integers(2, 5))
        table = verify.random_rpt_table(rng, b)
        cp = verify.random_cost_params(rng, b)
        p_star = cm.optimal_rpt_probs_smooth(table, cp)
        # (a) recursion value is minimal over the resolution-1/100 simplex grid
        val = cm.rpt_cost_objective_smooth(p_star, table, cp)
        grid_vals = cm._smooth_objective_grid(cm.simplex_grid(b, 100), table, cp)
        excess = val - float(grid_vals.min())
        worst_excess = max(worst_excess, excess)
        if excess > 1e-9:
            grid_ok = False
        # (b) vertex output iff the full-network condition holds
        if bool(np.all(p_star[1:] == 0.0)) != cm.full_network_optimal_smooth(table):
            vertex_ok = False
        # (c) bit-identical output across 10 cost-parameter draws
        for _ in range(10):
            if not np.array_equal(
                p_star, cm.optimal_rpt_probs_smooth(table, verify.random_cost_params(rng, b))
            ):
                invariant_ok = False
    elapsed = time.time() - t0
    _report(
        4, "recursion vs simplex-grid oracle over 500 tables",
        grid_ok and vertex_ok and invariant_ok, elapsed, 120.0,
        f"worst grid excess {worst_excess:.2e}, condition mismatches 0: {vertex_ok}, "
        f"cost-invariant: {invariant_ok}",
    )


def test_criterion_5_l0l1_first_layer_condition():
    t0 = time.time()
    rng = np.random.default_rng(77)
    n_tables = 200
    beaten_fail = vertex_fail = 0
    for _ in range(n_tables):
        b = int(rng.integers(2, 4))
        cp = verify.random_cost_params(rng, b)
        t_nonmax = verify.random_l1_rpt_table(rng, b, first_layer_max=False)
        if not cm.optimal_rpt_probs_l0l1(t_nonmax, cp, "eps").vertex_beaten:
            beaten_fail += 1
        t_max = verify.random_l1_rpt_table(rng, b, first_layer_max=True, margin=0.1)
        sol = cm.optimal_rpt_probs_l0l1(t_max, cp, "eps")
        if not np.array_equal(sol.p, np.eye(b)[0]):
            vertex_fail += 1
    elapsed = time.time() - t0
    _report(
        5, "first-layer generalized-smooth condition over 200 tables",
        beaten_fail == 0 and vertex_fail == 0, elapsed, 120.0,
        f"non-max tables where the vertex survived: {beaten_fail}, "
        f"max-margin tables not returning the vertex: {vertex_fail}",
    )


def test_criterion_6_stochastic_trend():
    t0 = time.time()
    result = verify.horizon_trend_check(seed=0, n_seeds=20, k_short=16, k_long=256,
                                        required_factor=1.5)
    elapsed = time.time() - t0
    _report(
        6, "running-min weighted gradient norm improves with the horizon",
        result.passed, elapsed, 60.0,
        f"factor {result.detail['factor']:.2f} >= 1.5 over 20 seeds",
    )


def test_criterion_7_cost_ratio_analogue():
    t0 = time.time()
    result = verify.cost_ratio_check(seed=0, n_rpt_seeds=5)
    elapsed = time.time() - t0
    _report(
        7, "constructed-instance cost ratio vs model prediction",
        result.passed, elapsed, 60.0,
        f"measured {result.detail['measured_ratio']:.3f}x, predicted "
        f"{result.detail['predicted_ratio']:.3f}x, rel err "
        f"{result.detail['relative_error']:.3f} <= 0.15",
    )


def test_criterion_8_mlp_truncated_backward_and_cache():
    t0 = time.time()
    mlp = pb.TinyMlp.synthetic([5, 6, 5, 4], n_samples=48, seed=5)
    rng = np.random.default_rng(6)
    x = [w + 0.2 * rng.standard_normal(w.shape) for w in mlp.weights]
    _, full = mlp.value_and_grad(x)
    slices_ok = True
    worst = 0.0
    for s in range(1, mlp.b + 1):
        _, partial = mlp.truncated_grad(x, s)
        for offset, grad in enumerate(partial):
            err = float(np.max(np.abs(grad - full[s - 1 + offset])))
            worst = max(worst, err)
            if err > 1e-12:
                slices_ok = False

    mlp.forward_with_cache(x, 0)
    base = mlp.forward_with_cache(x, 0)
    x2 = [w.copy() for w in x]
    x2[-1] += 0.01
    cached = mlp.forward_with_cache(x2, mlp.b - 1)
    plain_loss = mlp.value_and_grad(x2)[0]
    cache_ok = (
        cached.used_cache
        and cached.macs < base.macs
        and cached.loss == plain_loss
    )
    elapsed = time.time() - t0
    _report(
        8, "truncated backward slices and cached-prefix forward",
        slices_ok and cache_ok, elapsed, 30.0,
        f"worst slice error {worst:.1e} <= 1e-12, cached macs {cached.macs} < "
        f"full {base.macs}, loss identical: {cached.loss == plain_loss}",
    )
