"""Test objectives: gradients vs finite differences, smoothness certificates,
noise statistics, truncated backprop, and the activation cache."""

import math
import warnings

import numpy as np
import pytest

from droptrain import problems as pb
from droptrain import sampling as sp
from droptrain.geometry import NormKind


def finite_difference_grads(problem, layers, h=1e-5):
    """Central-difference oracle for the per-layer gradients."""
    grads = []
    for li, x in enumerate(layers):
        g = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            xp = [a.copy() for a in layers]
            xm = [a.copy() for a in layers]
            xp[li][idx] += h
            xm[li][idx] -= h
            g[idx] = (problem.value_and_grad(xp)[0] - problem.value_and_grad(xm)[0]) / (2 * h)
        grads.append(g)
    return grads


def rel_err(a, b):
    denom = max(np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / denom


def make_separable(rng, weighted=False):
    shapes = [(2, 3), (3, 2)]
    targets = [rng.standard_normal(s) for s in shapes]
    if weighted:
        curvs = [np.exp(rng.uniform(-1, 1, size=s)) for s in shapes]
    else:
        curvs = [1.0, 2.0]
    return pb.SeparableQuadratic(targets, curvs)


def make_coupled(rng, coupling=0.3, tilt=False):
    shapes = [(2, 2), (2, 3), (3, 2)]
    targets = [rng.standard_normal(s) for s in shapes]
    tilts = [0.1 * rng.standard_normal(s) for s in shapes] if tilt else None
    return pb.CoupledQuadratic(targets, (2.0, 1.5, 2.5), coupling, tilt=tilts, rng=rng)


# ---------------------------------------------------------------------------
# value_and_grad
# ---------------------------------------------------------------------------

def test_separable_minimum_at_targets():
    prob = make_separable(np.random.default_rng(0))
    val, grads = prob.value_and_grad(prob.targets)
    assert val == 0.0
    assert all(not g.any() for g in grads)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(1)
    for prob in (make_separable(rng, weighted=True), make_coupled(rng, tilt=True)):
        for _ in range(5):
            x = [rng.standard_normal(s) for s in prob.shapes]
            _, grads = prob.value_and_grad(x)
            fd = finite_difference_grads(prob, x)
            for g, gf in zip(grads, fd):
                assert rel_err(g, gf) <= 1e-6


def test_mlp_gradients_match_finite_differences():
    mlp = pb.TinyMlp.synthetic([3, 4, 3, 2], n_samples=16, seed=2)
    rng = np.random.default_rng(3)
    for _ in range(3):
        x = [w + 0.1 * rng.standard_normal(w.shape) for w in mlp.weights]
        _, grads = mlp.value_and_grad(x)
        fd = finite_difference_grads(mlp, x)
        for g, gf in zip(grads, fd):
            assert rel_err(g, gf) <= 1e-4


def test_coupled_zero_coupling_matches_separable():
    rng = np.random.default_rng(4)
    shapes = [(2, 2), (3, 2)]
    targets = [rng.standard_normal(s) for s in shapes]
    coup = pb.CoupledQuadratic(targets, (2.0, 1.5), 0.0, rng=rng)
    sep = pb.SeparableQuadratic(targets, (2.0, 1.5))
    x = [rng.standard_normal(s) for s in shapes]
    vc, gc = coup.value_and_grad(x)
    vs, gs = sep.value_and_grad(x)
    assert vc == pytest.approx(vs, abs=1e-12)
    for a, b in zip(gc, gs):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_coupled_f_star_via_linear_solve():
    rng = np.random.default_rng(5)
    prob = make_coupled(rng, tilt=True)
    assert prob.f_star < 0.0
    # f_star is attainable: evaluate at the solved minimizer
    h = prob._assemble_hessian()
    t = np.concatenate([x.ravel() for x in prob.tilt])
    z = np.linalg.solve(h, -t)
    offs = np.cumsum([0] + [a.size for a in prob.targets])
    x_star = [
        prob.targets[i] + z[offs[i] : offs[i + 1]].reshape(prob.shapes[i])
        for i in range(prob.b)
    ]
    val, grads = prob.value_and_grad(x_star)
    assert val == pytest.approx(prob.f_star, abs=1e-10)
    assert all(np.linalg.norm(g) <= 1e-8 for g in grads)


def test_coupled_rejects_indefinite():
    rng = np.random.default_rng(6)
    targets = [rng.standard_normal((2, 2)), rng.standard_normal((2, 2))]
    with pytest.raises(ValueError, match="PSD"):
        pb.CoupledQuadratic(targets, (0.1, 0.1), 5.0, rng=rng)


def test_shape_mismatch_raises():
    prob = make_separable(np.random.default_rng(7))
    with pytest.raises(ValueError):
        prob.value_and_grad([np.zeros((1, 1)), np.zeros((3, 2))])


# ---------------------------------------------------------------------------
# stochastic gradients
# ---------------------------------------------------------------------------

def test_stoch_grad_zero_sigma_exact():
    prob = make_separable(np.random.default_rng(8))
    x = [np.ones(s) for s in prob.shapes]
    _, exact = prob.value_and_grad(x)
    noisy = pb.stoch_grad(prob, x, pb.NoiseSpec((0.0, 0.0)), sp.stream(0))
    for a, b in zip(noisy, exact):
        np.testing.assert_array_equal(a, b)


def test_stoch_grad_unbiased_and_variance():
    prob = make_separable(np.random.default_rng(9))
    x = [np.ones(s) for s in prob.shapes]
    _, exact = prob.value_and_grad(x)
    spec = pb.NoiseSpec((0.4, 1.2))
    rng = sp.stream(10)
    n = 10_000
    sums = [np.zeros_like(g) for g in exact]
    sq = [0.0, 0.0]
    for _ in range(n):
        gs = pb.stoch_grad(prob, x, spec, rng)
        for i in range(2):
            noise = gs[i] - exact[i]
            sums[i] += noise
            sq[i] += float(np.sum(noise**2))
    for i in range(2):
        entry_std = spec.sigmas[i] / math.sqrt(exact[i].size)
        assert np.all(np.abs(sums[i] / n) <= 3 * entry_std / math.sqrt(n))
        assert abs(sq[i] / n - spec.sigmas[i] ** 2) <= 0.05 * spec.sigmas[i] ** 2


# ---------------------------------------------------------------------------
# smoothness constants
# ---------------------------------------------------------------------------

def test_separable_constants_independent_of_cutoff():
    prob = pb.SeparableQuadratic([np.zeros((2, 2)), np.zeros((2, 2))], (1.0, 2.0))
    table = pb.smoothness_constants(prob, sp.FullNetwork(2), [NormKind.EUCLIDEAN] * 2)
    assert table.require(2, 1) == table.require(2, 2) == 2.0
    assert table.require(1, 1) == 1.0
    assert not table.approximate


def test_separable_spectral_factor_min_dim():
    prob = pb.SeparableQuadratic([np.zeros((3, 2))], (1.5,))
    table = pb.smoothness_constants(prob, sp.FullNetwork(1), [NormKind.SPECTRAL])
    assert table.require(1, 1) == pytest.approx(2 * 1.5)  # min(3, 2) * a


def test_spectral_factor_is_attained():
    # the Frobenius-to-spectral ratio min(m, n) is achieved at equal singular values
    a = 1.5
    gamma = np.vstack([np.eye(2), np.zeros((1, 2))])  # 3x2, singular values (1, 1)
    fro_sq = np.sum(gamma**2)
    spec_sq = np.linalg.norm(gamma, 2) ** 2
    assert fro_sq / spec_sq == pytest.approx(2.0)
    # quadratic bound with L = a * min(m, n) is tight on this direction
    assert a * fro_sq == pytest.approx((a * 2.0) * spec_sq)


def test_coupled_constants_monotone_in_cutoff():
    rng = np.random.default_rng(11)
    prob = make_coupled(rng)
    table = pb.smoothness_constants(prob, sp.FullNetwork(3), [NormKind.EUCLIDEAN] * 3)
    for i in range(1, 4):
        for s in range(2, i + 1):
            assert table.require(i, s) <= table.require(i, s - 1) + 1e-12
    # coupling makes the constants genuinely set-dependent
    assert table.require(2, 2) < table.require(2, 1)


def test_quadratic_smoothness_certificate():
    # f(X + G) - f(X) - <grad, G> <= sum_{i in S} L_{i,S}/2 ||G_i||^2
    rng = np.random.default_rng(12)
    for prob in (make_separable(rng, weighted=True), make_coupled(rng)):
        scheme = sp.FullNetwork(prob.b)
        table = pb.smoothness_constants(prob, scheme, [NormKind.EUCLIDEAN] * prob.b)
        for _ in range(100):
            s_cut = int(rng.integers(1, prob.b + 1))
            active = frozenset(range(s_cut, prob.b + 1))
            x = [rng.standard_normal(s) for s in prob.shapes]
            gamma = [
                rng.standard_normal(s) if (i + 1) in active else np.zeros(s)
                for i, s in enumerate(prob.shapes)
            ]
            f0, g0 = prob.value_and_grad(x)
            f1, _ = prob.value_and_grad([a + d for a, d in zip(x, gamma)])
            lhs = f1 - f0 - sum(float(np.sum(g * d)) for g, d in zip(g0, gamma))
            rhs = sum(
                table.require(i, s_cut) / 2 * float(np.sum(gamma[i - 1] ** 2))
                for i in active
            )
            assert lhs <= rhs + 1e-9


def test_mlp_constants_flagged_approximate():
    mlp = pb.TinyMlp.synthetic([3, 4, 2], n_samples=8, seed=13)
    table = pb.smoothness_constants(
        mlp, sp.FullNetwork(2), [NormKind.EUCLIDEAN] * 2, secant_samples=50
    )
    assert table.approximate
    assert all(v > 0 for v in table.l0.values())


# ---------------------------------------------------------------------------
# truncated backward pass and activation cache
# ---------------------------------------------------------------------------

def test_truncated_backward_bit_identical_slices():
    mlp = pb.TinyMlp.synthetic([4, 5, 4, 3], n_samples=32, seed=14)
    rng = np.random.default_rng(15)
    x = [w + 0.2 * rng.standard_normal(w.shape) for w in mlp.weights]
    _, full = mlp.value_and_grad(x)
    for s in range(1, mlp.b + 1):
        loss, partial = mlp.truncated_grad(x, s)
        assert len(partial) == mlp.b - s + 1
        for offset, g in enumerate(partial):
            np.testing.assert_array_equal(g, full[s - 1 + offset])


def test_cache_prefix_zero_matches_plain_forward():
    mlp = pb.TinyMlp.synthetic([3, 4, 2], n_samples=16, seed=16)
    res = mlp.forward_with_cache(mlp.weights, 0)
    loss, _ = mlp.value_and_grad(mlp.weights)
    assert res.loss == loss
    assert not res.used_cache


def test_cache_reuse_identical_loss_fewer_macs():
    mlp = pb.TinyMlp.synthetic([4, 6, 5, 3], n_samples=32, seed=17)
    x = [w.copy() for w in mlp.weights]
    full = mlp.forward_with_cache(x, 0)
    # change only the last layer; reuse activations below it
    x2 = [w.copy() for w in x]
    x2[-1] += 0.05
    cached = mlp.forward_with_cache(x2, mlp.b - 1)
    assert cached.used_cache and not cached.cache_invalid
    assert cached.macs < full.macs
    plain = mlp.forward_with_cache(x2, 0)
    assert cached.loss == plain.loss  # bit-identical recompute of the tail


def test_cache_invalidated_by_frozen_layer_change():
    mlp = pb.TinyMlp.synthetic([3, 4, 2], n_samples=8, seed=18)
    x = [w.copy() for w in mlp.weights]
    mlp.forward_with_cache(x, 0)
    x2 = [w.copy() for w in x]
    x2[0] += 1.0  # supposedly frozen layer changed
    with pytest.warns(UserWarning, match="cache invalid"):
        res = mlp.forward_with_cache(x2, 1)
    assert res.cache_invalid and not res.used_cache
    # the recomputed loss is still correct
    assert res.loss == mlp.value_and_grad(x2)[0]


def test_relu_activation_gradients_close():
    mlp = pb.TinyMlp.synthetic([3, 5, 2], n_samples=16, activation="relu", seed=19)
    rng = np.random.default_rng(20)
    x = [w + 0.1 * rng.standard_normal(w.shape) for w in mlp.weights]
    _, grads = mlp.value_and_grad(x)
    fd = finite_difference_grads(mlp, x)
    for g, gf in zip(grads, fd):
        assert rel_err(g, gf) <= 1e-3  # looser near relu kinks
