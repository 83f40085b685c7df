"""Sampling distributions: closed-form marginals vs enumeration and Monte Carlo."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from droptrain import sampling as sp


def enumerated_marginals(scheme):
    """Oracle: marginals computed from the exact subset distribution."""
    b = scheme.b
    dist = sp.distribution(scheme)
    f = np.zeros(b)
    q = np.zeros(b)
    for subset, prob in dist.items():
        for i in range(1, b + 1):
            if min(subset) <= i:
                f[i - 1] += prob
            if i in subset:
                q[i - 1] += prob
    return f, q


def empirical_marginals(scheme, n_draws, seed):
    b = scheme.b
    f = np.zeros(b)
    q = np.zeros(b)
    rng = sp.stream(seed)
    for _ in range(n_draws):
        s = sp.sample(scheme, rng)
        mn = min(s)
        for i in range(mn, b + 1):
            f[i - 1] += 1
        for i in s:
            q[i - 1] += 1
    return f / n_draws, q / n_draws


ALL_SCHEMES = [
    sp.Rpt((0.5, 0.3, 0.2)),
    sp.Rpt((0.25, 0.0, 0.5, 0.25)),
    sp.TauNice(4, 2),
    sp.TauNice(5, 5),
    sp.TauSubmodel(5, 2, (0.4, 0.3, 0.2, 0.1)),
    sp.PartitionedSubmodel(
        (frozenset({1, 4}), frozenset({2, 5}), frozenset({3})), (0.5, 0.3, 0.2)
    ),
    sp.FullNetwork(3),
]


# ---------------------------------------------------------------------------
# construction / validation
# ---------------------------------------------------------------------------

def test_probability_vector_must_sum_to_one():
    with pytest.raises(ValueError):
        sp.Rpt((0.5, 0.4))
    with pytest.raises(ValueError):
        sp.Rpt((0.5, -0.5, 1.0))


def test_tau_bounds():
    with pytest.raises(ValueError):
        sp.TauNice(3, 0)
    with pytest.raises(ValueError):
        sp.TauNice(3, 4)


def test_partition_must_cover():
    with pytest.raises(ValueError):
        sp.PartitionedSubmodel((frozenset({1}), frozenset({3})), (0.5, 0.5))
    with pytest.raises(ValueError):
        sp.PartitionedSubmodel((frozenset({1, 2}), frozenset({2})), (0.5, 0.5))


def test_rpt_zero_p1_flagged_not_rejected():
    scheme = sp.Rpt((0.0, 1.0))
    assert sp.scheme_flags(scheme)
    assert sp.scheme_flags(sp.Rpt((1.0, 0.0))) == []


# ---------------------------------------------------------------------------
# sample()
# ---------------------------------------------------------------------------

def test_full_network_always_everything():
    rng = sp.stream(0)
    for _ in range(10):
        assert sp.sample(sp.FullNetwork(3), rng) == frozenset({1, 2, 3})


def test_rpt_degenerate_last_cutoff():
    rng = sp.stream(1)
    scheme = sp.Rpt((0.0, 0.0, 1.0))
    for _ in range(10):
        assert sp.sample(scheme, rng) == frozenset({3})


def test_tau_nice_uniform_over_subsets():
    # frequency of each of the C(4,2)=6 subsets within 3 sigma of 1/6
    scheme = sp.TauNice(4, 2)
    n = 100_000
    rng = sp.stream(2)
    counts: dict[frozenset, int] = {}
    for _ in range(n):
        s = sp.sample(scheme, rng)
        counts[s] = counts.get(s, 0) + 1
    assert len(counts) == 6
    p = 1.0 / 6.0
    tol = 3.0 * math.sqrt(p * (1 - p) / n)
    for subset, c in counts.items():
        assert abs(c / n - p) <= tol, (subset, c / n)


def test_tau_submodel_is_contiguous_window():
    scheme = sp.TauSubmodel(5, 3, (0.5, 0.25, 0.25))
    rng = sp.stream(3)
    for _ in range(50):
        s = sorted(sp.sample(scheme, rng))
        assert len(s) == 3
        assert s == list(range(s[0], s[0] + 3))


def test_sample_determinism_same_stream_path():
    scheme = sp.Rpt((0.5, 0.3, 0.2))
    a = [sp.sample(scheme, sp.stream(42, 1, k)) for k in range(20)]
    b = [sp.sample(scheme, sp.stream(42, 1, k)) for k in range(20)]
    assert a == b
    c = [sp.sample(scheme, sp.stream(43, 1, k)) for k in range(20)]
    assert a != c


# ---------------------------------------------------------------------------
# marginals
# ---------------------------------------------------------------------------

def test_rpt_marginals_cumulative():
    f, q = sp.marginals(sp.Rpt((0.5, 0.3, 0.2)))
    np.testing.assert_allclose(f, [0.5, 0.8, 1.0], atol=1e-15)
    np.testing.assert_allclose(q, f, atol=1e-15)


def test_tau_nice_q_is_tau_over_b():
    f, q = sp.marginals(sp.TauNice(4, 2))
    np.testing.assert_allclose(q, 0.5, atol=1e-15)
    # F_1: 3 of the 6 two-element subsets of {1..4} contain layer 1
    assert f[0] == pytest.approx(0.5)


@pytest.mark.parametrize("scheme", ALL_SCHEMES, ids=lambda s: type(s).__name__)
def test_marginals_match_enumeration(scheme):
    f, q = sp.marginals(scheme)
    f_ref, q_ref = enumerated_marginals(scheme)
    np.testing.assert_allclose(f, f_ref, atol=1e-12)
    np.testing.assert_allclose(q, q_ref, atol=1e-12)


@pytest.mark.parametrize(
    "scheme",
    [sp.Rpt((0.5, 0.3, 0.2)), sp.TauNice(4, 2),
     sp.TauSubmodel(5, 2, (0.4, 0.3, 0.2, 0.1)),
     sp.PartitionedSubmodel((frozenset({1, 3}), frozenset({2})), (0.6, 0.4))],
    ids=lambda s: type(s).__name__,
)
def test_marginals_match_monte_carlo(scheme):
    n = 20_000
    f_emp, q_emp = empirical_marginals(scheme, n, seed=5)
    f, q = sp.marginals(scheme)
    for name, emp, ana in (("F", f_emp, f), ("Q", q_emp, q)):
        for i in range(scheme.b):
            tol = 3.0 * math.sqrt(max(ana[i] * (1 - ana[i]), 0.0) / n) + 1e-12
            assert abs(emp[i] - ana[i]) <= tol, (name, i + 1)


def test_full_network_marginals_all_one():
    f, q = sp.marginals(sp.FullNetwork(4))
    np.testing.assert_array_equal(f, np.ones(4))
    np.testing.assert_array_equal(q, np.ones(4))


def test_rpt_f_nondecreasing_ends_at_one():
    f, q = sp.marginals(sp.Rpt((0.1, 0.2, 0.3, 0.4)))
    np.testing.assert_array_equal(f, q)
    assert np.all(np.diff(f) >= 0)
    assert f[-1] == pytest.approx(1.0, abs=1e-15)


# ---------------------------------------------------------------------------
# support / distribution
# ---------------------------------------------------------------------------

def test_support_full_network():
    assert sp.support(sp.FullNetwork(3)) == [frozenset({1, 2, 3})]


def test_support_rpt_drops_zero_cutoffs():
    assert sp.support(sp.Rpt((0.5, 0.0, 0.5))) == [frozenset({1, 2, 3}), frozenset({3})]


def test_support_partitioned():
    scheme = sp.PartitionedSubmodel((frozenset({1, 3}), frozenset({2})), (0.5, 0.5))
    assert sp.support(scheme) == [frozenset({1, 3}), frozenset({2})]


def test_singleton_partition_is_serial_sampling():
    # single-coordinate blocks reproduce serial block-coordinate sampling
    scheme = sp.PartitionedSubmodel(
        tuple(frozenset({i}) for i in range(1, 5)), (0.1, 0.2, 0.3, 0.4)
    )
    _, q = sp.marginals(scheme)
    np.testing.assert_allclose(q, [0.1, 0.2, 0.3, 0.4], atol=1e-15)
    rng = sp.stream(6)
    for _ in range(50):
        assert len(sp.sample(scheme, rng)) == 1


# ---------------------------------------------------------------------------
# epoch shift
# ---------------------------------------------------------------------------

def test_epoch_shift_alpha_zero_uniform():
    np.testing.assert_allclose(sp.epoch_shift_probs(3, 0.0, 0.7), np.full(3, 1 / 3), atol=1e-15)


def test_epoch_shift_half_progress_symmetric_uniform():
    # at progress 1/2 the exponent is constant in the layer index
    np.testing.assert_allclose(sp.epoch_shift_probs(3, 0.5, 0.5), np.full(3, 1 / 3), atol=1e-14)


def test_epoch_shift_progress_zero_matches_formula():
    # weights exp(alpha * (b - 1 - i)) for i in {0, 1, 2}: exponents (1.0, 0.5, 0.0)
    w = np.exp([1.0, 0.5, 0.0])
    expected = w / w.sum()
    np.testing.assert_allclose(sp.epoch_shift_probs(3, 0.5, 0.0), expected, atol=1e-14)


def test_epoch_shift_monotone_directions():
    p0 = sp.epoch_shift_probs(5, 0.8, 0.0)
    p1 = sp.epoch_shift_probs(5, 0.8, 1.0)
    assert np.all(np.diff(p0) < 0)  # shallow-biased at the start
    assert np.all(np.diff(p1) > 0)  # deep-biased at the end


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 64), st.floats(-4.0, 4.0), st.floats(0.0, 1.0))
def test_epoch_shift_valid_probability_vector(b, alpha, progress):
    p = sp.epoch_shift_probs(b, alpha, progress)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) <= 1e-12


def test_epoch_shift_scheme_materializes_rpt():
    scheme = sp.EpochShiftRpt(4, 0.8)
    rpt = scheme.at(0.0)
    assert isinstance(rpt, sp.Rpt)
    np.testing.assert_allclose(rpt.p, sp.epoch_shift_probs(4, 0.8, 0.0), atol=1e-15)
    assert rpt.p[0] > 0  # exponential weights never vanish
    assert scheme.at(1.0).p[-1] > scheme.at(0.0).p[-1]


def test_epoch_shift_scheme_roundtrip():
    scheme = sp.EpochShiftRpt(5, -0.3)
    assert sp.scheme_from_dict(sp.scheme_to_dict(scheme)) == scheme


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("scheme", ALL_SCHEMES, ids=lambda s: type(s).__name__)
def test_scheme_roundtrip(scheme):
    assert sp.scheme_from_dict(sp.scheme_to_dict(scheme)) == scheme
