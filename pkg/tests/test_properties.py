"""Property-based checks of the solver invariants."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_array_equal

from lawq.oracles import oracle_ternary, oracle_twn_threshold
from lawq.qset import build_qset, project_qset
from lawq.quantizers import (quantize_mbit, ternarize_approx, ternarize_exact,
                             ternarize_two_scale_exact, threshold_codes)


def instances(max_n=8):
    weights = st.lists(
        st.floats(-1.0, 1.0, allow_nan=False).filter(lambda v: abs(v) > 1e-12),
        min_size=1, max_size=max_n)
    return weights.flatmap(
        lambda w: st.tuples(
            st.just(np.array(w)),
            st.lists(st.floats(0.1, 10.0, allow_nan=False),
                     min_size=len(w), max_size=len(w)).map(np.array),
        )
    )


@settings(max_examples=150, deadline=None)
@given(instances())
def test_exact_matches_enumeration(inst):
    w, d = inst
    layer, _ = ternarize_exact(w, d)
    best_obj, _, _ = oracle_ternary(w, d)
    assert layer.objective <= best_obj + 1e-12 + 1e-9 * best_obj
    assert layer.objective >= best_obj - 1e-12 - 1e-9 * best_obj


@settings(max_examples=100, deadline=None)
@given(instances(), st.floats(0.1, 10.0, allow_nan=False))
def test_exact_positive_homogeneity(inst, gamma):
    w, d = inst
    base, _ = ternarize_exact(w, d)
    scaled, _ = ternarize_exact(gamma * w, d)
    assert_array_equal(base.codes, scaled.codes)
    assert scaled.alpha == pytest.approx(gamma * base.alpha, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(instances(), st.floats(0.1, 10.0, allow_nan=False))
def test_exact_curvature_scale_invariance(inst, kappa):
    w, d = inst
    base, _ = ternarize_exact(w, d)
    scaled, _ = ternarize_exact(w, kappa * d)
    assert_array_equal(base.codes, scaled.codes)
    assert scaled.alpha == pytest.approx(base.alpha, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(instances(), st.randoms(use_true_random=False))
def test_exact_permutation_equivariance(inst, rnd):
    w, d = inst
    perm = np.array(rnd.sample(range(w.size), w.size))
    base, _ = ternarize_exact(w, d)
    permuted, _ = ternarize_exact(w[perm], d[perm])
    assert permuted.alpha == pytest.approx(base.alpha, rel=1e-12)
    assert_array_equal(permuted.codes, base.codes[perm])


@settings(max_examples=100, deadline=None)
@given(instances())
def test_exact_consistency_conditions(inst):
    w, d = inst
    layer, _ = ternarize_exact(w, d)
    support = layer.codes != 0
    alpha = np.sum(d[support] * np.abs(w[support])) / np.sum(d[support])
    assert layer.alpha == pytest.approx(alpha, rel=1e-12)
    assert_array_equal(layer.codes, threshold_codes(w, layer.alpha / 2.0))


@settings(max_examples=100, deadline=None)
@given(instances())
def test_approx_descent_and_feasibility(inst):
    w, d = inst
    layer = ternarize_approx(w, d)
    assert np.all(np.diff(layer.objective_sweeps) <= 1e-12)
    assert layer.n_iter <= 100
    if not layer.degenerate:
        assert layer.alpha > 0


@settings(max_examples=100, deadline=None)
@given(instances())
def test_two_scale_dominates_one_scale(inst):
    w, d = inst
    two = ternarize_two_scale_exact(w, d)
    one, _ = ternarize_exact(w, d)
    assert two.objective <= one.objective + 1e-12


@settings(max_examples=60, deadline=None)
@given(instances(), st.sampled_from([(3, "linear"), (3, "log"), (4, "linear")]))
def test_mbit_descent_and_closure(inst, cfg):
    bits, scheme = cfg
    w, d = inst
    qset = build_qset(bits, scheme)
    layer = quantize_mbit(w, d, qset)
    assert np.all(np.diff(layer.objective_sweeps) <= 1e-12)
    if not layer.degenerate:
        recon = layer.reconstruct()
        assert np.all(np.isin(recon, layer.alpha * qset.values))


@settings(max_examples=150, deadline=None)
@given(st.floats(-5, 5, allow_nan=False),
       st.sampled_from([(2, "linear"), (3, "linear"), (3, "log"), (5, "log")]))
def test_projection_is_nearest(x, cfg):
    bits, scheme = cfg
    qset = build_qset(bits, scheme)
    value = float(qset.value_of(project_qset(x, qset)))
    best = min(np.abs(qset.values - x))
    assert abs(value - x) == pytest.approx(best, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(instances())
def test_twn_threshold_scale_is_support_mean(inst):
    w, _ = inst
    delta, alpha = oracle_twn_threshold(w)
    support = np.abs(w) > delta
    assert support.any()
    assert alpha == pytest.approx(float(np.mean(np.abs(w)[support])), rel=1e-12)
