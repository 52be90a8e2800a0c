"""Named verification suites: randomized kernel-vs-oracle agreement runs.

Each suite draws its instances from per-trial streams seeded by
``(suite seed, trial index)``, so any failure is reproducible from the pair
reported in the suite's failure list.  The default instance family is
``w ~ U[-1, 1]^n``, ``d ~ U[0.1, 10]^n`` with ``n ~ U{1..10}`` (small enough
for brute-force enumeration); suites that need no enumeration draw
layer-sized instances instead.
"""

from __future__ import annotations

import time

import numpy as np

from .network import backward, forward, mlp_specs, square_hinge_loss
from .oracles import (OracleReport, finite_diff_grad, oracle_alpha_grid,
                      oracle_ternary, oracle_twn_threshold, oracle_two_scale)
from .qset import build_qset
from .quantizers import (quantize_mbit, ternarize_approx, ternarize_exact,
                         ternarize_two_scale_exact, threshold_codes)

REL_TOL = 1e-9
ABS_TOL = 1e-12


def _instance(seed: int, index: int, n_lo: int = 1, n_hi: int = 10):
    rng = np.random.default_rng([seed, index])
    n = int(rng.integers(n_lo, n_hi + 1))
    w = rng.uniform(-1.0, 1.0, n)
    d = rng.uniform(0.1, 10.0, n)
    return w, d, rng


def _close(a: float, b: float, rtol: float = REL_TOL, atol: float = ABS_TOL) -> bool:
    return abs(a - b) <= atol + rtol * abs(b)


def _gap(a: float, b: float):
    abs_gap = abs(a - b)
    return abs_gap, abs_gap / max(abs(b), ABS_TOL)


def suite_oracle_ternary(trials: int, seed: int) -> OracleReport:
    """Exact ternary solver objective vs full enumeration."""
    report = OracleReport("oracle-ternary", trials)
    start = time.perf_counter()
    for i in range(trials):
        w, d, _ = _instance(seed, i)
        layer, _ = ternarize_exact(w, d)
        best_obj, _, _ = oracle_ternary(w, d)
        report.record_gap(*_gap(layer.objective, best_obj))
        if not _close(layer.objective, best_obj):
            report.fail((seed, i), f"objective {layer.objective!r} vs oracle {best_obj!r}")
        elif layer.objective < best_obj - ABS_TOL:
            report.fail((seed, i), "solver beat the exhaustive enumeration; oracle bug")
    report.wall_time = time.perf_counter() - start
    return report


def suite_twn_reduction(trials: int, seed: int) -> OracleReport:
    """With uniform curvature the exact solver must match the brute-force
    threshold search: same support, same scale, threshold = alpha / 2."""
    report = OracleReport("twn-reduction", trials)
    start = time.perf_counter()
    for i in range(trials):
        w, _, rng = _instance(seed, i)
        lam = float(rng.uniform(0.1, 10.0))
        layer, _ = ternarize_exact(w, lam * np.ones(w.size))
        delta, alpha = oracle_twn_threshold(w)
        report.record_gap(*_gap(layer.alpha, alpha))
        if not np.array_equal(layer.codes != 0, np.abs(w) > delta):
            report.fail((seed, i), "support differs from the threshold-search maximizer")
        elif not _close(layer.alpha, alpha):
            report.fail((seed, i), f"alpha {layer.alpha!r} vs threshold-search {alpha!r}")
        elif not np.array_equal(layer.codes, threshold_codes(w, layer.alpha / 2.0)):
            report.fail((seed, i), "codes are not the thresholding of w at alpha/2")
    report.wall_time = time.perf_counter() - start
    return report


def suite_approx_quality(trials: int, seed: int) -> OracleReport:
    """Alternating ternary solver from sign codes vs the exact solver.

    Instances are layer-sized (n ~ U{10..100}); the quality thresholds are
    aggregate: every run terminates, median sweeps <= 10, objective within 1%
    of exact on >= 95% of instances, objective non-increasing on every run.
    """
    report = OracleReport("approx-quality", trials)
    start = time.perf_counter()
    sweeps = []
    n_close = 0
    for i in range(trials):
        w, d, _ = _instance(seed, i, n_lo=10, n_hi=100)
        approx = ternarize_approx(w, d, codes_init=np.sign(w).astype(np.int8))
        exact, _ = ternarize_exact(w, d)
        sweeps.append(approx.n_iter)
        if not approx.converged:
            report.fail((seed, i), f"did not converge in {approx.n_iter} sweeps")
        diffs = np.diff(approx.objective_sweeps)
        if diffs.size and np.any(diffs > ABS_TOL):
            report.fail((seed, i), "objective increased between sweeps")
        gap = approx.objective - exact.objective
        report.record_gap(abs(gap), abs(gap) / max(exact.objective, ABS_TOL))
        if gap <= 0.01 * exact.objective + ABS_TOL:
            n_close += 1
    median = float(np.median(sweeps))
    close_rate = n_close / trials
    report.extras = {"median_sweeps": median, "within_1pct_rate": close_rate}
    if median > 10.0:
        report.fail((seed, "aggregate"), f"median sweep count {median} > 10")
    if close_rate < 0.95:
        report.fail((seed, "aggregate"),
                    f"only {100 * close_rate:.1f}% of instances within 1% of exact")
    report.wall_time = time.perf_counter() - start
    return report


def suite_oracle_two_scale(trials: int, seed: int) -> OracleReport:
    """Two-scale exact solver vs per-side enumeration, plus dominance over
    the one-scale solver."""
    report = OracleReport("oracle-two-scale", trials)
    start = time.perf_counter()
    for i in range(trials):
        w, d, _ = _instance(seed, i)
        two = ternarize_two_scale_exact(w, d)
        best_obj, _, _, _, _ = oracle_two_scale(w, d)
        report.record_gap(*_gap(two.objective, best_obj))
        if not _close(two.objective, best_obj):
            report.fail((seed, i), f"objective {two.objective!r} vs oracle {best_obj!r}")
            continue
        one, _ = ternarize_exact(w, d)
        if two.objective > one.objective + 1e-12:
            report.fail((seed, i), "two-scale objective exceeds the one-scale objective")
    report.wall_time = time.perf_counter() - start
    return report


def suite_oracle_mbit(trials: int, seed: int, grid_resolution: int = 100_000) -> OracleReport:
    """m-bit alternation: per-sweep descent on every instance; final objective
    within 1e-6 of a dense scale-grid witness on >= 99% of instances.

    Trials cycle through (bits, scheme) in {3, 4} x {linear, log}.
    """
    report = OracleReport("oracle-mbit", trials)
    start = time.perf_counter()
    configs = [(3, "linear"), (3, "log"), (4, "linear"), (4, "log")]
    n_within = 0
    for i in range(trials):
        bits, scheme = configs[i % len(configs)]
        qset = build_qset(bits, scheme)
        w, d, _ = _instance(seed, i)
        result = quantize_mbit(w, d, qset)
        diffs = np.diff(result.objective_sweeps)
        if diffs.size and np.any(diffs > ABS_TOL):
            report.fail((seed, i), f"objective increased between sweeps ({bits}-bit {scheme})")
        grid_obj, _, _ = oracle_alpha_grid(w, d, qset, grid_resolution)
        gap = result.objective - grid_obj
        report.record_gap(abs(gap), abs(gap) / max(grid_obj, ABS_TOL))
        if gap <= 1e-6:
            n_within += 1
    within_rate = n_within / trials
    report.extras = {"within_grid_rate": within_rate}
    if within_rate < 0.99:
        report.fail((seed, "aggregate"),
                    f"only {100 * within_rate:.1f}% of instances within 1e-6 of the grid witness")
    report.wall_time = time.perf_counter() - start
    return report


def suite_properties(trials: int, seed: int) -> OracleReport:
    """Structural invariances of the solvers.

    Positive homogeneity in the weights, invariance to a common curvature
    factor, and permutation equivariance; codes must match bitwise and scales
    to 1e-12 relative.  Trials cycle through the three properties, applying
    each to the exact, two-scale-exact and m-bit solvers.

    The m-bit solver's stopping threshold on successive scales carries weight
    units, so the homogeneity check scales it along with the weights; the
    update maps themselves are 1-homogeneous.
    """
    report = OracleReport("properties", trials)
    start = time.perf_counter()
    q3 = build_qset(3, "linear")

    def solve_all(w, d, tol_scale=1.0):
        one, _ = ternarize_exact(w, d)
        two = ternarize_two_scale_exact(w, d)
        mbit = quantize_mbit(w, d, q3, tol=1e-6 * tol_scale)
        return {"exact": one, "two-scale": two, "mbit": mbit}

    def scales_of(layer):
        return (layer.alpha,) if layer.beta is None else (layer.alpha, layer.beta)

    for i in range(trials):
        w, d, rng = _instance(seed, i)
        base = solve_all(w, d)
        prop = ("homogeneity", "curvature-scale", "permutation")[i % 3]
        if prop == "homogeneity":
            gamma = float(rng.uniform(0.1, 10.0))
            other = solve_all(gamma * w, d, tol_scale=gamma)
            expect = {name: tuple(gamma * s for s in scales_of(layer))
                      for name, layer in base.items()}
        elif prop == "curvature-scale":
            kappa = float(rng.uniform(0.1, 10.0))
            other = solve_all(w, kappa * d)
            expect = {name: scales_of(layer) for name, layer in base.items()}
        else:
            perm = rng.permutation(w.size)
            other = solve_all(w[perm], d[perm])
            expect = {name: scales_of(layer) for name, layer in base.items()}
        for name, layer in base.items():
            got = other[name]
            want_codes = layer.codes if prop != "permutation" else layer.codes[perm]
            if not np.array_equal(got.codes, want_codes):
                report.fail((seed, i), f"{prop}: {name} codes changed")
                continue
            for s_got, s_want in zip(scales_of(got), expect[name]):
                gap = abs(s_got - s_want) / max(abs(s_want), ABS_TOL)
                report.record_gap(abs(s_got - s_want), gap)
                if s_want == 0.0 and s_got == 0.0:
                    continue
                if gap > 1e-12:
                    report.fail((seed, i), f"{prop}: {name} scale moved by {gap:.2e}")
    report.wall_time = time.perf_counter() - start
    return report


GRADCHECK_NET_SEED = 9  # evaluation point sits clear of relu/hinge kinks


def gradcheck_point(net_seed: int, quantized: bool = True):
    """Deterministic 20-10-5 check point: specs, effective weights, batch-norm
    parameters and a batch.

    With ``quantized`` the effective weights are a frozen loss-aware
    ternarization of the initialized weights (uniform curvature); the check
    then differentiates the quantized forward graph at the quantized entries.
    """
    from .training import NetworkState

    specs = mlp_specs(20, (10,), 5)
    rng = np.random.default_rng([net_seed, 11])
    net = NetworkState(specs, seed=net_seed)
    weights = []
    for spec, w in zip(specs, net.weights):
        if quantized:
            layer = ternarize_approx(w.ravel(), np.ones(w.size))
            weights.append(layer.reconstruct().reshape(spec.fan_in, spec.fan_out))
        else:
            weights.append(w.copy())
    bn = [tuple(p) for p in net.bn]
    x = rng.normal(0.0, 1.0, (8, 20))
    y = rng.integers(0, 5, 8)
    return specs, weights, bn, x, y


def _kink_margin(specs, weights, bn, x, y) -> float:
    """Distance of the check point from the relu/hinge kinks.

    Central differences straddle a kink when an activation sits within ~h of
    it; at such points the one-sided derivative disagrees with any finite
    difference and the comparison is meaningless, so check points must keep a
    healthy margin.
    """
    scores, caches = forward(specs, weights, bn, x, training=True)
    pre = min(float(np.abs(c["pre_act"]).min()) for c in caches if "pre_act" in c)
    targets = -np.ones_like(scores)
    targets[np.arange(y.size), y] = 1.0
    hinge = float(np.abs(1.0 - targets * scores).min())
    return min(pre, hinge)


KINK_MARGIN = 0.03


def suite_gradcheck(trials: int, seed: int = GRADCHECK_NET_SEED,
                    rel_tol: float = 1e-4, h: float = 1e-5) -> OracleReport:
    """Analytic gradients vs central differences on a 20-10-5 network.

    Batch norm and the squared hinge included; the forward pass runs on frozen
    ternarized weights and the differencing perturbs those quantized entries.
    Coordinates where both magnitudes are below 1e-8 are ignored.  Seeds whose
    check point sits within ``KINK_MARGIN`` of a relu/hinge kink are skipped
    (finite differences are invalid across kinks); each trial reports the seed
    it actually checked.
    """
    report = OracleReport("gradcheck", trials)
    start = time.perf_counter()
    net_seed = seed - 1
    for t in range(trials):
        while True:
            net_seed += 1
            specs, weights, bn, x, y = gradcheck_point(net_seed)
            if _kink_margin(specs, weights, bn, x, y) >= KINK_MARGIN:
                break

        def loss_at(ws, bns):
            scores, _ = forward(specs, ws, bns, x, training=True)
            return square_hinge_loss(scores, y)[0]

        scores, caches = forward(specs, weights, bn, x, training=True)
        _, dscores = square_hinge_loss(scores, y)
        grads_w, grads_bn = backward(specs, caches, dscores)
        worst = 0.0
        for li in range(len(specs)):
            def f(flat, li=li):
                ws = [w.copy() for w in weights]
                ws[li] = flat.reshape(ws[li].shape)
                return loss_at(ws, bn)

            numeric = finite_diff_grad(f, weights[li].ravel(), h)
            worst = max(worst, _worst_rel(grads_w[li].ravel(), numeric))
            for j in range(2):
                def g(vec, li=li, j=j):
                    bns = [list(p) if p else None for p in bn]
                    bns[li][j] = vec
                    return loss_at(weights, [tuple(p) if p else None for p in bns])

                numeric = finite_diff_grad(g, bn[li][j].copy(), h)
                worst = max(worst, _worst_rel(grads_bn[li][j], numeric))
        report.record_gap(worst, worst)
        if worst > rel_tol:
            report.fail((net_seed, t), f"worst relative gradient error {worst:.2e}")
    report.wall_time = time.perf_counter() - start
    return report


def _worst_rel(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    worst = 0.0
    for a, b in zip(analytic.ravel(), numeric.ravel()):
        if abs(a) < floor and abs(b) < floor:
            continue
        worst = max(worst, abs(a - b) / max(abs(a), abs(b)))
    return worst


SUITES = {
    "oracle-ternary": suite_oracle_ternary,
    "oracle-two-scale": suite_oracle_two_scale,
    "oracle-mbit": suite_oracle_mbit,
    "twn-reduction": suite_twn_reduction,
    "gradcheck": suite_gradcheck,
    "properties": suite_properties,
}
