"""Weight-quantization kernels.

All solvers minimize the curvature-weighted reconstruction error

    0.5 * sum_i d_i * (w_hat_i - w_i)**2

over the admissible quantized forms: ``w_hat = alpha * b`` with codes ``b``
drawn from a value set (one scale), or ``w_hat in {-beta, 0, alpha}`` with
separate positive/negative scales (two scales).  Closed-form baselines that
ignore curvature (sign, mean-scaled binarization, ternary thresholding, the
tanh-normalized m-bit map) are included for comparison.

Everything operates on flat float64 vectors and returns integer codes; see
:class:`QuantizedLayer`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCodesWarning, DegenerateInput, ShapeMismatch
from .qset import QuantSet, build_qset, project_qset, round_half_away_from_zero, ternary_qset
from .validation import check_curvature, check_weights, require_some_nonzero

# Alternating solvers: absolute tolerance on successive scale iterates, and a
# hard sweep cap (typical instances settle in well under ten sweeps).
SCALE_TOL = 1e-6
MAX_SWEEPS = 100


@dataclass(frozen=True, eq=False)
class QuantizedLayer:
    """Quantization result: scale(s) plus integer codes into a value set.

    One-scale mode reconstructs ``alpha * value_of(codes)``.  Two-scale mode
    (``beta`` set) reconstructs ``alpha`` where ``codes == +1``, ``-beta``
    where ``codes == -1`` and zero elsewhere.
    """

    alpha: float
    codes: np.ndarray = field(repr=False)  # int8 signed level indices
    qset: QuantSet
    beta: float | None = None
    objective: float = 0.0
    n_iter: int = 0
    converged: bool = True
    degenerate: bool = False       # all codes zero, scale(s) unidentifiable
    degenerate_pos: bool = False   # two-scale: positive side emptied
    degenerate_neg: bool = False   # two-scale: negative side emptied
    objective_sweeps: tuple = ()   # objective after each alternating sweep

    @property
    def n(self) -> int:
        return self.codes.size

    def reconstruct(self) -> np.ndarray:
        """Quantized weight values."""
        if self.beta is None:
            return self.alpha * self.qset.value_of(self.codes)
        pos = np.where(self.codes > 0, self.alpha, 0.0)
        neg = np.where(self.codes < 0, -self.beta, 0.0)
        return pos + neg


@dataclass(frozen=True, eq=False)
class TernaryExactTrace:
    """Intermediate state of the exact ternary solver.

    ``sort_order`` permutes ``|w|`` into descending order (stable, 0-based).
    ``ratios[j]`` is the candidate half-scale: the prefix sum of the permuted
    ``|d * w|`` over twice the prefix sum of the permuted ``d``.
    ``candidates`` are the indices passing the sign-change screen; ``chosen``
    is the index whose scale/codes pair attains the smallest true objective.
    """

    sort_order: np.ndarray
    ratios: np.ndarray
    candidates: np.ndarray
    chosen: int
    objective: float


def threshold_codes(w: np.ndarray, delta: float) -> np.ndarray:
    """Ternary codes by strict thresholding: +1 above delta, -1 below -delta."""
    return (w > delta).astype(np.int8) - (w < -delta).astype(np.int8)


def _objective(w: np.ndarray, d: np.ndarray, w_hat: np.ndarray) -> float:
    return 0.5 * float(np.sum(d * (w_hat - w) ** 2))


def _warn_degenerate(context: str) -> None:
    warnings.warn(
        f"{context}: all-zero code vector, reconstruction is zero",
        DegenerateCodesWarning,
        stacklevel=3,
    )


# ---------------------------------------------------------------------------
# Closed-form baselines
# ---------------------------------------------------------------------------

def binarize_sign(w) -> QuantizedLayer:
    """Plain sign binarization with unit scale; sign(0) is taken as +1."""
    w = check_weights(w)
    codes = np.where(w >= 0.0, 1, -1).astype(np.int8)
    d = np.ones_like(w)
    qs = ternary_qset()
    return QuantizedLayer(1.0, codes, qs, objective=_objective(w, d, codes.astype(np.float64)))


def binarize_bwn(w) -> QuantizedLayer:
    """Mean-magnitude scaled binarization: alpha = mean(|w|), codes = sign(w)."""
    w = check_weights(w)
    require_some_nonzero(w)
    alpha = float(np.mean(np.abs(w)))
    codes = np.where(w >= 0.0, 1, -1).astype(np.int8)
    d = np.ones_like(w)
    return QuantizedLayer(alpha, codes, ternary_qset(),
                          objective=_objective(w, d, alpha * codes))


def binarize_lab(w, d) -> QuantizedLayer:
    """Curvature-weighted binarization: alpha = sum(d|w|) / sum(d)."""
    w = check_weights(w)
    d = check_curvature(d, w.size)
    require_some_nonzero(w)
    alpha = float(np.sum(d * np.abs(w)) / np.sum(d))
    codes = np.where(w >= 0.0, 1, -1).astype(np.int8)
    return QuantizedLayer(alpha, codes, ternary_qset(),
                          objective=_objective(w, d, alpha * codes))


def ternarize_twn(w) -> QuantizedLayer:
    """Threshold-rule ternarization: delta = 0.7 * mean(|w|), alpha = mean of
    the surviving magnitudes."""
    w = check_weights(w)
    aw = np.abs(w)
    delta = 0.7 * float(np.mean(aw))
    support = aw > delta
    if not np.any(support):
        raise DegenerateInput("no weight exceeds the ternary threshold")
    alpha = float(np.mean(aw[support]))
    codes = threshold_codes(w, delta)
    d = np.ones_like(w)
    return QuantizedLayer(alpha, codes, ternary_qset(),
                          objective=_objective(w, d, alpha * codes))


# ---------------------------------------------------------------------------
# Loss-aware ternarization, one scale
# ---------------------------------------------------------------------------

def ternarize_exact(w, d) -> tuple[QuantizedLayer, TernaryExactTrace]:
    """Globally optimal curvature-weighted ternarization.

    Sorts ``|w|`` in descending order and forms, for every prefix length j,
    the candidate scale ``alpha_j = 2 * c_j`` where

        c_j = cumsum(perm(|d * w|))_j / (2 * cumsum(perm(d))_j).

    Every candidate is scored by the true objective of the pair
    ``(alpha_j, codes = threshold(w, alpha_j / 2))`` and the best pair is
    returned.  Scoring all prefixes (rather than only those passing the
    sign-change screen) costs nothing asymptotically and remains correct when
    the screen is empty or ill-defined under ties; the screen's outcome is
    still reported in the trace.
    """
    w = check_weights(w)
    d = check_curvature(d, w.size)
    require_some_nonzero(w)
    n = w.size
    aw = np.abs(w)
    order = np.argsort(-aw, kind="stable")
    aw_sorted = aw[order]
    cum_d = np.cumsum(d[order])
    cum_dw = np.cumsum((d * aw)[order])
    c = cum_dw / (2.0 * cum_d)
    alphas = 2.0 * c

    # Sign-change screen (recorded only; selection uses the full candidate set).
    if n > 1:
        lhs = aw_sorted[:-1] - c[:-1]
        rhs = aw_sorted[1:] - c[:-1]
        candidates = np.flatnonzero(lhs * rhs < 0.0)
    else:
        candidates = np.array([], dtype=np.int64)

    # True objective of every candidate pair via prefix sums: the support of a
    # strict threshold at c_j is the first k_j entries of the sorted order.
    asc = aw_sorted[::-1]
    k_support = n - np.searchsorted(asc, c, side="right")
    cum_d_pad = np.concatenate(([0.0], cum_d))
    cum_dw_pad = np.concatenate(([0.0], cum_dw))
    base = 0.5 * float(np.sum(d * w * w))
    objectives = base + 0.5 * (
        alphas**2 * cum_d_pad[k_support] - 2.0 * alphas * cum_dw_pad[k_support]
    )
    j = int(np.argmin(objectives))
    alpha = float(alphas[j])
    codes = threshold_codes(w, alpha / 2.0)
    # The prefix-sum scores above can cancel catastrophically near zero;
    # report the final objective from the residuals instead.
    objective = _objective(w, d, alpha * codes)
    layer = QuantizedLayer(alpha, codes, ternary_qset(), objective=objective)
    trace = TernaryExactTrace(order, c, candidates, j, objective)
    return layer, trace


def ternarize_approx(w, d, codes_init=None, *, tol: float = SCALE_TOL,
                     max_iter: int = MAX_SWEEPS) -> QuantizedLayer:
    """Alternating solver for curvature-weighted ternarization.

    Repeats ``alpha <- sum(d|w| over support) / sum(d over support)`` and
    ``codes <- threshold(w, alpha / 2)`` from ``alpha = 1`` until the scale
    moves by at most ``tol`` or the sweep cap is hit.  ``codes_init`` defaults
    to ``sign(w)``; passing the previous step's codes warm-starts the solve.
    """
    w = check_weights(w)
    d = check_curvature(d, w.size)
    if codes_init is None:
        codes = np.sign(w).astype(np.int8)
    else:
        codes = np.asarray(codes_init, dtype=np.int8).ravel()
        if codes.size != w.size:
            raise ShapeMismatch(f"codes_init has length {codes.size}, expected {w.size}")
    qs = ternary_qset()
    alpha, alpha_old = 1.0, 0.0
    sweeps = 0
    degenerate = False
    objs: list[float] = []
    while abs(alpha - alpha_old) > tol and sweeps < max_iter:
        absb = np.abs(codes).astype(np.float64)
        den = float(np.sum(d * absb))
        if den == 0.0:
            degenerate = True
            break
        alpha_old = alpha
        alpha = float(np.sum(d * absb * np.abs(w))) / den
        codes = threshold_codes(w, alpha / 2.0)
        sweeps += 1
        objs.append(_objective(w, d, alpha * codes))
        if not np.any(codes):
            degenerate = True
            break
    if degenerate:
        _warn_degenerate("ternarize_approx")
        codes = np.zeros_like(codes)
        return QuantizedLayer(0.0, codes, qs, objective=_objective(w, d, np.zeros_like(w)),
                              n_iter=sweeps, converged=True, degenerate=True,
                              objective_sweeps=tuple(objs))
    converged = abs(alpha - alpha_old) <= tol
    return QuantizedLayer(alpha, codes, qs, objective=objs[-1] if objs else _objective(w, d, alpha * codes),
                          n_iter=sweeps, converged=converged,
                          objective_sweeps=tuple(objs))


# ---------------------------------------------------------------------------
# Two scaling parameters
# ---------------------------------------------------------------------------

def _one_sided_exact(values: np.ndarray, curv: np.ndarray) -> tuple[float, np.ndarray]:
    """Exact solve of the one-sided problem on strictly positive values.

    Returns (scale, 0/1 codes over ``values``).  Thresholding positive values
    never produces -1, so this is the plain exact solver on the subvector.
    """
    layer, _ = ternarize_exact(values, curv)
    return layer.alpha, layer.codes


def ternarize_two_scale_exact(w, d) -> QuantizedLayer:
    """Exact ternarization with separate positive and negative scales.

    The objective decouples: the positive entries form a one-sided problem
    yielding ``alpha``, the negated negative entries another yielding
    ``beta``.  An empty side gets scale 0 and zero codes.
    """
    w = check_weights(w)
    d = check_curvature(d, w.size)
    require_some_nonzero(w)
    pos = w > 0.0
    neg = w < 0.0
    codes = np.zeros(w.size, dtype=np.int8)
    alpha = 0.0
    beta = 0.0
    if np.any(pos):
        alpha, sub = _one_sided_exact(w[pos], d[pos])
        codes[pos] = sub
    if np.any(neg):
        beta, sub = _one_sided_exact(-w[neg], d[neg])
        codes[neg] = -sub
    layer = QuantizedLayer(alpha, codes, ternary_qset(), beta=beta)
    obj = _objective(w, d, layer.reconstruct())
    return QuantizedLayer(alpha, codes, ternary_qset(), beta=beta, objective=obj)


def ternarize_two_scale_approx(w, d, codes_init=None, *, tol: float = SCALE_TOL,
                               max_iter: int = MAX_SWEEPS) -> QuantizedLayer:
    """Alternating solver for two-scale ternarization.

    Each sweep updates (alpha, positive codes, beta, negative codes) in turn,
    starting from ``alpha = beta = 1``, and stops once both scales move by at
    most ``tol``.  A side whose support empties is frozen at scale 0 with zero
    codes and flagged; the other side keeps iterating.
    """
    w = check_weights(w)
    d = check_curvature(d, w.size)
    if codes_init is None:
        codes = np.sign(w).astype(np.int8)
    else:
        codes = np.asarray(codes_init, dtype=np.int8).ravel()
        if codes.size != w.size:
            raise ShapeMismatch(f"codes_init has length {codes.size}, expected {w.size}")
    p = codes > 0
    q = codes < 0
    alpha, alpha_old = 1.0, 0.0
    beta, beta_old = 1.0, 0.0
    pos_dead = False
    neg_dead = False
    sweeps = 0
    objs: list[float] = []

    def current_objective() -> float:
        recon = np.where(p, alpha, 0.0) + np.where(q, -beta, 0.0)
        return _objective(w, d, recon)

    while (abs(alpha - alpha_old) > tol or abs(beta - beta_old) > tol) and sweeps < max_iter:
        alpha_old, beta_old = alpha, beta
        if not pos_dead:
            den = float(np.sum(d[p]))
            if den == 0.0:
                pos_dead = True
                alpha = 0.0
                p = np.zeros_like(p)
            else:
                alpha = float(np.sum(d[p] * np.abs(w[p]))) / den
                p = w > alpha / 2.0
        if not neg_dead:
            den = float(np.sum(d[q]))
            if den == 0.0:
                neg_dead = True
                beta = 0.0
                q = np.zeros_like(q)
            else:
                beta = float(np.sum(d[q] * np.abs(w[q]))) / den
                q = w < -beta / 2.0
        sweeps += 1
        objs.append(current_objective())

    if pos_dead:
        _warn_degenerate("ternarize_two_scale_approx (positive side)")
    if neg_dead:
        _warn_degenerate("ternarize_two_scale_approx (negative side)")
    codes_out = p.astype(np.int8) - q.astype(np.int8)
    converged = abs(alpha - alpha_old) <= tol and abs(beta - beta_old) <= tol
    return QuantizedLayer(alpha, codes_out, ternary_qset(), beta=beta,
                          objective=objs[-1] if objs else current_objective(),
                          n_iter=sweeps, converged=converged,
                          degenerate=pos_dead and neg_dead,
                          degenerate_pos=pos_dead, degenerate_neg=neg_dead,
                          objective_sweeps=tuple(objs))


# ---------------------------------------------------------------------------
# m-bit quantization
# ---------------------------------------------------------------------------

# Number of alternation starts used when quantize_mbit is called without
# initial codes.  The alternation is cheap but local; restarting it from a
# spread of initial scales makes the returned solution near-global in practice.
MBIT_STARTS = 32


def _mbit_alternate(w, d, qset: QuantSet, codes: np.ndarray, tol: float,
                    max_iter: int) -> QuantizedLayer:
    alpha, alpha_old = 1.0, 0.0
    sweeps = 0
    degenerate = False
    objs: list[float] = []
    while abs(alpha - alpha_old) > tol and sweeps < max_iter:
        bv = qset.value_of(codes)
        den = float(np.sum(d * bv * bv))
        if den == 0.0:
            degenerate = True
            break
        alpha_old = alpha
        alpha = float(np.sum(d * np.abs(bv) * np.abs(w))) / den
        codes = project_qset(w / alpha, qset)
        sweeps += 1
        objs.append(_objective(w, d, alpha * qset.value_of(codes)))
        if not np.any(codes):
            degenerate = True
            break
    if degenerate:
        codes = np.zeros(w.size, dtype=np.int8)
        return QuantizedLayer(0.0, codes, qset, objective=_objective(w, d, np.zeros_like(w)),
                              n_iter=sweeps, converged=True, degenerate=True,
                              objective_sweeps=tuple(objs))
    converged = abs(alpha - alpha_old) <= tol
    return QuantizedLayer(alpha, codes, qset,
                          objective=objs[-1] if objs else _objective(w, d, alpha * qset.value_of(codes)),
                          n_iter=sweeps, converged=converged,
                          objective_sweeps=tuple(objs))


def quantize_mbit(w, d, qset: QuantSet, codes_init=None, *, tol: float = SCALE_TOL,
                  max_iter: int = MAX_SWEEPS) -> QuantizedLayer:
    """Alternating solver over an arbitrary symmetric value set.

    Each sweep takes ``alpha`` to the exact minimizer for the current codes,

        alpha = sum(d * |b| * |w|) / sum(d * b**2),

    then re-projects ``codes = nearest(w / alpha)``.  For the ternary set
    b**2 == |b| and the iteration coincides with :func:`ternarize_approx`.

    With explicit ``codes_init`` a single alternation runs from those codes
    (the warm-start path used during training).  Without it, the alternation
    restarts from full-magnitude signed codes plus nearest-value projections
    of ``w`` at a spread of initial scales, and the lowest-objective run is
    returned; a single run is local and can stall in a poor scale basin.
    """
    w = check_weights(w)
    d = check_curvature(d, w.size)
    if codes_init is not None:
        codes = np.asarray(codes_init, dtype=np.int8).ravel()
        if codes.size != w.size:
            raise ShapeMismatch(f"codes_init has length {codes.size}, expected {w.size}")
        result = _mbit_alternate(w, d, qset, codes, tol, max_iter)
        if result.degenerate:
            _warn_degenerate("quantize_mbit")
        return result

    best = _mbit_alternate(w, d, qset, (np.sign(w) * qset.levels).astype(np.int8),
                           tol, max_iter)
    top = 2.0 * float(np.max(np.abs(w)))
    if top > 0.0:
        # Materially-better only: numerically tied runs (including aliased
        # representations of the same reconstruction) keep the earliest start.
        tie_band = 1e-24 * float(np.sum(d * w * w))
        for alpha0 in np.linspace(top / MBIT_STARTS, top, MBIT_STARTS - 1):
            run = _mbit_alternate(w, d, qset, project_qset(w / alpha0, qset), tol, max_iter)
            if run.objective < best.objective - max(1e-12 * best.objective, tie_band):
                best = run
    if best.degenerate:
        _warn_degenerate("quantize_mbit")
    return best


def quantize_dorefa(w, bits: int) -> np.ndarray:
    """Tanh-normalized m-bit quantization; returns reconstructed weights.

    Maps ``tanh(w)`` into [0, 1], rounds onto the ``2**m - 1`` uniform grid
    (halves away from zero), and rescales to [-1, 1].  The reconstruction
    never contains 0 and the largest-|w| entry always maps to +/-1.
    """
    w = check_weights(w)
    if not isinstance(bits, (int, np.integer)) or bits < 2:
        raise DegenerateInput(f"bits must be an integer >= 2, got {bits!r}")
    t = np.tanh(w)
    m = float(np.max(np.abs(t)))
    if m == 0.0:
        raise DegenerateInput("all weights are zero")
    levels = 2.0**bits - 1.0
    x = t / (2.0 * m) + 0.5
    return 2.0 * round_half_away_from_zero(levels * x) / levels - 1.0


__all__ = [
    "QuantizedLayer",
    "TernaryExactTrace",
    "threshold_codes",
    "binarize_sign",
    "binarize_bwn",
    "binarize_lab",
    "ternarize_twn",
    "ternarize_exact",
    "ternarize_approx",
    "ternarize_two_scale_exact",
    "ternarize_two_scale_approx",
    "quantize_mbit",
    "quantize_dorefa",
    "build_qset",
    "project_qset",
    "QuantSet",
    "SCALE_TOL",
    "MAX_SWEEPS",
]
