"""Brute-force and finite-difference verifiers.

These are intentionally simple and slow.  They evaluate the raw weighted
reconstruction error ``0.5 * sum_i d_i * (alpha * b_i - w_i)**2`` directly and
share no code with the optimized kernels they check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DegenerateInput, TooLarge
from .qset import QuantSet, project_qset

MAX_ENUM_N = 12        # 3**12 ternary patterns ~ 531k
MAX_TWN_N = 10_000
MIN_GRID_POINTS = 1_000


@dataclass(eq=False)
class OracleReport:
    """Outcome of a verification suite: gap statistics plus per-trial failures."""

    suite: str
    trials: int
    max_abs_gap: float = 0.0
    max_rel_gap: float = 0.0
    failures: list = field(default_factory=list)  # (trial_key, description)
    wall_time: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures

    def record_gap(self, abs_gap: float, rel_gap: float) -> None:
        self.max_abs_gap = max(self.max_abs_gap, abs_gap)
        self.max_rel_gap = max(self.max_rel_gap, rel_gap)

    def fail(self, trial_key, description: str) -> None:
        self.failures.append((trial_key, description))

    def csv_rows(self) -> list[str]:
        rows = ["suite,trials,failures,max_abs_gap,max_rel_gap,wall_seconds"]
        rows.append(
            f"{self.suite},{self.trials},{len(self.failures)},"
            f"{self.max_abs_gap!r},{self.max_rel_gap!r},{self.wall_time!r}"
        )
        for key, desc in self.failures:
            rows.append(f"# failure,{key},{desc}")
        return rows


@lru_cache(maxsize=16)
def _ternary_patterns(n: int) -> np.ndarray:
    """All ternary code patterns of length n, shape (3**n, n), entries {-1,0,1}."""
    reps = np.arange(3**n)
    cols = []
    for i in range(n):
        cols.append(reps // 3**(n - 1 - i) % 3 - 1)
    return np.stack(cols, axis=1).astype(np.int8)


def oracle_ternary(w, d) -> tuple[float, float, np.ndarray]:
    """Enumerate every ternary code pattern with its closed-form scale.

    Returns ``(best objective, best alpha, best codes)``.  The all-zero
    pattern participates with objective ``0.5 * sum(d * w**2)``.
    """
    w = np.asarray(w, dtype=np.float64).ravel()
    d = np.asarray(d, dtype=np.float64).ravel()
    n = w.size
    if n > MAX_ENUM_N:
        raise TooLarge(f"n={n} exceeds the enumeration bound {MAX_ENUM_N}")
    patterns = _ternary_patterns(n)
    best_obj = np.inf
    best_alpha = 0.0
    best_codes = np.zeros(n, dtype=np.int8)
    chunk = max(1, 4_000_000 // max(n, 1))
    for start in range(0, patterns.shape[0], chunk):
        block = patterns[start:start + chunk]
        absb = np.abs(block)
        num = absb @ (d * np.abs(w))
        den = absb @ d.astype(np.float64)
        alphas = np.divide(num, den, out=np.zeros_like(num), where=den > 0.0)
        resid = alphas[:, None] * block - w[None, :]
        objectives = 0.5 * np.sum(d[None, :] * resid * resid, axis=1)
        i = int(np.argmin(objectives))
        if objectives[i] < best_obj:
            best_obj = float(objectives[i])
            best_alpha = float(alphas[i])
            best_codes = block[i].copy()
    return best_obj, best_alpha, best_codes


def oracle_twn_threshold(w) -> tuple[float, float]:
    """Brute-force the ternary threshold over the candidate set {0} + {|w_i|}.

    Maximizes ``(sum of magnitudes above delta)**2 / support size`` and
    returns ``(delta, alpha)`` of the maximizer.
    """
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.size > MAX_TWN_N:
        raise TooLarge(f"n={w.size} exceeds the threshold-search bound {MAX_TWN_N}")
    aw = np.abs(w)
    if not np.any(aw > 0.0):
        raise DegenerateInput("all weights are zero")
    best_score = -np.inf
    best = (0.0, 0.0)
    for delta in np.concatenate(([0.0], np.unique(aw))):
        support = aw > delta
        count = int(np.sum(support))
        if count == 0:
            continue
        total = float(np.sum(aw[support]))
        score = total * total / count
        if score > best_score:
            best_score = score
            best = (float(delta), total / count)
    return best


@lru_cache(maxsize=16)
def _binary_patterns(n: int) -> np.ndarray:
    """All 0/1 support patterns of length n, shape (2**n, n)."""
    reps = np.arange(2**n)
    return ((reps[:, None] >> np.arange(n)[None, :]) & 1).astype(np.int8)


def _one_sided_best(values: np.ndarray, curv: np.ndarray) -> tuple[float, float, np.ndarray]:
    """Enumerate 0/1 supports over strictly positive values.

    Returns (objective, scale, 0/1 codes); the empty support contributes
    ``0.5 * sum(curv * values**2)`` with scale 0.
    """
    n = values.size
    if n > MAX_ENUM_N:
        raise TooLarge(f"side size {n} exceeds the enumeration bound {MAX_ENUM_N}")
    patterns = _binary_patterns(n)
    num = patterns @ (curv * values)
    den = patterns @ curv
    scales = np.divide(num, den, out=np.zeros_like(num), where=den > 0.0)
    resid = scales[:, None] * patterns - values[None, :]
    objectives = 0.5 * np.sum(curv[None, :] * resid * resid, axis=1)
    best = int(np.argmin(objectives))
    return float(objectives[best]), float(scales[best]), patterns[best].copy()


def oracle_two_scale(w, d) -> tuple[float, float, float, np.ndarray, np.ndarray]:
    """Brute-force two-scale ternarization by enumerating each side separately.

    Returns ``(objective, alpha, beta, p, q)`` with ``p`` in {0,1}^n and
    ``q`` in {-1,0}^n.
    """
    w = np.asarray(w, dtype=np.float64).ravel()
    d = np.asarray(d, dtype=np.float64).ravel()
    pos = w > 0.0
    neg = w < 0.0
    p = np.zeros(w.size, dtype=np.int8)
    q = np.zeros(w.size, dtype=np.int8)
    alpha = 0.0
    beta = 0.0
    objective = 0.0
    if np.any(pos):
        obj_p, alpha, codes_p = _one_sided_best(w[pos], d[pos])
        p[pos] = codes_p
        objective += obj_p
    if np.any(neg):
        obj_n, beta, codes_n = _one_sided_best(-w[neg], d[neg])
        q[neg] = -codes_n
        objective += obj_n
    return objective, alpha, beta, p, q


def oracle_alpha_grid(w, d, qset: QuantSet, resolution: int = 100_000
                      ) -> tuple[float, float, np.ndarray]:
    """Sweep the scale over a uniform grid on ``(0, 2 * max|w|]``.

    Each grid point gets its optimal codes by nearest-value projection; the
    best grid point is returned as ``(objective, alpha, codes)``.  This is a
    feasible-point witness, not a certified global optimum.
    """
    w = np.asarray(w, dtype=np.float64).ravel()
    d = np.asarray(d, dtype=np.float64).ravel()
    if resolution < MIN_GRID_POINTS:
        raise ValueError(f"resolution must be at least {MIN_GRID_POINTS}")
    top = 2.0 * float(np.max(np.abs(w)))
    if top == 0.0:
        raise DegenerateInput("all weights are zero")
    alphas = np.linspace(top / resolution, top, resolution)
    best_obj = np.inf
    best_alpha = alphas[0]
    best_codes = np.zeros(w.size, dtype=np.int8)
    chunk = max(1, 2_000_000 // max(w.size, 1))
    for start in range(0, resolution, chunk):
        a = alphas[start:start + chunk]
        codes = project_qset(w[None, :] / a[:, None], qset)
        values = qset.value_of(codes)
        resid = a[:, None] * values - w[None, :]
        objs = 0.5 * np.sum(d[None, :] * resid * resid, axis=1)
        i = int(np.argmin(objs))
        if objs[i] < best_obj:
            best_obj = float(objs[i])
            best_alpha = float(a[i])
            best_codes = codes[i].copy()
    return best_obj, best_alpha, best_codes


def finite_diff_grad(loss_fn, point, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function."""
    x = np.asarray(point, dtype=np.float64).copy()
    grad = np.zeros_like(x)
    flat = x.ravel()
    out = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn(x)
        flat[i] = orig - h
        down = loss_fn(x)
        flat[i] = orig
        out[i] = (up - down) / (2.0 * h)
    return grad
