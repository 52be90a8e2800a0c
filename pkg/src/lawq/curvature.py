"""Adam moment tracking and the diagonal curvature estimate.

The second-moment estimate doubles as a per-weight curvature proxy: the
preconditioned gradient step divides by ``d = (eps + sqrt(v_hat)) / lr``, and
the same ``d`` weights the quantization objective on the next step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteGradient, ShapeMismatch


@dataclass(frozen=True)
class AdamHyper:
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    learning_rate: float = 0.01

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.epsilon <= 0.0 or self.learning_rate <= 0.0:
            raise ValueError("epsilon and learning_rate must be positive")


@dataclass(frozen=True, eq=False)
class OptimizerState:
    """First/second moment vectors and the shared step counter."""

    m: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "OptimizerState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(state: OptimizerState, grad, hyper: AdamHyper
              ) -> tuple[OptimizerState, np.ndarray, np.ndarray]:
    """Advance the moment estimates one step.

    Returns the new state plus the bias-corrected moments
    ``m_hat = m' / (1 - beta1**t')`` and ``v_hat = v' / (1 - beta2**t')``.
    """
    g = np.asarray(grad, dtype=np.float64).ravel()
    if g.size != state.m.size:
        raise ShapeMismatch(f"gradient has length {g.size}, expected {state.m.size}")
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient("gradient contains NaN/Inf")
    t_new = state.t + 1
    m_new = hyper.beta1 * state.m + (1.0 - hyper.beta1) * g
    v_new = hyper.beta2 * state.v + (1.0 - hyper.beta2) * (g * g)
    m_hat = m_new / (1.0 - hyper.beta1**t_new)
    v_hat = v_new / (1.0 - hyper.beta2**t_new)
    return OptimizerState(m_new, v_new, t_new), m_hat, v_hat


def curvature_from_moments(v_hat, eta: float, epsilon: float) -> np.ndarray:
    """Diagonal curvature ``d = (epsilon + sqrt(v_hat)) / eta``; strictly positive."""
    v = np.asarray(v_hat, dtype=np.float64)
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    return (epsilon + np.sqrt(np.maximum(v, 0.0))) / eta


def precond_step(w, m_hat, d) -> np.ndarray:
    """Preconditioned gradient step ``w - m_hat / d``."""
    w = np.asarray(w, dtype=np.float64)
    m_hat = np.asarray(m_hat, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if not (w.shape == m_hat.shape == d.shape):
        raise ShapeMismatch("w, m_hat and d must share a shape")
    return w - m_hat / d
