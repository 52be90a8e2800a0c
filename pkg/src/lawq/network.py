"""Dense feedforward network with batch normalization and a margin output.

The forward pass runs on quantized weights (scale times integer codes); the
full-precision shadow weights live in the training state and are only touched
by the optimizer.  Everything here is a pure function of its inputs so that
gradients can be checked by finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBatch, InvalidLabel, ShapeMismatch
from .quantizers import QuantizedLayer

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


@dataclass(frozen=True)
class LayerSpec:
    fan_in: int
    fan_out: int
    has_batch_norm: bool = True
    activation: str = "relu"  # "relu" | "none"

    def __post_init__(self):
        if self.fan_in < 1 or self.fan_out < 1:
            raise ValueError("fan_in and fan_out must be >= 1")
        if self.activation not in ("relu", "none"):
            raise ValueError(f"unknown activation {self.activation!r}")


def mlp_specs(n_features: int, hidden: tuple, n_classes: int) -> list[LayerSpec]:
    """Hidden layers with batch norm + relu, output layer with batch norm only."""
    sizes = [n_features, *hidden, n_classes]
    specs = []
    for i in range(len(sizes) - 1):
        last = i == len(sizes) - 2
        specs.append(LayerSpec(sizes[i], sizes[i + 1],
                               activation="none" if last else "relu"))
    return specs


def effective_weight(spec: LayerSpec, w: np.ndarray, quant) -> np.ndarray:
    """Weight matrix the forward pass actually uses.

    ``quant`` is None (full precision), a :class:`QuantizedLayer`, or an
    already-reconstructed array (methods without a scale/code form).
    """
    if quant is None:
        return w
    if isinstance(quant, QuantizedLayer):
        return quant.reconstruct().reshape(spec.fan_in, spec.fan_out)
    return np.asarray(quant, dtype=np.float64).reshape(spec.fan_in, spec.fan_out)


def layer_matmul_rescaled(x: np.ndarray, layer: QuantizedLayer, spec: LayerSpec) -> np.ndarray:
    """One-scale product in rescaled-input form: (alpha * x) @ code_values.

    Mathematically identical to multiplying by the reconstructed weights; with
    ternary codes the inner product is additions only.
    """
    code_values = layer.qset.value_of(layer.codes).reshape(spec.fan_in, spec.fan_out)
    return (layer.alpha * x) @ code_values


# ---------------------------------------------------------------------------
# Batch normalization
# ---------------------------------------------------------------------------

def batch_norm_forward(x, gamma, delta, running_mean, running_var, training: bool,
                       eps: float = BN_EPS):
    """Returns (out, cache, batch_mean, batch_var).

    In training mode the batch statistics are returned for the caller to fold
    into the running averages; this function never mutates state.  Eval mode
    normalizes with the running statistics.
    """
    if training:
        if x.shape[0] < 2:
            raise DegenerateBatch(f"batch size {x.shape[0]} < 2 in training mode")
        mean = x.mean(axis=0)
        var = x.var(axis=0)
    else:
        mean = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean) * inv_std
    out = gamma * x_hat + delta
    cache = (x_hat, inv_std, gamma)
    return out, cache, mean, var


def batch_norm_backward(dout, cache):
    """Gradients through training-mode batch normalization.

    Returns (dx, dgamma, ddelta); uses the closed form for biased batch
    variance.
    """
    x_hat, inv_std, gamma = cache
    batch = x_hat.shape[0]
    dgamma = np.sum(dout * x_hat, axis=0)
    ddelta = np.sum(dout, axis=0)
    dxhat = dout * gamma
    dx = (inv_std / batch) * (
        batch * dxhat - np.sum(dxhat, axis=0) - x_hat * np.sum(dxhat * x_hat, axis=0)
    )
    return dx, dgamma, ddelta


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def one_vs_rest_targets(labels, n_classes: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ShapeMismatch("labels must be 1-D")
    if np.any(y < 0) or np.any(y >= n_classes):
        bad = y[(y < 0) | (y >= n_classes)][0]
        raise InvalidLabel(f"label {bad} outside [0, {n_classes})")
    targets = -np.ones((y.size, n_classes))
    targets[np.arange(y.size), y] = 1.0
    return targets


def square_hinge_loss(scores, labels):
    """One-vs-rest squared hinge: mean over samples of sum_c max(0, 1 - y*s)^2.

    Returns (loss, gradient wrt scores).
    """
    scores = np.asarray(scores, dtype=np.float64)
    y = one_vs_rest_targets(labels, scores.shape[1])
    if scores.shape[0] != y.shape[0]:
        raise ShapeMismatch("scores and labels disagree on batch size")
    margin = np.maximum(0.0, 1.0 - y * scores)
    loss = float(np.mean(np.sum(margin**2, axis=1)))
    grad = (-2.0 * y * margin) / scores.shape[0]
    return loss, grad


def cross_entropy_loss(scores, labels):
    """Softmax cross entropy (diagnostic alternative output loss)."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if np.any(y < 0) or np.any(y >= scores.shape[1]):
        raise InvalidLabel("label outside [0, n_classes)")
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    n = scores.shape[0]
    loss = float(np.mean(-np.log(probs[np.arange(n), y] + 1e-300)))
    grad = probs.copy()
    grad[np.arange(n), y] -= 1.0
    return loss, grad / n


LOSSES = {"square_hinge": square_hinge_loss, "cross_entropy": cross_entropy_loss}


# ---------------------------------------------------------------------------
# Forward / backward over the whole network
# ---------------------------------------------------------------------------

def forward(specs, weights, bn_params, x, training: bool, quant=None):
    """Run the network; returns (scores, caches).

    ``weights`` holds the effective (already quantized) weight matrices.
    ``bn_params`` is a list of (gamma, delta, running_mean, running_var) or
    None per layer.  ``caches`` carries everything backward() needs plus the
    per-layer batch statistics for running-average updates.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != specs[0].fan_in:
        raise ShapeMismatch(
            f"input of shape {x.shape} does not match fan_in {specs[0].fan_in}")
    caches = []
    for i, spec in enumerate(specs):
        w_eff = weights[i]
        if w_eff.shape != (spec.fan_in, spec.fan_out):
            raise ShapeMismatch(
                f"layer {i} weight shape {w_eff.shape} != {(spec.fan_in, spec.fan_out)}")
        z = x @ w_eff
        cache = {"x": x, "w": w_eff}
        if bn_params[i] is not None:
            gamma, delta, run_mean, run_var = bn_params[i]
            z, bn_cache, b_mean, b_var = batch_norm_forward(
                z, gamma, delta, run_mean, run_var, training)
            cache["bn"] = bn_cache
            cache["bn_stats"] = (b_mean, b_var)
        if spec.activation == "relu":
            cache["pre_act"] = z
            z = np.maximum(z, 0.0)
        x = z
        caches.append(cache)
    return x, caches


def backward(specs, caches, dscores):
    """Backpropagate; returns (weight grads, bn grads) per layer.

    Gradients are taken at the weights used in the forward pass (i.e. the
    quantized weights when the forward was quantized).
    """
    grads_w = [None] * len(specs)
    grads_bn = [None] * len(specs)
    dz = np.asarray(dscores, dtype=np.float64)
    for i in range(len(specs) - 1, -1, -1):
        spec = specs[i]
        cache = caches[i]
        if spec.activation == "relu":
            dz = dz * (cache["pre_act"] > 0.0)
        if "bn" in cache:
            dz, dgamma, ddelta = batch_norm_backward(dz, cache["bn"])
            grads_bn[i] = (dgamma, ddelta)
        grads_w[i] = cache["x"].T @ dz
        if i > 0:
            dz = dz @ cache["w"].T
    return grads_w, grads_bn


def predict_labels(scores: np.ndarray) -> np.ndarray:
    return np.argmax(scores, axis=1)


def error_rate(scores: np.ndarray, labels) -> float:
    return float(np.mean(predict_labels(scores) != np.asarray(labels)))
