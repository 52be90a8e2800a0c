"""Training loop: quantize, forward, backprop, moment update, preconditioned step.

Per minibatch, each layer is re-quantized from its full-precision shadow
weights and the previous step's curvature, the loss and gradients are computed
through the quantized forward graph, the moments advance, and the
preconditioned step ``w <- w - m_hat / d`` updates the shadow weights.  For
binary/ternary methods the shadow weights are then clipped to [-1, 1]; m-bit
(m > 2) methods train unclipped.

Everything is seeded: init, validation split and minibatch order derive their
own streams from the run seed, so metrics are reproducible bitwise.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .curvature import AdamHyper, OptimizerState, adam_step, curvature_from_moments, precond_step
from .errors import BadValue
from .network import (BN_MOMENTUM, LayerSpec, LOSSES, backward, effective_weight,
                      error_rate, forward, mlp_specs)
from .qset import build_qset
from .quantizers import (QuantizedLayer, binarize_bwn, binarize_lab, binarize_sign,
                         quantize_dorefa, quantize_mbit, ternarize_approx,
                         ternarize_exact, ternarize_twn, ternarize_two_scale_approx,
                         ternarize_two_scale_exact)

METHODS = ("full_precision", "sign", "bwn", "lab", "twn", "dorefa",
           "lat-exact", "lat-approx", "lat2-exact", "lat2-approx", "laq")
CURVATURE_METHODS = ("lab", "lat-exact", "lat-approx", "lat2-exact", "lat2-approx", "laq")
INIT_SCALE = 0.08  # weights start uniform in [-INIT_SCALE, INIT_SCALE]


@dataclass(frozen=True)
class ScheduleConfig:
    """Step-decay learning-rate schedule.

    ``milestones`` mode multiplies by ``factor`` at each listed epoch;
    ``geometric`` mode multiplies by ``factor`` every ``every`` epochs once
    past ``after``; ``constant`` ignores the decay fields.
    """

    lr: float = 0.01
    kind: str = "milestones"  # "constant" | "milestones" | "geometric"
    factor: float = 0.1
    milestones: tuple = (15, 25)
    every: int = 1
    after: int = 0

    def __post_init__(self):
        if self.lr <= 0.0:
            raise BadValue("initial learning rate must be positive")
        if self.kind not in ("constant", "milestones", "geometric"):
            raise BadValue(f"unknown schedule kind {self.kind!r}")
        if self.kind == "geometric" and self.every < 1:
            raise BadValue("schedule 'every' must be >= 1")


def lr_schedule(epoch: int, schedule: ScheduleConfig) -> float:
    if epoch < 0:
        raise BadValue("epoch must be >= 0")
    if schedule.kind == "constant":
        return schedule.lr
    if schedule.kind == "milestones":
        hits = sum(1 for m in schedule.milestones if m <= epoch)
        return schedule.lr * schedule.factor**hits
    steps = max(0, epoch - schedule.after) // schedule.every
    return schedule.lr * schedule.factor**steps


@dataclass(frozen=True)
class TrainConfig:
    method: str = "lat-approx"
    bits: int = 2
    scheme: str = "linear"
    epochs: int = 10
    batch_size: int = 100
    seed: int = 0
    hidden: tuple = (128, 128)
    loss: str = "square_hinge"
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    adam: AdamHyper = field(default_factory=lambda: AdamHyper(learning_rate=1.0))
    val_fraction: float = 0.1
    grad_clip: float | None = None  # recurrent-style gradient clipping bound
    init_scale: float = INIT_SCALE

    def __post_init__(self):
        if self.method not in METHODS:
            raise BadValue(f"unknown method {self.method!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise BadValue("epochs and batch_size must be >= 1")
        if self.loss not in LOSSES:
            raise BadValue(f"unknown loss {self.loss!r}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise BadValue("val_fraction must lie in [0, 1)")


def clips_weights(method: str, bits: int) -> bool:
    """Binary/ternary methods clip shadow weights to [-1, 1]; m-bit (m > 2) do not."""
    if method in ("sign", "bwn", "lab", "twn", "lat-exact", "lat-approx",
                  "lat2-exact", "lat2-approx"):
        return True
    if method in ("laq", "dorefa"):
        return bits == 2
    return False


class NetworkState:
    """Mutable per-run training state: shadow weights, quantized cache,
    optimizer moments, batch-norm parameters and the previous-step curvature."""

    def __init__(self, specs: list[LayerSpec], seed: int, init_scale: float = INIT_SCALE):
        rng = np.random.default_rng([seed, 0])
        self.specs = specs
        self.weights = [rng.uniform(-init_scale, init_scale, (s.fan_in, s.fan_out))
                        for s in specs]
        self.bn = [
            [np.ones(s.fan_out), np.zeros(s.fan_out),
             np.zeros(s.fan_out), np.ones(s.fan_out)] if s.has_batch_norm else None
            for s in specs
        ]
        self.opt_w = [OptimizerState.zeros(s.fan_in * s.fan_out) for s in specs]
        self.opt_bn = [
            (OptimizerState.zeros(s.fan_out), OptimizerState.zeros(s.fan_out))
            if s.has_batch_norm else None
            for s in specs
        ]
        # Quantization weighting for the next step; uniform before the first update.
        self.curvature = [np.ones(s.fan_in * s.fan_out) for s in specs]
        self.quant: list = [None] * len(specs)
        self.step = 0
        self.degenerate_events = 0

    @property
    def n_layers(self) -> int:
        return len(self.specs)


def quantize_layer(method: str, w_flat: np.ndarray, d: np.ndarray, bits: int,
                   scheme: str, prev: QuantizedLayer | None):
    """Dispatch one layer's quantization; returns None for full precision,
    an ndarray for reconstruction-only methods, else a QuantizedLayer."""
    if method == "full_precision":
        return None
    if method == "sign":
        return binarize_sign(w_flat)
    if method == "bwn":
        return binarize_bwn(w_flat)
    if method == "lab":
        return binarize_lab(w_flat, d)
    if method == "twn":
        return ternarize_twn(w_flat)
    if method == "dorefa":
        return quantize_dorefa(w_flat, bits)
    if method == "lat-exact":
        return ternarize_exact(w_flat, d)[0]
    if method == "lat-approx":
        init = prev.codes if isinstance(prev, QuantizedLayer) else None
        return ternarize_approx(w_flat, d, codes_init=init)
    if method == "lat2-exact":
        return ternarize_two_scale_exact(w_flat, d)
    if method == "lat2-approx":
        init = prev.codes if isinstance(prev, QuantizedLayer) else None
        return ternarize_two_scale_approx(w_flat, d, codes_init=init)
    if method == "laq":
        qs = build_qset(bits, scheme)
        init = prev.codes if isinstance(prev, QuantizedLayer) and prev.qset == qs else None
        return quantize_mbit(w_flat, d, qs, codes_init=init)
    raise BadValue(f"unknown method {method!r}")


def _refresh_quant(net: NetworkState, config: TrainConfig) -> None:
    import warnings

    for i, spec in enumerate(net.specs):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # degenerate codes counted, not surfaced
            q = quantize_layer(config.method, net.weights[i].ravel(), net.curvature[i],
                               config.bits, config.scheme, net.quant[i])
        if isinstance(q, QuantizedLayer) and (q.degenerate or q.degenerate_pos or q.degenerate_neg):
            net.degenerate_events += 1
        net.quant[i] = q


def _effective_weights(net: NetworkState) -> list[np.ndarray]:
    return [effective_weight(spec, net.weights[i], net.quant[i])
            for i, spec in enumerate(net.specs)]


def evaluate(net: NetworkState, config: TrainConfig, x, y) -> tuple[float, float]:
    """Loss and error rate on a split, eval-mode batch norm, quantized weights."""
    scores, _ = forward(net.specs, _effective_weights(net),
                        [tuple(bn) if bn else None for bn in net.bn], x, training=False)
    loss, _ = LOSSES[config.loss](scores, y)
    return loss, error_rate(scores, y)


def train_step(net: NetworkState, config: TrainConfig, xb, yb, lr: float) -> tuple[float, float]:
    """One minibatch: quantize, forward, backward, moment + preconditioned update.

    Returns (batch loss, batch error rate).
    """
    _refresh_quant(net, config)
    bn_params = [tuple(bn) if bn else None for bn in net.bn]
    scores, caches = forward(net.specs, _effective_weights(net), bn_params, xb, training=True)
    loss, dscores = LOSSES[config.loss](scores, yb)
    grads_w, grads_bn = backward(net.specs, caches, dscores)
    if config.grad_clip is not None:
        c = float(config.grad_clip)
        grads_w = [np.clip(g, -c, c) for g in grads_w]
        grads_bn = [tuple(np.clip(g, -c, c) for g in gb) if gb else None
                    for gb in grads_bn]

    hyper = config.adam
    net.step += 1
    clip = clips_weights(config.method, config.bits)
    for i, spec in enumerate(net.specs):
        net.opt_w[i], m_hat, v_hat = adam_step(net.opt_w[i], grads_w[i].ravel(), hyper)
        d = curvature_from_moments(v_hat, lr, hyper.epsilon)
        w_new = precond_step(net.weights[i].ravel(), m_hat, d)
        if clip:
            np.clip(w_new, -1.0, 1.0, out=w_new)
        net.weights[i] = w_new.reshape(spec.fan_in, spec.fan_out)
        net.curvature[i] = d
        if net.bn[i] is not None:
            new_states = []
            for j in range(2):  # gamma, delta
                st, mh, vh = adam_step(net.opt_bn[i][j], grads_bn[i][j], hyper)
                db = curvature_from_moments(vh, lr, hyper.epsilon)
                net.bn[i][j] = precond_step(net.bn[i][j], mh, db)
                new_states.append(st)
            net.opt_bn[i] = tuple(new_states)
            # Fold the batch statistics into the running averages.
            b_mean, b_var = caches[i]["bn_stats"]
            net.bn[i][2] = BN_MOMENTUM * net.bn[i][2] + (1.0 - BN_MOMENTUM) * b_mean
            net.bn[i][3] = BN_MOMENTUM * net.bn[i][3] + (1.0 - BN_MOMENTUM) * b_var
    return loss, error_rate(scores, yb)


@dataclass
class MetricsRow:
    epoch: int
    split: str  # "train" | "val" | "test"
    loss: float
    error_rate: float
    alphas: tuple
    wall_seconds: float = 0.0


def layer_alphas(net: NetworkState) -> tuple:
    out = []
    for q in net.quant:
        if isinstance(q, QuantizedLayer):
            out.append(float(q.alpha))
        else:
            out.append(1.0)  # full precision / reconstruction-only methods
    return tuple(out)


def layer_betas(net: NetworkState) -> tuple:
    return tuple(
        float(q.beta) if isinstance(q, QuantizedLayer) and q.beta is not None else 0.0
        for q in net.quant
    )


def network_blobs(net: NetworkState) -> dict:
    """Serialize the training state as LAWQ blobs.

    Returns {"weights": full-precision blob (weights + batch-norm arrays),
    "optimizer": moment blob, "quant": quantized-cache blob or None}.
    """
    from .dataio import (FullRecord, MomentRecord, OneScaleRecord, TwoScaleRecord,
                         WeightBlob)

    full = []
    moments = []
    for i, spec in enumerate(net.specs):
        dims = (spec.fan_in, spec.fan_out)
        full.append(FullRecord(f"dense{i}/w", dims, net.weights[i].ravel().copy()))
        moments.append(MomentRecord(f"dense{i}/w", dims,
                                    net.opt_w[i].m.copy(), net.opt_w[i].v.copy()))
        if net.bn[i] is not None:
            for j, part in enumerate(("bn_gamma", "bn_delta", "bn_mean", "bn_var")):
                full.append(FullRecord(f"dense{i}/{part}", (spec.fan_out,),
                                       net.bn[i][j].copy()))
            for j, part in enumerate(("bn_gamma", "bn_delta")):
                moments.append(MomentRecord(f"dense{i}/{part}", (spec.fan_out,),
                                            net.opt_bn[i][j].m.copy(),
                                            net.opt_bn[i][j].v.copy()))
    quant_blob = None
    layers = [q for q in net.quant if isinstance(q, QuantizedLayer)]
    if len(layers) == len(net.specs):
        two_scale = any(q.beta is not None for q in layers)
        records = []
        for i, (spec, q) in enumerate(zip(net.specs, layers)):
            dims = (spec.fan_in, spec.fan_out)
            if two_scale:
                records.append(TwoScaleRecord(f"dense{i}/w", dims, q.alpha,
                                              q.beta if q.beta is not None else q.alpha,
                                              q.codes.copy(), q.degenerate_pos,
                                              q.degenerate_neg))
            else:
                records.append(OneScaleRecord(f"dense{i}/w", dims, q.qset.kind,
                                              q.qset.bits, q.alpha, q.codes.copy(),
                                              q.degenerate))
        quant_blob = WeightBlob(
            "quantized_two_scale" if two_scale else "quantized_one_scale",
            records, net.step)
    return {
        "weights": WeightBlob("full_precision", full, net.step),
        "optimizer": WeightBlob("optimizer_state", moments, net.step),
        "quant": quant_blob,
    }


def train(config: TrainConfig, data, *, record_wall_time: bool = False
          ) -> tuple[NetworkState, list[MetricsRow]]:
    """Run the configured number of epochs over ``data``.

    ``data`` is a :class:`~lawq.datasets.Dataset`; a missing validation split
    is carved out of the training set (seeded).  Returns the trained state and
    one metrics row per (epoch, split).
    """
    from .datasets import split_train_val

    x_train, y_train = data.x_train, data.y_train
    if data.x_val is None and config.val_fraction > 0.0:
        x_train, y_train, x_val, y_val = split_train_val(
            x_train, y_train, config.val_fraction, config.seed)
    else:
        x_val, y_val = data.x_val, data.y_val

    n_features = x_train.shape[1]
    n_classes = int(np.max(y_train)) + 1
    specs = mlp_specs(n_features, tuple(config.hidden), n_classes)
    net = NetworkState(specs, config.seed, config.init_scale)
    shuffle_rng = np.random.default_rng([config.seed, 1])

    metrics: list[MetricsRow] = []
    start = time.perf_counter()
    for epoch in range(config.epochs):
        lr = lr_schedule(epoch, config.schedule)
        order = shuffle_rng.permutation(x_train.shape[0])
        losses = []
        errors = []
        for lo in range(0, order.size, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            if idx.size < 2:
                continue  # batch statistics need at least two samples
            loss, err = train_step(net, config, x_train[idx], y_train[idx], lr)
            losses.append(loss)
            errors.append(err)
        _refresh_quant(net, config)  # cache reflects the final weights
        alphas = layer_alphas(net)
        wall = time.perf_counter() - start if record_wall_time else 0.0
        metrics.append(MetricsRow(epoch, "train", float(np.mean(losses)),
                                  float(np.mean(errors)), alphas, wall))
        if x_val is not None and x_val.shape[0] > 0:
            vloss, verr = evaluate(net, config, x_val, y_val)
            wall = time.perf_counter() - start if record_wall_time else 0.0
            metrics.append(MetricsRow(epoch, "val", vloss, verr, alphas, wall))
        if data.x_test is not None:
            tloss, terr = evaluate(net, config, data.x_test, data.y_test)
            wall = time.perf_counter() - start if record_wall_time else 0.0
            metrics.append(MetricsRow(epoch, "test", tloss, terr, alphas, wall))
    return net, metrics
