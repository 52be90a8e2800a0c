"""Estimator-style API: fit/transform weight quantizers and a fit/predict
classifier, compatible with scikit-learn pipelines via the get_params /
set_params protocol (no scikit-learn dependency required)."""

from __future__ import annotations

import inspect

import numpy as np

from .errors import BadValue, ValidationError
from .qset import build_qset, project_qset
from .quantizers import (binarize_bwn, binarize_lab, binarize_sign,
                         quantize_dorefa, quantize_mbit, ternarize_approx,
                         ternarize_exact, ternarize_twn, ternarize_two_scale_approx,
                         ternarize_two_scale_exact)
from .validation import as_float_matrix, check_weights


class ParamsMixin:
    """scikit-learn parameter protocol backed by the __init__ signature."""

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [name for name in sig.parameters if name != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError(f"invalid parameter {key!r} for {type(self).__name__}")
            setattr(self, key, value)
        return self

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


def _check_fitted(estimator, attr: str) -> None:
    if not hasattr(estimator, attr):
        raise ValidationError(f"{type(estimator).__name__} is not fitted yet; call fit first")


class WeightQuantizer(ParamsMixin):
    """Quantize a weight array with any of the supported methods.

    ``fit`` solves for the scale(s) and codes of the given weights (using
    ``curvature`` where the method is loss-aware); ``transform`` maps an
    array of the same shape onto the fitted grid ``alpha * Q`` (or the fitted
    ``{alpha, 0, -beta}`` set in two-scale mode).
    """

    _LOSS_AWARE = ("lab", "lat-exact", "lat-approx", "lat2-exact", "lat2-approx", "laq")

    def __init__(self, method: str = "lat-approx", bits: int = 2, scheme: str = "linear"):
        self.method = method
        self.bits = bits
        self.scheme = scheme

    def fit(self, weights, curvature=None):
        w = check_weights(weights)
        d = curvature
        if self.method in self._LOSS_AWARE and d is None:
            d = np.ones(w.size)
        method = self.method
        if method == "sign":
            layer = binarize_sign(w)
        elif method == "bwn":
            layer = binarize_bwn(w)
        elif method == "lab":
            layer = binarize_lab(w, d)
        elif method == "twn":
            layer = ternarize_twn(w)
        elif method == "lat-exact":
            layer, self.trace_ = ternarize_exact(w, d)
        elif method == "lat-approx":
            layer = ternarize_approx(w, d)
        elif method == "lat2-exact":
            layer = ternarize_two_scale_exact(w, d)
        elif method == "lat2-approx":
            layer = ternarize_two_scale_approx(w, d)
        elif method == "laq":
            layer = quantize_mbit(w, d, build_qset(self.bits, self.scheme))
        elif method == "dorefa":
            layer = None
        else:
            raise BadValue(f"unknown method {self.method!r}")
        self.n_features_in_ = w.size
        self.layer_ = layer
        if layer is not None:
            self.alpha_ = layer.alpha
            self.beta_ = layer.beta
            self.codes_ = layer.codes
            self.objective_ = layer.objective
        return self

    def transform(self, weights) -> np.ndarray:
        _check_fitted(self, "layer_")
        w = np.asarray(weights, dtype=np.float64)
        if self.method == "dorefa":
            return quantize_dorefa(w.ravel(), self.bits).reshape(w.shape)
        layer = self.layer_
        if layer.beta is not None:
            out = np.where(w.ravel() > layer.alpha / 2.0, layer.alpha, 0.0)
            out = np.where(w.ravel() < -layer.beta / 2.0, -layer.beta, out)
            return out.reshape(w.shape)
        if layer.alpha <= 0.0:
            return np.zeros_like(w)
        codes = project_qset(w.ravel() / layer.alpha, layer.qset)
        return (layer.alpha * layer.qset.value_of(codes)).reshape(w.shape)

    def fit_transform(self, weights, curvature=None) -> np.ndarray:
        self.fit(weights, curvature)
        if self.method == "dorefa":
            return self.transform(weights)
        return self.layer_.reconstruct().reshape(np.asarray(weights).shape)


class QuantizedNetClassifier(ParamsMixin):
    """Feedforward classifier trained with quantized weights.

    A thin estimator wrapper over the training loop: ``fit(X, y)`` trains a
    dense network whose forward/backward passes run on the quantized weights
    of ``method``, ``predict`` reports argmax class labels.
    """

    def __init__(self, method: str = "lat-approx", bits: int = 2, scheme: str = "linear",
                 hidden: tuple = (64,), epochs: int = 10, batch_size: int = 50,
                 lr: float = 0.01, loss: str = "square_hinge", val_fraction: float = 0.0,
                 seed: int = 0):
        self.method = method
        self.bits = bits
        self.scheme = scheme
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.loss = loss
        self.val_fraction = val_fraction
        self.seed = seed

    def fit(self, X, y):
        from .datasets import Dataset
        from .training import ScheduleConfig, TrainConfig, train

        X = as_float_matrix(X)
        y = np.asarray(y).ravel().astype(np.int64)
        if X.shape[0] != y.shape[0]:
            raise ValidationError("X and y disagree on sample count")
        self.classes_ = np.unique(y)
        config = TrainConfig(
            method=self.method, bits=self.bits, scheme=self.scheme,
            epochs=self.epochs, batch_size=self.batch_size, seed=self.seed,
            hidden=tuple(self.hidden), loss=self.loss,
            schedule=ScheduleConfig(lr=self.lr, kind="constant"),
            val_fraction=self.val_fraction,
        )
        self.net_, self.history_ = train(config, Dataset(X, y))
        self.config_ = config
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X) -> np.ndarray:
        from .network import forward
        from .training import _effective_weights

        _check_fitted(self, "net_")
        X = as_float_matrix(X)
        net = self.net_
        scores, _ = forward(net.specs, _effective_weights(net),
                            [tuple(bn) if bn else None for bn in net.bn],
                            X, training=False)
        return scores

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)

    def score(self, X, y) -> float:
        return float(np.mean(self.predict(X) == np.asarray(y).ravel()))
