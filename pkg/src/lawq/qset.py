"""Quantized-value sets and nearest-element projection.

A value set holds ``2k + 1`` admissible code values with ``k = 2**(m-1) - 1``
for an ``m``-bit budget:

* linear:      ``{-1, -(k-1)/k, ..., -1/k, 0, 1/k, ..., (k-1)/k, 1}``
* logarithmic: ``{-1, -1/2, ..., -1/2**(k-1), 0, 1/2**(k-1), ..., 1/2, 1}``

Both reduce to the ternary set ``{-1, 0, 1}`` at ``m = 2``.  Codes are stored
as signed level indices in ``[-k, k]``; index 0 maps to value 0 and the sign of
the index matches the sign of the value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidBits

MAX_BITS = 8  # codes must fit in a signed byte: 2**(m-1) - 1 <= 127


@dataclass(frozen=True, eq=False)
class QuantSet:
    """Ordered, symmetric set of admissible quantized values."""

    kind: str                 # "ternary" | "linear" | "log"
    bits: int
    values: np.ndarray = field(repr=False)  # ascending float64, length 2k + 1

    @property
    def levels(self) -> int:
        """Number of positive values k; codes range over [-k, k]."""
        return (self.values.size - 1) // 2

    def value_of(self, codes) -> np.ndarray:
        """Map signed level indices to their float values."""
        return self.values[np.asarray(codes, dtype=np.int64) + self.levels]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, QuantSet)
            and self.kind == other.kind
            and self.bits == other.bits
            and np.array_equal(self.values, other.values)
        )


def build_qset(bits: int, scheme: str = "linear") -> QuantSet:
    """Build the value set for an ``m``-bit budget under the given scheme.

    ``bits == 2`` yields the ternary set under both schemes.
    """
    if not isinstance(bits, (int, np.integer)) or bits < 2 or bits > MAX_BITS:
        raise InvalidBits(f"bits must be an integer in [2, {MAX_BITS}], got {bits!r}")
    if scheme not in ("linear", "log"):
        raise InvalidBits(f"scheme must be 'linear' or 'log', got {scheme!r}")
    k = 2 ** (bits - 1) - 1
    if bits == 2:
        return QuantSet("ternary", 2, np.array([-1.0, 0.0, 1.0]))
    if scheme == "linear":
        pos = np.arange(1, k + 1, dtype=np.float64) / k
    else:
        pos = np.sort(0.5 ** np.arange(k, dtype=np.float64))
    values = np.concatenate([-pos[::-1], [0.0], pos])
    return QuantSet(scheme, int(bits), values)


def ternary_qset() -> QuantSet:
    return build_qset(2)


def project_qset(x, qset: QuantSet):
    """Project each entry of ``x`` to the signed level index of its nearest
    value in the set.  Exact midpoints round away from zero; values beyond
    the extremes clamp to them.
    """
    v = qset.values
    xs = np.asarray(x, dtype=np.float64)
    flat = np.atleast_1d(xs).ravel()
    idx = np.searchsorted(v, flat)
    lo = np.clip(idx - 1, 0, v.size - 1)
    hi = np.clip(idx, 0, v.size - 1)
    d_lo = flat - v[lo]
    d_hi = v[hi] - flat
    pick_hi = (d_hi < d_lo) | ((d_hi == d_lo) & (np.abs(v[hi]) > np.abs(v[lo])))
    chosen = np.where(pick_hi, hi, lo)
    codes = (chosen - qset.levels).astype(np.int8)
    if xs.ndim == 0:
        return codes[0]
    return codes.reshape(xs.shape)


def round_half_away_from_zero(x) -> np.ndarray:
    """Round to nearest integer with exact halves moving away from zero."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)
