"""Complex-vector primitives: unitary DFT, Gray-coded square QAM, PAPR.

Vectors are plain ``numpy`` complex128 arrays.  Every transform here uses the
unitary ``1/sqrt(N)`` scaling in both directions, so ``dft`` preserves norms and
``idft`` is its exact adjoint.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError, InputError

SUPPORTED_ORDERS = (4, 16, 64)


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _check_length(x: np.ndarray) -> None:
    if x.ndim < 1 or not is_power_of_two(x.shape[-1]):
        raise ConfigError(f"transform length must be a power of two, got {x.shape[-1:]}")


def dft(x) -> np.ndarray:
    """Unitary DFT along the last axis (``F @ x`` with entries ``N^-1/2 e^{-j2pi nk/N}``)."""
    x = np.asarray(x, dtype=complex)
    _check_length(x)
    return np.fft.fft(x, norm="ortho")


def idft(X) -> np.ndarray:
    """Unitary inverse DFT along the last axis (``F^H @ X``)."""
    X = np.asarray(X, dtype=complex)
    _check_length(X)
    return np.fft.ifft(X, norm="ortho")


@lru_cache(maxsize=16)
def dft_matrix(n: int) -> np.ndarray:
    """Dense unitary DFT matrix; only used where arbitrary rows/columns are needed."""
    if not is_power_of_two(n):
        raise ConfigError(f"transform length must be a power of two, got {n}")
    k = np.arange(n)
    F = np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)
    F.setflags(write=False)
    return F


def papr(x) -> float:
    """Peak-to-average power ratio, ``max|x|^2 / mean|x|^2`` (linear)."""
    p = np.abs(np.asarray(x)) ** 2
    mean = p.mean() if p.size else 0.0
    if mean == 0.0:
        raise InputError("PAPR of a zero vector is undefined")
    return float(p.max() / mean)


def _gray(n: np.ndarray) -> np.ndarray:
    return n ^ (n >> 1)


@dataclass(frozen=True)
class QamConstellation:
    """Square Gray-coded M-QAM alphabet with unit average symbol energy.

    Point ``k`` carries the bit label equal to the binary expansion of ``k``
    (MSB first).  The first half of the label selects the in-phase level and
    the second half the quadrature level, each Gray coded along its axis.
    """

    order: int
    points: np.ndarray = field(init=False, repr=False, compare=False)
    bit_labels: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.order not in SUPPORTED_ORDERS:
            raise ConfigError(f"QAM order must be one of {SUPPORTED_ORDERS}, got {self.order}")
        m = int(round(np.sqrt(self.order)))
        half = self.bits_per_symbol // 2
        # axis level for each Gray label: label g sits at position j with gray(j) == g
        j = np.arange(m)
        level_of_label = np.empty(m, dtype=float)
        level_of_label[_gray(j)] = (m - 1) - 2 * j
        k = np.arange(self.order)
        i_lab, q_lab = k >> half, k & (m - 1)
        pts = level_of_label[i_lab] + 1j * level_of_label[q_lab]
        pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
        labels = ((k[:, None] >> np.arange(self.bits_per_symbol)[::-1]) & 1).astype(np.uint8)
        pts.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "bit_labels", labels)

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.order))

    @property
    def min_distance(self) -> float:
        return float(2.0 / np.sqrt(2.0 * (self.order - 1) / 3.0))

    def nearest_index(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=complex)
        d2 = np.abs(X[..., None] - self.points) ** 2
        # argmin returns the first minimum, i.e. the lowest constellation index on ties
        return np.argmin(d2, axis=-1)


@lru_cache(maxsize=None)
def constellation(order: int) -> QamConstellation:
    return QamConstellation(order)


def qam_map(bits, const: QamConstellation) -> np.ndarray:
    """Map a flat 0/1 bit sequence onto constellation symbols."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    k = const.bits_per_symbol
    if bits.size % k:
        raise InputError(f"bit count {bits.size} is not a multiple of {k}")
    idx = bits.reshape(-1, k) @ (1 << np.arange(k)[::-1])
    return const.points[idx]


def qam_demap(X, const: QamConstellation) -> tuple[np.ndarray, np.ndarray]:
    """Hard ML decisions.

    Returns ``(bits, decided_symbols)``; bits are flattened in symbol order.
    """
    idx = const.nearest_index(X)
    return const.bit_labels[idx].reshape(-1), const.points[idx]


def slice_symbols(X, const: QamConstellation) -> np.ndarray:
    """Nearest constellation point for every entry of ``X``."""
    return const.points[const.nearest_index(X)]
