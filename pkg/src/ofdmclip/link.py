"""Single-user clipped OFDM link: framing, hard clipping, circulant Rayleigh
channel with calibrated AWGN, and zero-forcing equalization."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dsp import constellation, dft, idft, is_power_of_two, qam_map, QamConstellation
from .errors import ConfigError, InputError, NumericError

NULL_THRESHOLD = 1e-6
TAP_VARIANCES = ("unit_total", "per_tap_unit")
RELIABILITY_VARIANCES = ("flat", "per_carrier")


@dataclass(frozen=True)
class OfdmConfig:
    """Static frame and link parameters.

    ``tap_variance`` selects between unit total channel energy (default) and
    unit variance per tap.  ``reliability_variance`` picks the noise variance
    plugged into the carrier reliability metric.  ``gamma_known`` makes the
    receiver use the transmitter's clipping threshold instead of ``max|x_hat|``.
    """

    N: int = 512
    M: int = 64
    N_c: int = 10
    clip_ratio: float = 1.61
    eb_n0_db: float = 27.0
    P: int = 128
    seed: int = 0
    tap_variance: str = "unit_total"
    reliability_variance: str = "flat"
    gamma_known: bool = False

    def __post_init__(self):
        if not is_power_of_two(self.N):
            raise ConfigError(f"N must be a power of two, got {self.N}")
        if not 0 < self.N_c <= self.N:
            raise ConfigError(f"need 0 < N_c <= N, got N_c={self.N_c}")
        if not 0 < self.P < self.N:
            raise ConfigError(f"need 0 < P < N, got P={self.P}")
        if not self.clip_ratio > 0:
            raise ConfigError(f"clip ratio must be positive, got {self.clip_ratio}")
        if self.tap_variance not in TAP_VARIANCES:
            raise ConfigError(f"tap_variance must be one of {TAP_VARIANCES}")
        if self.reliability_variance not in RELIABILITY_VARIANCES:
            raise ConfigError(f"reliability_variance must be one of {RELIABILITY_VARIANCES}")
        constellation(self.M)  # validates the order

    @property
    def const(self) -> QamConstellation:
        return constellation(self.M)

    @property
    def bits_per_frame(self) -> int:
        return self.N * self.const.bits_per_symbol

    @property
    def sigma_z2(self) -> float:
        return noise_variance(self.eb_n0_db, self.M)

    def with_(self, **kw) -> "OfdmConfig":
        return replace(self, **kw)


def noise_variance(eb_n0_db: float, M: int) -> float:
    """Complex AWGN variance per sample for unit symbol and channel energy."""
    return 1.0 / (np.log2(M) * 10.0 ** (eb_n0_db / 10.0))


@dataclass(frozen=True)
class ClipResult:
    x: np.ndarray
    x_p: np.ndarray
    c: np.ndarray
    support: np.ndarray
    gamma: float


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray
    D: np.ndarray
    sigma_z2: float
    redraws: int = field(default=0, compare=False)

    @property
    def N(self) -> int:
        return self.D.size


def transmit(bits, config: OfdmConfig) -> tuple[np.ndarray, np.ndarray]:
    """QAM-map one frame of bits and return ``(X, x)`` (frequency, time)."""
    bits = np.asarray(bits)
    if bits.size != config.bits_per_frame:
        raise InputError(f"expected {config.bits_per_frame} bits, got {bits.size}")
    X = qam_map(bits, config.const)
    return X, idft(X)


def clip_at(x, gamma: float) -> ClipResult:
    """Hard amplitude limiter at threshold ``gamma``; phase is preserved."""
    x = np.asarray(x, dtype=complex)
    mag = np.abs(x)
    over = mag > gamma
    x_p = x.copy()
    x_p[over] = gamma * (x[over] / mag[over])
    return ClipResult(x=x, x_p=x_p, c=x_p - x, support=np.flatnonzero(over), gamma=float(gamma))


def clip(x, clip_ratio: float) -> ClipResult:
    """Clip at ``gamma = CR * rms(x)`` using this frame's RMS amplitude."""
    x = np.asarray(x, dtype=complex)
    sigma_x = np.sqrt(np.mean(np.abs(x) ** 2))
    if sigma_x == 0.0:
        raise InputError("cannot clip a zero vector")
    return clip_at(x, clip_ratio * sigma_x)


def channel_from_taps(h, N: int, sigma_z2: float, redraws: int = 0) -> ChannelRealization:
    h = np.asarray(h, dtype=complex)
    padded = np.zeros(N, dtype=complex)
    padded[: h.size] = h
    return ChannelRealization(h=h, D=np.fft.fft(padded), sigma_z2=sigma_z2, redraws=redraws)


def draw_channel(config: OfdmConfig, rng: np.random.Generator) -> ChannelRealization:
    """I.i.d. complex Gaussian taps; redraws realizations with a spectral null."""
    var = 1.0 / config.N_c if config.tap_variance == "unit_total" else 1.0
    redraws = 0
    while True:
        h = np.sqrt(var / 2) * (rng.standard_normal(config.N_c) + 1j * rng.standard_normal(config.N_c))
        chan = channel_from_taps(h, config.N, config.sigma_z2, redraws)
        if np.min(np.abs(chan.D)) >= NULL_THRESHOLD:
            return chan
        redraws += 1


def complex_noise(rng: np.random.Generator, n: int, var: float) -> np.ndarray:
    return np.sqrt(var / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def apply_channel(x_p, D) -> np.ndarray:
    """Circular convolution with the channel, via its frequency response."""
    return idft(D * dft(x_p))


def propagate(x_p, chan: ChannelRealization, rng: np.random.Generator | None) -> np.ndarray:
    """Received time signal ``y = h (*) x_p + z``; ``rng=None`` means noiseless."""
    y = apply_channel(x_p, chan.D)
    if rng is not None and chan.sigma_z2 > 0:
        y = y + complex_noise(rng, y.size, chan.sigma_z2)
    return y


def equalize(y, chan: ChannelRealization) -> tuple[np.ndarray, np.ndarray]:
    """Zero-forcing equalization; returns ``(X_hat, x_hat_time)``."""
    if np.min(np.abs(chan.D)) < NULL_THRESHOLD:
        raise NumericError("channel frequency response has a near-null; cannot invert")
    Xhat = dft(y) / chan.D
    return Xhat, idft(Xhat)
