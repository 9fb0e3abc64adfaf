"""Channel estimation from pilots contaminated by clipping.

The received spectrum ``Y = D X + Z'`` is rewritten with the roles of the
channel and the data exchanged, ``Y = X h + Z'`` where
``X = sqrt(N) diag(X) Fbar`` and ``Fbar`` keeps the first ``N_c`` columns of
the unitary DFT.  Estimates are regularized least squares on a subset of
carriers.  The subset grows from the pilots to pilots plus reliable data
carriers, and the reference symbols can be replaced by a re-clipped
reconstruction of the transmit signal.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsp import dft, dft_matrix, idft, qam_map, slice_symbols
from .errors import ConfigError, InputError
from .link import OfdmConfig, channel_from_taps, clip, complex_noise, draw_channel
from .rc import reliability, select_rc

ESTIMATORS = ("mmse", "rc", "cpa", "rc_cpa", "no_clipping")


@dataclass(frozen=True)
class PilotPlan:
    """Pilot positions and symbols plus the optional reliable-carrier extension.

    ``I_r`` lists the pilots followed by the reliable carriers and
    ``ref_symbols`` holds the reference symbol used on each of them.
    """

    Q: int
    I_q: np.ndarray
    pilot_symbols: np.ndarray
    R: int = 0
    I_r: np.ndarray = field(default=None)
    ref_symbols: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.I_r is None:
            object.__setattr__(self, "I_r", self.I_q.copy())
            object.__setattr__(self, "ref_symbols", self.pilot_symbols.copy())
        if self.I_q.size != self.Q or np.unique(self.I_r).size != self.I_r.size:
            raise ConfigError("pilot plan indices must be unique and match Q")

    @property
    def rcs(self) -> np.ndarray:
        return self.I_r[self.Q:]


def pilot_plan(N: int, Q: int, const, seed: int) -> PilotPlan:
    """``Q`` equispaced pilots carrying a QAM sequence fixed by ``seed``."""
    if not 0 < Q <= N or N % Q:
        raise ConfigError(f"need Q dividing N, got Q={Q}, N={N}")
    I_q = np.arange(0, N, N // Q)
    rng = np.random.default_rng([seed, 0x9110])
    bits = rng.integers(0, 2, Q * const.bits_per_symbol, dtype=np.uint8)
    return PilotPlan(Q=Q, I_q=I_q, pilot_symbols=qam_map(bits, const))


@dataclass(frozen=True)
class ChannelEstimate:
    h_hat: np.ndarray
    mse_db: float | None = None

    def response(self, N: int) -> np.ndarray:
        padded = np.zeros(N, dtype=complex)
        padded[: self.h_hat.size] = self.h_hat
        return np.fft.fft(padded)


def mse_db(h, h_hat) -> float:
    h = np.asarray(h)
    return float(10 * np.log10(np.sum(np.abs(h - h_hat) ** 2) / np.sum(np.abs(h) ** 2)))


def exchange_matrix(X_sel, rows, N: int, N_c: int) -> np.ndarray:
    """``sqrt(N) diag(X_sel) Fbar`` restricted to ``rows``."""
    Fbar = dft_matrix(N)[np.asarray(rows, dtype=int)][:, :N_c]
    return np.sqrt(N) * np.asarray(X_sel)[:, None] * Fbar


def mmse_estimate(Y_sel, X_sel, sigma_z2: float, sigma_h2: float, N_c: int, h_true=None) -> ChannelEstimate:
    """Regularized least squares ``X^H (X X^H + (sigma_z2/sigma_h2) I)^-1 Y``.

    ``X_sel`` is the exchanged data matrix on the selected rows (see
    ``exchange_matrix``).
    """
    X = np.asarray(X_sel)
    if X.ndim != 2 or X.shape[1] != N_c:
        raise InputError(f"expected a (rows, {N_c}) matrix, got {X.shape}")
    lam = sigma_z2 / sigma_h2
    Y_sel = np.asarray(Y_sel)
    if X.shape[0] > N_c:
        # same estimator in tap space; the row-space Gram matrix is rank deficient here
        G = X.conj().T @ X + lam * np.eye(N_c)
        h_hat = np.linalg.solve(G, X.conj().T @ Y_sel)
    else:
        G = X @ X.conj().T + lam * np.eye(X.shape[0])
        h_hat = X.conj().T @ np.linalg.solve(G, Y_sel)
    return ChannelEstimate(h_hat=h_hat, mse_db=None if h_true is None else mse_db(h_true, h_hat))


def _estimate(Y, plan: PilotPlan, refs, config: OfdmConfig, h_true=None) -> ChannelEstimate:
    N, N_c = config.N, config.N_c
    X = exchange_matrix(refs, plan.I_r, N, N_c)
    return mmse_estimate(Y[plan.I_r], X, config.sigma_z2, 1.0 / N_c, N_c, h_true)


def _data_carriers(plan: PilotPlan, N: int) -> np.ndarray:
    return np.setdiff1d(np.arange(N), plan.I_q)


def _decide(Y, est: ChannelEstimate, plan: PilotPlan, config: OfdmConfig):
    Dh = est.response(config.N)
    Xhat = Y / Dh
    dec = slice_symbols(Xhat, config.const)
    dec[plan.I_q] = plan.pilot_symbols
    return Xhat, dec


def rc_augment(Y, est: ChannelEstimate, plan: PilotPlan, R: int, config: OfdmConfig) -> PilotPlan:
    """Add the ``R`` most reliable data carriers, referenced by their decisions."""
    N = config.N
    if R < 0 or R > N - plan.Q:
        raise ConfigError(f"cannot pick {R} reliable carriers from {N - plan.Q} data carriers")
    if R == 0:
        return PilotPlan(Q=plan.Q, I_q=plan.I_q, pilot_symbols=plan.pilot_symbols)
    Xhat, dec = _decide(Y, est, plan, config)
    rep = reliability(Xhat, config.const, config.sigma_z2)
    rcs = select_rc(rep, R, reserved=plan.I_q)
    I_r = np.concatenate([plan.I_q, rcs])
    return PilotPlan(Q=plan.Q, I_q=plan.I_q, pilot_symbols=plan.pilot_symbols, R=R,
                     I_r=I_r, ref_symbols=dec[I_r])


def cpa_refine(Y, plan: PilotPlan, est: ChannelEstimate, config: OfdmConfig,
               iterations: int = 1, h_true=None) -> ChannelEstimate:
    """Contaminated-pilot refinement on the carriers of ``plan``.

    The transmit signal is rebuilt from the pilots and the decisions under
    the current estimate, clipped like the transmitter would, and its
    spectrum replaces the ideal reference symbols on ``plan.I_r``.
    """
    for _ in range(iterations):
        _, dec = _decide(Y, est, plan, config)
        Xp = dft(clip(idft(dec), config.clip_ratio).x_p)
        est = _estimate(Y, plan, Xp[plan.I_r], config, h_true)
    return est


@dataclass(frozen=True)
class ChanestFrame:
    X: np.ndarray
    h: np.ndarray
    Y: np.ndarray
    Y_unclipped: np.ndarray


def make_chanest_frame(config: OfdmConfig, plan: PilotPlan, rng: np.random.Generator) -> ChanestFrame:
    """Pilots plus random data, clipped; the unclipped replay shares channel and noise."""
    N = config.N
    data = _data_carriers(plan, N)
    bits = rng.integers(0, 2, data.size * config.const.bits_per_symbol, dtype=np.uint8)
    X = np.zeros(N, dtype=complex)
    X[plan.I_q] = plan.pilot_symbols
    X[data] = qam_map(bits, config.const)
    x = idft(X)
    chan = draw_channel(config, rng)
    z = complex_noise(rng, N, config.sigma_z2)
    Y = chan.D * dft(clip(x, config.clip_ratio).x_p) + dft(z)
    Y0 = chan.D * X + dft(z)
    return ChanestFrame(X=X, h=chan.h, Y=Y, Y_unclipped=Y0)


def estimate_all(frame: ChanestFrame, plan: PilotPlan, config: OfdmConfig, R: int,
                 cpa_iterations: int = 1) -> dict[str, ChannelEstimate]:
    """Every estimator on one frame; all data-aided ones start from the pilot-only estimate."""
    h = frame.h
    mmse = _estimate(frame.Y, plan, plan.pilot_symbols, config, h)
    aug = rc_augment(frame.Y, mmse, plan, R, config)
    return {
        "mmse": mmse,
        "rc": _estimate(frame.Y, aug, aug.ref_symbols, config, h),
        "cpa": cpa_refine(frame.Y, plan, mmse, config, cpa_iterations, h),
        "rc_cpa": cpa_refine(frame.Y, aug, mmse, config, cpa_iterations, h),
        "no_clipping": _estimate(frame.Y_unclipped, plan, plan.pilot_symbols, config, h),
    }


def perturbed_response(h, error_variance: float, N: int, rng: np.random.Generator) -> np.ndarray:
    """Frequency response of ``h`` plus a tap error of total variance ``error_variance``."""
    h = np.asarray(h)
    e = complex_noise(rng, h.size, error_variance / h.size) if error_variance > 0 else 0.0
    return channel_from_taps(h + e, N, 0.0).D


def sensitivity_to_channel_error(config: OfdmConfig, grid, frames: int, seed: int = 0,
                                 algorithm: str = "wpa") -> list[tuple[float, int, int]]:
    """Bit errors of the recovery pipeline when equalizing with a perturbed channel.

    Every grid value sees the same frames; the channel error itself is drawn
    from a separate stream so it does not shift the frame draws.  Returns
    ``(variance, errors, bits)`` per grid value.
    """
    from .pipeline import make_frame, single_user_errors

    out = []
    for j, var in enumerate(grid):
        rng = np.random.default_rng([seed, 1])
        erng = np.random.default_rng([seed, 2, j])
        errs = 0
        for _ in range(frames):
            fr = make_frame(config, rng)
            D_rx = perturbed_response(fr.chan.h, var, config.N, erng)
            errs += single_user_errors(fr, config, [algorithm], D_rx=D_rx)[algorithm]
        out.append((float(var), errs, frames * config.bits_per_frame))
    return out
