"""Single-user receive chain: RC selection, clipping recovery, correction.

The recovery entry point also accepts several front ends sharing one
transmitted frame (receive diversity).  Their measurement systems are stacked
over the common clipping unknown and the corrected branches are combined with
maximal ratio weights before any decision is taken.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import engine
from .dsp import dft, qam_demap, slice_symbols
from .engine import RecoveryOutput, SearchParams, SupportPrior
from .link import ChannelRealization, ClipResult, OfdmConfig, clip, draw_channel, equalize, propagate, transmit
from .rc import MeasurementSystem, assemble, build_system, reliability, select_rc

# lower bound on the noise variance assumed by the receiver (noiseless links)
RX_NOISE_FLOOR = 1e-6

ALGORITHMS = ("none", "oracle", "wpa", "wpa_true", "unweighted", "no_phase", "plain", "wpa_est", "wpa_ref")


@dataclass(frozen=True)
class Frame:
    bits: np.ndarray
    X: np.ndarray
    clip: ClipResult
    chan: ChannelRealization
    y: np.ndarray

    @property
    def Y(self) -> np.ndarray:
        return dft(self.y)


def make_frame(config: OfdmConfig, rng: np.random.Generator, noiseless: bool = False) -> Frame:
    """Draw bits, channel and noise for one frame (in that order)."""
    bits = rng.integers(0, 2, config.bits_per_frame, dtype=np.uint8)
    X, x = transmit(bits, config)
    cr = clip(x, config.clip_ratio)
    chan = draw_channel(config, rng)
    y = propagate(cr.x_p, chan, None if noiseless else rng)
    return Frame(bits=bits, X=X, clip=cr, chan=chan, y=y)


def rx_noise_var(config: OfdmConfig) -> float:
    return max(config.sigma_z2, RX_NOISE_FLOOR)


def rho_true(config: OfdmConfig) -> float:
    """Ensemble clipping rate for Rayleigh-distributed sample amplitudes."""
    return math.exp(-config.clip_ratio ** 2)


@dataclass(frozen=True)
class FrontEnd:
    Xhat: np.ndarray
    xhat: np.ndarray
    decided: np.ndarray
    chosen: np.ndarray
    system: MeasurementSystem
    D: np.ndarray
    gamma: float | None = None


def front_end(y, D, config: OfdmConfig, gamma: float | None = None, P: int | None = None) -> FrontEnd:
    """Equalize with ``D``, pick reliable carriers and build the sparse system."""
    D = np.asarray(D)
    chan = ChannelRealization(h=np.zeros(0), D=D, sigma_z2=config.sigma_z2)
    Xhat, xhat = equalize(y, chan)
    return _front_end_from(Xhat, xhat, Xhat, D, config, config.P if P is None else P, gamma)


def _front_end_from(Xhat, xhat, Xref, D, config, P, gamma) -> FrontEnd:
    # carriers and decisions come from Xref, the measurements from Xhat
    sigma2 = rx_noise_var(config)
    decided = slice_symbols(Xref, config.const)
    rep = reliability(Xref, config.const, sigma2, D if config.reliability_variance == "per_carrier" else None)
    chosen = select_rc(rep, P)
    sys = build_system(D * Xhat, decided, D, chosen, xhat, sigma2, gamma)
    return FrontEnd(Xhat=Xhat, xhat=xhat, decided=decided, chosen=chosen, system=sys, D=D, gamma=gamma)


def phase_source(fronts: Sequence[FrontEnd]) -> int:
    """Branch supplying phases and weights: the one with the strongest weakest carrier."""
    return int(np.argmax([np.min(np.abs(fe.D)) for fe in fronts]))


def stack_systems(fronts: Sequence[FrontEnd]) -> MeasurementSystem:
    """One system over the shared clipping unknown from every branch's rows."""
    if len(fronts) == 1:
        return fronts[0].system
    src = fronts[phase_source(fronts)]
    Yp = np.concatenate([fe.system.Yp for fe in fronts])
    Psi = np.vstack([fe.system.Psi for fe in fronts])
    chosen = np.concatenate([fe.chosen for fe in fronts])
    return assemble(Yp, Psi, src.xhat, src.system.noise_var, chosen, src.gamma)


def combined_spectrum(fronts: Sequence[FrontEnd]) -> tuple[np.ndarray, np.ndarray]:
    """Maximal ratio combination of equalized branches and its per-carrier gain."""
    W = sum(np.abs(fe.D) ** 2 for fe in fronts)
    X = sum(np.abs(fe.D) ** 2 * fe.Xhat for fe in fronts) / W
    return X, W


def decision_distance(Xcorr, W, const) -> float:
    """Gain-weighted squared distance of every carrier to its nearest point.

    ``W`` is ``|D|^2`` for one branch, so each term is in received units.
    """
    Xcorr = np.asarray(Xcorr)
    return float(np.sum(np.asarray(W) * np.abs(Xcorr - slice_symbols(Xcorr, const)) ** 2))


# rows whose residual exceeds this many robust noise levels are treated as wrong decisions
OUTLIER_RATIO = 20.0
SCREEN_ROUNDS = 2


def outlier_rows(sys: MeasurementSystem, c_hat) -> np.ndarray:
    """Measurement rows inconsistent with the clipping estimate.

    The noise level is the median squared row residual rescaled to the mean of
    an exponential law, so no noise variance needs to be known.
    """
    res = sys.row_residuals(c_hat)
    level = max(float(np.median(res)) / math.log(2), 1e-18)
    return np.flatnonzero(res > OUTLIER_RATIO * level)


# a recovery is accepted once the decision distance is below half its
# uncorrected value and below this many times the expected noise contribution
ACCEPT_RATIO = 0.5
ACCEPT_NOISE = 10.0
RESELECT_ROUNDS = 3

# last resort: rows down-weighted by w = 1 / (1 + r / level), iterated
REWEIGHT_ROUNDS = 6


def reweighted(name, sys: MeasurementSystem, start: RecoveryOutput, xhat, config, true_clip, params, e_max,
               score) -> tuple[float, RecoveryOutput]:
    """Iteratively reweighted recovery that fades out rows the estimate cannot explain.

    Wrong decisions on several reliable carriers can pull the estimate far
    enough that no single row stands out.  Cauchy-type row weights shrink
    such rows a little more on every pass.  Returns the best ``(score,
    estimate)`` seen, starting from ``start``.
    """
    best = (score(start), start)
    cur = start
    for _ in range(REWEIGHT_ROUNDS):
        res = sys.row_residuals(cur.c_hat)
        level = max(float(np.median(res)) / math.log(2), 1e-18)
        cur = _run_once(name, sys.reweight_rows(1.0 / (1.0 + res / level)), xhat, config, true_clip, params, e_max)
        j = score(cur)
        if j < best[0]:
            best = (j, cur)
    return best


def run_algorithm(name: str, fe: FrontEnd | Sequence[FrontEnd], config: OfdmConfig,
                  true_clip: ClipResult | None = None, params: SearchParams = SearchParams(),
                  e_max: int = 5, screen: bool = True, reselect: bool = True) -> RecoveryOutput | None:
    """Clipping estimate for one named algorithm; ``none`` returns ``None``.

    ``fe`` is one front end or a sequence of branches observing the same
    frame, recovered jointly.

    With ``screen`` set, rows that the estimate cannot explain (typically a
    reliable carrier whose decision was wrong) are dropped and the recovery
    is repeated, at most ``SCREEN_ROUNDS`` times.

    A wrong decision on a strong carrier can instead mislead the support
    search so that no single row stands out.  With ``reselect`` set, an
    estimate whose decision distance over all carriers is not clearly below
    both its uncorrected value and the noise floor is used to correct the
    spectrum, reliable carriers and decisions are chosen afresh from the
    corrected spectrum, and the recovery is repeated.  If that still fails,
    an iteratively reweighted recovery (see ``reweighted``) is tried.  The
    estimate closest to the constellation is kept.
    """
    if name == "none":
        return None
    fronts = [fe] if isinstance(fe, FrontEnd) else list(fe)
    xhat = fronts[phase_source(fronts)].xhat
    out = _screened(name, stack_systems(fronts), xhat, config, true_clip, params, e_max, screen)
    if not reselect or name == "oracle":
        return out
    const = config.const
    Xc, W = combined_spectrum(fronts)
    j0 = decision_distance(Xc, W, const)
    accept = min(ACCEPT_RATIO * j0, ACCEPT_NOISE * Xc.size * rx_noise_var(config))

    def score(o):
        return decision_distance(Xc - dft(o.c_hat), W, const)

    best_j = score(out)
    cur = out
    for _ in range(RESELECT_ROUNDS):
        if best_j <= accept:
            return out
        C = dft(cur.c_hat)
        nxt = [_front_end_from(f.Xhat, f.xhat, f.Xhat - C, f.D, config, f.chosen.size, f.gamma) for f in fronts]
        cur = _screened(name, stack_systems(nxt), xhat, config, true_clip, params, e_max, screen)
        j = score(cur)
        if j < best_j:
            best_j, out = j, cur
    if best_j > accept:
        j, alt = reweighted(name, stack_systems(fronts), out, xhat, config, true_clip, params, e_max, score)
        if j < best_j:
            out = alt
    return out


def _screened(name, sys, xhat, config, true_clip, params, e_max, screen):
    out = _run_once(name, sys, xhat, config, true_clip, params, e_max)
    for _ in range(SCREEN_ROUNDS if screen else 0):
        bad = outlier_rows(sys, out.c_hat)
        if bad.size == 0 or bad.size > sys.chosen.size // 4:
            break
        sys = sys.drop_rows(bad)
        out = _run_once(name, sys, xhat, config, true_clip, params, e_max)
    return out


def _run_once(name, sys, xhat, config, true_clip, params, e_max):
    rho = rho_true(config)
    if name == "oracle":
        if true_clip is None:
            raise ValueError("oracle needs the true clipping support")
        return engine.oracle_ls(sys, true_clip.support)
    if name == "wpa_true":
        if true_clip is None:
            raise ValueError("wpa_true needs the true clipping threshold")
        sys = assemble(sys.Yp, sys.Psi, xhat, sys.noise_var, sys.chosen, true_clip.gamma)
        return engine.recover(sys, SupportPrior.weighted(rho, sys.weights), params, "wpa")
    if name in ("wpa", "unweighted", "no_phase", "plain"):
        return engine.recover(sys, SupportPrior.weighted(rho, sys.weights), params, name)
    if name == "wpa_est":
        cur = sys.with_noise_var(0.01 * sys.noise_var)
        return engine.recover(cur, SupportPrior.weighted(0.01 * rho, sys.weights), params, "wpa")
    if name == "wpa_ref":
        return engine.refine(sys, 0.01 * rho, 0.01 * sys.noise_var, e_max, params)
    raise ValueError(f"unknown algorithm {name!r}")


def corrected_spectrum(Xhat, out: RecoveryOutput | None) -> np.ndarray:
    """Remove the estimated clipping from an equalized spectrum."""
    if out is None:
        return Xhat
    return Xhat - dft(out.c_hat)


def bit_errors(bits, Xcorr, config: OfdmConfig) -> int:
    rx_bits, _ = qam_demap(Xcorr, config.const)
    return int(np.count_nonzero(rx_bits != bits))


def single_user_errors(frame: Frame, config: OfdmConfig, algorithms, params: SearchParams = SearchParams(),
                       D_rx=None, e_max: int = 5) -> dict[str, int]:
    """Bit errors of every algorithm on the same received frame."""
    D = frame.chan.D if D_rx is None else D_rx
    gamma = frame.clip.gamma if config.gamma_known else None
    fe = front_end(frame.y, D, config, gamma)
    errs = {}
    for name in algorithms:
        out = run_algorithm(name, fe, config, frame.clip, params, e_max)
        errs[name] = bit_errors(frame.bits, corrected_spectrum(fe.Xhat, out), config)
    return errs
