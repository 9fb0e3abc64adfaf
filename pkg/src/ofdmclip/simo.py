"""Clipping recovery with several receive antennas.

Every branch sees the same clipped transmit signal through its own channel,
so the clipping vector is common to all of them.  It can be estimated per
branch (individual recovery) or once from the stacked measurements of all
branches (joint recovery).  Either way the corrected branches are merged by
maximal ratio combining before the symbol decisions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dsp import dft, qam_demap
from .engine import SearchParams
from .errors import ConfigError, NumericError
from .link import ClipResult, OfdmConfig, NULL_THRESHOLD, clip, draw_channel, propagate, transmit
from .pipeline import FrontEnd, front_end, run_algorithm


@dataclass(frozen=True)
class SimoFrame:
    """One transmitted frame observed on ``L`` antennas."""

    bits: np.ndarray
    X: np.ndarray
    clip: ClipResult
    ys: tuple
    chans: tuple

    @property
    def L(self) -> int:
        return len(self.chans)


@dataclass(frozen=True)
class SimoResult:
    outputs: list
    Xhat: np.ndarray
    bits: np.ndarray


def make_simo_frame(config: OfdmConfig, L: int, rng: np.random.Generator, noiseless: bool = False) -> SimoFrame:
    """Draw bits, then per branch a channel followed by its noise."""
    if L < 1:
        raise ConfigError(f"need at least one antenna, got L={L}")
    bits = rng.integers(0, 2, config.bits_per_frame, dtype=np.uint8)
    X, x = transmit(bits, config)
    cr = clip(x, config.clip_ratio)
    ys, chans = [], []
    for _ in range(L):
        chan = draw_channel(config, rng)
        chans.append(chan)
        ys.append(propagate(cr.x_p, chan, None if noiseless else rng))
    return SimoFrame(bits=bits, X=X, clip=cr, ys=tuple(ys), chans=tuple(chans))


def mrc_combine(Ychecks: Sequence[np.ndarray], Ds: Sequence[np.ndarray]) -> np.ndarray:
    """Maximal ratio combining normalized per carrier.

    ``X(k) = sum_l conj(D_l(k)) Y_l(k) / sum_l |D_l(k)|^2``, which is plain
    zero-forcing equalization for a single branch.
    """
    if len(Ychecks) != len(Ds) or not Ds:
        raise ConfigError("need one channel response per branch")
    num = sum(np.conj(D) * Y for Y, D in zip(Ychecks, Ds))
    den = sum(np.abs(D) ** 2 for D in Ds)
    if np.min(den) < NULL_THRESHOLD ** 2:
        raise NumericError("every branch has a spectral null on the same carrier")
    return num / den


def _fronts(frame: SimoFrame, config: OfdmConfig) -> list[FrontEnd]:
    gamma = frame.clip.gamma if config.gamma_known else None
    return [front_end(y, ch.D, config, gamma) for y, ch in zip(frame.ys, frame.chans)]


def _finish(frame, fronts, c_hats, outputs, config) -> SimoResult:
    Ds = [fe.D for fe in fronts]
    Ychecks = [fe.D * (fe.Xhat - dft(c)) for fe, c in zip(fronts, c_hats)]
    Xhat = mrc_combine(Ychecks, Ds)
    bits, _ = qam_demap(Xhat, config.const)
    return SimoResult(outputs=outputs, Xhat=Xhat, bits=bits)


def recover_individual(frame: SimoFrame, config: OfdmConfig, algorithm: str = "wpa",
                       params: SearchParams = SearchParams()) -> SimoResult:
    """Recover the clipping separately on every branch, then combine."""
    fronts = _fronts(frame, config)
    outs = [run_algorithm(algorithm, fe, config, frame.clip, params) for fe in fronts]
    c_hats = [np.zeros(config.N, complex) if o is None else o.c_hat for o in outs]
    return _finish(frame, fronts, c_hats, outs, config)


def recover_joint(frame: SimoFrame, config: OfdmConfig, algorithm: str = "wpa",
                  params: SearchParams = SearchParams()) -> SimoResult:
    """Recover one clipping vector from the rows of all branches, then combine.

    Each branch keeps its own reliable carriers.  Phases and weights come
    from the branch whose weakest carrier is strongest.
    """
    fronts = _fronts(frame, config)
    out = run_algorithm(algorithm, fronts, config, frame.clip, params)
    c = np.zeros(config.N, complex) if out is None else out.c_hat
    return _finish(frame, fronts, [c] * len(fronts), [out], config)


def simo_errors(frame: SimoFrame, config: OfdmConfig, algorithm: str = "wpa",
                params: SearchParams = SearchParams()) -> dict[str, int]:
    """Bit errors of the combined decisions for both strategies and no recovery."""
    res = {
        "individual": recover_individual(frame, config, algorithm, params),
        "joint": recover_joint(frame, config, algorithm, params),
        "none": recover_individual(frame, config, "none", params),
    }
    return {k: int(np.count_nonzero(r.bits != frame.bits)) for k, r in res.items()}
