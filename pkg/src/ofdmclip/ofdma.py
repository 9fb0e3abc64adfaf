"""Interleaved OFDMA uplink with per-user clipping.

Each user transmits on its own comb of carriers and clips its own time
signal, so in the received spectrum the clipping of every user leaks onto
all carriers.  The clipping is first estimated jointly from data-free reserved
tones.  Each user's clipping is then re-synthesized from hard decisions and
cancelled, which leaves one decoupled system per user for a second, per-user
recovery.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine
from .dsp import dft, idft, qam_demap, qam_map, slice_symbols
from .engine import RecoveryOutput, SearchParams, SupportPrior
from .errors import ConfigError, InputError
from .link import ChannelRealization, ClipResult, OfdmConfig, clip, complex_noise, draw_channel
from .pipeline import rho_true, rx_noise_var
from .rc import MeasurementSystem, assemble, sensing_rows


def interleaved_allocation(N: int, U: int) -> list[np.ndarray]:
    """User ``u`` (0-based) owns carriers ``u, u + U, u + 2U, ...``."""
    if U < 1 or N % U:
        raise ConfigError(f"cannot split {N} carriers evenly between {U} users")
    return [np.arange(u, N, U) for u in range(U)]


def reserved_tones(allocation: np.ndarray, P_u: int) -> np.ndarray:
    """``P_u`` carriers spread evenly over one user's comb."""
    K = allocation.size
    if not 0 <= P_u < K:
        raise ConfigError(f"need 0 <= P_u < {K}, got {P_u}")
    pos = (np.arange(P_u) * K) // P_u if P_u else np.zeros(0, dtype=int)
    return allocation[pos]


@dataclass(frozen=True)
class OfdmaUser:
    X: np.ndarray
    clip: ClipResult
    chan: ChannelRealization
    allocation: np.ndarray
    reserved: np.ndarray
    bits: np.ndarray

    @property
    def data(self) -> np.ndarray:
        return np.setdiff1d(self.allocation, self.reserved)


@dataclass(frozen=True)
class OfdmaFrame:
    users: tuple
    z: np.ndarray = field(repr=False)
    config: OfdmConfig = field(repr=False)

    @property
    def U(self) -> int:
        return len(self.users)

    def received(self, clipped: bool = True) -> np.ndarray:
        """Time-domain received signal; ``clipped=False`` replays it without clipping."""
        y = self.z.copy()
        for us in self.users:
            x = us.clip.x_p if clipped else us.clip.x
            y = y + idft(us.chan.D * dft(x))
        return y


def data_bits_per_user(config: OfdmConfig, U: int, P_u: int) -> int:
    return (config.N // U - P_u) * config.const.bits_per_symbol


def build_ofdma(bits_per_user, config: OfdmConfig, rng: np.random.Generator, P_u: int,
                noiseless: bool = False) -> tuple[OfdmaFrame, np.ndarray]:
    """Map, clip and transmit every user's bits; returns the frame and ``y``.

    Channels are drawn user by user, then one noise vector.  Pass an empty
    bit array to keep a user silent.
    """
    U = len(bits_per_user)
    N = config.N
    alloc = interleaved_allocation(N, U)
    users = []
    for u, bits in enumerate(bits_per_user):
        bits = np.asarray(bits, dtype=np.uint8)
        res = reserved_tones(alloc[u], P_u)
        data = np.setdiff1d(alloc[u], res)
        X = np.zeros(N, dtype=complex)
        if bits.size:
            if bits.size != data.size * config.const.bits_per_symbol:
                raise InputError(f"user {u}: expected {data.size * config.const.bits_per_symbol} bits, got {bits.size}")
            X[data] = qam_map(bits, config.const)
            cr = clip(idft(X), config.clip_ratio)
        else:
            cr = ClipResult(x=np.zeros(N, complex), x_p=np.zeros(N, complex), c=np.zeros(N, complex),
                            support=np.zeros(0, dtype=int), gamma=0.0)
        users.append(OfdmaUser(X=X, clip=cr, chan=draw_channel(config, rng), allocation=alloc[u],
                               reserved=res, bits=bits))
    z = np.zeros(N, complex) if noiseless else complex_noise(rng, N, config.sigma_z2)
    frame = OfdmaFrame(users=tuple(users), z=z, config=config)
    return frame, frame.received()


def _plain_system(Yp, Psi, rows, noise_var) -> MeasurementSystem:
    # phases and weights are unused by the plain mode
    return assemble(Yp, Psi, -np.ones(Psi.shape[1]), noise_var, rows)


def _recover_plain(sys: MeasurementSystem, rho: float, params: SearchParams, mode: str = "plain") -> RecoveryOutput:
    return engine.recover(sys, SupportPrior.weighted(rho, sys.weights), params, mode)


def joint_estimate(y, frame: OfdmaFrame, params: SearchParams = SearchParams()) -> list[np.ndarray]:
    """Estimate every user's clipping at once from all reserved tones.

    The unknown stacks the users' time-domain clipping vectors.  Weighting
    and phase augmentation do not apply here, so the plain mode is used.
    """
    config = frame.config
    N = config.N
    rows = np.sort(np.concatenate([us.reserved for us in frame.users]))
    if rows.size == 0:
        raise ConfigError("joint estimation needs at least one reserved tone")
    Y = dft(y)
    Psi = np.hstack([sensing_rows(us.chan.D, rows, N) for us in frame.users])
    sys = _plain_system(Y[rows], Psi, rows, rx_noise_var(config) / 2.0)
    out = _recover_plain(sys, rho_true(config), params)
    return [out.c_hat[u * N:(u + 1) * N] for u in range(frame.U)]


@dataclass(frozen=True)
class DecoupleResult:
    c_cpa: list
    c_final: list
    X_joint: list
    X_final: list
    bits_joint: list
    bits_final: list


def _user_bits(X_user: np.ndarray, us: OfdmaUser, config: OfdmConfig) -> np.ndarray:
    bits, _ = qam_demap(X_user[us.data], config.const)
    return bits


def decouple(y, frame: OfdmaFrame, c_joint, params: SearchParams = SearchParams(),
             stage2_mode: str = "plain") -> DecoupleResult:
    """Two-stage recovery: cancel each user's re-synthesized clipping, then re-estimate.

    ``stage2_mode="wpa"`` lets the per-user recovery use phases and weights
    from that user's decoupled time signal.
    """
    if stage2_mode not in ("plain", "wpa"):
        raise ValueError(f"stage2_mode must be 'plain' or 'wpa', got {stage2_mode!r}")
    config = frame.config
    N, const = config.N, config.const
    Y = dft(y)
    # step 2: remove the joint estimate
    Y_cs = Y - sum(us.chan.D * dft(c) for us, c in zip(frame.users, c_joint))
    X_joint, x_hat, c_cpa = [], [], []
    for us in frame.users:
        # steps 3-5: equalize the user's comb, decide, rebuild with empty reserved tones
        Xu = np.zeros(N, dtype=complex)
        Xu[us.allocation] = Y_cs[us.allocation] / us.chan.D[us.allocation]
        X_joint.append(Xu)
        dec = np.zeros(N, dtype=complex)
        if us.bits.size:
            dec[us.data] = slice_symbols(Xu[us.data], const)
        xu = idft(dec)
        x_hat.append(xu)
        # step 6: re-clip with the transmitter's rule
        c_cpa.append(clip(xu, config.clip_ratio).c if us.bits.size else np.zeros(N, complex))
    c_final, X_final = [], []
    for v, us in enumerate(frame.users):
        # step 7: cancel the other users' re-synthesized clipping
        Yv = Y - sum(o.chan.D * dft(c) for u, (o, c) in enumerate(zip(frame.users, c_cpa)) if u != v)
        rows = us.reserved
        if rows.size and us.bits.size:
            Psi = sensing_rows(us.chan.D, rows, N)
            if stage2_mode == "wpa":
                sys = assemble(Yv[rows], Psi, x_hat[v], rx_noise_var(config) / 2.0, rows)
            else:
                sys = _plain_system(Yv[rows], Psi, rows, rx_noise_var(config) / 2.0)
            cv = _recover_plain(sys, rho_true(config), params, stage2_mode).c_hat
        else:
            cv = np.zeros(N, complex)
        c_final.append(cv)
        Xv = np.zeros(N, dtype=complex)
        Xv[us.allocation] = (Yv - us.chan.D * dft(cv))[us.allocation] / us.chan.D[us.allocation]
        X_final.append(Xv)
    return DecoupleResult(
        c_cpa=c_cpa, c_final=c_final, X_joint=X_joint, X_final=X_final,
        bits_joint=[_user_bits(X, us, config) for X, us in zip(X_joint, frame.users)],
        bits_final=[_user_bits(X, us, config) for X, us in zip(X_final, frame.users)],
    )


def equalize_users(y, frame: OfdmaFrame) -> list[np.ndarray]:
    """Per-user zero-forcing on each comb with no clipping compensation."""
    Y = dft(y)
    out = []
    for us in frame.users:
        X = np.zeros(frame.config.N, dtype=complex)
        X[us.allocation] = Y[us.allocation] / us.chan.D[us.allocation]
        out.append(X)
    return out


def multiuser_errors(frame: OfdmaFrame, params: SearchParams = SearchParams(),
                     stage2_mode: str = "plain") -> dict[str, int]:
    """Data bit errors summed over users for every receiver variant.

    ``no_clipping`` replays the same bits, channels and noise without
    clipping; ``none`` decodes the clipped signal without compensation.
    """
    config = frame.config
    y = frame.received()
    cj = joint_estimate(y, frame, params)
    dec = decouple(y, frame, cj, params, stage2_mode)
    variants = {
        "none": equalize_users(y, frame),
        "no_clipping": equalize_users(frame.received(clipped=False), frame),
    }
    errs = {}
    for name, Xs in variants.items():
        errs[name] = sum(int(np.count_nonzero(_user_bits(X, us, config) != us.bits))
                         for X, us in zip(Xs, frame.users))
    errs["joint"] = sum(int(np.count_nonzero(b != us.bits)) for b, us in zip(dec.bits_joint, frame.users))
    errs["two_stage"] = sum(int(np.count_nonzero(b != us.bits)) for b, us in zip(dec.bits_final, frame.users))
    return errs


def make_ofdma_frame(config: OfdmConfig, rng: np.random.Generator, P_u: int, U: int = 2,
                     noiseless: bool = False) -> OfdmaFrame:
    """Draw every user's bits, then channels and noise."""
    nb = data_bits_per_user(config, U, P_u)
    bits = [rng.integers(0, 2, nb, dtype=np.uint8) for _ in range(U)]
    frame, _ = build_ofdma(bits, config, rng, P_u, noiseless)
    return frame
