"""Reliable-carrier selection and the sparse measurement system built on it."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .dsp import QamConstellation
from .errors import ConfigError


@dataclass(frozen=True)
class ReliabilityReport:
    """Per-carrier reliability, stored as ``log R(i)``.

    ``order`` lists carrier indices from most to least reliable, ties broken
    towards the lower index.
    """

    log_score: np.ndarray
    order: np.ndarray

    @property
    def score(self) -> np.ndarray:
        return np.exp(self.log_score)


def reliability(Xhat, const: QamConstellation, sigma_z2, D=None) -> ReliabilityReport:
    """Likelihood ratio between the decided point and every competing point.

    The equalized perturbation is modelled as circular complex Gaussian with
    variance ``sigma_z2``.  Passing the channel response ``D`` scales that
    variance per carrier to ``sigma_z2/|D(i)|^2``.
    """
    if np.any(np.asarray(sigma_z2) <= 0):
        raise ConfigError("reliability needs a positive noise variance")
    Xhat = np.asarray(Xhat, dtype=complex)
    var = np.broadcast_to(np.asarray(sigma_z2, dtype=float), Xhat.shape)
    if D is not None:
        var = var / np.abs(D) ** 2
    d2 = np.abs(Xhat[:, None] - const.points[None, :]) ** 2
    logp = -d2 / var[:, None]
    k0 = np.argmin(d2, axis=1)
    rows = np.arange(Xhat.size)
    num = logp[rows, k0]
    logp[rows, k0] = -np.inf
    log_score = num - logsumexp(logp, axis=1)
    order = np.argsort(-log_score, kind="stable")
    return ReliabilityReport(log_score=log_score, order=order)


def select_rc(report: ReliabilityReport, P: int, reserved=()) -> np.ndarray:
    """Top-``P`` carriers by reliability, never picking a reserved index."""
    reserved = np.asarray(list(reserved), dtype=int)
    n = report.order.size
    if P < 0 or P > n - np.unique(reserved).size:
        raise ConfigError(f"cannot pick {P} carriers out of {n} with {reserved.size} reserved")
    order = report.order
    if reserved.size:
        order = order[~np.isin(order, reserved)]
    return np.sort(order[:P])


@dataclass(frozen=True)
class MeasurementSystem:
    """Real-valued phase-augmented system ``Ybar = Phibar @ c_mag + noise``.

    ``Ybar``/``Phibar`` stack the real parts over the imaginary parts of the
    complex system ``Y' = Psi @ Theta @ c_mag``.  ``noise_var`` is the variance
    of each real entry of the noise, i.e. half the complex per-carrier
    variance.  The complex unrotated pair ``(Yp, Psi)`` is kept for the
    ablations that ignore the phase information.
    """

    Ybar: np.ndarray
    Phibar: np.ndarray
    weights: np.ndarray
    theta: np.ndarray
    noise_var: float
    Yp: np.ndarray
    Psi: np.ndarray
    chosen: np.ndarray
    gamma_hat: float

    @property
    def N(self) -> int:
        return self.Phibar.shape[1]

    @property
    def n_rows(self) -> int:
        return self.Phibar.shape[0]

    @property
    def phase(self) -> np.ndarray:
        return np.exp(1j * self.theta)

    def with_noise_var(self, noise_var: float) -> "MeasurementSystem":
        return replace(self, noise_var=float(noise_var))

    def drop_rows(self, rows) -> "MeasurementSystem":
        """Remove complex measurement rows (both their real and imaginary entries)."""
        keep = np.setdiff1d(np.arange(self.chosen.size), np.asarray(rows, dtype=int))
        P = self.chosen.size
        both = np.concatenate([keep, keep + P])
        return replace(self, Ybar=self.Ybar[both], Phibar=self.Phibar[both], Yp=self.Yp[keep],
                       Psi=self.Psi[keep], chosen=self.chosen[keep])

    def reweight_rows(self, w) -> "MeasurementSystem":
        """Scale every complex row by ``sqrt(w)``, as in weighted least squares."""
        s = np.sqrt(np.asarray(w, dtype=float))
        s2 = np.concatenate([s, s])
        return replace(self, Ybar=self.Ybar * s2, Phibar=self.Phibar * s2[:, None], Yp=self.Yp * s,
                       Psi=self.Psi * s[:, None])

    def row_residuals(self, c_hat) -> np.ndarray:
        """Squared residual of every complex row for a complex clipping estimate."""
        return np.abs(self.Yp - self.Psi @ c_hat) ** 2


def sensing_rows(D, chosen, N: int) -> np.ndarray:
    """``S_P D F``: rows ``chosen`` of the unitary DFT scaled by the channel."""
    chosen = np.asarray(chosen, dtype=int)
    F_rows = np.exp(-2j * np.pi * np.outer(chosen, np.arange(N)) / N) / np.sqrt(N)
    return np.asarray(D)[chosen, None] * F_rows


def split_real(A: np.ndarray) -> np.ndarray:
    return np.concatenate([A.real, A.imag], axis=0)


def assemble(Yp, Psi, xhat_time, noise_var, chosen, gamma=None) -> MeasurementSystem:
    """Phase-augment a complex system with phases and weights from ``xhat_time``."""
    xhat_time = np.asarray(xhat_time, dtype=complex)
    mag = np.abs(xhat_time)
    gamma_hat = float(mag.max()) if gamma is None else float(gamma)
    theta = np.angle(xhat_time) - np.pi
    Phi = Psi * np.exp(1j * theta)[None, :]
    return MeasurementSystem(
        Ybar=split_real(np.asarray(Yp)),
        Phibar=split_real(Phi),
        weights=gamma_hat - mag,
        theta=theta,
        noise_var=float(noise_var),
        Yp=np.asarray(Yp),
        Psi=Psi,
        chosen=np.asarray(chosen, dtype=int),
        gamma_hat=gamma_hat,
    )


def build_system(Y, Xdecided, D, chosen, xhat_time, sigma_z2, gamma=None) -> MeasurementSystem:
    """Measurement system on the carriers ``chosen``.

    ``Y`` is the received spectrum, ``Xdecided`` the hard decisions on the
    equalized spectrum and ``sigma_z2`` the complex per-carrier noise variance.
    """
    Y = np.asarray(Y, dtype=complex)
    D = np.asarray(D, dtype=complex)
    chosen = np.asarray(chosen, dtype=int)
    Yp = (Y - D * np.asarray(Xdecided))[chosen]
    Psi = sensing_rows(D, chosen, Y.size)
    return assemble(Yp, Psi, xhat_time, sigma_z2 / 2.0, chosen, gamma)
