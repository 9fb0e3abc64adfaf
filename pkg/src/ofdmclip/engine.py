"""Bayesian greedy sparse recovery of the clipping signal.

The unknown is a sparse vector observed through ``y = A c + noise``.  Support
hypotheses ``S`` are scored by

    nu(S) = -||P_S^perp y||^2 / (2 noise_var) + log p(S)

with an independent Bernoulli prior ``p(S)``.  A breadth-limited forward search
collects the dominant supports; the clipping estimate is the posterior-weighted
average of the least-squares (BLUE) amplitudes over those supports.

``A`` is the real phase-augmented matrix ``Phibar`` in the default mode, or the
complex unrotated ``Psi`` in the ablations that drop the phase information.
The same code serves both, all inner products are Hermitian.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .errors import NumericError
from .rc import MeasurementSystem

RHO_EPS = 1e-6
NOISE_FLOOR = 1e-14
MODES = ("wpa", "unweighted", "no_phase", "plain")


@dataclass(frozen=True)
class SupportPrior:
    rho_global: float
    rho_i: np.ndarray

    @classmethod
    def uniform(cls, rho: float, N: int) -> "SupportPrior":
        r = float(np.clip(rho, RHO_EPS, 1 - RHO_EPS))
        return cls(rho_global=float(rho), rho_i=np.full(N, r))

    @classmethod
    def weighted(cls, rho: float, weights) -> "SupportPrior":
        """``rho_i = rho * e^{-w(i)} / max_k e^{-w(k)}``, clamped into (0, 1)."""
        w = np.asarray(weights, dtype=float)
        e = np.exp(-(w - w.min()))
        return cls(rho_global=float(rho), rho_i=np.clip(rho * e, RHO_EPS, 1 - RHO_EPS))

    @property
    def log_odds(self) -> np.ndarray:
        return np.log(self.rho_i) - np.log1p(-self.rho_i)

    @property
    def log_empty(self) -> float:
        return float(np.sum(np.log1p(-self.rho_i)))


@dataclass(frozen=True)
class SearchParams:
    """Greedy search knobs.

    ``k_max=None`` sets the depth to ``max(4, ceil(2 rho N))``.  ``max_collect``
    caps how many dominant supports enter the posterior average.
    """

    d_keep: int = 5
    k_max: int | None = None
    log_window: float = math.log(1e6)
    max_collect: int = 64
    tau: float = 0.05

    def depth(self, rho: float, N: int, rank: int) -> int:
        k = self.k_max if self.k_max is not None else max(4, math.ceil(2 * rho * N))
        return int(min(k, rank, N))


@dataclass
class SparsePosterior:
    supports: list[tuple[int, ...]]
    metrics: np.ndarray
    blue: list[np.ndarray]
    weights: np.ndarray
    N: int
    depth_reached: int = 0
    first_depth: dict = field(default_factory=dict)

    def mean(self) -> np.ndarray:
        """Posterior-weighted average of the embedded BLUE vectors."""
        dtype = self.blue[0].dtype if self.blue else float
        out = np.zeros(self.N, dtype=np.result_type(dtype, float))
        for S, b, w in zip(self.supports, self.blue, self.weights):
            if S:
                out[list(S)] += w * b
        return out

    @property
    def best(self) -> tuple[int, ...]:
        return self.supports[int(np.argmax(self.metrics))]


@dataclass(frozen=True)
class RecoveryOutput:
    c_hat: np.ndarray
    c_mag: np.ndarray
    support_hat: np.ndarray
    rho_refined: float
    noise_var_refined: float
    iterations_used: int = 1
    posterior: SparsePosterior | None = field(default=None, repr=False, compare=False)


def _operator(sys: MeasurementSystem, phase: bool) -> tuple[np.ndarray, np.ndarray]:
    return (sys.Phibar, sys.Ybar) if phase else (sys.Psi, sys.Yp)


def _noise(sys: MeasurementSystem) -> float:
    return max(float(sys.noise_var), NOISE_FLOOR)


def _projection_residual(A: np.ndarray, y: np.ndarray, S) -> np.ndarray:
    S = list(S)
    if not S:
        return y.copy()
    As = A[:, S]
    Q, R = np.linalg.qr(As)
    d = np.abs(np.diag(R))
    if d.min() <= 1e-10 * max(d.max(), 1e-300):
        raise NumericError(f"columns {S} are linearly dependent")
    return y - Q @ (Q.conj().T @ y)


def log_likelihood(sys: MeasurementSystem, S, phase: bool = True) -> float:
    """``-||P_S^perp y||^2 / (2 noise_var)`` evaluated directly by QR."""
    A, y = _operator(sys, phase)
    r = _projection_residual(A, y, S)
    return -float(np.vdot(r, r).real) / (2 * _noise(sys))


def log_prior(prior: SupportPrior, S) -> float:
    S = list(S)
    return prior.log_empty + float(np.sum(prior.log_odds[S])) if S else prior.log_empty


def blue_solve(A: np.ndarray, y: np.ndarray, S) -> np.ndarray:
    S = list(S)
    if not S:
        return np.zeros(0, dtype=A.dtype)
    As = A[:, S]
    sol, _, rank, _ = np.linalg.lstsq(As, y, rcond=None)
    if rank < len(S):
        raise NumericError(f"support {S} is rank deficient")
    return sol


def blue(sys: MeasurementSystem, S, phase: bool = True) -> np.ndarray:
    """Least-squares amplitudes on support ``S`` (ordered as given)."""
    A, y = _operator(sys, phase)
    return blue_solve(A, y, S)


class _Node:
    """One support hypothesis with an orthonormal basis of its columns."""

    __slots__ = ("S", "Q", "r", "u2", "loglik", "logprior")

    def __init__(self, S, Q, r, u2, loglik, logprior):
        self.S, self.Q, self.r, self.u2 = S, Q, r, u2
        self.loglik, self.logprior = loglik, logprior

    @property
    def score(self) -> float:
        return self.loglik + self.logprior


def _extend(node: _Node, i: int, A: np.ndarray, col_norm2: np.ndarray, inv2s: float, log_odds) -> _Node | None:
    a = A[:, i]
    u = a - node.Q @ (node.Q.conj().T @ a) if node.Q.shape[1] else a.copy()
    if node.Q.shape[1]:
        u -= node.Q @ (node.Q.conj().T @ u)
    nrm = np.linalg.norm(u)
    if nrm ** 2 <= 1e-10 * col_norm2[i]:
        return None
    q = u / nrm
    r = node.r - q * np.vdot(q, node.r)
    g = q.conj() @ A
    u2 = node.u2 - np.abs(g) ** 2
    return _Node(
        S=node.S + (i,),
        Q=np.column_stack([node.Q, q]),
        r=r,
        u2=u2,
        loglik=-float(np.vdot(r, r).real) * inv2s,
        logprior=node.logprior + float(log_odds[i]),
    )


def greedy_search_op(A, y, noise_var, prior: SupportPrior, params: SearchParams,
                     positive: bool = False) -> SparsePosterior:
    """Beam search over supports on an explicit ``(A, y)`` pair.

    With ``positive`` (real ``A`` only) a column may only join a support if it
    enters with a positive amplitude.  The residual is orthogonal to the
    current basis, so that sign is the sign of ``A[:, i] @ r``.
    """
    A = np.asarray(A)
    y = np.asarray(y)
    m, N = A.shape
    noise_var = max(float(noise_var), NOISE_FLOOR)
    inv2s = 1.0 / (2 * noise_var)
    log_odds = prior.log_odds
    col_norm2 = np.sum(np.abs(A) ** 2, axis=0)
    usable = col_norm2 > 0
    root = _Node(
        S=(),
        Q=np.zeros((m, 0), dtype=A.dtype),
        r=y.astype(A.dtype, copy=True),
        u2=col_norm2.copy(),
        loglik=-float(np.vdot(y, y).real) * inv2s,
        logprior=prior.log_empty,
    )
    depth = params.depth(prior.rho_global, N, min(m, N))
    pool: dict[frozenset, tuple[float, tuple[int, ...]]] = {frozenset(): (root.score, ())}
    best = root.score
    beam = [root]
    first_depth: dict[frozenset, int] = {frozenset(): 0}
    reached = 0
    for d in range(1, depth + 1):
        cand_scores, cand_parent, cand_idx = [], [], []
        for p, node in enumerate(beam):
            proj = A.conj().T @ node.r
            corr = np.abs(proj) ** 2
            ok = usable & (node.u2 > 1e-10 * col_norm2)
            if positive:
                ok &= proj.real > 0
            if node.S:
                ok[list(node.S)] = False
            idx = np.flatnonzero(ok)
            if idx.size == 0:
                continue
            gain = corr[idx] / node.u2[idx]
            cand_scores.append(node.loglik + gain * inv2s + node.logprior + log_odds[idx])
            cand_parent.append(np.full(idx.size, p))
            cand_idx.append(idx)
        if not cand_scores:
            break
        scores = np.concatenate(cand_scores)
        parents = np.concatenate(cand_parent)
        idxs = np.concatenate(cand_idx)
        order = np.lexsort((idxs, parents, -scores))
        best = max(best, float(scores[order[0]]))
        # record near-best candidates for the posterior average
        seen: set[frozenset] = set()
        kept = 0
        new_beam: list[_Node] = []
        for o in order:
            s = float(scores[o])
            if s < best - params.log_window and len(new_beam) >= params.d_keep:
                break
            key_t = beam[parents[o]].S + (int(idxs[o]),)
            key = frozenset(key_t)
            if key in seen:
                continue
            seen.add(key)
            if kept < params.max_collect and s >= best - params.log_window:
                if key not in pool or pool[key][0] < s:
                    pool[key] = (s, key_t)
                kept += 1
            first_depth.setdefault(key, d)
            if len(new_beam) < params.d_keep:
                child = _extend(beam[parents[o]], int(idxs[o]), A, col_norm2, inv2s, log_odds)
                if child is not None:
                    new_beam.append(child)
            elif kept >= params.max_collect:
                break
        if not new_beam:
            break
        beam = new_beam
        reached = d
    return _posterior(A, y, pool, best, params, N, reached, first_depth)


def _posterior(A, y, pool, best, params, N, reached, first_depth) -> SparsePosterior:
    items = [(s, S) for s, S in pool.values() if s >= best - params.log_window]
    items.sort(key=lambda t: (-t[0], sorted(t[1])))
    items = items[: params.max_collect]
    supports, metrics, blues = [], [], []
    for s, S in items:
        S = tuple(sorted(S))
        try:
            b = blue_solve(A, y, S)
        except NumericError:
            continue
        supports.append(S)
        metrics.append(s)
        blues.append(b)
    metrics = np.asarray(metrics)
    w = np.exp(metrics - metrics.max())
    w /= w.sum()
    return SparsePosterior(
        supports=supports, metrics=metrics, blue=blues, weights=w, N=N,
        depth_reached=reached, first_depth=first_depth,
    )


def greedy_search(sys: MeasurementSystem, prior: SupportPrior, params: SearchParams = SearchParams(),
                  phase: bool = True) -> SparsePosterior:
    A, y = _operator(sys, phase)
    return greedy_search_op(A, y, sys.noise_var, prior, params, positive=phase)


def _finish(sys: MeasurementSystem, c_est: np.ndarray, phase: bool, params: SearchParams,
            rho: float, posterior=None, iterations: int = 1) -> RecoveryOutput:
    if phase:
        c_mag = np.abs(c_est.real)
        c_hat = sys.phase * c_mag
    else:
        c_hat = c_est.astype(complex)
        c_mag = np.abs(c_hat)
    peak = c_mag.max() if c_mag.size else 0.0
    support = np.flatnonzero(c_mag > params.tau * peak) if peak > 0 else np.zeros(0, dtype=int)
    A, y = _operator(sys, phase)
    resid = y - A @ (c_mag if phase else c_hat)
    nv = max(float(np.vdot(resid, resid).real) / (2 * A.shape[0] if not phase else A.shape[0]), NOISE_FLOOR)
    return RecoveryOutput(
        c_hat=c_hat, c_mag=c_mag, support_hat=support, rho_refined=rho,
        noise_var_refined=nv, iterations_used=iterations, posterior=posterior,
    )


def recover(sys: MeasurementSystem, prior: SupportPrior, params: SearchParams = SearchParams(),
            mode: str = "wpa") -> RecoveryOutput:
    """Approximate-MMSE clipping estimate.

    ``mode`` picks the variant: ``wpa`` (weighted prior, phase augmented),
    ``unweighted`` (uniform prior), ``no_phase`` (complex amplitudes, no
    rotation) or ``plain`` (both simplifications).
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    phase = mode in ("wpa", "unweighted")
    if mode in ("unweighted", "plain"):
        prior = SupportPrior.uniform(prior.rho_global, sys.N)
    post = greedy_search(sys, prior, params, phase=phase)
    return _finish(sys, post.mean(), phase, params, prior.rho_global, post)


def ablations(sys, prior, params=SearchParams(), mode="plain") -> RecoveryOutput:
    return recover(sys, prior, params, mode=mode)


def initial_rho(xhat_time, gamma_hat: float | None = None) -> float:
    """Bootstrap sparsity rate ``Q((gamma_hat - mu) / sigma)`` over ``|x_hat|``."""
    mag = np.abs(np.asarray(xhat_time))
    g = mag.max() if gamma_hat is None else gamma_hat
    sd = mag.std()
    if sd == 0:
        return 0.5
    return float(norm.sf((g - mag.mean()) / sd))


def refine(sys: MeasurementSystem, rho0: float, noise_var0: float, e_max: int = 5,
           params: SearchParams = SearchParams(), mode: str = "wpa") -> RecoveryOutput:
    """Bootstrap the sparsity rate and noise level from the data.

    Each pass recovers with the current statistics, then resets the rate to
    the detected support fraction and the noise level to the residual power
    per real measurement.  Stops once the rate moves by less than 2%.
    """
    if e_max < 1:
        raise ValueError("e_max must be at least 1")
    N = sys.N
    rho, nv = float(rho0), float(noise_var0)
    out = None
    for t in range(1, e_max + 1):
        cur = sys.with_noise_var(nv)
        out = recover(cur, SupportPrior.weighted(rho, sys.weights), params, mode)
        rho_new = max(out.support_hat.size, 1) / N
        nv = out.noise_var_refined
        done = abs(rho_new - rho) / rho < 0.02
        rho = rho_new
        if done:
            break
    return replace(out, rho_refined=rho, noise_var_refined=nv, iterations_used=t)


def oracle_ls(sys: MeasurementSystem, true_support: Sequence[int]) -> RecoveryOutput:
    """Genie baseline: least squares on the true support, phase augmented."""
    S = sorted(int(i) for i in true_support)
    c = np.zeros(sys.N)
    if S:
        c[S] = blue(sys, S)
    return _finish(sys, c, True, SearchParams(), len(S) / sys.N)
