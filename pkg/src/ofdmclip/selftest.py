"""Fast built-in checks against brute-force references.

Run with ``ofdmclip selftest``.  Each check returns ``(name, passed, detail)``.
"""
from __future__ import annotations

import itertools
import time

import numpy as np

from .dsp import constellation, dft, dft_matrix, idft, qam_demap, qam_map
from .engine import SearchParams, SupportPrior, greedy_search_op
from .link import OfdmConfig, clip
from .pipeline import make_frame, single_user_errors


def exhaustive_posterior(A, y, noise_var, log_odds, log_empty, max_size=None, window=np.inf):
    """Score every support by brute force; returns ``(best support, posterior mean)``.

    Supports scoring more than ``window`` below the best are dropped from the mean.
    """
    m, N = A.shape
    kmax = min(m, N) if max_size is None else max_size
    scores, means = [], []
    supports = []
    for k in range(kmax + 1):
        for S in itertools.combinations(range(N), k):
            c = np.zeros(N, dtype=np.result_type(A, y))
            if S:
                sol = np.linalg.lstsq(A[:, S], y, rcond=None)[0]
                c[list(S)] = sol
            r = y - A @ c
            scores.append(-np.vdot(r, r).real / (2 * noise_var) + log_empty + sum(log_odds[list(S)]))
            means.append(c)
            supports.append(S)
    s = np.asarray(scores)
    w = np.where(s >= s.max() - window, np.exp(s - s.max()), 0.0)
    w /= w.sum()
    return supports[int(np.argmax(s))], np.tensordot(w, np.asarray(means), axes=1)


def check_dft() -> tuple[str, bool, str]:
    rng = np.random.default_rng(1)
    x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    F = dft_matrix(16)
    err = max(np.abs(idft(dft(x)) - x).max(), np.abs(F @ F.conj().T - np.eye(16)).max(),
              abs(np.linalg.norm(dft(x)) - np.linalg.norm(x)))
    return "dft unitary round trip", err < 1e-12, f"max error {err:.2e}"


def check_qam() -> tuple[str, bool, str]:
    ok = True
    for M in (4, 16, 64):
        c = constellation(M)
        bits = np.array(list(itertools.product((0, 1), repeat=c.bits_per_symbol)), dtype=np.uint8).ravel()
        X = qam_map(bits, c)
        back, _ = qam_demap(X, c)
        ok &= np.array_equal(back, bits) and abs(np.mean(np.abs(X) ** 2) - 1) < 1e-12
    return "qam map/demap and unit energy", bool(ok), "orders 4, 16, 64"


def check_clip() -> tuple[str, bool, str]:
    rng = np.random.default_rng(2)
    x = rng.standard_normal(256) + 1j * rng.standard_normal(256)
    r = clip(x, 1.2)
    ok = np.all(np.abs(r.x_p) <= r.gamma * (1 + 1e-12)) and np.allclose(r.x_p + 0, x + r.c)
    return "clipper bounds amplitude", bool(ok), f"gamma {r.gamma:.4f}"


def check_exhaustive(trials: int = 50) -> tuple[str, bool, str]:
    """Greedy posterior mean against full enumeration, 8 unknowns and 12 real rows.

    Supersets of the true support keep noticeable weight under the profile
    likelihood and the beam does not visit all of them.  Their amplitudes
    only differ by fitted noise, so the gap shrinks with the noise level.
    """
    rng = np.random.default_rng(3)
    params = SearchParams()
    nv = 1e-6
    hits, worst = 0, 0.0
    for _ in range(trials):
        A = rng.standard_normal((12, 8))
        k = int(rng.integers(1, 3))
        c = np.zeros(8)
        c[rng.choice(8, k, replace=False)] = 1 + rng.random(k)
        y = A @ c + np.sqrt(nv) * rng.standard_normal(12)
        prior = SupportPrior.uniform(0.1, 8)
        post = greedy_search_op(A, y, nv, prior, params)
        best, mean = exhaustive_posterior(A, y, nv, prior.log_odds, prior.log_empty)
        hits += tuple(sorted(best)) == post.best
        worst = max(worst, np.linalg.norm(post.mean() - mean) / np.linalg.norm(mean))
    return "greedy search matches enumeration", hits == trials and worst <= 1e-3, \
        f"MAP agreement {hits}/{trials}, worst relative mean error {worst:.1e}"


def check_noiseless(frames: int = 4) -> tuple[str, bool, str]:
    cfg = OfdmConfig()
    errs = 0
    for f in range(frames):
        fr = make_frame(cfg, np.random.default_rng([11, f]), noiseless=True)
        errs += single_user_errors(fr, cfg, ["wpa"])["wpa"]
    return "noiseless recovery is error free", errs == 0, f"{errs} bit errors in {frames} frames"


def check_sweep_threads() -> tuple[str, bool, str]:
    from .sweep import SweepSetup, run_sweep

    setup = SweepSetup("ber_vs_cr", (1.8,), OfdmConfig(N=64, P=16, eb_n0_db=20), ("none", "wpa"),
                     target_errors=50, max_frames=8, seed=5)
    a = run_sweep(setup, threads=1).without_timing()
    b = run_sweep(setup, threads=2).without_timing()
    return "sweep independent of thread count", a == b, "1 vs 2 threads"


CHECKS = (check_dft, check_qam, check_clip, check_exhaustive, check_noiseless, check_sweep_threads)


def run(echo=print) -> bool:
    ok = True
    for chk in CHECKS:
        t0 = time.perf_counter()
        try:
            name, passed, detail = chk()
        except Exception as exc:  # a crashing check is a failed check
            name, passed, detail = chk.__name__, False, f"{type(exc).__name__}: {exc}"
        ok &= passed
        echo(f"{'PASS' if passed else 'FAIL'}  {name}: {detail} ({time.perf_counter() - t0:.1f} s)")
    return ok
