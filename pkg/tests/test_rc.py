import numpy as np
import pytest
from hypothesis import given, strategies as st

from ofdmclip.dsp import constellation, dft
from ofdmclip.errors import ConfigError
from ofdmclip.link import OfdmConfig, clip, draw_channel, equalize, propagate, transmit
from ofdmclip.rc import ReliabilityReport, assemble, build_system, reliability, select_rc, sensing_rows, split_real

from oracles import naive_dft


def direct_reliability(x, points, var):
    """Ratio of Gaussian densities evaluated literally."""
    p = np.exp(-np.abs(x - points) ** 2 / var) / (np.pi * var)
    k = np.argmin(np.abs(x - points))
    return p[k] / (p.sum() - p[k])


def noiseless_clipped(rng, cfg, cr=1.4):
    bits = rng.integers(0, 2, cfg.bits_per_frame, dtype=np.uint8)
    X, x = transmit(bits, cfg)
    r = clip(x, cr)
    ch = draw_channel(cfg, rng)
    y = propagate(r.x_p, ch, None)
    Xhat, xhat = equalize(y, ch)
    return X, r, ch, dft(y), Xhat, xhat


class TestReliability:
    def test_qpsk_origin_is_one_third(self):
        rep = reliability(np.array([0j]), constellation(4), 0.5)
        assert rep.score[0] == pytest.approx(1 / 3)

    def test_matches_direct_density_ratio(self, rng):
        c = constellation(16)
        X = rng.standard_normal(50) + 1j * rng.standard_normal(50)
        rep = reliability(X, c, 0.3)
        ref = [direct_reliability(x, c.points, 0.3) for x in X]
        assert np.allclose(rep.score, ref, rtol=1e-9)

    def test_exact_point_is_most_reliable(self, rng):
        c = constellation(64)
        # perturbations of the same point; a corner can beat an exact inner point
        X = c.points[10] + 0.05 * (rng.standard_normal(32) + 1j * rng.standard_normal(32))
        X[7] = c.points[10]
        rep = reliability(X, c, 0.01)
        assert rep.log_score[7] == rep.log_score.max()

    def test_edge_neighbour_ordering(self):
        # same distance to the nearest point, but the corner point has fewer close competitors
        c = constellation(16)
        d = c.min_distance
        corner = c.points[np.argmax(c.points.real + c.points.imag)]
        inner = c.points[np.argmin(np.abs(c.points - (corner - d - 1j * d)))]
        off = 0.3 * d
        rep = reliability(np.array([corner + off, inner + off]), c, 0.05)
        assert rep.log_score[0] > rep.log_score[1]

    def test_underflow_safe(self):
        rep = reliability(np.array([0.3 + 0.2j, 5 + 5j]), constellation(64), 1e-9)
        assert np.all(np.isfinite(rep.log_score))

    def test_per_carrier_variance(self):
        c = constellation(4)
        X = np.array([0.2 + 0.1j, 0.2 + 0.1j])
        rep = reliability(X, c, 0.5, D=np.array([1.0, 2.0]))
        assert rep.score[1] == pytest.approx(direct_reliability(X[1], c.points, 0.125))

    def test_bad_variance(self):
        with pytest.raises(ConfigError):
            reliability(np.zeros(2), constellation(4), 0.0)

    @given(st.integers(0, 2 ** 32 - 1))
    def test_symmetry_under_constellation_symmetries(self, seed):
        rng = np.random.default_rng(seed)
        c = constellation(16)
        X = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        base = reliability(X, c, 0.2).log_score
        for t in (np.conj(X), -X, 1j * X):
            assert np.allclose(reliability(t, c, 0.2).log_score, base, atol=1e-9)


class TestSelect:
    def test_ties_take_lowest_indices(self):
        rep = ReliabilityReport(log_score=np.zeros(10), order=np.arange(10))
        assert list(select_rc(rep, 4)) == [0, 1, 2, 3]
        assert list(select_rc(rep, 4, reserved=[1, 2])) == [0, 3, 4, 5]

    def test_stable_order_on_equal_scores(self):
        rep = reliability(np.zeros(6, complex), constellation(4), 0.5)
        assert list(select_rc(rep, 3)) == [0, 1, 2]

    def test_reserved_never_chosen(self, rng):
        rep = reliability(rng.standard_normal(64) + 0j, constellation(16), 0.1)
        res = np.arange(0, 64, 4)
        assert not np.intersect1d(select_rc(rep, 40, reserved=res), res).size

    def test_too_many(self):
        rep = ReliabilityReport(log_score=np.zeros(10), order=np.arange(10))
        with pytest.raises(ConfigError):
            select_rc(rep, 9, reserved=[0, 1])

    def test_perturbed_carrier_excluded(self, rng):
        cfg = OfdmConfig(N=64, P=8)
        _, _, _, _, Xhat, _ = noiseless_clipped(rng, cfg, cr=10.0)
        c = cfg.const
        Xhat = Xhat.copy()
        Xhat[17] += 0.5 * c.min_distance
        rep = reliability(Xhat, c, 1e-3)
        assert 17 not in select_rc(rep, 62)


class TestSystem:
    def test_clean_frame_gives_zero_measurements(self, rng):
        cfg = OfdmConfig(N=64, P=16)
        X, r, ch, Y, Xhat, xhat = noiseless_clipped(rng, cfg, cr=10.0)
        sys = build_system(Y, X, ch.D, np.arange(16), xhat, 1e-3)
        assert np.allclose(sys.Ybar, 0, atol=1e-12)
        assert sys.n_rows == 32

    def test_true_magnitudes_are_exact_solution(self, rng):
        cfg = OfdmConfig(N=64, P=20)
        X, r, ch, Y, Xhat, xhat = noiseless_clipped(rng, cfg)
        chosen = np.sort(rng.choice(64, 20, replace=False))
        # phases from the true unclipped signal match those of x_hat on the support
        sys = build_system(Y, X, ch.D, chosen, r.x, 1e-3)
        assert np.allclose(sys.Phibar @ np.abs(r.c), sys.Ybar, atol=1e-9)

    def test_complex_and_real_paths_agree(self, rng):
        N, P = 32, 10
        D = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        chosen = np.sort(rng.choice(N, P, replace=False))
        xhat = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        Psi = sensing_rows(D, chosen, N)
        sys = assemble(np.zeros(P), Psi, xhat, 0.1, chosen)
        m = np.abs(rng.standard_normal(N))
        c = np.exp(1j * sys.theta) * m
        direct = (D * naive_dft(c))[chosen]
        assert np.allclose(Psi @ c, direct, atol=1e-10)
        assert np.allclose(sys.Phibar @ m, split_real(direct[:, None]).ravel(), atol=1e-10)

    def test_weights_and_phases(self, rng):
        xhat = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        sys = assemble(np.zeros(2), np.zeros((2, 16), complex), xhat, 0.1, [0, 1])
        assert sys.gamma_hat == pytest.approx(np.abs(xhat).max())
        assert np.allclose(sys.weights, np.abs(xhat).max() - np.abs(xhat))
        assert np.allclose(np.exp(1j * sys.theta), -xhat / np.abs(xhat))
        known = assemble(np.zeros(2), np.zeros((2, 16), complex), xhat, 0.1, [0, 1], gamma=5.0)
        assert known.gamma_hat == 5.0

    def test_noise_var_is_per_real_entry(self, rng):
        cfg = OfdmConfig(N=64, P=16)
        X, r, ch, Y, Xhat, xhat = noiseless_clipped(rng, cfg)
        assert build_system(Y, X, ch.D, np.arange(16), xhat, 0.4).noise_var == pytest.approx(0.2)

    def test_drop_rows(self, rng):
        cfg = OfdmConfig(N=64, P=16)
        X, r, ch, Y, Xhat, xhat = noiseless_clipped(rng, cfg)
        sys = build_system(Y, X, ch.D, np.arange(16), xhat, 1e-3)
        small = sys.drop_rows([0, 5])
        assert small.n_rows == 28 and list(small.chosen) == [i for i in range(16) if i not in (0, 5)]
        assert np.allclose(small.Ybar[:14], sys.Ybar[small.chosen])
        assert np.allclose(small.Ybar[14:], sys.Ybar[16 + small.chosen])
