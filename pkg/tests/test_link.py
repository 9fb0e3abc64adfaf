import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ofdmclip.dsp import dft, papr, qam_demap
from ofdmclip.errors import ConfigError, InputError, NumericError
from ofdmclip.link import (
    ChannelRealization, OfdmConfig, apply_channel, channel_from_taps, clip, clip_at, draw_channel, equalize,
    noise_variance, propagate, transmit,
)

from oracles import circular_convolve


def random_frame(rng, config):
    bits = rng.integers(0, 2, config.bits_per_frame, dtype=np.uint8)
    X, x = transmit(bits, config)
    return bits, X, x


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(N=500), dict(N_c=0), dict(N_c=1024), dict(P=0), dict(P=512),
                                    dict(clip_ratio=0.0), dict(M=32), dict(tap_variance="x"),
                                    dict(reliability_variance="y")])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            OfdmConfig(**kw)

    def test_noise_variance_formula(self):
        assert noise_variance(27, 64) == pytest.approx(1 / (6 * 10 ** 2.7))
        assert OfdmConfig(eb_n0_db=10, M=4).sigma_z2 == pytest.approx(0.05)


class TestTransmit:
    def test_all_zero_qpsk_is_impulse(self):
        cfg = OfdmConfig(N=4, M=4, N_c=1, P=1)
        X, x = transmit(np.zeros(8, dtype=np.uint8), cfg)
        assert np.allclose(X, (1 + 1j) / np.sqrt(2))
        assert np.allclose(x, [2 * (1 + 1j) / np.sqrt(2), 0, 0, 0])

    def test_wrong_length(self):
        with pytest.raises(InputError):
            transmit(np.zeros(10), OfdmConfig())

    def test_parseval_and_unit_power(self, rng):
        cfg = OfdmConfig()
        p = []
        for _ in range(200):
            _, X, x = random_frame(rng, cfg)
            assert np.linalg.norm(x) == pytest.approx(np.linalg.norm(X))
            p.append(np.mean(np.abs(x) ** 2))
        assert np.mean(p) == pytest.approx(1.0, rel=0.02)


class TestClip:
    def test_no_clip_when_ratio_is_large(self, rng):
        _, _, x = random_frame(rng, OfdmConfig())
        r = clip(x, 100.0)
        assert np.array_equal(r.x_p, x) and not np.any(r.c) and r.support.size == 0

    def test_single_sample(self):
        r = clip_at(np.array([3.0 + 0j, 0.5]), 1.0)
        assert np.allclose(r.x_p, [1, 0.5]) and np.allclose(r.c, [-2, 0])
        assert list(r.support) == [0]

    def test_zero_vector(self):
        with pytest.raises(InputError):
            clip(np.zeros(8), 1.0)

    @given(st.integers(0, 2 ** 32 - 1), st.floats(0.5, 3.0))
    def test_invariants(self, seed, cr):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        r = clip(x, cr)
        assert r.gamma == pytest.approx(cr * np.sqrt(np.mean(np.abs(x) ** 2)))
        assert np.array_equal(r.x_p, r.x + r.c) or np.allclose(r.x_p, r.x + r.c, rtol=0, atol=1e-15)
        s = r.support
        assert np.allclose(np.abs(r.x_p[s]), r.gamma, atol=1e-12)
        dphi = np.angle(r.x_p[s] * np.conj(x[s]))
        assert np.all(np.abs(dphi) < 1e-9)
        dphi_c = np.angle(r.c[s] * np.conj(-x[s]))
        assert np.all(np.abs(dphi_c) < 1e-9)
        rest = np.setdiff1d(np.arange(64), s)
        assert not np.any(r.c[rest]) and np.all(np.abs(x[rest]) <= r.gamma)

    def test_papr_not_increased(self, rng):
        cfg = OfdmConfig()
        for _ in range(20):
            _, _, x = random_frame(rng, cfg)
            assert papr(clip(x, 1.4).x_p) <= papr(x)

    @pytest.mark.parametrize("cr", [1.4, 1.61, 2.0])
    def test_clip_rate_matches_rayleigh_tail(self, rng, cr):
        cfg = OfdmConfig()
        hits = total = 0
        while total < 2 * 10 ** 5:
            _, _, x = random_frame(rng, cfg)
            hits += clip(x, cr).support.size
            total += x.size
        assert hits / total == pytest.approx(math.exp(-cr ** 2), rel=0.05)


class TestChannel:
    def test_unit_total_energy(self, rng):
        cfg = OfdmConfig()
        e = [np.sum(np.abs(draw_channel(cfg, rng).h) ** 2) for _ in range(10 ** 4)]
        assert np.mean(e) == pytest.approx(1.0, rel=0.02)

    def test_per_tap_unit_option(self, rng):
        cfg = OfdmConfig(tap_variance="per_tap_unit")
        e = [np.sum(np.abs(draw_channel(cfg, rng).h) ** 2) for _ in range(4000)]
        assert np.mean(e) == pytest.approx(cfg.N_c, rel=0.03)

    def test_parseval_on_response(self, rng):
        ch = draw_channel(OfdmConfig(), rng)
        assert np.mean(np.abs(ch.D) ** 2) == pytest.approx(np.sum(np.abs(ch.h) ** 2))

    def test_single_tap_is_flat(self, rng):
        ch = draw_channel(OfdmConfig(N_c=1), rng)
        assert np.allclose(np.abs(ch.D), np.abs(ch.h[0]))

    def test_null_redrawn(self):
        class Scripted:
            """First draw has taps (1, -1): response zero at carrier 0."""

            def __init__(self):
                self.calls = 0

            def standard_normal(self, n):
                self.calls += 1
                if self.calls <= 2:
                    return np.array([1.0, -1.0]) * np.sqrt(2) if self.calls == 1 else np.zeros(2)
                return np.array([1.0, 0.2])

        ch = draw_channel(OfdmConfig(N=8, N_c=2, P=2), Scripted())
        assert ch.redraws == 1 and np.min(np.abs(ch.D)) > 1e-6

    def test_convolution_theorem(self, rng):
        x = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        h = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        ch = channel_from_taps(h, 32, 0.0)
        assert np.allclose(apply_channel(x, ch.D), circular_convolve(x, h), atol=1e-9)
        assert np.allclose(dft(circular_convolve(x, h)), ch.D * dft(x), atol=1e-9)

    def test_identity_channel_noiseless(self, rng):
        x = rng.standard_normal(16) + 0j
        ch = channel_from_taps([1.0], 16, 0.0)
        assert np.allclose(propagate(x, ch, rng), x, atol=1e-12)

    def test_noise_power(self, rng):
        cfg = OfdmConfig(eb_n0_db=10)
        ch = channel_from_taps([1.0], 1024, cfg.sigma_z2)
        z = np.concatenate([propagate(np.zeros(1024), ch, rng) for _ in range(1000)])
        assert np.mean(np.abs(z) ** 2) == pytest.approx(cfg.sigma_z2, rel=0.03)
        assert np.var(z.real) == pytest.approx(cfg.sigma_z2 / 2, rel=0.03)


class TestEqualize:
    def test_noiseless_unclipped(self, rng):
        cfg = OfdmConfig()
        bits, X, x = random_frame(rng, cfg)
        ch = draw_channel(cfg, rng)
        Xhat, _ = equalize(propagate(x, ch, None), ch)
        assert np.allclose(Xhat, X, atol=1e-9)
        assert np.array_equal(qam_demap(Xhat, cfg.const)[0], bits)

    def test_noiseless_clipped_time_error_is_clipping(self, rng):
        cfg = OfdmConfig()
        _, _, x = random_frame(rng, cfg)
        r = clip(x, 1.4)
        ch = draw_channel(cfg, rng)
        _, xhat = equalize(propagate(r.x_p, ch, None), ch)
        assert np.allclose(xhat - x, r.c, atol=1e-9)

    def test_noise_only_variance(self, rng):
        cfg = OfdmConfig(eb_n0_db=15)
        ch = channel_from_taps([1.0], cfg.N, cfg.sigma_z2)
        errs = []
        for _ in range(300):
            _, X, x = random_frame(rng, cfg)
            errs.append(equalize(propagate(x, ch, rng), ch)[0] - X)
        assert np.var(np.concatenate(errs)) == pytest.approx(cfg.sigma_z2, rel=0.03)

    def test_near_null_raises(self):
        ch = ChannelRealization(h=np.zeros(1), D=np.array([1, 1e-9, 1, 1], complex), sigma_z2=0.0)
        with pytest.raises(NumericError):
            equalize(np.ones(4), ch)

    def test_every_draw_decodes_without_clipping(self, rng):
        cfg = OfdmConfig(N=64, P=8)
        for _ in range(50):
            bits, _, x = random_frame(rng, cfg)
            ch = draw_channel(cfg, rng)
            assert np.array_equal(qam_demap(equalize(propagate(x, ch, None), ch)[0], cfg.const)[0], bits)
