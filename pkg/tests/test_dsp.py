import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ofdmclip.dsp import constellation, dft, dft_matrix, idft, papr, qam_demap, qam_map, slice_symbols
from ofdmclip.errors import ConfigError, InputError

from oracles import naive_dft, nearest_point

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def complex_vectors(n):
    return st.tuples(arrays(float, n, elements=finite), arrays(float, n, elements=finite)).map(
        lambda t: t[0] + 1j * t[1])


class TestTransform:
    def test_impulse_gives_flat_spectrum(self):
        x = np.zeros(8)
        x[0] = 1
        assert np.allclose(dft(x), np.full(8, 1 / np.sqrt(8)), atol=1e-15)

    def test_constant_gives_impulse(self):
        assert np.allclose(dft(np.ones(4)), [2, 0, 0, 0], atol=1e-15)
        assert np.allclose(idft([2, 0, 0, 0]), np.ones(4), atol=1e-15)

    @pytest.mark.parametrize("k", [0, 1, 5])
    def test_inverse_of_impulse_is_exponential(self, k):
        X = np.zeros(16)
        X[k] = 1
        x = idft(X)
        assert np.allclose(np.abs(x), 1 / 4)
        assert np.allclose(x, np.exp(2j * np.pi * k * np.arange(16) / 16) / 4)

    @pytest.mark.parametrize("n", [8, 32, 128])
    def test_matches_naive_sum(self, rng, n):
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        assert np.allclose(dft(x), naive_dft(x), atol=1e-10)
        assert np.allclose(dft_matrix(n) @ x, naive_dft(x), atol=1e-10)

    @pytest.mark.parametrize("n", [6, 100, 0])
    def test_rejects_non_power_of_two(self, n):
        with pytest.raises(ConfigError):
            dft(np.ones(n))
        with pytest.raises(ConfigError):
            idft(np.ones(n))

    @given(st.sampled_from([8, 64, 512, 1024]).flatmap(complex_vectors))
    def test_round_trip_and_parseval(self, x):
        assert np.allclose(idft(dft(x)), x, atol=1e-10 * max(1, np.abs(x).max()))
        assert np.allclose(dft(idft(x)), x, atol=1e-10 * max(1, np.abs(x).max()))
        nx = np.linalg.norm(x)
        assert abs(np.linalg.norm(dft(x)) - nx) <= 1e-10 * max(nx, 1e-300)


class TestConstellation:
    @pytest.mark.parametrize("M", [4, 16, 64])
    def test_unit_energy(self, M):
        c = constellation(M)
        assert abs(np.mean(np.abs(c.points) ** 2) - 1) < 1e-12

    @pytest.mark.parametrize("M", [4, 16, 64])
    def test_square_symmetric_lattice(self, M):
        pts = constellation(M).points
        m = int(np.sqrt(M))
        levels = np.unique(np.round(pts.real, 12))
        assert levels.size == m
        assert np.allclose(np.diff(levels), levels[1] - levels[0])
        assert np.allclose(np.sort_complex(pts), np.sort_complex(-pts))
        assert np.allclose(np.sort_complex(pts), np.sort_complex(np.conj(pts)))

    @pytest.mark.parametrize("M", [4, 16, 64])
    def test_gray_neighbours_differ_in_one_bit(self, M):
        c = constellation(M)
        d = c.min_distance
        for a, b in itertools.combinations(range(M), 2):
            if abs(abs(c.points[a] - c.points[b]) - d) < 1e-9:
                assert np.count_nonzero(c.bit_labels[a] != c.bit_labels[b]) == 1

    def test_qpsk_zero_label(self):
        assert np.isclose(qam_map([0, 0], constellation(4))[0], (1 + 1j) / np.sqrt(2))

    @pytest.mark.parametrize("M", [2, 8, 32, 256])
    def test_unsupported_order(self, M):
        with pytest.raises(ConfigError):
            constellation(M)


class TestMapping:
    @pytest.mark.parametrize("M", [4, 16, 64])
    def test_all_labels_round_trip(self, M):
        c = constellation(M)
        bits = np.array(list(itertools.product((0, 1), repeat=c.bits_per_symbol)), dtype=np.uint8).ravel()
        back, sym = qam_demap(qam_map(bits, c), c)
        assert np.array_equal(back, bits)
        assert np.allclose(sym, qam_map(bits, c))

    def test_bad_bit_count(self):
        with pytest.raises(InputError):
            qam_map([0, 1, 1], constellation(16))

    def test_exact_point_is_fixed(self):
        c = constellation(64)
        assert np.array_equal(slice_symbols(c.points, c), c.points)

    def test_midpoint_tie_goes_to_lower_index(self):
        c = constellation(16)
        for a, b in itertools.combinations(range(16), 2):
            if abs(abs(c.points[a] - c.points[b]) - c.min_distance) < 1e-9:
                mid = (c.points[a] + c.points[b]) / 2
                assert c.nearest_index(np.array([mid]))[0] == a

    def test_small_perturbations_never_err(self, rng):
        c = constellation(64)
        idx = rng.integers(0, 64, 1000)
        r = 0.499 * c.min_distance * np.sqrt(rng.random(1000))
        X = c.points[idx] + r * np.exp(2j * np.pi * rng.random(1000))
        assert np.array_equal(c.nearest_index(X), idx)
        assert np.array_equal(c.nearest_index(X), nearest_point(X, c.points))

    @given(complex_vectors(16))
    def test_demap_agrees_with_exhaustive_search(self, X):
        c = constellation(16)
        assert np.array_equal(c.nearest_index(X), nearest_point(X, c.points))

    @given(complex_vectors(8))
    def test_demap_idempotent(self, X):
        c = constellation(64)
        bits, sym = qam_demap(X, c)
        bits2, sym2 = qam_demap(qam_map(bits, c), c)
        assert np.array_equal(bits, bits2) and np.array_equal(sym, sym2)


class TestPapr:
    def test_constant_magnitude(self):
        assert papr(np.exp(1j * np.arange(8))) == pytest.approx(1.0)

    def test_impulse(self):
        x = np.zeros(64)
        x[0] = 3
        assert papr(x) == pytest.approx(64)

    def test_zero_vector(self):
        with pytest.raises(InputError):
            papr(np.zeros(4))
