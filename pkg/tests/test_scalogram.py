import numpy as np
import pytest

from ecgscalo import scalogram
from ecgscalo.scalogram import (GrayImage, Scalogram, build_db4, cwt, export,
                                qmf, read_f32, scaling_filter, to_grayscale,
                                write_f32, write_pgm)

FS = 200.0


class TestFilterAdmissibility:
    def test_sum_is_sqrt2(self):
        h = scaling_filter()
        assert abs(h.sum() - np.sqrt(2.0)) <= 1e-12

    def test_orthonormal_at_even_shifts(self):
        h = scaling_filter()
        for m in range(4):
            inner = sum(h[k] * h[k + 2 * m] for k in range(h.size - 2 * m))
            assert abs(inner - (1.0 if m == 0 else 0.0)) <= 1e-12

    def test_four_vanishing_moments(self):
        g = qmf(scaling_filter())
        for p in range(4):
            moment = sum(g[k] * k ** p for k in range(g.size))
            assert abs(moment) <= 1e-8

    def test_eight_taps(self):
        assert scaling_filter().size == 8


class TestWaveletTable:
    @pytest.mark.parametrize("iterations", [8, 10])
    def test_zero_mean_and_unit_energy(self, iterations):
        table = build_db4(iterations)
        dt = 1.0 / table.resolution
        assert abs(np.sum(table.psi) * dt) <= 1e-6
        assert abs(np.sum(table.psi ** 2) * dt - 1.0) <= 1e-6

    def test_support_and_resolution(self):
        table = build_db4(8)
        assert table.support == (0.0, 7.0)
        assert table.resolution == 256
        assert table.psi.size <= 7 * 256

    def test_lookup_outside_support_is_zero(self):
        table = build_db4(8)
        assert np.all(table.sample(np.array([-0.5, 7.5, 100.0])) == 0.0)

    def test_too_coarse_rejected(self):
        with pytest.raises(ValueError):
            build_db4(3)


class TestCwt:
    def test_zero_wave_zero_matrix(self, db4_table):
        s = cwt(np.zeros(128), [1.0, 4.0], db4_table, fs=FS)
        assert np.all(s.coeffs == 0.0)
        assert s.coeffs.shape == (2, 128)

    def test_homogeneity(self, db4_table):
        rng = np.random.default_rng(7)
        f = rng.normal(size=200)
        base = cwt(f, [1.0, 3.0, 9.0], db4_table, fs=FS).coeffs
        scaled = cwt(2.75 * f, [1.0, 3.0, 9.0], db4_table, fs=FS).coeffs
        np.testing.assert_allclose(scaled, 2.75 * base, rtol=1e-12,
                                   atol=1e-15)

    def test_linearity(self, db4_table):
        rng = np.random.default_rng(8)
        f, g = rng.normal(size=150), rng.normal(size=150)
        scales = [2.0, 5.5]
        lhs = cwt(f + g, scales, db4_table, fs=FS).coeffs
        rhs = (cwt(f, scales, db4_table, fs=FS).coeffs
               + cwt(g, scales, db4_table, fs=FS).coeffs)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-13)

    def test_matches_brute_force(self, db4_table, cwt_oracle):
        rng = np.random.default_rng(9)
        for _ in range(6):
            n = int(rng.integers(16, 120))
            f = rng.normal(size=n)
            scales = rng.uniform(0.5, 10.0, size=int(rng.integers(1, 5)))
            fast = cwt(f, scales, db4_table, fs=FS).coeffs
            slow = cwt_oracle(f, scales, db4_table, FS)
            rel = np.max(np.abs(fast - slow)) / np.max(np.abs(slow))
            assert rel <= 1e-9

    def test_shift_covariance_on_interior(self, db4_table):
        rng = np.random.default_rng(10)
        n, d = 256, 17
        f = rng.normal(size=n)
        scales = [1.0, 3.0, 7.5]
        base = cwt(f, scales, db4_table, fs=FS).coeffs
        shifted_in = np.zeros(n)
        shifted_in[d:] = f[:-d]
        shifted = cwt(shifted_in, scales, db4_table, fs=FS).coeffs
        reach = int(np.floor(7 * max(scales)))
        m = n - reach - d  # columns untouched by either boundary
        assert np.max(np.abs(shifted[:, d:d + m] - base[:, :m])) <= 1e-9

    def test_oversized_scale_rejected(self, db4_table):
        with pytest.raises(ValueError, match="scale"):
            cwt(np.ones(16), [32.0], db4_table, fs=FS)  # 7*32 > 8*16

    def test_bad_scale_lists(self, db4_table):
        with pytest.raises(ValueError):
            cwt(np.ones(16), [], db4_table, fs=FS)
        with pytest.raises(ValueError):
            cwt(np.ones(16), [0.0], db4_table, fs=FS)

    def test_stride_subsamples_columns(self, db4_table):
        rng = np.random.default_rng(11)
        f = rng.normal(size=64)
        full = cwt(f, [2.0], db4_table, fs=FS).coeffs
        strided = cwt(f, [2.0], db4_table, fs=FS, stride=4).coeffs
        np.testing.assert_array_equal(strided, full[:, ::4])

    def test_feature_wave_and_array_agree(self, db4_table):
        from ecgscalo.featurize import FeatureWave
        rng = np.random.default_rng(14)
        values = rng.normal(size=96)
        wave = FeatureWave(samples=values, is_noise_gated=False)
        np.testing.assert_array_equal(
            cwt(wave, [1.5, 4.0], db4_table, fs=FS).coeffs,
            cwt(values, [1.5, 4.0], db4_table, fs=FS).coeffs)


class TestGrayscale:
    def test_all_zero_is_black(self):
        s = Scalogram(coeffs=np.zeros((3, 8)), scales=[1, 2, 3], fs=FS)
        assert np.all(to_grayscale(s).pixels == 0)

    def test_endpoints(self):
        s = Scalogram(coeffs=np.array([[0.0, 1.0]]), scales=[1.0], fs=FS)
        np.testing.assert_array_equal(to_grayscale(s).pixels, [[0, 255]])

    def test_midpoint_rounds_half_up(self):
        s = Scalogram(coeffs=np.array([[-2.0, 2.0, 0.0]]), scales=[1.0],
                      fs=FS)
        # 0 maps to 127.5, which rounds half-up to 128
        np.testing.assert_array_equal(to_grayscale(s).pixels,
                                      [[0, 255, 128]])

    def test_identity_on_full_range_integers(self):
        rng = np.random.default_rng(12)
        m = rng.integers(0, 256, size=(5, 9)).astype(np.float64)
        m[0, 0], m[-1, -1] = 0.0, 255.0
        s = Scalogram(coeffs=m, scales=np.arange(1, 6.0), fs=FS)
        np.testing.assert_array_equal(to_grayscale(s).pixels,
                                      m.astype(np.uint8))


class TestExport:
    def test_pgm_header_grammar(self, tmp_path):
        image = GrayImage(pixels=np.zeros((64, 1024), dtype=np.uint8))
        p = tmp_path / "img.pgm"
        write_pgm(image, p)
        assert p.read_bytes().startswith(b"P5\n1024 64\n255\n")

    def test_pgm_payload_size(self, tmp_path):
        image = GrayImage(pixels=np.arange(4, dtype=np.uint8).reshape(2, 2))
        p = tmp_path / "img.pgm"
        write_pgm(image, p)
        data = p.read_bytes()
        header = b"P5\n2 2\n255\n"
        assert data[:len(header)] == header
        assert len(data) - len(header) == 4
        assert data[len(header):] == bytes([0, 1, 2, 3])

    def test_f32_round_trip(self, tmp_path, db4_table):
        rng = np.random.default_rng(13)
        s = cwt(rng.normal(size=64), [1.0, 2.0], db4_table, fs=FS)
        p = tmp_path / "s.f32"
        write_f32(s, p)
        back = read_f32(p)
        np.testing.assert_array_equal(
            back.coeffs, s.coeffs.astype(np.float32).astype(np.float64))
        np.testing.assert_array_equal(back.scales, s.scales)
        assert back.fs == s.fs

    def test_export_dispatch(self, tmp_path):
        s = Scalogram(coeffs=np.array([[0.0, 1.0]]), scales=[1.0], fs=FS)
        export(s, tmp_path / "a.pgm", "pgm")
        export(s, tmp_path / "a.f32", "f32")
        assert (tmp_path / "a.pgm").exists()
        assert (tmp_path / "a.f32").exists()
        with pytest.raises(ValueError):
            export(s, tmp_path / "a.x", "png")
