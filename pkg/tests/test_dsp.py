import numpy as np
import pytest
import torch

from dpccn.audio import Waveform
from dpccn.dsp import (
    MVN_VARIANCE_FLOOR,
    MvnAccumulator,
    MvnStats,
    Spectrogram,
    StftConfig,
    apply_mvn,
    compute_mvn,
    invert_mvn,
    istft,
    sqrt_hann_window,
    stft,
)

RATE = 8000
CFG = StftConfig(512, 128)


class TestSqrtHannWindow:
    def test_endpoint_values(self):
        w = sqrt_hann_window(512)
        assert w[0] == 0.0
        assert w[256] == pytest.approx(1.0, abs=1e-12)

    def test_range(self):
        w = sqrt_hann_window(512)
        assert torch.all(w >= 0.0) and torch.all(w <= 1.0)

    def test_matches_definition(self):
        size = 256
        w = sqrt_hann_window(size).numpy()
        n = np.arange(size)
        expected = np.sqrt(0.5 * (1.0 - np.cos(2.0 * np.pi * n / size)))
        np.testing.assert_allclose(w, expected, atol=1e-15)

    @pytest.mark.parametrize("size", [0, 1, 3, 511])
    def test_rejects_bad_sizes(self, size):
        with pytest.raises(ValueError):
            sqrt_hann_window(size)

    def test_cola_constant_is_two(self):
        # squared sqrt-Hann overlap-added every fft_size/4 samples sums to 2
        size, hop = 512, 128
        wsq = sqrt_hann_window(size).numpy() ** 2
        span = 4 * size
        acc = np.zeros(span)
        for k in range(-size // hop, span // hop + size // hop):
            lo, hi = max(0, k * hop), min(span, k * hop + size)
            if lo < hi:
                acc[lo:hi] += wsq[lo - k * hop:hi - k * hop]
        interior = acc[size:-size]
        assert np.max(np.abs(interior - 2.0)) < 1e-10


class TestStft:
    def test_shape_and_length_metadata(self, rng):
        wave = Waveform(rng.standard_normal(32000), RATE)
        spec = stft(wave, CFG)
        assert spec.bins == 257
        assert spec.frame_count == 32000 // 128 + 1
        assert spec.original_length == 32000
        assert spec.sample_rate == RATE

    def test_zero_signal_gives_zero_spectrogram(self):
        spec = stft(Waveform(np.zeros(4096), RATE), CFG)
        assert np.all(spec.real == 0.0)
        assert np.all(spec.imag == 0.0)

    def test_dc_energy_concentrates_at_low_bins(self):
        # The sqrt-Hann taper spreads a constant over neighboring bins;
        # bin 0 still dominates and every frame is identical.
        spec = stft(Waveform(np.full(4096, 0.5), RATE), CFG)
        mag = spec.magnitude()
        assert np.all(np.argmax(mag, axis=1) == 0)
        np.testing.assert_allclose(mag, np.broadcast_to(mag[0], mag.shape), atol=1e-9)
        assert np.max(mag[:, 10:]) < 1e-2 * np.max(mag[:, 0])

    def test_too_short_input_rejected(self):
        with pytest.raises(ValueError):
            stft(Waveform(np.ones(100), RATE), CFG)

    def test_deterministic(self, rng):
        wave = Waveform(rng.standard_normal(9000), RATE)
        a = stft(wave, CFG)
        b = stft(wave, CFG)
        assert np.array_equal(a.real, b.real) and np.array_equal(a.imag, b.imag)

    def test_parseval_consistency(self, rng):
        # full-spectrum energy per frame equals fft_size times the
        # windowed-frame energy (unitary DFT bookkeeping)
        wave = Waveform(rng.standard_normal(32000), RATE)
        spec = stft(wave, CFG)
        power = spec.real ** 2 + spec.imag ** 2
        spec_energy = float(np.sum(2.0 * power) - np.sum(power[:, 0]) - np.sum(power[:, -1]))

        pad = CFG.fft_size // 2
        padded = np.concatenate([wave.samples[1:pad + 1][::-1], wave.samples,
                                 wave.samples[-pad - 1:-1][::-1]])
        w = sqrt_hann_window(CFG.fft_size).numpy()
        windowed_energy = sum(
            float(np.sum((padded[t * CFG.hop_size:t * CFG.hop_size + CFG.fft_size] * w) ** 2))
            for t in range(spec.frame_count)
        )
        assert spec_energy == pytest.approx(CFG.fft_size * windowed_energy, rel=1e-4)


class TestIstft:
    def test_round_trip(self, rng):
        x = rng.standard_normal(32000)
        wave = Waveform(x, RATE)
        back = istft(stft(wave, CFG), CFG)
        assert len(back) == 32000
        assert np.max(np.abs(back.samples - x)) < 1e-5 * np.max(np.abs(x))

    def test_round_trip_awkward_lengths(self, rng):
        for n in (400, 1000, 12345):
            x = rng.standard_normal(n)
            back = istft(stft(Waveform(x, RATE), CFG), CFG)
            assert len(back) == n
            assert np.max(np.abs(back.samples - x)) < 1e-5 * np.max(np.abs(x))

    def test_zero_spectrogram_gives_zero_waveform(self):
        spec = Spectrogram(np.zeros((50, 257)), np.zeros((50, 257)), 4000, RATE)
        out = istft(spec, CFG)
        assert np.all(out.samples == 0.0)

    def test_linearity(self, rng):
        a = stft(Waveform(rng.standard_normal(8000), RATE), CFG)
        b = stft(Waveform(rng.standard_normal(8000), RATE), CFG)
        alpha, beta = 0.7, -2.5
        combined = Spectrogram(alpha * a.real + beta * b.real,
                               alpha * a.imag + beta * b.imag, 8000, RATE)
        direct = istft(combined, CFG).samples
        separate = alpha * istft(a, CFG).samples + beta * istft(b, CFG).samples
        assert np.max(np.abs(direct - separate)) < 1e-6 * np.max(np.abs(separate))

    def test_shape_mismatch_rejected(self, rng):
        spec = stft(Waveform(rng.standard_normal(4000), RATE), CFG)
        with pytest.raises(ValueError):
            istft(spec, StftConfig(256, 64))


class TestStftConfig:
    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError):
            StftConfig(500, 125)

    def test_rejects_non_dividing_hop(self):
        with pytest.raises(ValueError):
            StftConfig(512, 100)


class TestMvn:
    def test_constant_stream_hits_variance_floor(self):
        acc = MvnAccumulator((2, 4))
        acc.add_frames(np.full((10, 2, 4), 3.25))
        stats = acc.finalize()
        np.testing.assert_allclose(stats.mean, 3.25)
        np.testing.assert_allclose(stats.variance, MVN_VARIANCE_FLOOR)

    def test_two_frame_example(self):
        acc = MvnAccumulator((1,))
        acc.add_frames(np.array([[0.0], [2.0]]))
        stats = acc.finalize()
        assert stats.mean[0] == pytest.approx(1.0)
        assert stats.variance[0] == pytest.approx(1.0)

    def test_shard_merge_matches_whole(self, rng):
        frames = rng.standard_normal((300, 2, 9))
        whole = MvnAccumulator((2, 9))
        whole.add_frames(frames)
        sharded = MvnAccumulator((2, 9))
        for chunk in np.array_split(frames, 7):
            part = MvnAccumulator((2, 9))
            part.add_frames(chunk)
            sharded.merge(part)
        a, b = whole.finalize(), sharded.finalize()
        np.testing.assert_allclose(b.mean, a.mean, rtol=1e-9)
        np.testing.assert_allclose(b.variance, a.variance, rtol=1e-9)

    def test_empty_stream_rejected(self):
        with pytest.raises(ValueError):
            MvnAccumulator((2, 4)).finalize()
        with pytest.raises(ValueError):
            compute_mvn(iter([]))

    def test_apply_whitens_its_own_batch(self, rng):
        frames = 1.5 + 2.0 * rng.standard_normal((500, 2, 6))
        acc = MvnAccumulator((2, 6))
        acc.add_frames(frames)
        out = apply_mvn(frames, acc.finalize())
        np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-5)
        np.testing.assert_allclose(out.var(axis=0), 1.0, atol=1e-5)

    def test_identity_stats_are_identity_transform(self, rng):
        frames = rng.standard_normal((20, 3))
        out = apply_mvn(frames, MvnStats.identity((3,)))
        np.testing.assert_allclose(out, frames, atol=1e-12)

    def test_invert_round_trip(self, rng):
        frames = rng.standard_normal((40, 2, 5))
        stats = MvnStats(rng.standard_normal((2, 5)), 0.5 + rng.random((2, 5)))
        back = invert_mvn(apply_mvn(frames, stats), stats)
        np.testing.assert_allclose(back, frames, rtol=1e-6, atol=1e-9)

    def test_layout_mismatch_rejected(self, rng):
        stats = MvnStats.identity((2, 5))
        with pytest.raises(ValueError):
            apply_mvn(rng.standard_normal((4, 2, 6)), stats)

    def test_compute_over_spectrograms(self, rng):
        waves = [Waveform(rng.standard_normal(4000), RATE) for _ in range(3)]
        stats = compute_mvn(stft(w, CFG) for w in waves)
        assert stats.feature_shape == (2, 257)
        assert np.all(np.isfinite(stats.mean))
