import logging

import numpy as np
import pytest

from dpccn.audio import Waveform, decimate, read_wav, write_wav


class TestWaveform:
    def test_validation(self):
        with pytest.raises(ValueError):
            Waveform(np.array([]), 8000)
        with pytest.raises(ValueError):
            Waveform(np.array([np.nan, 0.0]), 8000)
        with pytest.raises(ValueError):
            Waveform(np.zeros(10), 0)
        with pytest.raises(ValueError):
            Waveform(np.zeros((2, 10)), 8000)

    def test_energy_and_duration(self):
        wave = Waveform(np.array([1.0, -1.0, 2.0]), 8000)
        assert wave.energy() == pytest.approx(6.0)
        assert wave.duration_s == pytest.approx(3 / 8000)


class TestWavIo:
    def test_float32_round_trip(self, tmp_path, rng):
        x = rng.standard_normal(1000) * 0.3
        write_wav(tmp_path / "a.wav", Waveform(x, 8000))
        back = read_wav(tmp_path / "a.wav")
        assert back.sample_rate == 8000
        np.testing.assert_allclose(back.samples, x, atol=1e-7)

    def test_float32_preserves_out_of_range(self, tmp_path):
        x = np.array([1.5, -2.0, 0.25])
        write_wav(tmp_path / "hot.wav", Waveform(x, 8000))
        back = read_wav(tmp_path / "hot.wav")
        np.testing.assert_allclose(back.samples, x, atol=1e-7)

    def test_pcm16_round_trip_within_lsb(self, tmp_path, rng):
        x = np.clip(rng.standard_normal(1000) * 0.2, -0.9, 0.9)
        write_wav(tmp_path / "b.wav", Waveform(x, 16000), subtype="pcm16")
        back = read_wav(tmp_path / "b.wav")
        assert np.max(np.abs(back.samples - x)) <= 1.5 / 32768

    def test_pcm16_clips_with_warning(self, tmp_path, caplog):
        x = np.array([0.0, 2.0, -3.0])
        with caplog.at_level(logging.WARNING):
            write_wav(tmp_path / "c.wav", Waveform(x, 8000), subtype="pcm16")
        assert any("clipped" in r.message for r in caplog.records)
        back = read_wav(tmp_path / "c.wav")
        assert np.max(np.abs(back.samples)) <= 1.0

    def test_unknown_subtype_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_wav(tmp_path / "d.wav", Waveform(np.zeros(8), 8000), subtype="mp3")


class TestDecimate:
    def test_halves_rate_and_keeps_tone(self):
        rate = 16000
        t = np.arange(rate) / rate
        tone = np.sin(2 * np.pi * 440 * t)
        out = decimate(Waveform(tone, rate), 8000)
        assert out.sample_rate == 8000
        assert len(out) == rate // 2
        # a 440 Hz tone survives FIR decimation nearly unchanged
        t2 = np.arange(len(out)) / 8000
        ref = np.sin(2 * np.pi * 440 * t2)
        trimmed = slice(200, -200)
        corr = np.corrcoef(out.samples[trimmed], ref[trimmed])[0, 1]
        assert abs(corr) > 0.99

    def test_identity_when_rates_match(self, rng):
        wave = Waveform(rng.standard_normal(100), 8000)
        assert decimate(wave, 8000) is wave

    def test_non_integer_factor_rejected(self, rng):
        with pytest.raises(ValueError):
            decimate(Waveform(rng.standard_normal(100), 22050), 8000)
