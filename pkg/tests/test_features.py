"""Audio loading and quarter-tone log-filterbank features."""

import numpy as np
import pytest
from scipy.io import wavfile

from chordlattice import features


def write_wav(path, samples, rate=44100):
    wavfile.write(path, rate, (np.asarray(samples) * 32767).astype(np.int16))
    return path


class TestLoadAudio:
    def test_stereo_downmix(self, tmp_path):
        stereo = np.full((1000, 2), 0.5)
        path = tmp_path / 's.wav'
        wavfile.write(path, 44100, (stereo * 32767).astype(np.int16))
        audio = features.load_audio(path)
        assert audio.samples.ndim == 1
        assert np.allclose(audio.samples, 0.5, atol=1e-3)

    def test_resample_doubles_length(self, tmp_path):
        n = 22050
        path = write_wav(tmp_path / 'low.wav', np.zeros(n), rate=22050)
        audio = features.load_audio(path)
        assert audio.sample_rate == 44100
        assert abs(len(audio.samples) - 2 * n) <= 1

    def test_silence_stays_zero(self, tmp_path):
        path = write_wav(tmp_path / 'z.wav', np.zeros(5000))
        audio = features.load_audio(path)
        assert np.all(audio.samples == 0.0)

    def test_unreadable_file(self, tmp_path):
        path = tmp_path / 'bad.wav'
        path.write_bytes(b'not a wav')
        with pytest.raises(features.AudioFormatError):
            features.load_audio(path)


class TestFilterbank:
    def test_band_count(self):
        centers = features.band_centers()
        expected = int(np.floor(24 * np.log2(2100 / 65))) + 1
        assert len(centers) == expected == 121

    def test_centers_quarter_tone_spaced(self):
        centers = features.band_centers()
        ratios = centers[1:] / centers[:-1]
        assert np.allclose(ratios, 2 ** (1 / 24))
        assert centers[0] == pytest.approx(65.0)
        assert centers[-1] <= 2100.0

    def test_one_second_gives_ten_frames(self):
        audio = features.AudioBuffer(samples=np.zeros(44100), sample_rate=44100)
        spec = features.log_filterbank_spectrogram(audio)
        assert spec.frames.shape == (10, 121)
        assert spec.frame_rate == pytest.approx(10.0)

    def test_sine_peak_within_quarter_tone(self):
        t = np.arange(44100) / 44100
        audio = features.AudioBuffer(samples=0.5 * np.sin(2 * np.pi * 440 * t),
                                     sample_rate=44100)
        spec = features.log_filterbank_spectrogram(audio)
        peak_band = int(np.argmax(spec.frames[5]))
        peak_freq = spec.band_frequencies[peak_band]
        assert abs(np.log2(peak_freq / 440.0)) <= 1 / 24

    def test_values_nonnegative(self):
        rng = np.random.default_rng(0)
        audio = features.AudioBuffer(samples=rng.normal(0, 0.1, 44100),
                                     sample_rate=44100)
        spec = features.log_filterbank_spectrogram(audio)
        assert np.all(spec.frames >= 0.0)

    def test_amplitude_monotonicity(self):
        rng = np.random.default_rng(1)
        samples = rng.normal(0, 0.1, 44100)
        quiet = features.log_filterbank_spectrogram(
            features.AudioBuffer(samples=samples, sample_rate=44100))
        loud = features.log_filterbank_spectrogram(
            features.AudioBuffer(samples=2 * samples, sample_rate=44100))
        assert np.all(loud.frames >= quiet.frames - 1e-12)

    def test_too_short_audio(self):
        audio = features.AudioBuffer(samples=np.zeros(100), sample_rate=44100)
        with pytest.raises(ValueError):
            features.log_filterbank_spectrogram(audio)


class TestSpectrogramIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        audio = features.AudioBuffer(samples=rng.normal(0, 0.1, 44100),
                                     sample_rate=44100)
        spec = features.log_filterbank_spectrogram(audio)
        path = tmp_path / 'spec.csv'
        features.save_spectrogram(spec, path)
        loaded = features.load_spectrogram(path)
        assert np.allclose(loaded.frames, spec.frames, atol=1e-8)
        assert loaded.frame_rate == pytest.approx(spec.frame_rate)
        assert np.allclose(loaded.band_frequencies, spec.band_frequencies)
