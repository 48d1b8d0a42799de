"""Quarter-tone log-filterbank spectrogram front end.

Audio is processed at 44100 Hz with an STFT (frame 8192, hop 4410, Hann
window), a triangular filterbank with 24 logarithmically spaced filters
per octave between 65 Hz and 2100 Hz, and log(1 + m) compression.  The
resulting frame rate is exactly 10 fps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

SAMPLE_RATE = 44100
FRAME_SIZE = 8192
HOP_SIZE = 4410
FMIN = 65.0
FMAX = 2100.0
BANDS_PER_OCTAVE = 24


class AudioFormatError(ValueError):
    """Raised for unreadable or unsupported audio files."""


@dataclass
class AudioBuffer:
    samples: np.ndarray   # mono float64
    sample_rate: int


@dataclass
class Spectrogram:
    frames: np.ndarray            # T x B
    frame_rate: float
    band_frequencies: np.ndarray  # B center frequencies in Hz


def load_audio(path) -> AudioBuffer:
    """Load a PCM WAV file, downmix to mono and resample to 44100 Hz."""
    try:
        rate, data = wavfile.read(path)
    except Exception as exc:
        raise AudioFormatError(f"cannot read WAV file {path}: {exc}") from exc
    data = np.asarray(data)
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise AudioFormatError(f"unsupported sample format: {data.dtype}")
    if samples.ndim == 2:
        if samples.shape[1] > 2:
            raise AudioFormatError(f"expected 1-2 channels, got {samples.shape[1]}")
        samples = samples.mean(axis=1)
    if rate != SAMPLE_RATE:
        n_out = int(round(len(samples) * SAMPLE_RATE / rate))
        t_out = np.arange(n_out) * (rate / SAMPLE_RATE)
        samples = np.interp(t_out, np.arange(len(samples)), samples)
    return AudioBuffer(samples=samples, sample_rate=SAMPLE_RATE)


def band_centers(fmin: float = FMIN, fmax: float = FMAX,
                 per_octave: int = BANDS_PER_OCTAVE) -> np.ndarray:
    """All center frequencies fmin * 2^(k/per_octave) <= fmax."""
    n = int(np.floor(per_octave * np.log2(fmax / fmin))) + 1
    return fmin * 2.0 ** (np.arange(n) / per_octave)


def triangular_filterbank(n_fft: int = FRAME_SIZE, sample_rate: int = SAMPLE_RATE,
                          fmin: float = FMIN, fmax: float = FMAX,
                          per_octave: int = BANDS_PER_OCTAVE) -> tuple[np.ndarray, np.ndarray]:
    """Filter matrix (n_bins x B) with triangle peaks at the band centers
    and feet at the adjacent centers; each triangle normalized to unit area."""
    centers = band_centers(fmin, fmax, per_octave)
    step = 2.0 ** (1.0 / per_octave)
    # extend one center beyond each edge so edge triangles have feet
    ext = np.concatenate(([centers[0] / step], centers, [centers[-1] * step]))
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    filters = np.zeros((len(bin_freqs), len(centers)))
    for b in range(len(centers)):
        left, peak, right = ext[b], ext[b + 1], ext[b + 2]
        rising = (bin_freqs >= left) & (bin_freqs <= peak)
        falling = (bin_freqs > peak) & (bin_freqs <= right)
        filters[rising, b] = (bin_freqs[rising] - left) / (peak - left)
        filters[falling, b] = (right - bin_freqs[falling]) / (right - peak)
        total = filters[:, b].sum()
        if total > 0:
            filters[:, b] /= total
    return filters, centers


def log_filterbank_spectrogram(audio: AudioBuffer, log_offset: float = 1.0) -> Spectrogram:
    """Magnitude STFT -> triangular filterbank -> log(offset + m)."""
    if audio.sample_rate != SAMPLE_RATE:
        raise AudioFormatError(f"expected {SAMPLE_RATE} Hz audio, got {audio.sample_rate}")
    samples = np.asarray(audio.samples, dtype=np.float64)
    if len(samples) < FRAME_SIZE:
        raise AudioFormatError(
            f"audio too short: {len(samples)} samples < one frame ({FRAME_SIZE})")
    n_frames = int(np.ceil(len(samples) / HOP_SIZE))
    padded = np.zeros((n_frames - 1) * HOP_SIZE + FRAME_SIZE)
    padded[:len(samples)] = samples
    window = np.hanning(FRAME_SIZE)
    filters, centers = triangular_filterbank()
    frames = np.empty((n_frames, len(centers)))
    chunk = 256
    for i in range(0, n_frames, chunk):
        hi = min(i + chunk, n_frames)
        idx = np.arange(i, hi)[:, None] * HOP_SIZE + np.arange(FRAME_SIZE)[None, :]
        mag = np.abs(np.fft.rfft(padded[idx] * window, axis=1))
        frames[i:hi] = np.log(log_offset + mag @ filters)
    return Spectrogram(frames=frames, frame_rate=SAMPLE_RATE / HOP_SIZE,
                       band_frequencies=centers)


def save_spectrogram(spec: Spectrogram, csv_path) -> None:
    """Write one frame per CSV row plus a JSON sidecar with band metadata."""
    np.savetxt(csv_path, spec.frames, delimiter=',', fmt='%.8g')
    sidecar = {
        'frame_rate': spec.frame_rate,
        'band_frequencies': spec.band_frequencies.tolist(),
    }
    with open(str(csv_path) + '.json', 'w') as fh:
        json.dump(sidecar, fh)


def load_spectrogram(csv_path) -> Spectrogram:
    frames = np.loadtxt(csv_path, delimiter=',', ndmin=2)
    try:
        with open(str(csv_path) + '.json') as fh:
            sidecar = json.load(fh)
        frame_rate = sidecar['frame_rate']
        bands = np.asarray(sidecar['band_frequencies'])
    except FileNotFoundError:
        frame_rate = SAMPLE_RATE / HOP_SIZE
        bands = band_centers()[:frames.shape[1]]
    return Spectrogram(frames=frames, frame_rate=frame_rate, band_frequencies=bands)
