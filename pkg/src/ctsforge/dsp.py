"""Narrowband front end: energy SAD, log-mel features, sliding-window CMS.

Audio comes in as 8 kHz 16-bit mono WAV (other formats are rejected, not
resampled).  Features are 64-dimensional log-mel frames from 25 ms windows
every 10 ms over 80-3800 Hz, mean-normalized over a 3-second sliding
window, with non-speech frames dropped using the SAD marks.
"""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass, field

import numpy as np

from ctsforge.errors import AudioFormatError
from ctsforge.kernels import sliding_window_mean

DEFAULT_SAMPLE_RATE = 8000
FMAT_MAGIC = b"FMAT"


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.ndim != 1:
            raise ValueError("waveform must be one-dimensional")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class FrameSpec:
    frame_len_ms: float = 25.0
    frame_shift_ms: float = 10.0
    n_mels: int = 64
    fmin: float = 80.0
    fmax: float = 3800.0
    preemphasis: float = 0.97
    floor_eps: float = 1e-10

    def validate(self, sample_rate: int) -> None:
        if not self.fmin < self.fmax <= sample_rate / 2:
            raise ValueError(
                f"need fmin < fmax <= nyquist, got ({self.fmin}, {self.fmax}) at {sample_rate} Hz"
            )
        if self.frame_shift_ms > self.frame_len_ms:
            raise ValueError("frame_shift must not exceed frame_len")

    def frame_len(self, sample_rate: int) -> int:
        return int(round(self.frame_len_ms * sample_rate / 1000.0))

    def frame_shift(self, sample_rate: int) -> int:
        return int(round(self.frame_shift_ms * sample_rate / 1000.0))


@dataclass
class FeatureMatrix:
    """T x F matrix of feature frames plus the hop that produced them."""

    values: np.ndarray
    frame_shift_ms: float = 10.0

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ValueError("feature matrix must be two-dimensional")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_dims(self) -> int:
        return self.values.shape[1]


@dataclass
class SadParams:
    """Energy SAD with an adaptive threshold.

    A frame is speech when its log energy clears
    max(absolute_floor_db, min(noise_floor + margin_db, peak - peak_headroom_db)),
    where the noise floor is a low percentile of frame energies.  The peak
    cap keeps uniformly loud inputs (all-noise recordings) marked as
    speech instead of being swallowed by their own noise-floor estimate.
    Decisions are median-smoothed over `smooth_frames`.
    """

    margin_db: float = 6.0
    absolute_floor_db: float = -60.0
    peak_headroom_db: float = 12.0
    noise_percentile: float = 10.0
    smooth_frames: int = 5


# ---------------------------------------------------------------------------
# WAV I/O (16-bit PCM mono only; toolkit is narrowband by construction)

def read_wav(path, expected_rate: int = DEFAULT_SAMPLE_RATE) -> Waveform:
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise AudioFormatError(f"{path}: expected mono, got {wf.getnchannels()} channels")
        if wf.getsampwidth() != 2:
            raise AudioFormatError(f"{path}: expected 16-bit PCM, got {8 * wf.getsampwidth()}-bit")
        rate = wf.getframerate()
        if expected_rate and rate != expected_rate:
            raise AudioFormatError(f"{path}: expected {expected_rate} Hz, got {rate} Hz")
        raw = wf.readframes(wf.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples, rate)


def write_wav(path, w: Waveform) -> None:
    clipped = np.clip(w.samples, -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(w.sample_rate)
        wf.writeframes(pcm.tobytes())


# ---------------------------------------------------------------------------
# Framing

def n_frames(n_samples: int, frame_len: int, frame_shift: int) -> int:
    if n_samples < frame_len:
        return 0
    return (n_samples - frame_len) // frame_shift + 1


def frame_signal(samples: np.ndarray, frame_len: int, frame_shift: int) -> np.ndarray:
    """Strided (T, frame_len) view-copy of the signal."""
    t = n_frames(samples.size, frame_len, frame_shift)
    if t == 0:
        raise ValueError(f"signal of {samples.size} samples is shorter than one frame")
    idx = np.arange(frame_len)[None, :] + frame_shift * np.arange(t)[:, None]
    return samples[idx]


def frame_energies_db(w: Waveform, spec: FrameSpec, eps: float = 1e-12) -> np.ndarray:
    frames = frame_signal(w.samples, spec.frame_len(w.sample_rate), spec.frame_shift(w.sample_rate))
    return 10.0 * np.log10(np.mean(frames**2, axis=1) + eps)


# ---------------------------------------------------------------------------
# Speech activity detection

def detect_speech(w: Waveform, params: SadParams | None = None, spec: FrameSpec | None = None) -> np.ndarray:
    """Per-frame boolean speech marks; deterministic for fixed input."""
    if w.samples.size == 0:
        raise ValueError("empty waveform")
    params = params or SadParams()
    spec = spec or FrameSpec()
    energies = frame_energies_db(w, spec)
    noise_floor = np.percentile(energies, params.noise_percentile)
    peak = energies.max()
    threshold = max(
        params.absolute_floor_db,
        min(noise_floor + params.margin_db, peak - params.peak_headroom_db),
    )
    marks = energies > threshold
    if params.smooth_frames > 1 and marks.size:
        marks = _median_smooth(marks, params.smooth_frames)
    return marks


def _median_smooth(marks: np.ndarray, width: int) -> np.ndarray:
    if width % 2 == 0:
        width += 1
    half = width // 2
    padded = np.pad(marks.astype(np.int64), half, mode="edge")
    csum = np.concatenate([[0], np.cumsum(padded)])
    window_sums = csum[width:] - csum[:-width]
    return window_sums * 2 > width


# ---------------------------------------------------------------------------
# Log-mel spectrogram

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(spec: FrameSpec) -> np.ndarray:
    """Center frequencies (Hz) of the triangular filters, fmin..fmax."""
    edges = np.linspace(hz_to_mel(spec.fmin), hz_to_mel(spec.fmax), spec.n_mels + 2)
    return mel_to_hz(edges[1:-1])


def mel_filterbank(spec: FrameSpec, sample_rate: int, nfft: int) -> np.ndarray:
    """(n_mels, nfft//2+1) triangular filters, symmetric on the mel scale."""
    bin_freqs = np.arange(nfft // 2 + 1) * (sample_rate / nfft)
    bin_mels = hz_to_mel(bin_freqs)
    edges = np.linspace(hz_to_mel(spec.fmin), hz_to_mel(spec.fmax), spec.n_mels + 2)
    fb = np.zeros((spec.n_mels, bin_freqs.size))
    for m in range(spec.n_mels):
        lo, ctr, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (bin_mels - lo) / (ctr - lo)
        falling = (hi - bin_mels) / (hi - ctr)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def _fft_size(frame_len: int) -> int:
    nfft = 1
    while nfft < frame_len:
        nfft *= 2
    return nfft


def logmel(w: Waveform, spec: FrameSpec | None = None) -> FeatureMatrix:
    """Log-mel spectrogram: ln(max(filterbank energy, floor_eps)) per frame."""
    spec = spec or FrameSpec()
    spec.validate(w.sample_rate)
    frame_len = spec.frame_len(w.sample_rate)
    frame_shift = spec.frame_shift(w.sample_rate)
    if w.samples.size < frame_len:
        raise ValueError(
            f"waveform of {w.samples.size} samples is shorter than one {frame_len}-sample frame"
        )
    samples = w.samples
    if spec.preemphasis > 0:
        # x[n] - a*x[n-1] with x[-1] = 0 keeps framing shift-covariant
        samples = np.concatenate([samples[:1], samples[1:] - spec.preemphasis * samples[:-1]])
    frames = frame_signal(samples, frame_len, frame_shift)
    frames = frames * np.hamming(frame_len)
    nfft = _fft_size(frame_len)
    power = np.abs(np.fft.rfft(frames, n=nfft, axis=1)) ** 2
    fb = mel_filterbank(spec, w.sample_rate, nfft)
    energies = power @ fb.T
    feats = np.log(np.maximum(energies, spec.floor_eps))
    return FeatureMatrix(feats, frame_shift_ms=spec.frame_shift_ms)


# ---------------------------------------------------------------------------
# Sliding-window mean subtraction

def apply_cms(feats: FeatureMatrix, window_s: float = 3.0) -> FeatureMatrix:
    """Subtract the mean over a sliding window centered on each frame.

    The window keeps its full width near the edges by sliding inward
    (it only shrinks when the whole matrix is shorter than the window),
    so inputs shorter than the window get exact global-mean subtraction.
    """
    if feats.n_frames < 1:
        raise ValueError("empty feature matrix")
    window = max(1, int(round(window_s * 1000.0 / feats.frame_shift_ms)))
    means = sliding_window_mean(np.ascontiguousarray(feats.values, dtype=np.float64), window)
    return FeatureMatrix(feats.values - means, frame_shift_ms=feats.frame_shift_ms)


def drop_nonspeech(feats: FeatureMatrix, sad: np.ndarray) -> FeatureMatrix:
    """Keep exactly the rows marked as speech, in order."""
    sad = np.asarray(sad, dtype=bool)
    if sad.shape[0] != feats.n_frames:
        raise ValueError(f"SAD marks length {sad.shape[0]} != frame count {feats.n_frames}")
    return FeatureMatrix(feats.values[sad], frame_shift_ms=feats.frame_shift_ms)


# ---------------------------------------------------------------------------
# File formats

def write_fmat(path, values: np.ndarray) -> None:
    """Binary feature file: magic 'FMAT', u32 rows, u32 cols, f32 row-major LE."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("FMAT stores 2-D matrices")
    rows, cols = values.shape
    with open(path, "wb") as fh:
        fh.write(FMAT_MAGIC)
        fh.write(struct.pack("<II", rows, cols))
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_fmat(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FMAT_MAGIC:
            raise AudioFormatError(f"{path}: bad magic {magic!r}, expected {FMAT_MAGIC!r}")
        rows, cols = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(rows * cols * 4), dtype="<f4")
    if data.size != rows * cols:
        raise AudioFormatError(f"{path}: truncated payload")
    return data.reshape(rows, cols).astype(np.float64)


def write_sad_marks(path, marks: np.ndarray) -> None:
    """One '0'/'1' character per frame, newline-terminated."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("".join("1" if m else "0" for m in marks))
        fh.write("\n")


def read_sad_marks(path) -> np.ndarray:
    with open(path, encoding="ascii") as fh:
        text = fh.read().strip()
    return np.array([c == "1" for c in text], dtype=bool)
