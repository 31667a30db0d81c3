"""Synthetic telephony corpus generator.

Real conversational telephone speech is license-restricted, so the test
substrate is generated: each synthetic speaker is a small set of spectral
articulation states (random band envelopes) excited by noise, switching
states every 120-250 ms.  Speaker identity lives in the state envelopes
and their dynamics rather than in any static coloration, because the
feature pipeline's sliding mean subtraction removes stationary structure.
Sessions of one speaker share the voice but get a mild per-session
spectral offset and gain, mimicking channel variation.

Also generates a small noise corpus (babble / general noise / music) for
the augmentation stage.  Everything is derived from one base seed, so a
corpus is reproducible byte for byte.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from ctsforge.augment import write_noise_manifest
from ctsforge.dsp import (DEFAULT_SAMPLE_RATE, Waveform, hz_to_mel,
                          mel_to_hz, write_wav)
from ctsforge.errors import MetadataError
from ctsforge.seeding import derive_rng

N_BANDS = 16
N_STATES = 4
STATE_SPREAD = 2.0      # ln-amplitude spread of articulation states
SESSION_SPREAD = 0.3    # ln-amplitude per-session channel offset
DWELL_RANGE_S = (0.12, 0.25)
BURST_RANGE_S = (0.8, 2.5)
PAUSE_RANGE_S = (0.3, 1.2)
PAUSE_LEVEL = 3e-3
SPEECH_RMS = 0.12
BAND_LO_HZ = 80.0
BAND_HI_HZ = 3800.0

_WIN = 256   # 32 ms synthesis window
_HOP = 128   # 16 ms hop

SESSIONS_HEADER = ["path", "subjectid", "sessionid", "corpusid", "phoneid",
                   "gender", "language", "speech_duration"]

SYNTH_CORPUSID = "mx6"
SYNTH_LANGUAGE = "eng"


@dataclass(frozen=True)
class SpeakerVoice:
    """A speaker's articulation states as ln-amplitude band envelopes."""

    state_envelopes: np.ndarray  # (n_states, n_bands)
    base_tilt: np.ndarray        # (n_bands,), shared across states


@dataclass(frozen=True)
class SessionRecord:
    """One generated session file plus its metadata fields."""

    path: str
    subjectid: str
    sessionid: str
    corpusid: str
    phoneid: str
    gender: str
    language: str
    speech_duration: float


def draw_voice(rng):
    """Draws a random voice; same rng state always yields the same voice."""
    states = rng.normal(0.0, STATE_SPREAD, size=(N_STATES, N_BANDS))
    tilt = rng.normal(0.0, 1.0, size=N_BANDS)
    return SpeakerVoice(state_envelopes=states, base_tilt=tilt)


def _band_interp_matrix(n_bins, sample_rate):
    """Linear interpolation from band anchors to rfft bins, on the mel axis.

    Bins outside the telephony band get a strong fixed attenuation.
    """
    bin_hz = np.arange(n_bins) * sample_rate / _WIN
    anchors = mel_to_hz(np.linspace(hz_to_mel(BAND_LO_HZ),
                                    hz_to_mel(BAND_HI_HZ), N_BANDS))
    anchor_mel = hz_to_mel(anchors)
    bin_mel = hz_to_mel(np.maximum(bin_hz, 1.0))
    pos = np.clip(np.interp(bin_mel, anchor_mel, np.arange(N_BANDS)),
                  0, N_BANDS - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, N_BANDS - 1)
    frac = pos - lo
    weights = np.zeros((n_bins, N_BANDS))
    rows = np.arange(n_bins)
    weights[rows, lo] += 1.0 - frac
    weights[rows, hi] += frac
    in_band = (bin_hz >= BAND_LO_HZ) & (bin_hz <= BAND_HI_HZ)
    return weights, in_band


def synth_session(voice, speech_seconds, rng, sample_rate=DEFAULT_SAMPLE_RATE):
    """Synthesizes one session: speech bursts separated by near-silence.

    Args:
        voice: the speaker's SpeakerVoice.
        speech_seconds: target total speech time; the last burst is
            trimmed so the realized total matches within one hop.
        rng: generator driving states, bursts, noise, and channel offset.
        sample_rate: output rate.

    Returns:
        Tuple (Waveform, intervals) where intervals is a list of
        (start_s, end_s) speech stretches covering the bursts.
    """
    if speech_seconds <= 0:
        raise ValueError("speech_seconds must be positive")
    hop_s = _HOP / sample_rate
    n_bins = _WIN // 2 + 1

    # session channel: band offset plus overall gain
    session_offset = rng.normal(0.0, SESSION_SPREAD, size=N_BANDS)
    session_gain = rng.uniform(0.8, 1.25)

    weights, in_band = _band_interp_matrix(n_bins, sample_rate)
    ln_env = voice.state_envelopes + voice.base_tilt + session_offset
    state_bins = np.exp(ln_env @ weights.T)
    state_bins[:, ~in_band] *= 0.01

    # burst/pause plan in hops, trimming the last burst to the target
    speech_left = int(round(speech_seconds / hop_s))
    plan = []  # (n_hops, is_speech)
    while speech_left > 0:
        burst = min(int(round(rng.uniform(*BURST_RANGE_S) / hop_s)),
                    speech_left)
        burst = max(burst, 1)
        plan.append((burst, True))
        speech_left -= burst
        if speech_left > 0:
            pause = max(int(round(rng.uniform(*PAUSE_RANGE_S) / hop_s)), 1)
            plan.append((pause, False))
    n_hops = sum(n for n, _ in plan)

    # articulation-state index per hop
    states = np.empty(n_hops, dtype=int)
    pos = 0
    current = int(rng.integers(0, N_STATES))
    while pos < n_hops:
        dwell = max(int(round(rng.uniform(*DWELL_RANGE_S) / hop_s)), 1)
        states[pos : pos + dwell] = current
        pos += dwell
        step = int(rng.integers(1, N_STATES))  # never repeat a state
        current = (current + step) % N_STATES
    gains = np.empty(n_hops)
    pos = 0
    for n, is_speech in plan:
        gains[pos : pos + n] = 1.0 if is_speech else PAUSE_LEVEL
        pos += n

    # noise excitation shaped per hop, overlap-added with a periodic Hann
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(_WIN) / _WIN)
    noise = rng.standard_normal((n_hops, _WIN))
    spectra = np.fft.rfft(noise * window, axis=1)
    spectra *= state_bins[states] * gains[:, None]
    frames = np.fft.irfft(spectra, n=_WIN, axis=1) * window
    samples = np.zeros(n_hops * _HOP + _WIN)
    samples[: n_hops * _HOP].reshape(n_hops, _HOP)[:] = frames[:, :_HOP]
    samples[_HOP : n_hops * _HOP + _HOP].reshape(n_hops, _HOP)[:] += \
        frames[:, _HOP:]

    # scale speech to a fixed RMS with clip headroom
    speech_mask = np.repeat(gains >= 0.5, _HOP)
    speech_rms = math.sqrt(float(np.mean(
        samples[: speech_mask.shape[0]][speech_mask] ** 2)))
    samples *= session_gain * SPEECH_RMS / max(speech_rms, 1e-12)
    np.clip(samples, -0.999, 0.999, out=samples)

    intervals = []
    pos = 0
    for n, is_speech in plan:
        if is_speech:
            intervals.append((pos * hop_s, (pos + n) * hop_s))
        pos += n
    return Waveform(samples, sample_rate), intervals


def write_speech_intervals(path, intervals):
    """Sidecar TSV of ground-truth speech stretches: start<TAB>end seconds."""
    with open(path, "w", encoding="utf-8") as fh:
        for start, end in intervals:
            fh.write(f"{start:.3f}\t{end:.3f}\n")


def read_speech_intervals(path):
    intervals = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.rstrip("\n")
            if not raw:
                continue
            parts = raw.split("\t")
            if len(parts) != 2:
                raise MetadataError("expected start and end columns",
                                    line=lineno)
            intervals.append((float(parts[0]), float(parts[1])))
    return intervals


def write_sessions_manifest(path, records):
    lines = ["\t".join(SESSIONS_HEADER)]
    for rec in records:
        lines.append("\t".join([
            rec.path, rec.subjectid, rec.sessionid, rec.corpusid,
            rec.phoneid, rec.gender, rec.language,
            f"{rec.speech_duration:.2f}",
        ]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_sessions_manifest(path):
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != SESSIONS_HEADER:
            raise MetadataError(f"bad sessions manifest header {header}",
                                line=1)
        for lineno, raw in enumerate(fh, start=2):
            raw = raw.rstrip("\n")
            if not raw:
                continue
            parts = raw.split("\t")
            if len(parts) != len(SESSIONS_HEADER):
                raise MetadataError(
                    f"expected {len(SESSIONS_HEADER)} columns, got "
                    f"{len(parts)}", line=lineno)
            records.append(SessionRecord(
                path=parts[0], subjectid=parts[1], sessionid=parts[2],
                corpusid=parts[3], phoneid=parts[4], gender=parts[5],
                language=parts[6], speech_duration=float(parts[7])))
    return records


def generate_synthetic_corpus(outdir, n_speakers, sessions_per_speaker,
                              speech_seconds, seed):
    """Writes session WAVs, speech-interval sidecars, and sessions.tsv.

    Args:
        outdir: destination directory (created if needed).
        n_speakers: >= 2 distinct voices.
        sessions_per_speaker: sessions generated per voice.
        speech_seconds: per-session speech targets; a sequence cycled over
            the session index, or a single number for all sessions.
        seed: base seed; voices and sessions derive their own streams.

    Returns:
        List of SessionRecord in generation order (sessions.tsv order).
    """
    if n_speakers < 2:
        raise ValueError("need at least 2 speakers")
    if sessions_per_speaker < 1:
        raise ValueError("need at least 1 session per speaker")
    if np.isscalar(speech_seconds):
        speech_seconds = [float(speech_seconds)]
    os.makedirs(outdir, exist_ok=True)
    records = []
    for spk in range(n_speakers):
        subjectid = f"spk{spk:04d}"
        voice = draw_voice(derive_rng(seed, "voice", subjectid))
        gender = "male" if spk % 2 == 0 else "female"
        for sess in range(sessions_per_speaker):
            sessionid = f"{subjectid}_s{sess:02d}"
            target = float(speech_seconds[sess % len(speech_seconds)])
            rng = derive_rng(seed, "session", subjectid, sess)
            wav, intervals = synth_session(voice, target, rng)
            wav_path = os.path.join(outdir, f"{sessionid}.wav")
            write_wav(wav_path, wav)
            write_speech_intervals(wav_path + ".speech.tsv", intervals)
            records.append(SessionRecord(
                path=wav_path,
                subjectid=subjectid,
                sessionid=sessionid,
                corpusid=SYNTH_CORPUSID,
                phoneid=f"ph{spk:04d}",
                gender=gender,
                language=SYNTH_LANGUAGE,
                speech_duration=sum(e - s for s, e in intervals),
            ))
    write_sessions_manifest(os.path.join(outdir, "sessions.tsv"), records)
    return records


def _harmonic_stack(rng, n_samples, sample_rate):
    t = np.arange(n_samples) / sample_rate
    f0 = rng.uniform(110.0, 440.0)
    drift = 1.0 + 0.02 * np.sin(2.0 * np.pi * rng.uniform(0.1, 0.5) * t)
    tone = np.zeros(n_samples)
    for k in range(1, 6):
        if k * f0 * 1.05 >= sample_rate / 2:
            break
        amp = rng.uniform(0.3, 1.0) / k
        tone += amp * np.sin(2.0 * np.pi * k * f0 * np.cumsum(drift)
                             / sample_rate)
    vibrato = 0.6 + 0.4 * np.sin(2.0 * np.pi * rng.uniform(0.5, 2.0) * t)
    return tone * vibrato


def generate_noise_corpus(outdir, seed, n_per_category=3, duration_s=10.0,
                          sample_rate=DEFAULT_SAMPLE_RATE):
    """Writes a small noise corpus plus its manifest; returns the entries.

    babble: several overlapping synthetic voices with no pauses.
    noise:  colored noise with a random spectral tilt and slow amplitude
            modulation.
    music:  a few harmonic stacks with vibrato and pitch drift.
    """
    os.makedirs(outdir, exist_ok=True)
    n_samples = int(round(duration_s * sample_rate))
    entries = []
    for idx in range(n_per_category):
        rng = derive_rng(seed, "noise-babble", idx)
        acc = np.zeros(n_samples)
        for v in range(5):
            voice = draw_voice(rng)
            wav, _ = synth_session(voice, duration_s + 2.0, rng,
                                   sample_rate=sample_rate)
            acc += wav.samples[:n_samples]
        acc *= 0.2
        path = os.path.join(outdir, f"babble{idx}.wav")
        write_wav(path, Waveform(np.clip(acc, -0.999, 0.999), sample_rate))
        entries.append((path, "babble"))
    for idx in range(n_per_category):
        rng = derive_rng(seed, "noise-general", idx)
        white = rng.standard_normal(n_samples)
        spectrum = np.fft.rfft(white)
        freqs = np.maximum(np.fft.rfftfreq(n_samples, 1.0 / sample_rate), 1.0)
        tilt = rng.uniform(-1.5, 0.5)
        shaped = np.fft.irfft(spectrum * freqs**tilt, n=n_samples)
        t = np.arange(n_samples) / sample_rate
        am = 0.7 + 0.3 * np.sin(2.0 * np.pi * rng.uniform(0.1, 1.0) * t)
        shaped *= am
        shaped *= 0.1 / max(np.sqrt(np.mean(shaped**2)), 1e-12)
        path = os.path.join(outdir, f"noise{idx}.wav")
        write_wav(path, Waveform(np.clip(shaped, -0.999, 0.999), sample_rate))
        entries.append((path, "noise"))
    for idx in range(n_per_category):
        rng = derive_rng(seed, "noise-music", idx)
        mix = sum(_harmonic_stack(rng, n_samples, sample_rate)
                  for _ in range(rng.integers(3, 6)))
        mix *= 0.1 / max(np.sqrt(np.mean(mix**2)), 1e-12)
        path = os.path.join(outdir, f"music{idx}.wav")
        write_wav(path, Waveform(np.clip(mix, -0.999, 0.999), sample_rate))
        entries.append((path, "music"))
    write_noise_manifest(os.path.join(outdir, "noise.tsv"), entries)
    return entries
