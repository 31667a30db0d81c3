"""Tests for the synthetic telephony corpus and noise generators."""

import os

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from ctsforge import dsp, synth
from ctsforge.augment import read_noise_manifest
from ctsforge.errors import MetadataError
from ctsforge.seeding import derive_rng


def small_corpus(tmp_path, name="corpus", seed=7):
    outdir = tmp_path / name
    records = synth.generate_synthetic_corpus(
        outdir, n_speakers=3, sessions_per_speaker=2,
        speech_seconds=8.0, seed=seed)
    return outdir, records


def test_corpus_layout_and_fields(tmp_path):
    outdir, records = small_corpus(tmp_path)
    assert len(records) == 6
    assert [r.sessionid for r in records[:2]] == ["spk0000_s00", "spk0000_s01"]
    assert {r.subjectid for r in records} == {"spk0000", "spk0001", "spk0002"}
    assert {r.gender for r in records} == {"male", "female"}
    assert all(r.corpusid == "mx6" and r.language == "eng" for r in records)
    for rec in records:
        assert os.path.exists(rec.path)
        assert os.path.exists(rec.path + ".speech.tsv")
    assert os.path.exists(outdir / "sessions.tsv")


def test_corpus_generation_is_deterministic(tmp_path):
    dir_a, recs_a = small_corpus(tmp_path, "a", seed=11)
    dir_b, recs_b = small_corpus(tmp_path, "b", seed=11)
    for ra, rb in zip(recs_a, recs_b):
        assert os.path.basename(ra.path) == os.path.basename(rb.path)
        assert ra.speech_duration == rb.speech_duration
        wav_a = (dir_a / os.path.basename(ra.path)).read_bytes()
        wav_b = (dir_b / os.path.basename(rb.path)).read_bytes()
        assert wav_a == wav_b
    _, recs_c = small_corpus(tmp_path, "c", seed=12)
    assert recs_c[0].speech_duration != recs_a[0].speech_duration


def test_speech_intervals_are_ordered_and_match_duration(tmp_path):
    _, records = small_corpus(tmp_path)
    for rec in records:
        intervals = synth.read_speech_intervals(rec.path + ".speech.tsv")
        assert intervals
        last_end = 0.0
        for start, end in intervals:
            assert 0.0 <= start < end
            assert start >= last_end
            last_end = end
        total = sum(e - s for s, e in intervals)
        assert total == pytest.approx(rec.speech_duration, abs=0.01)
        # Realized speech time tracks the requested target within one
        # synthesis hop (16 ms) plus the sidecar's 1 ms rounding.
        assert total == pytest.approx(8.0, abs=0.02)


def test_speech_intervals_separate_speech_from_pauses(tmp_path):
    _, records = small_corpus(tmp_path)
    wav = dsp.read_wav(records[0].path)
    intervals = synth.read_speech_intervals(records[0].path + ".speech.tsv")
    inside = np.zeros(wav.samples.size, dtype=bool)
    for start, end in intervals:
        lo = int(start * wav.sample_rate)
        hi = int(end * wav.sample_rate)
        inside[lo:hi] = True
    rms_speech = np.sqrt(np.mean(wav.samples[inside] ** 2))
    rms_pause = np.sqrt(np.mean(wav.samples[~inside] ** 2))
    assert rms_speech > 10.0 * rms_pause


def test_sad_recovers_most_ground_truth_speech(tmp_path):
    _, records = small_corpus(tmp_path)
    spec = dsp.FrameSpec()
    wav = dsp.read_wav(records[0].path)
    marks = dsp.detect_speech(wav, spec=spec)
    intervals = synth.read_speech_intervals(records[0].path + ".speech.tsv")
    shift_s = spec.frame_shift_ms / 1000.0
    centers = (np.arange(marks.size) + 0.5) * shift_s
    truth = np.zeros(marks.size, dtype=bool)
    for start, end in intervals:
        truth |= (centers >= start) & (centers < end)
    recall = np.mean(marks[truth])
    assert recall > 0.8


def test_same_voice_sessions_are_spectrally_closer(tmp_path):
    _, records = small_corpus(tmp_path)

    def session_profile(rec):
        feats = dsp.logmel(dsp.read_wav(rec.path))
        return np.mean(feats.values, axis=0)

    def cosine(a, b):
        return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))

    by_speaker = {}
    for rec in records:
        by_speaker.setdefault(rec.subjectid, []).append(session_profile(rec))
    same = [cosine(*profiles) for profiles in by_speaker.values()]
    speakers = sorted(by_speaker)
    cross = [cosine(by_speaker[a][0], by_speaker[b][0])
             for a in speakers for b in speakers if a < b]
    assert min(same) > max(cross)


def test_sessions_manifest_round_trip(tmp_path):
    outdir, records = small_corpus(tmp_path)
    loaded = synth.read_sessions_manifest(outdir / "sessions.tsv")
    assert len(loaded) == len(records)
    for rec, back in zip(records, loaded):
        assert back.path == rec.path
        assert back.subjectid == rec.subjectid
        assert back.sessionid == rec.sessionid
        assert back.speech_duration == pytest.approx(rec.speech_duration,
                                                     abs=0.005)


def test_sessions_manifest_rejects_bad_header(tmp_path):
    path = tmp_path / "sessions.tsv"
    path.write_text("path\tsubjectid\n")
    with pytest.raises(MetadataError, match="header"):
        synth.read_sessions_manifest(path)


def test_speech_interval_sidecar_errors(tmp_path):
    path = tmp_path / "bad.speech.tsv"
    path.write_text("0.000\t1.000\n2.500\n")
    with pytest.raises(MetadataError, match="line 2"):
        synth.read_speech_intervals(path)


def test_rejects_degenerate_corpus_requests(tmp_path):
    with pytest.raises(ValueError, match="2 speakers"):
        synth.generate_synthetic_corpus(tmp_path / "x", 1, 2, 8.0, seed=0)
    with pytest.raises(ValueError, match="session"):
        synth.generate_synthetic_corpus(tmp_path / "x", 2, 0, 8.0, seed=0)
    voice = synth.draw_voice(derive_rng(0, "voice"))
    with pytest.raises(ValueError, match="positive"):
        synth.synth_session(voice, 0.0, derive_rng(0, "session"))


def test_speech_seconds_sequence_cycles_over_sessions(tmp_path):
    records = synth.generate_synthetic_corpus(
        tmp_path / "mix", n_speakers=2, sessions_per_speaker=3,
        speech_seconds=[6.0, 12.0], seed=3)
    durations = [r.speech_duration for r in records[:3]]
    assert durations[0] == pytest.approx(6.0, abs=0.02)
    assert durations[1] == pytest.approx(12.0, abs=0.02)
    assert durations[2] == pytest.approx(6.0, abs=0.02)


def test_noise_corpus_categories_and_manifest(tmp_path):
    outdir = tmp_path / "noise"
    entries = synth.generate_noise_corpus(outdir, seed=5, n_per_category=2,
                                          duration_s=3.0)
    assert len(entries) == 6
    categories = [cat for _, cat in entries]
    assert categories.count("babble") == 2
    assert categories.count("noise") == 2
    assert categories.count("music") == 2
    loaded = read_noise_manifest(outdir / "noise.tsv")
    assert [os.path.basename(p) for p, _ in loaded] == \
        [os.path.basename(p) for p, _ in entries]
    for path, _ in entries:
        wav = dsp.read_wav(path)
        assert wav.samples.size == 3 * wav.sample_rate
        assert np.sqrt(np.mean(wav.samples ** 2)) > 1e-4


def test_noise_corpus_is_deterministic(tmp_path):
    a = synth.generate_noise_corpus(tmp_path / "na", seed=9,
                                    n_per_category=1, duration_s=2.0)
    b = synth.generate_noise_corpus(tmp_path / "nb", seed=9,
                                    n_per_category=1, duration_s=2.0)
    for (pa, _), (pb, _) in zip(a, b):
        assert_array_equal(dsp.read_wav(pa).samples, dsp.read_wav(pb).samples)
