"""Additive-noise and spectro-temporal-masking augmentation.

Noise mixing works on waveforms at a controlled signal-to-noise ratio;
masking works directly on feature matrices (zeroing contiguous bands of
mel bins or frames).  Both are pure functions of their inputs and the
supplied random generator, so augmented copies are reproducible from a
seed.
"""

import math
from dataclasses import dataclass

import numpy as np

from ctsforge.dsp import FeatureMatrix, Waveform
from ctsforge.errors import MetadataError

NOISE_CATEGORIES = ("babble", "noise", "music")

# Conventional per-copy SNR grid for telephony noise augmentation.
SNR_CHOICES_DB = (0.0, 5.0, 10.0, 15.0)


@dataclass(frozen=True, slots=True)
class NoiseSample:
    """A degradation source: a waveform plus its broad category."""

    waveform: Waveform
    category: str

    def __post_init__(self):
        if self.category not in NOISE_CATEGORIES:
            raise ValueError(
                f"unknown noise category {self.category!r}; "
                f"expected one of {NOISE_CATEGORIES}"
            )


@dataclass(frozen=True, slots=True)
class MaskPolicy:
    """How many spectro-temporal masks to draw and how wide they may be.

    Mask widths are drawn uniformly from [0, max_width]; a max width is
    clamped to the matrix dimension it applies to, so a policy is valid
    for any input size.  The two stock policies are placeholders, not
    ground truth; override the numbers via configuration if needed.
    """

    name: str
    n_freq_masks: int
    max_freq_width: int
    n_time_masks: int
    max_time_width: int

    def __post_init__(self):
        for label, value in (
            ("n_freq_masks", self.n_freq_masks),
            ("max_freq_width", self.max_freq_width),
            ("n_time_masks", self.n_time_masks),
            ("max_time_width", self.max_time_width),
        ):
            if value < 0:
                raise ValueError(f"{label} must be non-negative, got {value}")


MILD_MASK = MaskPolicy("mild", n_freq_masks=1, max_freq_width=8,
                       n_time_masks=1, max_time_width=10)
STRONG_MASK = MaskPolicy("strong", n_freq_masks=2, max_freq_width=16,
                         n_time_masks=2, max_time_width=20)

MASK_POLICIES = {"mild": MILD_MASK, "strong": STRONG_MASK}


def _tile_or_crop(noise, n_samples, rng):
    """Return exactly n_samples of noise, tiling if short, cropping if long.

    A random crop offset is drawn when the noise is longer than needed so
    different copies do not all reuse the same stretch.
    """
    if noise.shape[0] < n_samples:
        reps = -(-n_samples // noise.shape[0])
        noise = np.tile(noise, reps)
    if noise.shape[0] > n_samples:
        start = 0 if rng is None else int(rng.integers(0, noise.shape[0] - n_samples + 1))
        noise = noise[start : start + n_samples]
    return noise


def mix_noise(speech, noise, snr_db, rng=None):
    """Adds a noise sample to speech at a target signal-to-noise ratio.

    The noise is tiled or cropped to the speech length, then scaled by
    g = sqrt(P_speech / (P_noise * 10^(snr_db/10))) where both powers are
    mean squares over the mixed extent, so the output satisfies
    10*log10(P_speech / P_scaled_noise) = snr_db before clipping.  The
    mixture is clipped to [-1, 1].

    Args:
        speech: clean waveform.
        noise: a NoiseSample (its waveform must share the speech sample rate).
        snr_db: target ratio in dB; math.inf means "clean" and returns the
            speech unchanged.
        rng: numpy Generator used only to pick a crop offset in long noise.

    Returns:
        Tuple (mixed Waveform, clipped_fraction), where clipped_fraction is
        the fraction of output samples that hit the clip boundary.

    Raises:
        ValueError: zero-energy speech or noise (the ratio is undefined),
            or mismatched sample rates.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return speech, 0.0
    if noise.waveform.sample_rate != speech.sample_rate:
        raise ValueError(
            f"noise sample rate {noise.waveform.sample_rate} != "
            f"speech sample rate {speech.sample_rate}"
        )
    sig = speech.samples
    nse = _tile_or_crop(noise.waveform.samples, sig.shape[0], rng)
    p_speech = float(np.mean(sig * sig))
    p_noise = float(np.mean(nse * nse))
    if p_speech <= 0.0:
        raise ValueError("speech has zero energy; SNR is undefined")
    if p_noise <= 0.0:
        raise ValueError("noise has zero energy; cannot scale to target SNR")
    gain = math.sqrt(p_speech / (p_noise * 10.0 ** (snr_db / 10.0)))
    mixed = sig + gain * nse
    clipped = np.count_nonzero(np.abs(mixed) > 1.0)
    np.clip(mixed, -1.0, 1.0, out=mixed)
    return Waveform(mixed, speech.sample_rate), clipped / mixed.shape[0]


def spec_mask(feats, policy, rng):
    """Zeroes random contiguous bands of frames and mel bins.

    Frequency masks first, then time masks; each mask draws a width
    uniformly from [0, max_width] (max clamped to the matrix dimension)
    and then a start position, so a fixed seed replays the same mask set.
    Cells outside the masks are untouched.

    Args:
        feats: input FeatureMatrix (not modified).
        policy: MaskPolicy giving counts and maximum widths.
        rng: numpy Generator supplying the draws.

    Returns:
        A new FeatureMatrix with masked cells set to zero.
    """
    values = feats.values.copy()
    t, f = values.shape
    for _ in range(policy.n_freq_masks):
        max_w = min(policy.max_freq_width, f)
        width = int(rng.integers(0, max_w + 1))
        start = int(rng.integers(0, f - width + 1))
        values[:, start : start + width] = 0.0
    for _ in range(policy.n_time_masks):
        max_w = min(policy.max_time_width, t)
        width = int(rng.integers(0, max_w + 1))
        start = int(rng.integers(0, t - width + 1))
        values[start : start + width, :] = 0.0
    return FeatureMatrix(values, feats.frame_shift_ms)


def write_noise_manifest(path, entries):
    """Writes a noise manifest: one `path<TAB>category` line per sample."""
    lines = ["path\tcategory"]
    for wav_path, category in entries:
        if category not in NOISE_CATEGORIES:
            raise ValueError(f"unknown noise category {category!r}")
        lines.append(f"{wav_path}\t{category}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_noise_manifest(path):
    """Reads a noise manifest written by :func:`write_noise_manifest`.

    Returns:
        List of (path, category) tuples in file order.

    Raises:
        MetadataError: malformed header, wrong column count, or unknown
            category, with the offending line number.
    """
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header.split("\t") != ["path", "category"]:
            raise MetadataError(f"bad noise manifest header {header!r}", line=1)
        for lineno, raw in enumerate(fh, start=2):
            raw = raw.rstrip("\n")
            if not raw:
                continue
            parts = raw.split("\t")
            if len(parts) != 2:
                raise MetadataError(
                    f"expected 2 columns, got {len(parts)}", line=lineno
                )
            wav_path, category = parts
            if category not in NOISE_CATEGORIES:
                raise MetadataError(
                    f"unknown noise category {category!r}", line=lineno
                )
            entries.append((wav_path, category))
    return entries
