"""Speaker-balanced batch sampling over fixed-length feature chunks.

Each batch holds chunks from distinct speakers.  Speakers are drawn
without replacement from a shuffled pool; when the pool runs dry it is
reshuffled and refilled, so over one pool pass every speaker appears
exactly once.  One epoch makes ceil(total_segments / n_speakers) passes,
which visits roughly every training segment once in expectation.
"""

import numpy as np


def _cut_chunk(feats, chunk_len, rng):
    """A random chunk_len window; segments shorter than the window wrap
    around cyclically instead of being padded with silence."""
    t = feats.shape[0]
    if t >= chunk_len:
        start = int(rng.integers(0, t - chunk_len + 1))
        return np.ascontiguousarray(feats[start : start + chunk_len])
    start = int(rng.integers(0, t))
    idx = (start + np.arange(chunk_len)) % t
    return np.ascontiguousarray(feats[idx])


def sample_epoch(speaker_to_segments, batch_size, chunk_len, rng):
    """Yields (chunks, labels) batches for one epoch.

    Args:
        speaker_to_segments: mapping speakerid -> sequence of (t, f) feature
            arrays (or FeatureMatrix objects), one per segment.
        batch_size: speakers per batch; the final batch of a pool pass may
            be shorter and is emitted rather than discarded.
        chunk_len: frames per chunk.
        rng: numpy Generator driving every draw.

    Yields:
        Tuples (chunks, labels): chunks is (b, chunk_len, f) float64,
        labels is (b,) int64, with all labels in a batch distinct.

    Raises:
        ValueError: fewer speakers than batch_size, or a speaker with no
            segments.
    """
    speakers = sorted(speaker_to_segments)
    if len(speakers) < batch_size:
        raise ValueError(
            f"{len(speakers)} speakers available but batch_size is "
            f"{batch_size}"
        )
    for spk in speakers:
        if len(speaker_to_segments[spk]) == 0:
            raise ValueError(f"speaker {spk} has no segments")
    total_segments = sum(len(v) for v in speaker_to_segments.values())
    n_passes = -(-total_segments // len(speakers))
    speakers = np.asarray(speakers)
    for _ in range(n_passes):
        pool = speakers[rng.permutation(len(speakers))]
        for lo in range(0, len(pool), batch_size):
            batch_speakers = pool[lo : lo + batch_size]
            rows = []
            for spk in batch_speakers:
                segs = speaker_to_segments[int(spk)]
                feats = segs[int(rng.integers(0, len(segs)))]
                values = getattr(feats, "values", feats)
                rows.append(_cut_chunk(np.asarray(values, dtype=np.float64),
                                       chunk_len, rng))
            yield np.stack(rows), batch_speakers.astype(np.int64)
