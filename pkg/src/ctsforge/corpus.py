"""Corpus construction and bookkeeping.

Cuts sessions into speech-duration-uniform segments, reads/writes the
tab-separated segment metadata table, computes per-corpus statistics, and
validates the constraints the released CTS Superset guarantees (duration
range, minimum sessions per speaker, dense speaker numbering).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ctsforge.errors import MetadataError
from ctsforge.seeding import derive_rng

METADATA_FIELDS = (
    "filename",
    "segmentid",
    "subjectid",
    "speakerid",
    "speech_duration",
    "sessionid",
    "corpusid",
    "phoneid",
    "gender",
    "language",
)

CORPUS_IDS = (
    "swb1r2",
    "swb2p1",
    "swb2p2",
    "swb2p3",
    "swbcellp1",
    "swbcellp2",
    "mx3",
    "mx45",
    "mx6",
    "gb1",
)

GENDERS = ("male", "female")

MIN_SPEECH_DURATION = 10.0
MAX_SPEECH_DURATION = 60.0
MIN_SESSIONS_PER_SUBJECT = 3

# Published per-corpus statistics of the CTS Superset release
# (segments, speakers, sessions per source corpus).  Speakers overlap
# across corpora, so the distinct total (6867) is less than the column sum.
SUPERSET_REFERENCE_STATS = {
    "swb1r2": (26_282, 442, 4_757),
    "swb2p1": (33_746, 566, 7_134),
    "swb2p2": (41_982, 649, 8_895),
    "swb2p3": (22_865, 548, 5_187),
    "swbcellp1": (13_496, 216, 2_560),
    "swbcellp2": (20_985, 378, 3_966),
    "mx3": (317_950, 3_033, 37_759),
    "mx45": (40_313, 486, 4_997),
    "mx6": (70_174, 526, 8_727),
    "gb1": (17_967, 167, 2_188),
}
SUPERSET_TOTAL_SEGMENTS = 605_760
SUPERSET_TOTAL_SPEAKERS = 6_867


@dataclass(slots=True)
class SegmentRecord:
    """One row of the segment metadata table."""

    filename: str
    segmentid: str
    subjectid: str
    speakerid: int
    speech_duration: float
    sessionid: str
    corpusid: str
    phoneid: str
    gender: str
    language: str


@dataclass
class CorpusStats:
    """Segment/speaker/session counts per corpus plus overall totals."""

    per_corpus: dict[str, tuple[int, int, int]]
    total_segments: int
    total_speakers: int
    total_males: int
    total_females: int

    def render(self) -> str:
        lines = [f"{'corpusid':<12}{'#segments':>12}{'#speakers':>12}{'#sessions':>12}"]
        for cid in CORPUS_IDS:
            if cid not in self.per_corpus:
                continue
            seg, spk, ses = self.per_corpus[cid]
            lines.append(f"{cid:<12}{seg:>12,}{spk:>12,}{ses:>12,}")
        lines.append(
            f"{'total':<12}{self.total_segments:>12,}{self.total_speakers:>12,}"
            f"  ({self.total_males:,} male / {self.total_females:,} female)"
        )
        return "\n".join(lines)


@dataclass
class SessionTimeline:
    """Speech time marks of one session: sorted, non-overlapping intervals."""

    sessionid: str
    speech_intervals: list[tuple[float, float]]

    def __post_init__(self):
        prev_end = -np.inf
        for start, end in self.speech_intervals:
            if end <= start:
                raise ValueError(f"{self.sessionid}: empty interval ({start}, {end})")
            if start < prev_end:
                raise ValueError(f"{self.sessionid}: intervals overlap or are unsorted")
            prev_end = end

    @property
    def total_speech(self) -> float:
        return float(sum(end - start for start, end in self.speech_intervals))


@dataclass
class SegmenterConfig:
    min_dur: float = MIN_SPEECH_DURATION
    max_dur: float = MAX_SPEECH_DURATION
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 < self.min_dur < self.max_dur:
            raise ValueError(f"need 0 < min_dur < max_dur, got ({self.min_dur}, {self.max_dur})")


@dataclass
class Violation:
    """One validation finding; `tag` is the machine-grepable prefix."""

    tag: str  # MINSESS | DURRANGE | IDMAP
    message: str

    def render(self) -> str:
        return f"{self.tag}\t{self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def is_clean(self) -> bool:
        return not self.violations

    def render(self) -> str:
        if self.is_clean:
            return ""
        return "\n".join(v.render() for v in self.violations) + "\n"


def _parse_row(parts: list[str], lineno: int) -> SegmentRecord:
    if len(parts) != len(METADATA_FIELDS):
        raise MetadataError(
            f"expected {len(METADATA_FIELDS)} columns, got {len(parts)}", line=lineno
        )
    (filename, segmentid, subjectid, speakerid_s, dur_s, sessionid,
     corpusid, phoneid, gender, language) = parts
    try:
        speakerid = int(speakerid_s)
    except ValueError:
        raise MetadataError(f"speakerid is not an integer: {speakerid_s!r}", line=lineno) from None
    if speakerid < 0:
        raise MetadataError(f"speakerid is negative: {speakerid}", line=lineno)
    try:
        duration = float(dur_s)
    except ValueError:
        raise MetadataError(f"speech_duration is not a number: {dur_s!r}", line=lineno) from None
    if not MIN_SPEECH_DURATION <= duration <= MAX_SPEECH_DURATION:
        raise MetadataError(
            f"duration out of range [{MIN_SPEECH_DURATION:g}, {MAX_SPEECH_DURATION:g}]: {duration}",
            line=lineno,
        )
    if corpusid not in CORPUS_IDS:
        raise MetadataError(f"unknown corpusid: {corpusid!r}", line=lineno)
    if gender not in GENDERS:
        raise MetadataError(f"unknown gender value: {gender!r}", line=lineno)
    return SegmentRecord(
        filename=filename,
        segmentid=segmentid,
        subjectid=subjectid,
        speakerid=speakerid,
        speech_duration=duration,
        sessionid=sessionid,
        corpusid=corpusid,
        phoneid=phoneid,
        gender=gender,
        language=language,
    )


def parse_metadata(path) -> list[SegmentRecord]:
    """Read a metadata TSV; raises MetadataError with a line number on bad rows.

    Comment lines starting with '#' are skipped (segmentation seeds are
    recorded that way).  The header must name the ten fields in order.
    """
    records: list[SegmentRecord] = []
    with open(path, encoding="utf-8") as fh:
        header = None
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split("\t")
                if tuple(header) != METADATA_FIELDS:
                    raise MetadataError(
                        f"bad header, expected {list(METADATA_FIELDS)}", line=lineno
                    )
                continue
            records.append(_parse_row(line.split("\t"), lineno))
    if header is None:
        raise MetadataError("missing header row", line=1)
    return records


def write_metadata(path, records: list[SegmentRecord], comments: list[str] | None = None) -> None:
    """Write the metadata TSV (durations at 2 decimal places)."""
    with open(path, "w", encoding="utf-8") as fh:
        for comment in comments or []:
            fh.write(f"# {comment}\n")
        fh.write("\t".join(METADATA_FIELDS) + "\n")
        for r in records:
            fh.write(
                f"{r.filename}\t{r.segmentid}\t{r.subjectid}\t{r.speakerid}\t"
                f"{r.speech_duration:.2f}\t{r.sessionid}\t{r.corpusid}\t"
                f"{r.phoneid}\t{r.gender}\t{r.language}\n"
            )


def assign_speaker_ids(records: list[SegmentRecord]) -> None:
    """Renumber speakerid densely from 0 in subjectid first-appearance order."""
    ids: dict[str, int] = {}
    for r in records:
        if r.subjectid not in ids:
            ids[r.subjectid] = len(ids)
        r.speakerid = ids[r.subjectid]


def compute_stats(records: list[SegmentRecord]) -> CorpusStats:
    """Count segments, distinct speakers and distinct sessions per corpus.

    Totals count distinct subjects over the whole table, so speakers
    present in several corpora are counted once.
    """
    seg_counts: dict[str, int] = {}
    spk_sets: dict[str, set[str]] = {}
    ses_sets: dict[str, set[str]] = {}
    males: set[str] = set()
    females: set[str] = set()
    subjects: set[str] = set()
    for r in records:
        seg_counts[r.corpusid] = seg_counts.get(r.corpusid, 0) + 1
        spk_sets.setdefault(r.corpusid, set()).add(r.subjectid)
        ses_sets.setdefault(r.corpusid, set()).add(r.sessionid)
        subjects.add(r.subjectid)
        (males if r.gender == "male" else females).add(r.subjectid)
    per_corpus = {
        cid: (seg_counts[cid], len(spk_sets[cid]), len(ses_sets[cid])) for cid in seg_counts
    }
    return CorpusStats(
        per_corpus=per_corpus,
        total_segments=len(records),
        total_speakers=len(subjects),
        total_males=len(males),
        total_females=len(females),
    )


def extract_segments(
    timeline: SessionTimeline, cfg: SegmenterConfig, rng: np.random.Generator | None = None
) -> list[tuple[list[tuple[float, float]], float]]:
    """Cut one session into segments with speech durations ~ U[min_dur, max_dur].

    Durations are drawn repeatedly and realized by consuming speech
    intervals greedily from the current position, so a segment may span
    several intervals (its span lists every consumed piece).  When the
    remaining speech is at least min_dur but below the drawn duration the
    final segment takes exactly the remainder; below min_dur the tail is
    discarded.
    """
    if rng is None:
        rng = derive_rng(cfg.rng_seed, "segment", timeline.sessionid)
    segments: list[tuple[list[tuple[float, float]], float]] = []
    intervals = timeline.speech_intervals
    idx = 0
    pos = intervals[0][0] if intervals else 0.0
    remaining = timeline.total_speech
    while remaining >= cfg.min_dur:
        want = float(rng.uniform(cfg.min_dur, cfg.max_dur))
        if want > remaining:
            want = remaining
        span: list[tuple[float, float]] = []
        need = want
        while need > 1e-12:
            start, end = intervals[idx]
            pos = max(pos, start)
            avail = end - pos
            take = min(avail, need)
            if take > 1e-12:
                span.append((pos, pos + take))
                pos += take
                need -= take
            if pos >= end - 1e-12 and need > 1e-12:
                idx += 1
        segments.append((span, want))
        remaining -= want
    return segments


def validate_superset(records: list[SegmentRecord]) -> ValidationReport:
    """Check corpus-level constraints; violations are report entries, not errors.

    MINSESS: subject with fewer than three distinct sessions.
    DURRANGE: speech_duration outside [10, 60].
    IDMAP: speakerid/subjectid mapping not a dense zero-indexed bijection.
    """
    report = ValidationReport()
    sessions: dict[str, set[str]] = {}
    subj_to_ids: dict[str, set[int]] = {}
    id_to_subjs: dict[int, set[str]] = {}
    for i, r in enumerate(records, start=1):
        sessions.setdefault(r.subjectid, set()).add(r.sessionid)
        subj_to_ids.setdefault(r.subjectid, set()).add(r.speakerid)
        id_to_subjs.setdefault(r.speakerid, set()).add(r.subjectid)
        if not MIN_SPEECH_DURATION <= r.speech_duration <= MAX_SPEECH_DURATION:
            report.violations.append(
                Violation(
                    "DURRANGE",
                    f"record={i}\tsegmentid={r.segmentid}\tspeech_duration={r.speech_duration:.2f}",
                )
            )
    for subj in sorted(sessions):
        n = len(sessions[subj])
        if n < MIN_SESSIONS_PER_SUBJECT:
            report.violations.append(Violation("MINSESS", f"subjectid={subj}\tsessions={n}"))
    for subj in sorted(subj_to_ids):
        ids = subj_to_ids[subj]
        if len(ids) > 1:
            report.violations.append(
                Violation(
                    "IDMAP",
                    f"subjectid={subj}\tspeakerids={','.join(map(str, sorted(ids)))}",
                )
            )
    for spk in sorted(id_to_subjs):
        subjs = id_to_subjs[spk]
        if len(subjs) > 1:
            report.violations.append(
                Violation("IDMAP", f"speakerid={spk}\tsubjectids={','.join(sorted(subjs))}")
            )
    if id_to_subjs:
        expected = set(range(len(subj_to_ids)))
        if set(id_to_subjs) != expected:
            seen = ",".join(map(str, sorted(id_to_subjs)))
            report.violations.append(
                Violation("IDMAP", f"speakerids not dense zero-indexed\tseen={seen}")
            )
    return report


def split_sessions(
    records: list[SegmentRecord], eval_sessions: int
) -> tuple[list[SegmentRecord], list[SegmentRecord]]:
    """Hold out each subject's last `eval_sessions` sessions (sorted by sessionid)."""
    by_subj: dict[str, list[str]] = {}
    for r in records:
        sess = by_subj.setdefault(r.subjectid, [])
        if r.sessionid not in sess:
            sess.append(r.sessionid)
    held: set[tuple[str, str]] = set()
    if eval_sessions > 0:
        for subj, sess in by_subj.items():
            for sid in sorted(sess)[max(0, len(sess) - eval_sessions) :]:
                held.add((subj, sid))
    train = [r for r in records if (r.subjectid, r.sessionid) not in held]
    evals = [r for r in records if (r.subjectid, r.sessionid) in held]
    return train, evals


def make_reference_shaped_records() -> list[SegmentRecord]:
    """Synthetic metadata reproducing the published Superset count statistics.

    Per corpus, sessions are dealt round-robin to speakers and segments
    round-robin to sessions, which reproduces every per-corpus cell.  144
    subjects are shared between swb1r2/swb2p1 and mx3 so the distinct
    subject total lands on the published 6867.  Durations cycle a fixed
    pattern inside [10, 60]; genders are assigned per subject (male for
    the first 2885 subjects in first-appearance order).
    """
    overlap_total = sum(n for _, n, _ in SUPERSET_REFERENCE_STATS.values()) - SUPERSET_TOTAL_SPEAKERS
    records: list[SegmentRecord] = []
    subj_serial = 0
    reused: list[str] = []
    for cid in CORPUS_IDS:
        n_seg, n_spk, n_ses = SUPERSET_REFERENCE_STATS[cid]
        subjects = []
        if cid == "mx3":
            subjects.extend(reused[:overlap_total])
        while len(subjects) < n_spk:
            subjects.append(f"s{subj_serial:05d}")
            subj_serial += 1
        if cid == "swb1r2":
            reused.extend(subjects)
        # session i belongs to speaker i % n_spk; segment j to session j % n_ses
        for j in range(n_seg):
            ses = j % n_ses
            subj = subjects[ses % n_spk]
            records.append(
                SegmentRecord(
                    filename=f"data/{subj}/{cid}_{j:06d}.wav",
                    segmentid=f"{cid}_{j:06d}",
                    subjectid=subj,
                    speakerid=0,
                    speech_duration=10.0 + (j % 501) * 0.1,
                    sessionid=f"{cid}_sess{ses:05d}",
                    corpusid=cid,
                    phoneid=f"p{ses % 97:03d}",
                    gender="male",
                    language="english",
                )
            )
    assign_speaker_ids(records)
    n_subjects = max(r.speakerid for r in records) + 1
    males = min(2885, n_subjects)
    for r in records:
        r.gender = "male" if r.speakerid < males else "female"
    return records
