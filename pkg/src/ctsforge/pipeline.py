"""Stage implementations behind the command-line interface.

Every stage reads and writes files under one working directory, so the
whole flow is:

    synth -> segment -> featurize -> augment -> train -> extract
          -> train-backend -> trials -> score -> evaluate

Stages are deterministic given the configuration (which carries the base
seed): rerunning any stage on the same inputs reproduces its outputs
byte for byte.  Each stage also writes ``logs/<stage>.log`` holding the
resolved configuration and the derived seeds it consumed, so a run can
be replayed from its log alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from ctsforge import corpus, dsp, synth
from ctsforge.augment import (
    MASK_POLICIES,
    NoiseSample,
    mix_noise,
    read_noise_manifest,
    spec_mask,
)
from ctsforge.backend import (
    LabeledEmbeddingSet,
    PldaScorer,
    apply_backend,
    fit_center_whiten,
    fit_lda,
    fit_plda_em,
)
from ctsforge.backend.storage import (
    read_gaussianizer,
    read_lda,
    read_plda,
    write_gaussianizer,
    write_lda,
    write_plda,
)
from ctsforge.config import PipelineConfig, dump_config
from ctsforge.errors import CtsforgeError
from ctsforge.metrics import (
    CostParams,
    ScoreSet,
    TrialKey,
    evaluate,
    read_scores,
    read_trial_key,
    render_report,
    report_tsv,
    write_scores,
    write_trial_key,
)
from ctsforge.nnet import (
    AmSoftmaxParams,
    EtdnnModel,
    TrainState,
    standard_config,
    train,
)
from ctsforge.nnet.model import extract_embedding, read_model, write_model
from ctsforge.seeding import derive_entropy, derive_rng


class StageError(CtsforgeError):
    """A stage could not run: missing inputs or violated preconditions."""


# ---------------------------------------------------------------------------
# Working-directory layout and the segment manifest


@dataclass(frozen=True)
class RunPaths:
    """All artifact locations derived from one working directory."""

    workdir: Path

    @property
    def corpus_dir(self) -> Path:
        return self.workdir / "corpus"

    @property
    def sessions_manifest(self) -> Path:
        return self.corpus_dir / "sessions.tsv"

    @property
    def noise_dir(self) -> Path:
        return self.workdir / "noise"

    @property
    def noise_manifest(self) -> Path:
        return self.noise_dir / "noise.tsv"

    @property
    def segments_dir(self) -> Path:
        return self.workdir / "segments"

    @property
    def metadata(self) -> Path:
        return self.segments_dir / "metadata.tsv"

    @property
    def features_dir(self) -> Path:
        return self.workdir / "features"

    @property
    def feature_manifest(self) -> Path:
        return self.features_dir / "manifest.tsv"

    @property
    def model_file(self) -> Path:
        return self.workdir / "model.etdn"

    @property
    def training_log(self) -> Path:
        return self.workdir / "training_log.tsv"

    @property
    def embeddings_file(self) -> Path:
        return self.workdir / "embeddings" / "embeddings.fmat"

    @property
    def embeddings_sidecar(self) -> Path:
        return self.workdir / "embeddings" / "embeddings.tsv"

    @property
    def backend_dir(self) -> Path:
        return self.workdir / "backend"

    @property
    def trial_key_file(self) -> Path:
        return self.workdir / "trials" / "trials.tsv"

    @property
    def scores_dir(self) -> Path:
        return self.workdir / "scores"

    @property
    def report_txt(self) -> Path:
        return self.workdir / "report.txt"

    @property
    def report_tsv(self) -> Path:
        return self.workdir / "report.tsv"

    @property
    def logs_dir(self) -> Path:
        return self.workdir / "logs"


MANIFEST_FIELDS = ("segmentid", "path", "speakerid", "subjectid", "sessionid", "split", "origin")


@dataclass
class ManifestEntry:
    """One feature (or audio) artifact with the labels later stages need."""

    segmentid: str
    path: str
    speakerid: int
    subjectid: str
    sessionid: str
    split: str  # train | eval
    origin: str  # original | augmented


def write_manifest(path, entries: list[ManifestEntry]) -> None:
    seen = set()
    for e in entries:
        if e.segmentid in seen:
            raise StageError(f"duplicate segmentid in manifest: {e.segmentid}")
        seen.add(e.segmentid)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(MANIFEST_FIELDS) + "\n")
        for e in entries:
            fh.write(
                f"{e.segmentid}\t{e.path}\t{e.speakerid}\t{e.subjectid}\t"
                f"{e.sessionid}\t{e.split}\t{e.origin}\n"
            )


def read_manifest(path) -> list[ManifestEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if tuple(header) != MANIFEST_FIELDS:
            raise StageError(f"{path}: bad manifest header {header}")
        for lineno, raw in enumerate(fh, start=2):
            raw = raw.rstrip("\n")
            if not raw:
                continue
            parts = raw.split("\t")
            if len(parts) != len(MANIFEST_FIELDS):
                raise StageError(f"{path}:{lineno}: expected {len(MANIFEST_FIELDS)} columns")
            entries.append(
                ManifestEntry(
                    segmentid=parts[0],
                    path=parts[1],
                    speakerid=int(parts[2]),
                    subjectid=parts[3],
                    sessionid=parts[4],
                    split=parts[5],
                    origin=parts[6],
                )
            )
    return entries


def _write_stage_log(paths: RunPaths, stage: str, cfg: PipelineConfig, lines: list[str]) -> None:
    paths.logs_dir.mkdir(parents=True, exist_ok=True)
    body = [f"stage: {stage}", f"base_seed: {cfg.seed}", *lines, "", "resolved config:", dump_config(cfg)]
    (paths.logs_dir / f"{stage}.log").write_text("\n".join(body))


def _require(path: Path, hint: str) -> None:
    if not path.exists():
        raise StageError(f"missing input {path} (run `{hint}` first)")


def _frame_spec(cfg: PipelineConfig) -> dsp.FrameSpec:
    f = cfg.features
    return dsp.FrameSpec(
        frame_len_ms=f.frame_ms,
        frame_shift_ms=f.hop_ms,
        n_mels=f.n_mels,
        fmin=f.fmin_hz,
        fmax=f.fmax_hz,
        preemphasis=f.preemphasis,
    )


def _sad_params(cfg: PipelineConfig) -> dsp.SadParams:
    s = cfg.features.sad
    return dsp.SadParams(
        margin_db=s.margin_db,
        absolute_floor_db=s.absolute_floor_db,
        peak_headroom_db=s.headroom_db,
        smooth_frames=s.smooth_frames,
    )


# ---------------------------------------------------------------------------
# synth


def run_synth(cfg: PipelineConfig, jobs: int = 1) -> None:
    """Generate the synthetic session corpus and the noise corpus."""
    paths = RunPaths(Path(cfg.workdir))
    syn = cfg.synth
    speech_plan = [syn.train_speech_seconds] * syn.train_sessions + [
        syn.eval_speech_seconds
    ] * (syn.sessions_per_speaker - syn.train_sessions)
    records = synth.generate_synthetic_corpus(
        paths.corpus_dir,
        n_speakers=syn.n_speakers,
        sessions_per_speaker=syn.sessions_per_speaker,
        speech_seconds=speech_plan,
        seed=cfg.seed,
    )
    noise_entries = synth.generate_noise_corpus(paths.noise_dir, seed=cfg.seed)
    _write_stage_log(
        paths,
        "synth",
        cfg,
        [
            f"sessions written: {len(records)}",
            f"noise files written: {len(noise_entries)}",
            f"speech seconds per session index: {speech_plan}",
        ],
    )


# ---------------------------------------------------------------------------
# segment


def run_segment(cfg: PipelineConfig, jobs: int = 1) -> None:
    """Cut sessions into segments with speech durations in the configured range."""
    paths = RunPaths(Path(cfg.workdir))
    _require(paths.sessions_manifest, "ctsforge synth")
    sessions = synth.read_sessions_manifest(paths.sessions_manifest)
    paths.segments_dir.mkdir(parents=True, exist_ok=True)
    seg_cfg = corpus.SegmenterConfig(
        min_dur=cfg.segmenter.min_duration_s,
        max_dur=cfg.segmenter.max_duration_s,
        rng_seed=cfg.seed,
    )
    records: list[corpus.SegmentRecord] = []
    n_wavs = 0
    for sess in sessions:
        wav = dsp.read_wav(sess.path, expected_rate=cfg.features.sample_rate)
        intervals = synth.read_speech_intervals(sess.path + ".speech.tsv")
        timeline = corpus.SessionTimeline(sessionid=sess.sessionid, speech_intervals=intervals)
        rng = derive_rng(cfg.seed, "segment", sess.subjectid, sess.sessionid)
        fs = wav.sample_rate
        for k, (span, duration) in enumerate(corpus.extract_segments(timeline, seg_cfg, rng)):
            segmentid = f"{sess.sessionid}_c{k:03d}"
            pieces = [
                wav.samples[int(round(a * fs)) : int(round(b * fs))] for a, b in span
            ]
            out_path = paths.segments_dir / f"{segmentid}.wav"
            dsp.write_wav(out_path, dsp.Waveform(np.concatenate(pieces), fs))
            n_wavs += 1
            records.append(
                corpus.SegmentRecord(
                    filename=str(out_path),
                    segmentid=segmentid,
                    subjectid=sess.subjectid,
                    speakerid=0,
                    speech_duration=duration,
                    sessionid=sess.sessionid,
                    corpusid=sess.corpusid,
                    phoneid=sess.phoneid,
                    gender=sess.gender,
                    language=sess.language,
                )
            )
    corpus.assign_speaker_ids(records)
    corpus.write_metadata(paths.metadata, records)
    _write_stage_log(paths, "segment", cfg, [f"segments written: {n_wavs}"])


# ---------------------------------------------------------------------------
# featurize

_WORKER_CTX: dict = {}


def _featurize_init(cfg: PipelineConfig) -> None:
    _WORKER_CTX["cfg"] = cfg


def _featurize_one(task: tuple[str, str, str]) -> int:
    """Compute one segment's features; returns the surviving frame count."""
    wav_path, fmat_path, sad_path = task
    cfg: PipelineConfig = _WORKER_CTX["cfg"]
    wav = dsp.read_wav(wav_path, expected_rate=cfg.features.sample_rate)
    feats = dsp.logmel(wav, _frame_spec(cfg))
    marks = dsp.detect_speech(wav, _sad_params(cfg), _frame_spec(cfg))
    if cfg.features.cms_after_sad:
        feats = dsp.apply_cms(dsp.drop_nonspeech(feats, marks), cfg.features.cms_window_s)
    else:
        feats = dsp.drop_nonspeech(dsp.apply_cms(feats, cfg.features.cms_window_s), marks)
    dsp.write_fmat(fmat_path, feats.values.astype(np.float32))
    dsp.write_sad_marks(sad_path, marks)
    return feats.n_frames


def _map_tasks(fn, tasks, init, init_arg, jobs: int):
    """Ordered map, serial or via a worker pool (per-item parallel stages)."""
    if jobs <= 1 or len(tasks) < 2:
        init(init_arg)
        return [fn(t) for t in tasks]
    with Pool(processes=jobs, initializer=init, initargs=(init_arg,)) as pool:
        return pool.map(fn, tasks)


def _segment_split(cfg: PipelineConfig, records: list[corpus.SegmentRecord]) -> dict[str, str]:
    """segmentid -> train|eval, holding out each subject's last sessions."""
    n_eval = cfg.synth.sessions_per_speaker - cfg.synth.train_sessions
    train_recs, eval_recs = corpus.split_sessions(records, n_eval)
    split = {r.segmentid: "train" for r in train_recs}
    split.update({r.segmentid: "eval" for r in eval_recs})
    return split


def run_featurize(cfg: PipelineConfig, jobs: int = 1) -> None:
    """Log-mel features with SAD frame dropping and sliding-mean normalization."""
    paths = RunPaths(Path(cfg.workdir))
    _require(paths.metadata, "ctsforge segment")
    records = corpus.parse_metadata(paths.metadata)
    paths.features_dir.mkdir(parents=True, exist_ok=True)
    split = _segment_split(cfg, records)
    tasks, entries = [], []
    for r in records:
        fmat_path = paths.features_dir / f"{r.segmentid}.fmat"
        sad_path = paths.features_dir / f"{r.segmentid}.sad"
        tasks.append((r.filename, str(fmat_path), str(sad_path)))
        entries.append(
            ManifestEntry(
                segmentid=r.segmentid,
                path=str(fmat_path),
                speakerid=r.speakerid,
                subjectid=r.subjectid,
                sessionid=r.sessionid,
                split=split[r.segmentid],
                origin="original",
            )
        )
    frame_counts = _map_tasks(_featurize_one, tasks, _featurize_init, cfg, jobs)
    write_manifest(paths.feature_manifest, entries)
    _write_stage_log(
        paths,
        "featurize",
        cfg,
        [
            f"segments featurized: {len(entries)}",
            f"speech frames total: {int(np.sum(frame_counts))}",
        ],
    )


# ---------------------------------------------------------------------------
# augment


def run_augment(cfg: PipelineConfig, jobs: int = 1) -> None:
    """Write noise-mixed copies of train segments plus their features.

    Each copy picks a noise file and an SNR from the configured choices
    using a stream derived from (seed, segmentid, copy index); the file
    name records the category and derived seed, so copies are traceable
    and reruns are identical.  Mask augmentation is not applied here; it
    happens on the fly during training.
    """
    paths = RunPaths(Path(cfg.workdir))
    _require(paths.feature_manifest, "ctsforge featurize")
    _require(paths.noise_manifest, "ctsforge synth")
    entries = read_manifest(paths.feature_manifest)
    noise_entries = read_noise_manifest(paths.noise_manifest)
    if not noise_entries:
        raise StageError("noise manifest is empty")
    aug_dir = paths.segments_dir / "augmented"
    n_copies = cfg.augment.noise_copies
    # Rebuild augmented rows from scratch so rerunning the stage is
    # idempotent instead of stacking duplicates.
    new_entries = [e for e in entries if e.origin == "original"]
    n_written = 0
    if n_copies > 0:
        aug_dir.mkdir(parents=True, exist_ok=True)
        snrs = cfg.augment.snr_choices_db
        for e in entries:
            if e.split != "train" or e.origin != "original":
                continue
            wav_path = paths.segments_dir / f"{e.segmentid}.wav"
            speech = dsp.read_wav(wav_path, expected_rate=cfg.features.sample_rate)
            for copy in range(n_copies):
                seed_word = derive_entropy(cfg.seed, "augment", e.segmentid, copy)[0]
                rng = derive_rng(cfg.seed, "augment", e.segmentid, copy)
                noise_path, category = noise_entries[int(rng.integers(len(noise_entries)))]
                snr_db = float(snrs[int(rng.integers(len(snrs)))])
                noise = NoiseSample(
                    dsp.read_wav(noise_path, expected_rate=cfg.features.sample_rate),
                    category,
                )
                mixed, _clipped = mix_noise(speech, noise, snr_db, rng)
                aug_id = f"{e.segmentid}__{category}__{seed_word}"
                aug_wav = aug_dir / f"{aug_id}.wav"
                dsp.write_wav(aug_wav, mixed)
                fmat_path = paths.features_dir / f"{aug_id}.fmat"
                sad_path = paths.features_dir / f"{aug_id}.sad"
                _featurize_init(cfg)
                _featurize_one((str(aug_wav), str(fmat_path), str(sad_path)))
                n_written += 1
                new_entries.append(
                    ManifestEntry(
                        segmentid=aug_id,
                        path=str(fmat_path),
                        speakerid=e.speakerid,
                        subjectid=e.subjectid,
                        sessionid=e.sessionid,
                        split="train",
                        origin="augmented",
                    )
                )
    write_manifest(paths.feature_manifest, new_entries)
    _write_stage_log(
        paths,
        "augment",
        cfg,
        [
            f"noise copies per segment: {n_copies}",
            f"augmented segments written: {n_written}",
        ],
    )


# ---------------------------------------------------------------------------
# train


def _network_config(cfg: PipelineConfig, n_speakers: int):
    n = cfg.network
    return standard_config(
        n_speakers,
        feat_dim=cfg.features.n_mels,
        channels=n.channels,
        pool_channels=n.pool_channels,
        embed_dim=n.embed_dim,
    )


def _mask_batch_fn(cfg: PipelineConfig):
    if cfg.augment.mask_policy == "none":
        return None
    policy = MASK_POLICIES[cfg.augment.mask_policy]

    def mask_batch(chunks: np.ndarray, rng) -> np.ndarray:
        masked = np.empty_like(chunks)
        for i in range(chunks.shape[0]):
            fm = dsp.FeatureMatrix(chunks[i], cfg.features.hop_ms)
            masked[i] = spec_mask(fm, policy, rng).values
        return masked

    return mask_batch


def run_train(cfg: PipelineConfig, jobs: int = 1) -> None:
    """Train the embedding extractor on the train split (originals + copies)."""
    paths = RunPaths(Path(cfg.workdir))
    _require(paths.feature_manifest, "ctsforge featurize")
    entries = [e for e in read_manifest(paths.feature_manifest) if e.split == "train"]
    if not entries:
        raise StageError("no train-split entries in the feature manifest")
    speakers = sorted({e.speakerid for e in entries})
    if speakers != list(range(len(speakers))):
        raise StageError("train speakerids are not dense from 0; rerun `ctsforge segment`")
    speaker_to_segments: dict[int, list[np.ndarray]] = {s: [] for s in speakers}
    min_frames = cfg.training.chunk_len
    n_skipped = 0
    for e in entries:
        feats = dsp.read_fmat(e.path)
        if feats.shape[0] < min_frames // 2:
            # A segment far shorter than the chunk would be mostly cyclic
            # padding; leave it to extraction, where full length is used.
            n_skipped += 1
            continue
        speaker_to_segments[e.speakerid].append(feats)
    empty = [s for s, segs in speaker_to_segments.items() if not segs]
    if empty:
        raise StageError(f"speakers with no usable train segments: {empty[:5]}")
    model = EtdnnModel.init(
        _network_config(cfg, len(speakers)), derive_rng(cfg.seed, "init")
    )
    t = cfg.training
    state = TrainState.for_params(
        model.params, base_lr=t.base_lr, momentum=t.momentum, batch_size=t.batch_size
    )
    history = train(
        model,
        state,
        speaker_to_segments,
        n_epochs=t.n_epochs,
        seed=cfg.seed,
        loss_params=AmSoftmaxParams(margin=t.margin, scale=t.scale),
        chunk_len=t.chunk_len,
        log_path=paths.training_log,
        augment_fn=_mask_batch_fn(cfg),
    )
    write_model(paths.model_file, model)
    final = history[-1]
    _write_stage_log(
        paths,
        "train",
        cfg,
        [
            f"speakers: {len(speakers)}",
            f"train segments used: {sum(len(v) for v in speaker_to_segments.values())}"
            f" (skipped {n_skipped} short)",
            f"steps: {len(history)}",
            f"final step loss: {final[3]:.6f} accuracy: {final[4]:.4f}",
        ],
    )


# ---------------------------------------------------------------------------
# extract


def _extract_init(model_path: str) -> None:
    _WORKER_CTX["model"] = read_model(model_path)


def _extract_one(fmat_path: str) -> np.ndarray:
    return extract_embedding(_WORKER_CTX["model"], dsp.read_fmat(fmat_path))


def run_extract(cfg: PipelineConfig, jobs: int = 1) -> None:
    """Embed every original segment (train and eval splits)."""
    paths = RunPaths(Path(cfg.workdir))
    _require(paths.feature_manifest, "ctsforge featurize")
    _require(paths.model_file, "ctsforge train")
    entries = [e for e in read_manifest(paths.feature_manifest) if e.origin == "original"]
    paths.embeddings_file.parent.mkdir(parents=True, exist_ok=True)
    vecs = _map_tasks(
        _extract_one, [e.path for e in entries], _extract_init, str(paths.model_file), jobs
    )
    matrix = np.vstack(vecs).astype(np.float32)
    dsp.write_fmat(paths.embeddings_file, matrix)
    with open(paths.embeddings_sidecar, "w", encoding="utf-8") as fh:
        fh.write("segmentid\trow\n")
        for row, e in enumerate(entries):
            fh.write(f"{e.segmentid}\t{row}\n")
    _write_stage_log(
        paths,
        "extract",
        cfg,
        [f"embeddings: {matrix.shape[0]} x {matrix.shape[1]}"],
    )


def _load_embeddings(paths: RunPaths) -> tuple[np.ndarray, dict[str, int]]:
    matrix = dsp.read_fmat(paths.embeddings_file).astype(np.float64)
    rows: dict[str, int] = {}
    with open(paths.embeddings_sidecar, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != ["segmentid", "row"]:
            raise StageError(f"bad embeddings sidecar header {header}")
        for raw in fh:
            raw = raw.rstrip("\n")
            if not raw:
                continue
            segmentid, row = raw.split("\t")
            rows[segmentid] = int(row)
    return matrix, rows


# ---------------------------------------------------------------------------
# train-backend


def run_train_backend(cfg: PipelineConfig, jobs: int = 1) -> None:
    """Fit center/whiten, LDA, and PLDA on train-split original embeddings."""
    paths = RunPaths(Path(cfg.workdir))
    _require(paths.embeddings_file, "ctsforge extract")
    matrix, rows = _load_embeddings(paths)
    entries = {e.segmentid: e for e in read_manifest(paths.feature_manifest)}
    train_ids = [
        sid
        for sid in rows
        if entries[sid].split == "train" and entries[sid].origin == "original"
    ]
    if not train_ids:
        raise StageError("no train-split embeddings to fit the backend on")
    x = matrix[[rows[sid] for sid in train_ids]]
    labels = np.array([entries[sid].speakerid for sid in train_ids])
    gauss = fit_center_whiten(x)
    x_ln = apply_backend(gauss, None, x)
    n_classes = len(set(labels.tolist()))
    d_out = min(cfg.backend.lda_dim, x.shape[1], n_classes - 1)
    lda = fit_lda(LabeledEmbeddingSet(x_ln, labels), d_out)
    x_lda = lda.transform(x_ln)
    plda, llhs = fit_plda_em(
        LabeledEmbeddingSet(x_lda, labels), n_iters=cfg.backend.plda_iters
    )
    paths.backend_dir.mkdir(parents=True, exist_ok=True)
    write_gaussianizer(paths.backend_dir / "gauss.bin", gauss)
    write_lda(paths.backend_dir / "lda.bin", lda)
    write_plda(paths.backend_dir / "plda.bin", plda)
    _write_stage_log(
        paths,
        "train-backend",
        cfg,
        [
            f"backend train vectors: {x.shape[0]} x {x.shape[1]}",
            f"lda output dim: {d_out}",
            f"plda marginal log-likelihood: first {llhs[0]:.4f} last {llhs[-1]:.4f}",
        ],
    )


# ---------------------------------------------------------------------------
# trials


def run_trials(cfg: PipelineConfig, jobs: int = 1) -> None:
    """Build the eval trial list.

    Targets: every same-speaker pair from different sessions in the eval
    split.  Nontargets: a seeded sample of different-speaker pairs,
    nontarget_ratio per target (all of them if fewer exist).
    """
    paths = RunPaths(Path(cfg.workdir))
    _require(paths.feature_manifest, "ctsforge featurize")
    evals = [
        e
        for e in read_manifest(paths.feature_manifest)
        if e.split == "eval" and e.origin == "original"
    ]
    if len(evals) < 2:
        raise StageError("need at least two eval segments to form trials")
    targets, nontargets = [], []
    for i in range(len(evals)):
        for j in range(i + 1, len(evals)):
            a, b = evals[i], evals[j]
            if a.speakerid == b.speakerid:
                if a.sessionid != b.sessionid:
                    targets.append((a.segmentid, b.segmentid))
            else:
                nontargets.append((a.segmentid, b.segmentid))
    if not targets:
        raise StageError("no cross-session same-speaker eval pairs; need >= 2 eval sessions")
    rng = derive_rng(cfg.seed, "trials")
    want = min(len(nontargets), cfg.trials.nontarget_ratio * len(targets))
    picked = sorted(rng.choice(len(nontargets), size=want, replace=False).tolist())
    trials = [(e, t, True) for e, t in targets]
    trials += [(*nontargets[k], False) for k in picked]
    key = TrialKey(trials=tuple(trials))
    paths.trial_key_file.parent.mkdir(parents=True, exist_ok=True)
    write_trial_key(paths.trial_key_file, key)
    _write_stage_log(
        paths,
        "trials",
        cfg,
        [f"targets: {len(targets)}", f"nontargets: {want} of {len(nontargets)}"],
    )


# ---------------------------------------------------------------------------
# score


def run_score(cfg: PipelineConfig, jobs: int = 1) -> None:
    """Score the trial list with the cosine and PLDA backends."""
    paths = RunPaths(Path(cfg.workdir))
    _require(paths.embeddings_file, "ctsforge extract")
    _require(paths.backend_dir / "plda.bin", "ctsforge train-backend")
    _require(paths.trial_key_file, "ctsforge trials")
    matrix, rows = _load_embeddings(paths)
    gauss = read_gaussianizer(paths.backend_dir / "gauss.bin")
    lda = read_lda(paths.backend_dir / "lda.bin")
    plda = read_plda(paths.backend_dir / "plda.bin")
    key = read_trial_key(paths.trial_key_file)
    ids = sorted({sid for e, t, _ in key.trials for sid in (e, t)})
    missing = [sid for sid in ids if sid not in rows]
    if missing:
        raise StageError(f"trial segments without embeddings: {missing[:5]}")
    x = matrix[[rows[sid] for sid in ids]]
    x_ln = apply_backend(gauss, None, x)
    x_lda = lda.transform(x_ln)
    index = {sid: k for k, sid in enumerate(ids)}
    cosine_vecs = x_lda if cfg.backend.cosine_post_lda else x_ln
    if cfg.backend.cosine_post_lda:
        norms = np.linalg.norm(cosine_vecs, axis=1, keepdims=True)
        cosine_vecs = cosine_vecs / norms
    scorer = PldaScorer(plda)
    cos, pl = {}, {}
    for e, t, _ in key.trials:
        a, b = index[e], index[t]
        cos[(e, t)] = float(cosine_vecs[a] @ cosine_vecs[b])
        pl[(e, t)] = scorer.score(x_lda[a], x_lda[b])
    paths.scores_dir.mkdir(parents=True, exist_ok=True)
    write_scores(paths.scores_dir / "cosine.tsv", ScoreSet(scores=cos))
    write_scores(paths.scores_dir / "plda.tsv", ScoreSet(scores=pl))
    _write_stage_log(paths, "score", cfg, [f"trials scored: {len(key.trials)}"])


# ---------------------------------------------------------------------------
# evaluate


def run_evaluate(cfg: PipelineConfig, jobs: int = 1) -> str:
    """Compute EER and min_C for every score file; returns the rendered report."""
    paths = RunPaths(Path(cfg.workdir))
    _require(paths.trial_key_file, "ctsforge trials")
    key = read_trial_key(paths.trial_key_file)
    params = CostParams(
        p_targets=tuple(cfg.cost.target_priors),
        c_miss=cfg.cost.c_miss,
        c_fa=cfg.cost.c_fa,
    )
    reports = []
    for name in ("cosine", "plda"):
        score_path = paths.scores_dir / f"{name}.tsv"
        _require(score_path, "ctsforge score")
        reports.append(evaluate(read_scores(score_path), key, params, label=name))
    text = render_report(reports)
    paths.report_txt.write_text(text + "\n")
    paths.report_tsv.write_text(report_tsv(reports))
    _write_stage_log(paths, "evaluate", cfg, [f"systems evaluated: {len(reports)}"])
    return text


# ---------------------------------------------------------------------------
# validate / stats


def run_validate(cfg: PipelineConfig, jobs: int = 1, metadata_path: str | None = None) -> bool:
    """Check corpus constraints; returns True when the metadata is clean."""
    paths = RunPaths(Path(cfg.workdir))
    path = Path(metadata_path) if metadata_path else paths.metadata
    _require(path, "ctsforge segment")
    report = corpus.validate_superset(corpus.parse_metadata(path))
    out = paths.workdir / "validation.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.render() if not report.is_clean else "clean\n")
    return report.is_clean


def run_stats(cfg: PipelineConfig, jobs: int = 1, metadata_path: str | None = None) -> str:
    """Render per-corpus segment/speaker/session counts; returns the table."""
    paths = RunPaths(Path(cfg.workdir))
    path = Path(metadata_path) if metadata_path else paths.metadata
    _require(path, "ctsforge segment")
    stats = corpus.compute_stats(corpus.parse_metadata(path))
    return stats.render()
