"""Acceptance gate: nine release criteria, one printed verdict line each.

Run with `pytest tests/test_acceptance.py -s` to see every verdict line;
each test prints `[PASS]` or `[FAIL]` with the measured quantities before
asserting, so a red run still reports what was achieved.  The end-to-end
criterion trains the desk-scale network on a 50-speaker synthetic corpus
and takes about two minutes; everything else finishes in seconds.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from ctsforge import corpus, pipeline
from ctsforge.backend import LabeledEmbeddingSet, fit_center_whiten, fit_plda_em
from ctsforge.backend.plda import PldaModel, plda_llr
from ctsforge.config import desk_profile
from ctsforge.metrics import (
    CostParams,
    ScoreSet,
    TrialKey,
    compute_det,
    eer,
    evaluate,
    min_cost,
    read_trial_key,
)
from ctsforge.nnet import AmSoftmaxParams, EtdnnModel, am_softmax_loss, lr_schedule
from ctsforge.nnet.model import desk_config
from ctsforge.nnet.train import loss_and_grads
from ctsforge.seeding import derive_rng


def _verdict(criterion, ok, detail):
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


# ---------------------------------------------------------------------------
# 1. Metric oracle equivalence


def _oracle_rates(tgt, non, thresholds):
    """Miss/false-alarm fractions by direct comparison at each threshold."""
    pm = (tgt[None, :] < thresholds[:, None]).mean(axis=1)
    pf = (non[None, :] >= thresholds[:, None]).mean(axis=1)
    return pm, pf


def _oracle_eer(tgt, non):
    thresholds = np.concatenate([[-np.inf], np.unique(np.concatenate([tgt, non])),
                                 [np.inf]])
    pm, pf = _oracle_rates(tgt, non, thresholds)
    for k in range(thresholds.size):
        if pm[k] >= pf[k]:
            if pm[k] == pf[k]:
                return float(pm[k])
            # Crossing sits between points k-1 and k on the linear segment.
            t = (pf[k - 1] - pm[k - 1]) / ((pm[k] - pm[k - 1]) - (pf[k] - pf[k - 1]))
            return float(pm[k - 1] + t * (pm[k] - pm[k - 1]))
    raise AssertionError("no crossing")


def _oracle_min_cost(tgt, non, params):
    uniq = np.unique(np.concatenate([tgt, non]))
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    thresholds = np.concatenate([[-np.inf], uniq, mids, [np.inf]])
    pm, pf = _oracle_rates(tgt, non, thresholds)
    total = 0.0
    for p in params.p_targets:
        c = params.c_miss * pm * p + params.c_fa * pf * (1.0 - p)
        total += float(c.min() / min(params.c_miss * p, params.c_fa * (1.0 - p)))
    return total / len(params.p_targets)


def test_criterion_1_metric_oracle_equivalence():
    rng = np.random.default_rng(1001)
    params = CostParams()
    worst_eer = worst_cost = 0.0
    start = time.perf_counter()
    for case in range(200):
        n_tgt = int(rng.integers(1, 100))
        n_non = int(rng.integers(1, 201 - n_tgt))
        tgt = rng.normal(1.0, 1.0, n_tgt)
        non = rng.normal(0.0, 1.0, n_non)
        if case % 2 == 0:
            tgt = np.round(tgt, 1)  # force score ties
            non = np.round(non, 1)
        scores = {}
        trials = []
        for i, s in enumerate(tgt):
            scores[(f"e{i}", f"t{i}")] = float(s)
            trials.append((f"e{i}", f"t{i}", True))
        for i, s in enumerate(non):
            scores[(f"e{i}", f"n{i}")] = float(s)
            trials.append((f"e{i}", f"n{i}", False))
        score_set = ScoreSet(scores=scores)
        key = TrialKey(trials=tuple(trials))
        worst_eer = max(worst_eer,
                        abs(eer(compute_det(score_set, key)) - _oracle_eer(tgt, non)))
        worst_cost = max(worst_cost,
                         abs(min_cost(score_set, key, params)
                             - _oracle_min_cost(tgt, non, params)))
    elapsed = time.perf_counter() - start
    ok = worst_eer <= 1e-12 and worst_cost <= 1e-12 and elapsed < 10.0
    _verdict(1, ok, "eer/min_cost match brute force on 200 instances "
             f"(max |d_eer|={worst_eer:.1e}, max |d_cost|={worst_cost:.1e}, "
             f"{elapsed:.1f}s < 10s)")


# ---------------------------------------------------------------------------
# 2. PLDA correctness


def _random_spd(rng, evals):
    d = len(evals)
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return (q * np.asarray(evals)) @ q.T


def _plda_dataset(rng, d, n_spk, n_sess, b_evals, w_evals):
    b = _random_spd(rng, b_evals)
    w = _random_spd(rng, w_evals)
    mu = rng.standard_normal(d)
    y = rng.multivariate_normal(np.zeros(d), b, size=n_spk)
    x = mu + np.repeat(y, n_sess, axis=0) + rng.multivariate_normal(
        np.zeros(d), w, size=n_spk * n_sess)
    labels = np.repeat(np.arange(n_spk), n_sess)
    return LabeledEmbeddingSet(x, labels), mu, b, w


def test_criterion_2_plda_em_and_llr():
    start = time.perf_counter()

    # (a) marginal likelihood never decreases across EM iterations
    worst_drop = 0.0
    for k in range(20):
        rng = np.random.default_rng(2000 + k)
        d = int(rng.integers(2, 7))
        emb_set, _, _, _ = _plda_dataset(
            rng, d, int(rng.integers(20, 50)), int(rng.integers(2, 7)),
            rng.uniform(0.5, 4.0, d), rng.uniform(0.5, 2.0, d))
        _, llhs = fit_plda_em(emb_set, n_iters=50)
        for prev, cur in zip(llhs, llhs[1:]):
            worst_drop = max(worst_drop, (prev - cur) / abs(prev))

    # (b) parameter recovery from generated data
    rng = np.random.default_rng(1)
    d = 8
    emb_set, _, b_true, w_true = _plda_dataset(
        rng, d, 500, 10,
        [9.0, 4.0, 1.0, 0.25, 0.1, 0.05, 0.025, 0.01],
        [1.5, 1.2, 1.0, 0.9, 0.8, 0.7, 0.6, 0.5])
    model, _ = fit_plda_em(emb_set, n_iters=50)
    rel_b = np.linalg.norm(model.between_cov - b_true) / np.linalg.norm(b_true)
    rel_w = np.linalg.norm(model.within_cov - w_true) / np.linalg.norm(w_true)

    # (c) scorer agrees with the joint-Gaussian density-ratio oracle
    worst_llr = 0.0
    for d in (1, 2, 3):
        rng = np.random.default_rng(2100 + d)
        b = _random_spd(rng, rng.uniform(0.5, 3.0, d))
        w = _random_spd(rng, rng.uniform(0.5, 2.0, d))
        mu = rng.standard_normal(d)
        model_c = PldaModel(mu=mu, between_cov=b, within_cov=w)
        total = b + w
        joint = np.block([[total, b], [b, total]])
        for _ in range(50):
            e1 = rng.standard_normal(d)
            e2 = rng.standard_normal(d)
            oracle = (stats.multivariate_normal.logpdf(
                          np.concatenate([e1, e2]), np.concatenate([mu, mu]), joint)
                      - stats.multivariate_normal.logpdf(e1, mu, total)
                      - stats.multivariate_normal.logpdf(e2, mu, total))
            worst_llr = max(worst_llr, abs(plda_llr(model_c, e1, e2) - oracle))

    elapsed = time.perf_counter() - start
    ok = (worst_drop <= 1e-8 and rel_b < 0.1 and rel_w < 0.1
          and worst_llr <= 1e-8 and elapsed < 60.0)
    _verdict(2, ok, f"EM monotone (worst drop {worst_drop:.1e}), recovery "
             f"relB={rel_b:.3f}/relW={rel_w:.3f} < 0.1, llr oracle "
             f"|d|={worst_llr:.1e} <= 1e-8 ({elapsed:.1f}s < 60s)")


# ---------------------------------------------------------------------------
# 3. Desk-scale gradient check


def test_criterion_3_desk_scale_gradcheck():
    start = time.perf_counter()
    config = desk_config(n_speakers=8)
    model = EtdnnModel.init(config, derive_rng(30, "init"))
    rng = derive_rng(30, "data")
    chunks = rng.standard_normal((2, 30, 64))
    labels = rng.integers(0, 8, 2)
    params = AmSoftmaxParams(margin=0.2, scale=40.0)
    _, _, grads = loss_and_grads(model, chunks, labels, params)
    assert set(grads) == set(model.params)

    def loss_only():
        value, _, _ = loss_and_grads(model, chunks, labels, params)
        return value

    eps = 1e-5
    worst = 0.0
    coord_rng = derive_rng(30, "coords")
    for name in sorted(model.params):
        flat = model.params[name].reshape(-1)
        grad = grads[name].reshape(-1)
        picks = coord_rng.choice(flat.size, size=min(4, flat.size),
                                 replace=False)
        for j in picks:
            keep = flat[j]
            flat[j] = keep + eps
            up = loss_only()
            flat[j] = keep - eps
            down = loss_only()
            flat[j] = keep
            fd = (up - down) / (2.0 * eps)
            worst = max(worst, abs(fd - grad[j]) / max(abs(fd) + abs(grad[j]),
                                                       1e-8))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-4 and elapsed < 60.0
    _verdict(3, ok, f"all {len(model.params)} tensors match central "
             f"differences (worst rel err {worst:.1e} < 1e-4, "
             f"{elapsed:.1f}s < 60s)")


# ---------------------------------------------------------------------------
# 4. Loss degeneracy


def test_criterion_4_loss_degeneracy():
    worst = 0.0
    for k in range(10):
        rng = np.random.default_rng(4000 + k)
        emb = rng.standard_normal((16, 12))
        weight = rng.standard_normal((8, 12))
        labels = rng.integers(0, 8, 16)
        loss, _ = am_softmax_loss(emb, weight, labels,
                                  AmSoftmaxParams(margin=0.0, scale=1.0))
        cos = (emb / np.linalg.norm(emb, axis=1, keepdims=True)) @ (
            weight / np.linalg.norm(weight, axis=1, keepdims=True)).T
        logz = np.log(np.exp(cos - cos.max(axis=1, keepdims=True)).sum(axis=1))
        ce = float(np.mean(logz + cos.max(axis=1)
                           - cos[np.arange(16), labels]))
        worst = max(worst, abs(loss - ce))
    ok = worst <= 1e-10
    _verdict(4, ok, "margin 0 / scale 1 loss equals softmax cross-entropy "
             f"over cosines (max |d|={worst:.1e} <= 1e-10)")


# ---------------------------------------------------------------------------
# 5. Segmenter distribution


def test_criterion_5_segmenter_distribution():
    cfg = corpus.SegmenterConfig(min_dur=10.0, max_dur=60.0, rng_seed=0)

    # Duration draws: a single long timeline where only the final segment
    # can be clamped by the remainder; that one is excluded.
    timeline = corpus.SessionTimeline(sessionid="long",
                                      speech_intervals=[(0.0, 380000.0)])
    segments = corpus.extract_segments(timeline, cfg, derive_rng(0, "ks-draws"))
    durations = np.array([d for _, d in segments[:-1]])[:10000]
    assert durations.size == 10000
    ks = stats.kstest(durations, "uniform", args=(10.0, 50.0))

    # Structural invariants on random multi-interval timelines.
    bad = 0
    rng = np.random.default_rng(5000)
    for k in range(1000):
        intervals = []
        cursor = 0.0
        for _ in range(int(rng.integers(1, 6))):
            cursor += float(rng.uniform(0.0, 20.0))
            length = float(rng.uniform(1.0, 200.0))
            intervals.append((cursor, cursor + length))
            cursor += length
        timeline = corpus.SessionTimeline(sessionid=f"t{k}",
                                          speech_intervals=intervals)
        segs = corpus.extract_segments(timeline, cfg, rng)
        total = sum(e - s for s, e in intervals)
        used = 0.0
        prev_end = -1.0
        for span, duration in segs:
            if not 10.0 <= duration <= 60.0:
                bad += 1
            if abs(sum(e - s for s, e in span) - duration) > 1e-6:
                bad += 1
            for s, e in span:
                if s < prev_end - 1e-9 or e <= s:
                    bad += 1
                if not any(a - 1e-9 <= s and e <= b + 1e-9
                           for a, b in intervals):
                    bad += 1
                prev_end = e
            used += duration
        if used - total > 1e-6 or total - used >= 10.0:
            bad += 1  # leftover speech must be below the minimum duration
    ok = ks.pvalue > 0.01 and bad == 0
    _verdict(5, ok, f"10,000 duration draws uniform (KS p={ks.pvalue:.3f} > "
             f"0.01); {bad} invariant violations on 1,000 timelines")


# ---------------------------------------------------------------------------
# 6. Reference table reconstruction


def test_criterion_6_reference_table_reconstruction():
    stats_out = corpus.compute_stats(corpus.make_reference_shaped_records())
    cells_ok = stats_out.per_corpus == corpus.SUPERSET_REFERENCE_STATS
    totals_ok = (stats_out.total_segments == 605_760
                 and stats_out.total_speakers == 6_867)
    ok = cells_ok and totals_ok
    _verdict(6, ok, "all 30 per-corpus cells and totals "
             f"({stats_out.total_segments:,} segments / "
             f"{stats_out.total_speakers:,} speakers) reproduced exactly")


# ---------------------------------------------------------------------------
# 7. End-to-end synthetic separability


def _report_eers(path):
    out = {}
    for line in path.read_text().splitlines()[1:]:
        system, _, _, eer_pct, _ = line.split("\t")
        out[system] = float(eer_pct)
    return out


def test_criterion_7_end_to_end_separability(tmp_path):
    cfg = desk_profile(workdir=str(tmp_path / "run"), seed=202)
    start = time.perf_counter()
    for stage in (pipeline.run_synth, pipeline.run_segment,
                  pipeline.run_featurize, pipeline.run_augment,
                  pipeline.run_train, pipeline.run_extract,
                  pipeline.run_train_backend, pipeline.run_trials,
                  pipeline.run_score, pipeline.run_evaluate):
        stage(cfg)
    elapsed = time.perf_counter() - start

    paths = pipeline.RunPaths(tmp_path / "run")
    eers = _report_eers(paths.report_tsv)
    key = read_trial_key(paths.trial_key_file)
    baseline_rng = derive_rng(1, "baseline")
    baseline = ScoreSet(scores={(e, t): float(baseline_rng.uniform())
                                for e, t, _ in key.trials})
    random_eer = evaluate(baseline, key, label="random").eer

    ok = (eers["cosine"] < 15.0 and eers["plda"] < 15.0
          and abs(random_eer - 0.5) <= 0.02 and elapsed < 600.0)
    _verdict(7, ok, "50-speaker end-to-end: cosine EER "
             f"{eers['cosine']:.2f}% / PLDA EER {eers['plda']:.2f}% < 15%, "
             f"random baseline {100 * random_eer:.2f}% in 50+-2%, "
             f"{elapsed:.0f}s < 600s")


# ---------------------------------------------------------------------------
# 8. Determinism


def test_criterion_8_determinism(tmp_path):
    def run(workdir):
        cfg = desk_profile(workdir=str(workdir), seed=13)
        cfg.synth.n_speakers = 6
        cfg.synth.sessions_per_speaker = 4
        cfg.synth.train_sessions = 2
        cfg.synth.train_speech_seconds = 60.0
        cfg.synth.eval_speech_seconds = 40.0
        cfg.network.channels = 32
        cfg.network.pool_channels = 64
        cfg.network.embed_dim = 16
        cfg.training.chunk_len = 50
        cfg.training.batch_size = 4
        cfg.training.n_epochs = 2
        cfg.backend.lda_dim = 5
        for stage in (pipeline.run_synth, pipeline.run_segment,
                      pipeline.run_featurize, pipeline.run_augment,
                      pipeline.run_train, pipeline.run_extract,
                      pipeline.run_train_backend, pipeline.run_trials,
                      pipeline.run_score, pipeline.run_evaluate):
            stage(cfg)
        return pipeline.RunPaths(workdir)

    a = run(tmp_path / "a")
    b = run(tmp_path / "b")
    compared = []
    identical = True
    for name, pa, pb in (
            ("cosine scores", a.scores_dir / "cosine.tsv", b.scores_dir / "cosine.tsv"),
            ("plda scores", a.scores_dir / "plda.tsv", b.scores_dir / "plda.tsv"),
            ("text report", a.report_txt, b.report_txt),
            ("tsv report", a.report_tsv, b.report_tsv)):
        same = pa.read_bytes() == pb.read_bytes()
        identical = identical and same
        compared.append(f"{name}={'ok' if same else 'DIFF'}")
    _verdict(8, identical, "two same-seed pipeline runs byte-identical "
             f"({', '.join(compared)})")


# ---------------------------------------------------------------------------
# 9. LR schedule and whitening


def test_criterion_9_schedule_and_whitening():
    lrs = [lr_schedule(epoch, 0.1) for epoch in range(10)]
    want = [0.1, 0.1, 0.1, 0.1, 0.1, 0.05, 0.05, 0.025, 0.025, 0.0125]
    schedule_ok = all(math.isclose(a, b, rel_tol=0, abs_tol=0)
                      for a, b in zip(lrs, want))

    rng = np.random.default_rng(9000)
    d = 20
    cov = _random_spd(rng, rng.uniform(0.2, 5.0, d))
    data = rng.multivariate_normal(rng.standard_normal(d), cov, size=5000)
    gauss = fit_center_whiten(data)
    white = gauss.transform(data)
    resid = np.abs(white.T @ white / white.shape[0] - np.eye(d)).max()

    ok = schedule_ok and resid < 0.1
    _verdict(9, ok, f"lr schedule {want[:6]}... reproduced; whitened "
             f"covariance within {resid:.1e} < 0.1 of identity")
