"""Tests for DET curves, EER, detection cost, and trial file formats."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ctsforge.errors import MetadataError
from ctsforge.metrics import (
    CostParams,
    ScoreSet,
    TrialKey,
    compute_det,
    eer,
    evaluate,
    min_cost,
    read_scores,
    read_trial_key,
    render_report,
    report_tsv,
    write_scores,
    write_trial_key,
)


def make_trials(target_scores, nontarget_scores):
    """Builds a key and score set from two plain score lists."""
    trials = []
    scores = {}
    for i, s in enumerate(target_scores):
        pair = (f"e{i:03d}", f"t{i:03d}")
        trials.append((*pair, True))
        scores[pair] = float(s)
    for i, s in enumerate(nontarget_scores):
        pair = (f"e{i:03d}", f"n{i:03d}")
        trials.append((*pair, False))
        scores[pair] = float(s)
    return ScoreSet(scores=scores), TrialKey(trials=tuple(trials))


def oracle_sweep(target_scores, nontarget_scores, threshold):
    """Counts misses and false alarms by direct loops; ties accept."""
    misses = sum(1 for s in target_scores if s < threshold)
    fas = sum(1 for s in nontarget_scores if s >= threshold)
    return misses / len(target_scores), fas / len(nontarget_scores)


def oracle_min_cost(target_scores, nontarget_scores, params):
    all_scores = sorted(set(target_scores) | set(nontarget_scores))
    candidates = [-math.inf, math.inf] + all_scores
    candidates += [(a + b) / 2 for a, b in zip(all_scores, all_scores[1:])]
    total = 0.0
    for p in params.p_targets:
        best = math.inf
        for th in candidates:
            pm, pf = oracle_sweep(target_scores, nontarget_scores, th)
            c = params.c_miss * pm * p + params.c_fa * pf * (1.0 - p)
            best = min(best, c / min(params.c_miss * p, params.c_fa * (1.0 - p)))
        total += best
    return total / len(params.p_targets)


def oracle_eer(target_scores, nontarget_scores):
    """Independent crossing solver on the per-score operating points."""
    thresholds = [-math.inf] + sorted(
        set(target_scores) | set(nontarget_scores)) + [math.inf]
    points = [oracle_sweep(target_scores, nontarget_scores, th)
              for th in thresholds]
    for k, (pm, pf) in enumerate(points):
        if pm >= pf:
            if pm == pf:
                return pm
            pm0, pf0 = points[k - 1]
            # Solve pm0 + t (pm - pm0) = pf0 + t (pf - pf0) for t in [0, 1].
            t = (pf0 - pm0) / ((pm - pm0) - (pf - pf0))
            return pm0 + t * (pm - pm0)
    raise AssertionError("no crossing found")


# A six-score layout whose operating points are all simple fractions:
# ascending scores 1..6 labeled non, non, tgt, non, tgt, tgt.
REFERENCE_TARGETS = (3.0, 5.0, 6.0)
REFERENCE_NONTARGETS = (1.0, 2.0, 4.0)


def test_det_reference_operating_points():
    scores, key = make_trials(REFERENCE_TARGETS, REFERENCE_NONTARGETS)
    curve = compute_det(scores, key)
    want_miss = [0, 0, 0, 0, 1 / 3, 1 / 3, 2 / 3, 1]
    want_fa = [1, 1, 2 / 3, 1 / 3, 1 / 3, 0, 0, 0]
    assert_allclose(curve.p_miss, want_miss, rtol=0, atol=0)
    assert_allclose(curve.p_fa, want_fa, rtol=0, atol=0)
    assert curve.thresholds[0] == -np.inf
    assert curve.thresholds[-1] == np.inf
    assert list(curve.thresholds[1:-1]) == [1, 2, 3, 4, 5, 6]


def test_reference_eer_and_cost_are_exactly_one_third():
    scores, key = make_trials(REFERENCE_TARGETS, REFERENCE_NONTARGETS)
    assert eer(compute_det(scores, key)) == pytest.approx(1 / 3, abs=0)
    assert min_cost(scores, key) == pytest.approx(1 / 3, abs=1e-15)


def test_tied_score_accepts_both_sides():
    # One target and one nontarget share the score; at that threshold the
    # target is accepted (no miss) and the nontarget fires (false alarm).
    scores, key = make_trials([1.0], [1.0])
    curve = compute_det(scores, key)
    k = int(np.flatnonzero(curve.thresholds == 1.0)[0])
    assert curve.p_miss[k] == 0.0
    assert curve.p_fa[k] == 1.0


def test_sentinel_points_close_the_curve():
    scores, key = make_trials([0.5, 2.5], [-1.0, 0.0])
    curve = compute_det(scores, key)
    assert (curve.p_miss[0], curve.p_fa[0]) == (0.0, 1.0)
    assert (curve.p_miss[-1], curve.p_fa[-1]) == (1.0, 0.0)


def test_eer_perfect_and_swapped_separation():
    perfect, key = make_trials([3.0, 4.0], [1.0, 2.0])
    assert eer(compute_det(perfect, key)) == 0.0
    swapped, key = make_trials([1.0, 2.0], [3.0, 4.0])
    assert eer(compute_det(swapped, key)) == 1.0


def test_eer_interpolated_hand_case():
    # Crossing falls between two operating points; the interpolated value
    # is 2/3 by solving the linear segment intersection by hand.
    scores, key = make_trials([1.0, 2.0, 6.0], [3.0, 4.0])
    assert eer(compute_det(scores, key)) == pytest.approx(2 / 3, abs=1e-15)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_eer_matches_independent_oracle(seed):
    rng = np.random.default_rng(seed)
    n_tgt = int(rng.integers(2, 40))
    n_non = int(rng.integers(2, 40))
    tgt = list(rng.normal(1.0, 1.0, size=n_tgt))
    non = list(rng.normal(0.0, 1.0, size=n_non))
    scores, key = make_trials(tgt, non)
    assert eer(compute_det(scores, key)) == pytest.approx(
        oracle_eer(tgt, non), abs=1e-12)


@pytest.mark.parametrize("seed", [10, 11, 12, 13])
def test_min_cost_matches_exhaustive_threshold_sweep(seed):
    rng = np.random.default_rng(seed)
    tgt = list(rng.normal(1.5, 1.0, size=int(rng.integers(3, 30))))
    non = list(rng.normal(0.0, 1.0, size=int(rng.integers(3, 30))))
    # Inject ties across the two sides to exercise the accept convention.
    non[0] = tgt[0]
    params = CostParams(p_targets=(0.01, 0.005), c_miss=1.0, c_fa=1.0)
    scores, key = make_trials(tgt, non)
    assert min_cost(scores, key, params) == pytest.approx(
        oracle_min_cost(tgt, non, params), abs=1e-12)


def test_metrics_invariant_under_monotone_transform():
    rng = np.random.default_rng(42)
    tgt = list(rng.normal(1.0, 1.0, size=25))
    non = list(rng.normal(0.0, 1.0, size=60))
    raw, key = make_trials(tgt, non)
    warped, _ = make_trials([math.exp(s) for s in tgt],
                            [math.exp(s) for s in non])
    assert eer(compute_det(raw, key)) == pytest.approx(
        eer(compute_det(warped, key)), abs=1e-12)
    assert min_cost(raw, key) == pytest.approx(min_cost(warped, key),
                                               abs=1e-12)


def test_evaluate_carries_label_and_counts():
    scores, key = make_trials(REFERENCE_TARGETS, REFERENCE_NONTARGETS)
    report = evaluate(scores, key, label="cosine")
    assert report.label == "cosine"
    assert (report.n_targets, report.n_nontargets) == (3, 3)
    assert report.eer == pytest.approx(1 / 3)


def test_report_rendering_formats():
    scores, key = make_trials(REFERENCE_TARGETS, REFERENCE_NONTARGETS)
    reports = [evaluate(scores, key, label="cosine")]
    text = render_report(reports)
    assert "33.33" in text
    assert "0.333" in text
    assert text.splitlines()[0].split()[:2] == ["system", "targets"]
    tsv = report_tsv(reports)
    lines = tsv.splitlines()
    assert lines[0] == "system\tn_targets\tn_nontargets\teer_pct\tmin_c"
    assert lines[1] == "cosine\t3\t3\t33.33\t0.333"


def test_duplicate_trial_pairs_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        TrialKey(trials=(("a", "b", True), ("a", "b", False)))


def test_non_finite_scores_rejected():
    with pytest.raises(ValueError, match="non-finite"):
        ScoreSet(scores={("a", "b"): math.nan})
    with pytest.raises(ValueError, match="non-finite"):
        ScoreSet(scores={("a", "b"): math.inf})


def test_missing_trials_error_lists_pairs():
    trials = tuple((f"e{i}", f"t{i}", i % 2 == 0) for i in range(12))
    key = TrialKey(trials=trials)
    scores = ScoreSet(scores={("e0", "t0"): 1.0, ("e1", "t1"): 0.0})
    with pytest.raises(ValueError) as err:
        compute_det(scores, key)
    assert "unscored trials" in str(err.value)
    assert "e2/t2" in str(err.value)


def test_single_sided_key_rejected():
    scores, _ = make_trials([1.0], [0.0])
    only_targets = TrialKey(trials=(("e000", "t000", True),))
    with pytest.raises(ValueError, match="at least one"):
        compute_det(scores, only_targets)


def test_trial_key_file_round_trip(tmp_path):
    _, key = make_trials([1.0, 2.0], [0.0])
    path = tmp_path / "trials.tsv"
    write_trial_key(path, key)
    lines = path.read_text().splitlines()
    assert lines[0] == "e000\tt000\ttarget"
    assert lines[-1] == "e000\tn000\tnontarget"
    assert read_trial_key(path) == key


def test_trial_key_reader_flags_bad_label(tmp_path):
    path = tmp_path / "trials.tsv"
    path.write_text("a\tb\ttarget\nc\td\tmaybe\n")
    with pytest.raises(MetadataError, match="line 2"):
        read_trial_key(path)


def test_trial_key_reader_flags_column_count(tmp_path):
    path = tmp_path / "trials.tsv"
    path.write_text("a\tb\n")
    with pytest.raises(MetadataError, match="3 columns"):
        read_trial_key(path)


def test_score_file_round_trip_sorted_six_decimals(tmp_path):
    scores = ScoreSet(scores={("b", "x"): 1.25, ("a", "y"): -0.5})
    path = tmp_path / "scores.tsv"
    write_scores(path, scores)
    lines = path.read_text().splitlines()
    assert lines[0] == "enroll_segmentid\ttest_segmentid\tscore"
    assert lines[1] == "a\ty\t-0.500000"
    assert lines[2] == "b\tx\t1.250000"
    assert read_scores(path).scores == scores.scores


def test_score_reader_rejects_bad_header(tmp_path):
    path = tmp_path / "scores.tsv"
    path.write_text("enroll\ttest\tscore\na\tb\t1.0\n")
    with pytest.raises(MetadataError, match="header"):
        read_scores(path)


def test_score_reader_rejects_duplicates(tmp_path):
    path = tmp_path / "scores.tsv"
    path.write_text("enroll_segmentid\ttest_segmentid\tscore\n"
                    "a\tb\t1.0\na\tb\t2.0\n")
    with pytest.raises(MetadataError, match="duplicate") as err:
        read_scores(path)
    assert err.value.line == 3
