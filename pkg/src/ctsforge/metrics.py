"""Trial evaluation: DET operating points, EER, and minimum detection cost.

Decision convention at ties: score >= threshold means accept.  The DET
curve places one operating point at every distinct score plus sentinels
at both infinities; EER linearly interpolates the crossing of the miss
and false-alarm rates; min_C is the normalized detection cost minimized
over thresholds and averaged over the configured target priors.  Both
depend only on score order, so any strictly increasing transform of the
scores leaves them unchanged.
"""

import math
from dataclasses import dataclass

import numpy as np

from ctsforge.errors import MetadataError

TARGET_LABEL = "target"
NONTARGET_LABEL = "nontarget"

SCORE_HEADER = "enroll_segmentid\ttest_segmentid\tscore"


@dataclass(frozen=True)
class TrialKey:
    """Labeled trial list; (enroll, test) pairs are unique."""

    trials: tuple  # of (enroll_id, test_id, is_target)

    def __post_init__(self):
        pairs = [(e, t) for e, t, _ in self.trials]
        if len(set(pairs)) != len(pairs):
            raise ValueError("duplicate (enroll, test) pairs in trial key")

    @property
    def n_targets(self):
        return sum(1 for _, _, tgt in self.trials if tgt)

    @property
    def n_nontargets(self):
        return len(self.trials) - self.n_targets


@dataclass(frozen=True)
class ScoreSet:
    """Finite scores keyed by (enroll, test)."""

    scores: dict

    def __post_init__(self):
        for pair, value in self.scores.items():
            if not math.isfinite(value):
                raise ValueError(f"non-finite score for trial {pair}")


@dataclass(frozen=True)
class CostParams:
    """Detection-cost parameters: priors averaged in the final figure."""

    p_targets: tuple = (0.01, 0.005)
    c_miss: float = 1.0
    c_fa: float = 1.0

    def __post_init__(self):
        if not self.p_targets:
            raise ValueError("need at least one target prior")
        for p in self.p_targets:
            if not 0.0 < p < 1.0:
                raise ValueError(f"prior {p} outside (0, 1)")
        if self.c_miss <= 0 or self.c_fa <= 0:
            raise ValueError("costs must be positive")


@dataclass(frozen=True)
class DetCurve:
    """Operating points ordered by ascending threshold."""

    thresholds: np.ndarray
    p_miss: np.ndarray
    p_fa: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.p_miss) < 0) or np.any(np.diff(self.p_fa) > 0):
            raise ValueError("DET curve must have non-decreasing p_miss and "
                             "non-increasing p_fa")


def _split_scores(scores, key):
    missing = [(e, t) for e, t, _ in key.trials if (e, t) not in scores.scores]
    if missing:
        shown = ", ".join(f"{e}/{t}" for e, t in missing[:10])
        more = "" if len(missing) <= 10 else f" (+{len(missing) - 10} more)"
        raise ValueError(f"unscored trials: {shown}{more}")
    tgt = np.array(sorted(scores.scores[(e, t)]
                          for e, t, is_tgt in key.trials if is_tgt))
    non = np.array(sorted(scores.scores[(e, t)]
                          for e, t, is_tgt in key.trials if not is_tgt))
    if tgt.size == 0 or non.size == 0:
        raise ValueError("need at least one target and one nontarget trial")
    return tgt, non


def compute_det(scores, key):
    """Sweeps the threshold over every distinct score value.

    p_miss(t) is the fraction of targets scoring below t; p_fa(t) is the
    fraction of nontargets scoring at or above t (ties accept).  Sentinel
    points at -inf (accept everything) and +inf (reject everything) close
    the curve.
    """
    tgt, non = _split_scores(scores, key)
    finite = np.unique(np.concatenate([tgt, non]))
    thresholds = np.concatenate([[-np.inf], finite, [np.inf]])
    p_miss = np.searchsorted(tgt, thresholds, side="left") / tgt.size
    p_fa = (non.size - np.searchsorted(non, thresholds, side="left")) / non.size
    return DetCurve(thresholds=thresholds, p_miss=p_miss, p_fa=p_fa)


def eer(curve):
    """Rate where miss and false-alarm curves cross, linearly interpolated.

    The difference p_miss - p_fa is non-decreasing in the threshold, so
    the crossing is bracketed by adjacent operating points; when a point
    hits the crossing exactly, that value is returned with no
    interpolation error.
    """
    diff = curve.p_miss - curve.p_fa
    idx = int(np.searchsorted(diff, 0.0, side="left"))
    if diff[idx] == 0.0:
        return float(curve.p_miss[idx])
    pm0, pm1 = curve.p_miss[idx - 1], curve.p_miss[idx]
    pf0, pf1 = curve.p_fa[idx - 1], curve.p_fa[idx]
    t = (pf0 - pm0) / ((pm1 - pm0) - (pf1 - pf0))
    return float(pm0 + t * (pm1 - pm0))


def min_cost(scores, key, params=CostParams()):
    """Minimum normalized detection cost, averaged over target priors.

    For each prior p the raw cost c_miss*p_miss*p + c_fa*p_fa*(1-p) is
    normalized by the better of the two trivial systems,
    min(c_miss*p, c_fa*(1-p)), then minimized over all thresholds.
    """
    curve = compute_det(scores, key)
    total = 0.0
    for p in params.p_targets:
        c_det = params.c_miss * curve.p_miss * p + params.c_fa * curve.p_fa * (1.0 - p)
        c_norm = c_det / min(params.c_miss * p, params.c_fa * (1.0 - p))
        total += float(c_norm.min())
    return total / len(params.p_targets)


@dataclass(frozen=True)
class EvalReport:
    """One evaluated system: rates plus trial counts."""

    label: str
    eer: float
    min_c: float
    n_targets: int
    n_nontargets: int


def evaluate(scores, key, params=CostParams(), label="system"):
    """Computes EER and min_C for one score set against one key."""
    curve = compute_det(scores, key)
    return EvalReport(
        label=label,
        eer=eer(curve),
        min_c=min_cost(scores, key, params),
        n_targets=key.n_targets,
        n_nontargets=key.n_nontargets,
    )


def render_report(reports):
    """Aligned plain-text table; EER in percent at 2 decimals, min_C at 3."""
    headers = ("system", "targets", "nontargets", "EER [%]", "min_C")
    rows = [(r.label, str(r.n_targets), str(r.n_nontargets),
             f"{100.0 * r.eer:.2f}", f"{r.min_c:.3f}") for r in reports]
    widths = [max(len(h), *(len(row[i]) for row in rows))
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i])
                               for i, cell in enumerate(row)))
    return "\n".join(lines) + "\n"


def report_tsv(reports):
    """Machine-readable twin of render_report."""
    lines = ["system\tn_targets\tn_nontargets\teer_pct\tmin_c"]
    for r in reports:
        lines.append(f"{r.label}\t{r.n_targets}\t{r.n_nontargets}\t"
                     f"{100.0 * r.eer:.2f}\t{r.min_c:.3f}")
    return "\n".join(lines) + "\n"


def write_trial_key(path, key):
    """One `enrollid<TAB>testid<TAB>target|nontarget` line per trial."""
    with open(path, "w", encoding="utf-8") as fh:
        for enroll, test, is_target in key.trials:
            label = TARGET_LABEL if is_target else NONTARGET_LABEL
            fh.write(f"{enroll}\t{test}\t{label}\n")


def read_trial_key(path):
    trials = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.rstrip("\n")
            if not raw:
                continue
            parts = raw.split("\t")
            if len(parts) != 3:
                raise MetadataError(f"expected 3 columns, got {len(parts)}",
                                    line=lineno)
            enroll, test, label = parts
            if label not in (TARGET_LABEL, NONTARGET_LABEL):
                raise MetadataError(f"unknown trial label {label!r}",
                                    line=lineno)
            trials.append((enroll, test, label == TARGET_LABEL))
    return TrialKey(trials=tuple(trials))


def write_scores(path, scores):
    """Header line, then trials sorted by id with scores at 6 decimals."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(SCORE_HEADER + "\n")
        for (enroll, test), value in sorted(scores.scores.items()):
            fh.write(f"{enroll}\t{test}\t{value:.6f}\n")


def read_scores(path):
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != SCORE_HEADER:
            raise MetadataError(f"bad score file header {header!r}", line=1)
        for lineno, raw in enumerate(fh, start=2):
            raw = raw.rstrip("\n")
            if not raw:
                continue
            parts = raw.split("\t")
            if len(parts) != 3:
                raise MetadataError(f"expected 3 columns, got {len(parts)}",
                                    line=lineno)
            enroll, test, score = parts
            if (enroll, test) in entries:
                raise MetadataError(f"duplicate trial {enroll}/{test}",
                                    line=lineno)
            entries[(enroll, test)] = float(score)
    return ScoreSet(scores=entries)
