"""Two-covariance Gaussian PLDA: EM fitting and pairwise LLR scoring.

The generative model is x = mu + y + eps with speaker offset y ~ N(0, B)
and session noise eps ~ N(0, W), both covariances full rank.  This is
the full-rank-subspace PLDA variant: likelihoods are identical to an
Eigenvoice model whose subspace spans the whole embedding space, with no
rank hyperparameter to tune.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ctsforge.backend.transforms import COV_EPS, length_norm


@dataclass(frozen=True)
class PldaModel:
    """Global mean plus between- and within-speaker covariances."""

    mu: np.ndarray
    between_cov: np.ndarray
    within_cov: np.ndarray

    def __post_init__(self):
        d = self.mu.shape[0]
        for name, cov in (("between_cov", self.between_cov),
                          ("within_cov", self.within_cov)):
            if cov.shape != (d, d):
                raise ValueError(f"{name} must be {d}x{d}")
            if not np.allclose(cov, cov.T, rtol=0, atol=1e-8):
                raise ValueError(f"{name} must be symmetric")

    @property
    def dim(self):
        return self.mu.shape[0]


def _floor_spd(mat, floor):
    """Symmetrizes and floors eigenvalues so downstream solves succeed."""
    sym = 0.5 * (mat + mat.T)
    evals, evecs = scipy.linalg.eigh(sym)
    if evals.min() >= floor:
        return sym, False
    evals = np.maximum(evals, floor)
    return (evecs * evals) @ evecs.T, True


def _marginal_llh(centered_by_count, b, w):
    """Total log p(data) summed over speakers, grouped by session count.

    For a speaker with n sessions the marginal is Gaussian with one
    component of covariance W + nB along the session mean and n-1
    components of covariance W across deviations.
    """
    d = b.shape[0]
    sign_w, logdet_w = np.linalg.slogdet(w)
    if sign_w <= 0:
        raise ValueError("within covariance is not positive definite")
    total = 0.0
    for n, centered in centered_by_count.items():
        # centered: (n_speakers_n, n, d) observations minus mu
        means = centered.mean(axis=1)
        dev = centered - means[:, None, :]
        t_n = w + n * b
        sign_t, logdet_t = np.linalg.slogdet(t_n)
        if sign_t <= 0:
            raise ValueError("W + nB is not positive definite")
        solve_t = scipy.linalg.solve(t_n, means.T, assume_a="pos")
        quad_mean = n * np.sum(means.T * solve_t)
        dev_flat = dev.reshape(-1, d)
        solve_w = scipy.linalg.solve(w, dev_flat.T, assume_a="pos")
        quad_dev = np.sum(dev_flat.T * solve_w)
        n_spk = centered.shape[0]
        total += -0.5 * (
            n_spk * n * d * np.log(2.0 * np.pi)
            + n_spk * ((n - 1) * logdet_w + logdet_t)
            + quad_dev + quad_mean
        )
    return total


def fit_plda_em(emb_set, n_iters=20):
    """Fits B and W by expectation-maximization.

    The mean is fixed at the sample mean; B and W start at half the total
    covariance each.  The E-step computes speaker-offset posteriors
    without inverting B (stable as B collapses toward zero on
    speaker-homogeneous data), the M-step re-estimates both covariances
    from the posteriors.

    Args:
        emb_set: LabeledEmbeddingSet; every speaker needs >= 2 vectors and
            there must be more vectors than dimensions.
        n_iters: EM iterations.

    Returns:
        Tuple (PldaModel, llhs) where llhs[k] is the total marginal
        log-likelihood under the parameters entering iteration k.

    Raises:
        ValueError: singleton speakers or too little data.

    Warns:
        UserWarning: a covariance needed eigenvalue flooring to stay
            positive definite.
    """
    x = emb_set.vectors
    labels = emb_set.labels
    n_total, d = x.shape
    if n_total <= d:
        raise ValueError(f"need more vectors than dimensions ({n_total} <= {d})")
    uniq, counts = np.unique(labels, return_counts=True)
    if counts.min() < 2:
        singles = uniq[counts < 2]
        raise ValueError(
            f"{singles.shape[0]} speakers have a single vector; PLDA needs "
            ">= 2 sessions per speaker"
        )
    mu = x.mean(axis=0)
    centered = x - mu
    total_cov = centered.T @ centered / n_total
    b = 0.5 * total_cov
    w = 0.5 * total_cov

    # Group speakers by session count: posterior covariances are shared
    # within a group, turning per-speaker solves into one solve per count.
    by_count = {}
    for n in np.unique(counts):
        spk_ids = uniq[counts == n]
        stack = np.empty((spk_ids.shape[0], n, d))
        for i, spk in enumerate(spk_ids):
            stack[i] = centered[labels == spk]
        by_count[int(n)] = stack

    scatter_total = centered.T @ centered
    n_speakers = uniq.shape[0]
    llhs = []
    for _ in range(n_iters):
        llhs.append(_marginal_llh(by_count, b, w))
        sum_post = np.zeros((d, d))   # sum of posterior covariances
        sum_yy = np.zeros((d, d))     # sum of y y^T
        sum_n_yy = np.zeros((d, d))   # sum of n * y y^T
        sum_n_post = np.zeros((d, d))  # sum of n * posterior covariance
        cross = np.zeros((d, d))      # sum of f y^T
        for n, stack in by_count.items():
            f = stack.sum(axis=1)  # (n_spk_n, d), sums of centered sessions
            # posterior of y given n sessions: mean B(B + W/n)^-1 xbar,
            # covariance B - B(B + W/n)^-1 B  (no B^-1 anywhere)
            shrink = scipy.linalg.solve(b + w / n, b, assume_a="pos")
            post_cov = b - b @ shrink
            y = (f / n) @ shrink
            n_spk = stack.shape[0]
            yy = y.T @ y
            sum_post += n_spk * post_cov
            sum_yy += yy
            sum_n_yy += n * yy
            sum_n_post += n * n_spk * post_cov
            cross += f.T @ y
        b_new = (sum_post + sum_yy) / n_speakers
        # residual scatter sum_ij r r^T with r = (x - mu) - y, expanded so
        # only per-speaker sums are needed
        w_new = (scatter_total - cross - cross.T + sum_n_yy
                 + sum_n_post) / n_total
        b, _ = _floor_spd(b_new, COV_EPS)
        w, w_floored = _floor_spd(w_new, COV_EPS)
        if w_floored:
            warnings.warn("within covariance floored to stay positive "
                          "definite", stacklevel=2)
    model = PldaModel(mu=mu, between_cov=b, within_cov=w)
    return model, llhs


class PldaScorer:
    """Precomputed quadratic forms for fast pairwise LLR scoring.

    With T = B + W and Schur complement M = T - B T^-1 B, the LLR of the
    same-speaker against different-speaker hypotheses for centered
    embeddings (e1 - mu, e2 - mu) is

        0.5 e1' Q e1 + 0.5 e2' Q e2 + e1' P e2 + c

    where Q = T^-1 - M^-1, P = T^-1 B M^-1, c = 0.5(log|T| - log|M|).
    """

    def __init__(self, model):
        self.model = model
        b = model.between_cov
        t = model.between_cov + model.within_cov
        t_inv_b = scipy.linalg.solve(t, b, assume_a="pos")
        m = t - b @ t_inv_b
        m_inv = scipy.linalg.inv(m)
        t_inv = scipy.linalg.inv(t)
        self.q = t_inv - m_inv
        self.p = t_inv @ b @ m_inv
        # symmetrize against round-off so swap symmetry is exact
        self.q = 0.5 * (self.q + self.q.T)
        self.p = 0.5 * (self.p + self.p.T)
        sign_t, logdet_t = np.linalg.slogdet(t)
        sign_m, logdet_m = np.linalg.slogdet(m)
        if sign_t <= 0 or sign_m <= 0:
            raise ValueError("PLDA covariances are not positive definite")
        self.c = 0.5 * (logdet_t - logdet_m)

    def score(self, e1, e2):
        """LLR for one trial."""
        e1 = np.asarray(e1, dtype=np.float64) - self.model.mu
        e2 = np.asarray(e2, dtype=np.float64) - self.model.mu
        if e1.shape != (self.model.dim,) or e2.shape != (self.model.dim,):
            raise ValueError("embedding dimension does not match the model")
        return float(0.5 * e1 @ self.q @ e1 + 0.5 * e2 @ self.q @ e2
                     + e1 @ self.p @ e2 + self.c)

    def score_matrix(self, enroll, test):
        """All-vs-all LLRs: rows follow enroll, columns follow test."""
        enroll = np.atleast_2d(np.asarray(enroll, dtype=np.float64)) - self.model.mu
        test = np.atleast_2d(np.asarray(test, dtype=np.float64)) - self.model.mu
        q_enroll = 0.5 * np.sum((enroll @ self.q) * enroll, axis=1)
        q_test = 0.5 * np.sum((test @ self.q) * test, axis=1)
        return q_enroll[:, None] + q_test[None, :] + enroll @ self.p @ test.T + self.c


def plda_llr(model, e1, e2):
    """Single-pair convenience wrapper around PldaScorer."""
    return PldaScorer(model).score(e1, e2)


def cosine_score(e1, e2):
    """Inner product of the length-normalized pair; in [-1, 1]."""
    return float(length_norm(np.asarray(e1, dtype=np.float64))
                 @ length_norm(np.asarray(e2, dtype=np.float64)))
