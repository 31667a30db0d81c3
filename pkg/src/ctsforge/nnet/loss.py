"""Additive-margin cosine (AM-softmax) loss.

Logits are scaled cosines between the length-normalized embedding-branch
output and length-normalized classifier rows; the margin is subtracted
from the true-class cosine before scaling:

    loss = mean_i  -ln  exp(s(cos t_y - m))
                       ---------------------------------------
                       exp(s(cos t_y - m)) + sum_{j!=y} exp(s cos t_j)

With m=0, s=1 this is exactly softmax cross-entropy over raw cosines.
"""

from dataclasses import dataclass

import numpy as np

from ctsforge.nnet.model import NORM_EPS


@dataclass(frozen=True, slots=True)
class AmSoftmaxParams:
    """Margin and scale of the cosine loss."""

    margin: float = 0.2
    scale: float = 40.0

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError(f"margin must be >= 0, got {self.margin}")
        if self.scale <= 0:
            raise ValueError(f"scale must be > 0, got {self.scale}")


def _normalize_rows(x):
    sq = np.sum(x * x, axis=1, keepdims=True)
    if np.any(sq == 0.0):
        raise ValueError("zero-norm row; cosine is undefined")
    norm = np.sqrt(sq + NORM_EPS)
    return x / norm, norm


def _forward_parts(embeddings, weight, labels, params):
    embeddings = np.asarray(embeddings, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    labels = np.asarray(labels)
    if embeddings.shape[0] < 1:
        raise ValueError("need at least one sample")
    if labels.shape[0] != embeddings.shape[0]:
        raise ValueError("labels do not match batch size")
    if np.any(labels < 0) or np.any(labels >= weight.shape[0]):
        raise ValueError("label outside [0, n_speakers)")
    e_hat, e_norm = _normalize_rows(embeddings)
    w_hat, w_norm = _normalize_rows(weight)
    cosines = e_hat @ w_hat.T
    rows = np.arange(labels.shape[0])
    logits = params.scale * cosines
    logits[rows, labels] = params.scale * (cosines[rows, labels] - params.margin)
    shift = logits.max(axis=1, keepdims=True)
    exp = np.exp(logits - shift)
    denom = exp.sum(axis=1)
    log_probs = logits - shift - np.log(denom)[:, None]
    loss = -float(np.mean(log_probs[rows, labels]))
    probs = exp / denom[:, None]
    return loss, cosines, probs, e_hat, e_norm, w_hat, w_norm, rows, labels


def am_softmax_loss(embeddings, weight, labels, params=AmSoftmaxParams()):
    """Mean margin-penalized cross-entropy over a batch.

    Args:
        embeddings: (batch, d) raw embedding-branch outputs.
        weight: (n_speakers, d) unnormalized classifier rows.
        labels: (batch,) integer speaker ids.
        params: margin and scale.

    Returns:
        Tuple (loss, cosines) where cosines is the (batch, n_speakers)
        matrix of unmargined cosine similarities.

    Raises:
        ValueError: empty batch, label out of range, or a zero-norm row.
    """
    loss, cosines = _forward_parts(embeddings, weight, labels, params)[:2]
    return loss, cosines


def am_softmax_grads(embeddings, weight, labels, params=AmSoftmaxParams()):
    """Loss plus analytic gradients with respect to both inputs.

    Returns:
        Tuple (loss, cosines, grad_embeddings, grad_weight).
    """
    (loss, cosines, probs, e_hat, e_norm, w_hat, w_norm, rows,
     labels) = _forward_parts(embeddings, weight, labels, params)
    d_logits = probs.copy()
    d_logits[rows, labels] -= 1.0
    d_logits /= labels.shape[0]
    d_cos = params.scale * d_logits
    d_ehat = d_cos @ w_hat
    d_what = d_cos.T @ e_hat
    embeddings = np.asarray(embeddings, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    # d/dx of x/||x||: project out the radial component, divide by the norm
    dot_e = np.sum(d_ehat * embeddings, axis=1, keepdims=True)
    grad_emb = d_ehat / e_norm - embeddings * dot_e / e_norm**3
    dot_w = np.sum(d_what * weight, axis=1, keepdims=True)
    grad_weight = d_what / w_norm - weight * dot_w / w_norm**3
    return loss, cosines, grad_emb, grad_weight
