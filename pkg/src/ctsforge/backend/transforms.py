"""Embedding transforms: centering/whitening, length norm, LDA.

The fixed pipeline order is center -> whiten -> length-normalize ->
(optional) LDA.  Cosine scoring consumes the pre-LDA normalized vectors;
PLDA consumes the LDA outputs.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

COV_EPS = 1e-10
LDA_RIDGE_SCALE = 1e-6

ORIGIN_KINDS = ("original", "degraded")


@dataclass(frozen=True)
class LabeledEmbeddingSet:
    """Embeddings with speaker labels and an original/degraded flag each."""

    vectors: np.ndarray
    labels: np.ndarray
    origins: np.ndarray = None

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        labels = np.asarray(self.labels)
        if vectors.ndim != 2:
            raise ValueError("vectors must be a (n, d) matrix")
        if labels.shape != (vectors.shape[0],):
            raise ValueError("one label per vector required")
        if self.origins is None:
            origins = np.full(vectors.shape[0], "original")
        else:
            origins = np.asarray(self.origins)
            if origins.shape != (vectors.shape[0],):
                raise ValueError("one origin flag per vector required")
            bad = set(origins.tolist()) - set(ORIGIN_KINDS)
            if bad:
                raise ValueError(f"unknown origin flags {sorted(bad)}")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "origins", origins)

    def original_only(self):
        """Subset containing only vectors flagged as original speech."""
        keep = self.origins == "original"
        return LabeledEmbeddingSet(self.vectors[keep], self.labels[keep],
                                   self.origins[keep])


@dataclass(frozen=True)
class Gaussianizer:
    """Centering mean and ZCA whitening matrix."""

    mean: np.ndarray
    whitener: np.ndarray

    def transform(self, vectors):
        vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        if vectors.shape[1] != self.mean.shape[0]:
            raise ValueError(
                f"vectors of width {vectors.shape[1]} do not match the "
                f"fitted dimension {self.mean.shape[0]}"
            )
        return (vectors - self.mean) @ self.whitener.T


@dataclass(frozen=True)
class LdaTransform:
    """Discriminant projection with its generalized eigenvalues."""

    projection: np.ndarray
    eigenvalues: np.ndarray

    def transform(self, vectors):
        vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        if vectors.shape[1] != self.projection.shape[1]:
            raise ValueError(
                f"vectors of width {vectors.shape[1]} do not match the "
                f"LDA input dimension {self.projection.shape[1]}"
            )
        return vectors @ self.projection.T


def fit_center_whiten(vectors):
    """Fits the sample mean and a ZCA whitening transform.

    The whitener is U diag(lambda^-1/2) U^T from the eigendecomposition of
    the sample covariance, with eigenvalues floored at cov_eps; symmetric
    (ZCA) whitening is the rotation-minimal choice.

    Args:
        vectors: (n, d) embedding matrix, n > d.

    Returns:
        Gaussianizer.

    Raises:
        ValueError: n <= d (covariance singular by construction; reduce d
            or supply more vectors), or zero covariance (constant data).
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    n, d = vectors.shape
    if n <= d:
        raise ValueError(
            f"need more vectors than dimensions to whiten ({n} <= {d}); "
            "reduce the embedding width or fit on more segments"
        )
    mean = vectors.mean(axis=0)
    centered = vectors - mean
    cov = centered.T @ centered / n
    evals, evecs = scipy.linalg.eigh(cov)
    if np.all(evals <= COV_EPS):
        raise ValueError("covariance is numerically zero (constant data); "
                         "cannot whiten")
    evals = np.maximum(evals, COV_EPS)
    whitener = (evecs / np.sqrt(evals)) @ evecs.T
    return Gaussianizer(mean=mean, whitener=whitener)


def length_norm(vectors):
    """Projects vectors onto the unit sphere.

    Accepts a single d-vector or an (n, d) matrix of rows.

    Raises:
        ValueError: any zero vector.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim == 1:
        norm = np.linalg.norm(vectors)
        if norm == 0.0:
            raise ValueError("cannot length-normalize the zero vector")
        return vectors / norm
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("cannot length-normalize a zero vector")
    return vectors / norms


def fit_lda(emb_set, d_out):
    """Fits LDA by solving the generalized eigenproblem S_b v = lambda S_w v.

    S_w is regularized by ridge*I with ridge = 1e-6 * trace(S_w)/d before
    the solve.  Projection rows are ordered by descending eigenvalue.

    Args:
        emb_set: LabeledEmbeddingSet (>= 2 classes).
        d_out: output dimensionality, <= min(d, n_classes - 1).

    Returns:
        LdaTransform.

    Raises:
        ValueError: too few classes or d_out above the rank bound.
    """
    x = emb_set.vectors
    labels = emb_set.labels
    n, d = x.shape
    classes = np.unique(labels)
    if classes.shape[0] < 2:
        raise ValueError("LDA needs at least two classes")
    bound = min(d, classes.shape[0] - 1)
    if not 1 <= d_out <= bound:
        raise ValueError(
            f"d_out={d_out} outside [1, {bound}] "
            f"(d={d}, n_classes={classes.shape[0]})"
        )
    mean = x.mean(axis=0)
    s_w = np.zeros((d, d))
    s_b = np.zeros((d, d))
    for c in classes:
        xc = x[labels == c]
        mu_c = xc.mean(axis=0)
        centered = xc - mu_c
        s_w += centered.T @ centered
        gap = mu_c - mean
        s_b += xc.shape[0] * np.outer(gap, gap)
    s_w /= n
    s_b /= n
    ridge = LDA_RIDGE_SCALE * np.trace(s_w) / d
    evals, evecs = scipy.linalg.eigh(s_b, s_w + ridge * np.eye(d))
    order = np.argsort(evals)[::-1][:d_out]
    return LdaTransform(projection=np.ascontiguousarray(evecs[:, order].T),
                        eigenvalues=evals[order])


def apply_backend(gauss, lda, vectors):
    """Runs vectors through center -> whiten -> length-norm -> optional LDA.

    Args:
        gauss: fitted Gaussianizer.
        lda: fitted LdaTransform or None to stop at length normalization.
        vectors: (n, d) matrix or single d-vector.

    Returns:
        Processed (n, d_out) matrix (always 2-D).
    """
    processed = length_norm(gauss.transform(vectors))
    if lda is not None:
        processed = lda.transform(processed)
    return processed
