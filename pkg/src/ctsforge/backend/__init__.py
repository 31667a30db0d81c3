"""Embedding post-processing and scoring backend.

Submodules:
    transforms  centering/whitening, length normalization, LDA, pipeline
    plda        two-covariance PLDA: EM fitting and log-likelihood-ratio scoring
    storage     binary files for fitted transforms and models
"""

from ctsforge.backend.plda import (
    PldaModel,
    PldaScorer,
    cosine_score,
    fit_plda_em,
    plda_llr,
)
from ctsforge.backend.storage import (
    read_gaussianizer,
    read_lda,
    read_plda,
    write_gaussianizer,
    write_lda,
    write_plda,
)
from ctsforge.backend.transforms import (
    Gaussianizer,
    LabeledEmbeddingSet,
    LdaTransform,
    apply_backend,
    fit_center_whiten,
    fit_lda,
    length_norm,
)

__all__ = [
    "Gaussianizer",
    "LabeledEmbeddingSet",
    "LdaTransform",
    "PldaModel",
    "PldaScorer",
    "apply_backend",
    "cosine_score",
    "fit_center_whiten",
    "fit_lda",
    "fit_plda_em",
    "length_norm",
    "plda_llr",
    "read_gaussianizer",
    "read_lda",
    "read_plda",
    "write_gaussianizer",
    "write_lda",
    "write_plda",
]
