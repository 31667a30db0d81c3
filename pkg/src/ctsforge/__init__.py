"""Telephony speaker recognition toolkit.

End-to-end desk-scale recipe: corpus segmentation and metadata handling,
log-mel front end with energy SAD and sliding-window mean subtraction,
additive-noise and spectro-temporal-mask augmentation, an extended-TDNN
embedding extractor trained with an additive-margin cosine loss, a
center/whiten/length-norm/LDA/PLDA scoring backend, and EER / min_C
evaluation.
"""

__version__ = "0.1.0"

from ctsforge.errors import ConfigError, CtsforgeError, MetadataError

__all__ = ["__version__", "CtsforgeError", "MetadataError", "ConfigError"]
