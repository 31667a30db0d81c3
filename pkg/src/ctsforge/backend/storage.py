"""Binary files for fitted backend transforms and models.

Each file starts with a 4-byte magic ("GAUS", "LDA0", "PLDA"), then
little-endian uint32 dimensions, then float64 little-endian matrices
row-major in the documented order.
"""

import struct

import numpy as np

from ctsforge.backend.plda import PldaModel
from ctsforge.backend.transforms import Gaussianizer, LdaTransform

GAUS_MAGIC = b"GAUS"
LDA_MAGIC = b"LDA0"
PLDA_MAGIC = b"PLDA"


def _write_f64(fh, arr):
    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_f64(fh, shape):
    n = int(np.prod(shape))
    raw = fh.read(8 * n)
    if len(raw) != 8 * n:
        raise ValueError("file truncated")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def _check_magic(fh, expected):
    magic = fh.read(4)
    if magic != expected:
        raise ValueError(f"bad magic {magic!r}, expected {expected!r}")


def write_gaussianizer(path, gauss):
    """GAUS file: d, then mean (d) and whitener (d x d)."""
    d = gauss.mean.shape[0]
    with open(path, "wb") as fh:
        fh.write(GAUS_MAGIC)
        fh.write(struct.pack("<I", d))
        _write_f64(fh, gauss.mean)
        _write_f64(fh, gauss.whitener)


def read_gaussianizer(path):
    with open(path, "rb") as fh:
        _check_magic(fh, GAUS_MAGIC)
        (d,) = struct.unpack("<I", fh.read(4))
        mean = _read_f64(fh, (d,))
        whitener = _read_f64(fh, (d, d))
    return Gaussianizer(mean=mean, whitener=whitener)


def write_lda(path, lda):
    """LDA0 file: d_out, d_in, then projection (d_out x d_in) and
    eigenvalues (d_out)."""
    d_out, d_in = lda.projection.shape
    with open(path, "wb") as fh:
        fh.write(LDA_MAGIC)
        fh.write(struct.pack("<II", d_out, d_in))
        _write_f64(fh, lda.projection)
        _write_f64(fh, lda.eigenvalues)


def read_lda(path):
    with open(path, "rb") as fh:
        _check_magic(fh, LDA_MAGIC)
        d_out, d_in = struct.unpack("<II", fh.read(8))
        projection = _read_f64(fh, (d_out, d_in))
        eigenvalues = _read_f64(fh, (d_out,))
    return LdaTransform(projection=projection, eigenvalues=eigenvalues)


def write_plda(path, model):
    """PLDA file: d, then mu (d), between covariance and within covariance
    (each d x d)."""
    d = model.dim
    with open(path, "wb") as fh:
        fh.write(PLDA_MAGIC)
        fh.write(struct.pack("<I", d))
        _write_f64(fh, model.mu)
        _write_f64(fh, model.between_cov)
        _write_f64(fh, model.within_cov)


def read_plda(path):
    with open(path, "rb") as fh:
        _check_magic(fh, PLDA_MAGIC)
        (d,) = struct.unpack("<I", fh.read(4))
        mu = _read_f64(fh, (d,))
        between = _read_f64(fh, (d, d))
        within = _read_f64(fh, (d, d))
    return PldaModel(mu=mu, between_cov=between, within_cov=within)
