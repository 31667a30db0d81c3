"""Extended-TDNN model: topology, forward/backward passes, serialization.

The network is a stack of frame-level layers (dilated temporal
convolutions alternating with per-frame dense layers, PReLU after each),
a statistics-pooling layer concatenating per-channel mean and standard
deviation over time, and two segment-level dense layers.  Embeddings are
read from the affine output of the first segment-level layer, before its
nonlinearity.  The classifier head holds one weight row per training
speaker; cosine logits compare the length-normalized output of the last
segment-level layer against the length-normalized rows.

All arithmetic is float64; the model file stores parameters as float32.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ctsforge import kernels

FRAME_KINDS = ("frame_tdnn", "frame_dense")
LAYER_KINDS = FRAME_KINDS + ("seg_dense",)

MODEL_MAGIC = b"ETDN"

VAR_EPS = 1e-10
NORM_EPS = 1e-12
PRELU_INIT = 0.25


@dataclass(frozen=True, slots=True)
class LayerSpec:
    """One hidden layer: kind, temporal extent, and width."""

    kind: str
    kernel: int
    dilation: int
    out_channels: int

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kernel < 1 or self.dilation < 1 or self.out_channels < 1:
            raise ValueError("kernel, dilation and out_channels must be >= 1")
        if self.kind != "frame_tdnn" and (self.kernel != 1 or self.dilation != 1):
            raise ValueError(f"{self.kind} layers must have kernel=dilation=1")


@dataclass(frozen=True)
class EtdnnConfig:
    """Network shape: ordered layer specs plus head dimensions.

    Frame-level layers must all precede the segment-level ones, and the
    pooled dimension is fixed at twice the width of the last frame-level
    layer (mean plus standard deviation halves).
    """

    feat_dim: int
    layers: tuple = field(default_factory=tuple)
    n_speakers: int = 2

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        n_frame = len(self.frame_layers)
        n_seg = len(self.seg_layers)
        if n_frame < 1 or n_seg < 1:
            raise ValueError("need at least one frame-level and one "
                             "segment-level layer")
        if any(spec.kind != "seg_dense" for spec in layers[n_frame:]):
            raise ValueError("all frame-level layers must precede "
                             "segment-level layers")
        if self.feat_dim < 1 or self.n_speakers < 1:
            raise ValueError("feat_dim and n_speakers must be >= 1")

    @property
    def frame_layers(self):
        return tuple(s for s in self.layers if s.kind in FRAME_KINDS)

    @property
    def seg_layers(self):
        return tuple(s for s in self.layers if s.kind == "seg_dense")

    @property
    def pooled_dim(self):
        return 2 * self.frame_layers[-1].out_channels

    @property
    def embed_dim(self):
        return self.seg_layers[0].out_channels

    @property
    def receptive_field(self):
        """Frames consumed to produce one frame-level output."""
        return 1 + sum((s.kernel - 1) * s.dilation for s in self.frame_layers)

    def param_shapes(self):
        """Yields (name, shape) for every parameter in declaration order."""
        c_in = self.feat_dim
        for i, spec in enumerate(self.frame_layers):
            yield f"frame{i}.weight", (spec.kernel, c_in, spec.out_channels)
            yield f"frame{i}.bias", (spec.out_channels,)
            yield f"frame{i}.slope", (spec.out_channels,)
            c_in = spec.out_channels
        d_in = self.pooled_dim
        for i, spec in enumerate(self.seg_layers):
            yield f"seg{i}.weight", (d_in, spec.out_channels)
            yield f"seg{i}.bias", (spec.out_channels,)
            yield f"seg{i}.slope", (spec.out_channels,)
            d_in = spec.out_channels
        yield "classifier.weight", (self.n_speakers, d_in)


def standard_config(n_speakers, feat_dim=64, channels=512, pool_channels=1500,
                    embed_dim=512):
    """Full-scale topology: 9 frame-level layers, pooling, 2 segment-level.

    The frame stack alternates dilated convolutions with per-frame dense
    layers -- (k=5,d=1), (k=1), (k=3,d=2), (k=1), (k=3,d=3), (k=1),
    (k=3,d=4), (k=1), then a k=1 widening layer feeding the pooling.
    """
    layers = [
        LayerSpec("frame_tdnn", 5, 1, channels),
        LayerSpec("frame_dense", 1, 1, channels),
        LayerSpec("frame_tdnn", 3, 2, channels),
        LayerSpec("frame_dense", 1, 1, channels),
        LayerSpec("frame_tdnn", 3, 3, channels),
        LayerSpec("frame_dense", 1, 1, channels),
        LayerSpec("frame_tdnn", 3, 4, channels),
        LayerSpec("frame_dense", 1, 1, channels),
        LayerSpec("frame_dense", 1, 1, pool_channels),
        LayerSpec("seg_dense", 1, 1, embed_dim),
        LayerSpec("seg_dense", 1, 1, embed_dim),
    ]
    return EtdnnConfig(feat_dim=feat_dim, layers=tuple(layers),
                       n_speakers=n_speakers)


def desk_config(n_speakers, feat_dim=64, channels=64, pool_channels=128,
                embed_dim=64):
    """Same 11-layer topology at widths small enough for one CPU."""
    return standard_config(n_speakers, feat_dim=feat_dim, channels=channels,
                           pool_channels=pool_channels, embed_dim=embed_dim)


@dataclass
class ForwardResult:
    """Everything a forward pass produces.

    frame_out:  (batch, t_out, c) activations of the last frame layer
    pooled:     (batch, 2c) mean/std statistics
    embedding:  (batch, embed_dim) pre-nonlinearity first-segment-layer affine
    cosines:    (batch, n_speakers) raw cosine similarities
    logits:     (batch, n_speakers) scale * cosines
    cache:      intermediate arrays for backward(), or None
    """

    frame_out: np.ndarray
    pooled: np.ndarray
    embedding: np.ndarray
    cosines: np.ndarray
    logits: np.ndarray
    cache: dict = None


def _prelu(z, slope):
    return np.where(z > 0.0, z, slope * z)


def _prelu_backward(z, slope, grad_out, axes):
    grad_z = grad_out * np.where(z > 0.0, 1.0, slope)
    grad_slope = np.sum(grad_out * np.minimum(z, 0.0), axis=axes)
    return grad_z, grad_slope


def stats_pool(frames):
    """Pools a (t, c) matrix into a 2c vector of means and deviations.

    The first c entries are per-channel means, the last c are
    sqrt(population variance + var_eps).
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise ValueError("stats_pool needs a non-empty (t, c) matrix")
    mean = frames.mean(axis=0)
    var = np.mean((frames - mean) ** 2, axis=0)
    return np.concatenate([mean, np.sqrt(var + VAR_EPS)])


def _stats_pool_batch(h):
    """Batched pooling: (b, t, c) -> pooled (b, 2c) plus backward cache."""
    mean = h.mean(axis=1)
    centered = h - mean[:, None, :]
    var = np.mean(centered * centered, axis=1)
    std = np.sqrt(var + VAR_EPS)
    pooled = np.concatenate([mean, std], axis=1)
    return pooled, (centered, std)


def _stats_pool_backward(pool_cache, grad_pooled):
    centered, std = pool_cache
    t = centered.shape[1]
    c = std.shape[1]
    g_mean = grad_pooled[:, :c]
    g_std = grad_pooled[:, c:]
    grad_h = g_mean[:, None, :] / t
    grad_h = grad_h + (g_std / (t * std))[:, None, :] * centered
    return np.ascontiguousarray(grad_h)


class EtdnnModel:
    """Parameter container with explicit forward and backward passes."""

    def __init__(self, config, params):
        self.config = config
        self.params = params

    @classmethod
    def init(cls, config, rng):
        """Random initialization: uniform fan-in scaling, PReLU slopes 0.25.

        Hidden weights use the variance-preserving gain for a rectifier
        with negative slope 0.25, sqrt(2 / (1 + 0.25^2)); without it the
        nine-layer frame stack shrinks activations by orders of magnitude
        and the pooled statistics start near zero.
        """
        gain = np.sqrt(2.0 / (1.0 + PRELU_INIT**2))
        params = {}
        for name, shape in config.param_shapes():
            if name.endswith(".slope"):
                params[name] = np.full(shape, PRELU_INIT, dtype=np.float64)
                continue
            fan_in = int(np.prod(shape[:-1])) if len(shape) > 1 else shape[0]
            if name.endswith(".bias"):
                fan_in = int(np.prod(
                    params[name.replace(".bias", ".weight")].shape[:-1]))
                bound = 1.0 / np.sqrt(fan_in)
            elif name == "classifier.weight":
                bound = 1.0 / np.sqrt(shape[1])
            else:
                bound = gain * np.sqrt(3.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, shape)
        return cls(config, params)

    def forward(self, x, scale=40.0, keep_cache=False):
        """Runs a batch of chunks through the network.

        Args:
            x: (batch, t, feat_dim) float64 chunks, t >= receptive field.
            scale: cosine logit scale (the loss margin is not applied here).
            keep_cache: retain intermediates so backward() can run.

        Returns:
            ForwardResult.
        """
        x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
        if x.ndim != 3:
            raise ValueError("expected a (batch, t, feat) array")
        rf = self.config.receptive_field
        if x.shape[1] < rf:
            raise ValueError(
                f"chunk of {x.shape[1]} frames is shorter than the "
                f"receptive field ({rf})"
            )
        cache = {"frame_in": [], "frame_pre": [], "seg_in": [], "seg_pre": []}
        h = x
        for i, spec in enumerate(self.config.frame_layers):
            w = self.params[f"frame{i}.weight"]
            b = self.params[f"frame{i}.bias"]
            z = kernels.conv1d_forward(h, w, b, spec.dilation)
            cache["frame_in"].append(h)
            cache["frame_pre"].append(z)
            h = _prelu(z, self.params[f"frame{i}.slope"])
        frame_out = h
        pooled, pool_cache = _stats_pool_batch(h)
        cache["pool"] = pool_cache
        h = pooled
        embedding = None
        for i in range(len(self.config.seg_layers)):
            w = self.params[f"seg{i}.weight"]
            b = self.params[f"seg{i}.bias"]
            z = h @ w + b
            cache["seg_in"].append(h)
            cache["seg_pre"].append(z)
            if i == 0:
                embedding = z
            h = _prelu(z, self.params[f"seg{i}.slope"])
        cosines = cosine_scores(h, self.params["classifier.weight"])
        cache["branch_out"] = h
        return ForwardResult(
            frame_out=frame_out,
            pooled=pooled,
            embedding=embedding,
            cosines=cosines,
            logits=scale * cosines,
            cache=cache if keep_cache else None,
        )

    def backward(self, cache, grad_branch):
        """Backpropagates from the embedding-branch output to every
        frame/segment parameter.

        Args:
            cache: the cache from forward(..., keep_cache=True).
            grad_branch: loss gradient at the last segment layer's
                post-nonlinearity output, shape (batch, d).

        Returns:
            Dict of gradients keyed like self.params (classifier.weight
            excluded; its gradient belongs to the loss).
        """
        grads = {}
        g = grad_branch
        for i in reversed(range(len(self.config.seg_layers))):
            z = cache["seg_pre"][i]
            h_in = cache["seg_in"][i]
            g, g_slope = _prelu_backward(z, self.params[f"seg{i}.slope"], g,
                                         axes=(0,))
            grads[f"seg{i}.slope"] = g_slope
            grads[f"seg{i}.weight"] = h_in.T @ g
            grads[f"seg{i}.bias"] = g.sum(axis=0)
            g = g @ self.params[f"seg{i}.weight"].T
        g = _stats_pool_backward(cache["pool"], g)
        frame_specs = self.config.frame_layers
        for i in reversed(range(len(frame_specs))):
            z = cache["frame_pre"][i]
            g, g_slope = _prelu_backward(z, self.params[f"frame{i}.slope"], g,
                                         axes=(0, 1))
            grads[f"frame{i}.slope"] = g_slope
            g = np.ascontiguousarray(g)
            g_x, g_w, g_b = kernels.conv1d_backward(
                cache["frame_in"][i], self.params[f"frame{i}.weight"],
                frame_specs[i].dilation, g)
            grads[f"frame{i}.weight"] = g_w
            grads[f"frame{i}.bias"] = g_b
            g = g_x
        return grads


def cosine_scores(branch_out, weight, eps=NORM_EPS):
    """Cosines between normalized branch outputs and normalized class rows."""
    e_norm = np.sqrt(np.sum(branch_out * branch_out, axis=1, keepdims=True) + eps)
    w_norm = np.sqrt(np.sum(weight * weight, axis=1, keepdims=True) + eps)
    return (branch_out / e_norm) @ (weight / w_norm).T


def extract_embedding(model, feats):
    """Embeds one segment: frame layers, pooling, first-segment-layer affine.

    The whole segment is consumed (no chunking), and the returned vector is
    the affine output before the nonlinearity.

    Args:
        model: a trained EtdnnModel.
        feats: FeatureMatrix or (t, f) array, t >= receptive field.

    Returns:
        (embed_dim,) float64 vector.
    """
    values = getattr(feats, "values", feats)
    result = model.forward(np.asarray(values, dtype=np.float64)[None])
    return result.embedding[0]


def write_model(path, model):
    """Writes magic, a JSON config block, then float32 parameters in
    declaration order."""
    cfg = model.config
    blob = json.dumps({
        "feat_dim": cfg.feat_dim,
        "n_speakers": cfg.n_speakers,
        "layers": [
            {"kind": s.kind, "kernel": s.kernel, "dilation": s.dilation,
             "out_channels": s.out_channels}
            for s in cfg.layers
        ],
    }).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name, shape in cfg.param_shapes():
            arr = model.params[name]
            if arr.shape != shape:
                raise ValueError(f"parameter {name} has shape {arr.shape}, "
                                 f"expected {shape}")
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_model(path):
    """Reads a model file written by :func:`write_model`."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MODEL_MAGIC:
            raise ValueError(f"bad model magic {magic!r}")
        (blob_len,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(blob_len).decode("utf-8"))
        config = EtdnnConfig(
            feat_dim=meta["feat_dim"],
            layers=tuple(LayerSpec(d["kind"], d["kernel"], d["dilation"],
                                   d["out_channels"]) for d in meta["layers"]),
            n_speakers=meta["n_speakers"],
        )
        params = {}
        for name, shape in config.param_shapes():
            n = int(np.prod(shape))
            raw = fh.read(4 * n)
            if len(raw) != 4 * n:
                raise ValueError(f"model file truncated at parameter {name}")
            params[name] = np.frombuffer(raw, dtype="<f4").astype(
                np.float64).reshape(shape)
        trailing = fh.read(1)
        if trailing:
            raise ValueError("trailing bytes after final parameter")
    return EtdnnModel(config, params)
