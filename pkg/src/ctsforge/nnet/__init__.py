"""Extended-TDNN speaker embedding extractor with hand-rolled backprop.

Submodules:
    model    network topology, forward/backward, embedding extraction, file io
    loss     additive-margin cosine (AM-softmax) loss and its gradients
    optim    SGD with classical momentum and the stepped lr schedule
    sampler  speaker-balanced batch stream over fixed-length feature chunks
    train    the training loop gluing the above together, with TSV logging
"""

from ctsforge.nnet.loss import AmSoftmaxParams, am_softmax_grads, am_softmax_loss
from ctsforge.nnet.model import (
    EtdnnConfig,
    EtdnnModel,
    ForwardResult,
    LayerSpec,
    desk_config,
    extract_embedding,
    read_model,
    standard_config,
    stats_pool,
    write_model,
)
from ctsforge.nnet.optim import TrainingDiverged, TrainState, lr_schedule, sgd_step
from ctsforge.nnet.sampler import sample_epoch
from ctsforge.nnet.train import loss_and_grads, train

__all__ = [
    "AmSoftmaxParams",
    "EtdnnConfig",
    "EtdnnModel",
    "ForwardResult",
    "LayerSpec",
    "TrainState",
    "TrainingDiverged",
    "am_softmax_grads",
    "am_softmax_loss",
    "desk_config",
    "extract_embedding",
    "loss_and_grads",
    "lr_schedule",
    "read_model",
    "sample_epoch",
    "sgd_step",
    "standard_config",
    "stats_pool",
    "train",
    "write_model",
]
