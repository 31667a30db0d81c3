"""Training loop: balanced batches, AM-softmax loss, momentum SGD.

Writes a per-step TSV log (epoch, step, lr, loss, accuracy) so runs can
be inspected or plotted without re-running anything.
"""

import numpy as np

from ctsforge.nnet.loss import AmSoftmaxParams, am_softmax_grads
from ctsforge.nnet.optim import lr_schedule, sgd_step
from ctsforge.nnet.sampler import sample_epoch
from ctsforge.seeding import derive_rng

LOG_HEADER = "epoch\tstep\tlr\tloss\taccuracy"


def loss_and_grads(model, chunks, labels, params=AmSoftmaxParams()):
    """Full forward plus backward for one batch.

    Returns:
        Tuple (loss, accuracy, grads) where grads covers every model
        parameter including the classifier weight.
    """
    result = model.forward(chunks, scale=params.scale, keep_cache=True)
    branch_out = result.cache["branch_out"]
    loss, cosines, grad_branch, grad_cls = am_softmax_grads(
        branch_out, model.params["classifier.weight"], labels, params)
    grads = model.backward(result.cache, grad_branch)
    grads["classifier.weight"] = grad_cls
    accuracy = float(np.mean(cosines.argmax(axis=1) == labels))
    return loss, accuracy, grads


def train(model, state, speaker_to_segments, n_epochs, seed,
          loss_params=AmSoftmaxParams(), chunk_len=100, log_path=None,
          schedule=lr_schedule, augment_fn=None):
    """Trains the model in place for n_epochs.

    Args:
        model: EtdnnModel to optimize.
        state: TrainState (velocities, base_lr, momentum, batch_size).
        speaker_to_segments: mapping speakerid -> list of (t, f) arrays;
            ids must be dense class indices in [0, model n_speakers).
        n_epochs: epochs to run, starting from state.epoch.
        seed: base seed; each epoch's sampling stream is derived from it.
        loss_params: AM-softmax margin and scale.
        chunk_len: frames per training chunk.
        log_path: optional TSV log destination.
        schedule: maps (epoch, base_lr) -> step size.
        augment_fn: optional (chunks, rng) -> chunks hook applied to each
            sampled batch before the forward pass (on-the-fly masking).

    Returns:
        List of (epoch, step, lr, loss, accuracy) tuples, one per step.

    Raises:
        TrainingDiverged: propagated from sgd_step on non-finite gradients.
    """
    history = []
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        if log_fh:
            log_fh.write(LOG_HEADER + "\n")
        for _ in range(n_epochs):
            epoch = state.epoch
            lr = schedule(epoch, state.base_lr)
            rng = derive_rng(seed, "train-epoch", epoch)
            for step, (chunks, labels) in enumerate(
                    sample_epoch(speaker_to_segments, state.batch_size,
                                 chunk_len, rng)):
                if augment_fn is not None:
                    chunks = augment_fn(chunks, rng)
                loss, accuracy, grads = loss_and_grads(
                    model, chunks, labels, loss_params)
                sgd_step(state, model.params, grads, lr)
                history.append((epoch, step, lr, loss, accuracy))
                if log_fh:
                    log_fh.write(f"{epoch}\t{step}\t{lr:.6g}\t{loss:.6f}\t"
                                 f"{accuracy:.4f}\n")
            state.epoch += 1
    finally:
        if log_fh:
            log_fh.close()
    return history


def read_training_log(path):
    """Reads a TSV log written by train(); returns rows as tuples."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != LOG_HEADER:
            raise ValueError(f"bad training log header {header!r}")
        for raw in fh:
            epoch, step, lr, loss, acc = raw.rstrip("\n").split("\t")
            rows.append((int(epoch), int(step), float(lr), float(loss),
                         float(acc)))
    return rows
