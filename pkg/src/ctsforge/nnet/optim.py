"""SGD with classical momentum and the stepped learning-rate schedule."""

from dataclasses import dataclass, field

import numpy as np

from ctsforge.errors import TrainingDiverged


@dataclass
class TrainState:
    """Mutable optimizer state: velocities mirror parameter shapes."""

    base_lr: float = 0.1
    momentum: float = 0.9
    batch_size: int = 512
    epoch: int = 0
    velocity: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params, base_lr=0.1, momentum=0.9, batch_size=512):
        velocity = {name: np.zeros_like(arr) for name, arr in params.items()}
        return cls(base_lr=base_lr, momentum=momentum, batch_size=batch_size,
                   velocity=velocity)


def lr_schedule(epoch, base_lr):
    """Constant for the first five epochs, then halved every other epoch.

    epoch 0..4 -> base_lr; epochs 5,6 -> base_lr/2; 7,8 -> base_lr/4; ...
    """
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    if epoch < 5:
        return base_lr
    return base_lr * 2.0 ** -((epoch - 5) // 2 + 1)


def sgd_step(state, params, grads, lr):
    """One in-place momentum update: v <- mu*v + g; theta <- theta - lr*v.

    Args:
        state: TrainState whose velocity buffers get updated.
        params: dict of parameter arrays, modified in place.
        grads: dict of gradients, same keys and shapes as params.
        lr: step size for this update.

    Raises:
        TrainingDiverged: a gradient contains NaN or infinity.
    """
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ValueError(f"gradient shape {g.shape} does not match "
                             f"parameter {name} {theta.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(
                f"non-finite gradient in {name} "
                f"(|g|_max={np.abs(g[np.isfinite(g)]).max(initial=0.0):.3e})"
            )
        v = state.velocity[name]
        v *= state.momentum
        v += g
        theta -= lr * v
