import numpy as np

from ..errors import NonFiniteGradient


class SGD:
    """SGD with momentum and L2 weight decay.

    ``g = grad + weight_decay * value``; ``v = momentum * v + g``;
    ``value -= lr * v``.  Gradients are zeroed after each step.
    """

    def __init__(self, params, lr=0.001, weight_decay=0.0005, momentum=0.9):
        if not lr >= 0 or not weight_decay >= 0 or not 0 <= momentum < 1:
            raise ValueError(f"invalid hyperparameters lr={lr} weight_decay={weight_decay} momentum={momentum}")
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.momentum = momentum
        self.velocity = {p.name: np.zeros_like(p.value) for p in self.params}

    def step(self):
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                raise NonFiniteGradient(f"non-finite gradient in {p.name}")
        for p in self.params:
            dt = p.value.dtype.type
            g = p.grad + dt(self.weight_decay) * p.value
            v = self.velocity[p.name]
            v *= dt(self.momentum)
            v += g
            p.value -= dt(self.lr) * v
            p.zero_grad()

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
