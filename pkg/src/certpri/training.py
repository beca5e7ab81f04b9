"""Full-batch Adam training for small dense models."""

from __future__ import annotations

import numpy as np

from .data import Dataset
from .model import Layer, Model, ModelError, dense_model
from .sampling import make_rng


class TrainingDiverged(RuntimeError):
    pass


def _loss_head(model: Model, ds: Dataset):
    n = len(ds)
    if model.task == "classification":
        onehot = np.eye(model.output_dim)[ds.labels]

        def head(probs):
            p = np.clip(probs, 1e-300, None)
            loss = -np.sum(onehot * np.log(p), axis=1) / n
            return loss, -onehot / p / n

        return head
    t = ds.targets

    def head(out):
        r = out - t
        return np.sum(r * r, axis=1) / n, 2.0 * r / n

    return head


def train(model: Model, ds: Dataset, epochs: int = 500, lr: float = 1e-2, weight_decay: float = 0.0) -> Model:
    """Adam on the mean cross-entropy (classifiers) or mean squared error (regressors)."""
    if model.task == "classification":
        if ds.labels is None:
            raise ModelError("training a classifier needs labels")
        ds.validate_labels(model.output_dim)
    elif ds.targets is None or ds.targets.shape[1] != model.output_dim:
        raise ModelError("training a regressor needs one target column per output")
    params = [[l.weights.copy(), l.bias.copy()] for l in model.layers]
    acts = [l.activation for l in model.layers]
    m = [[np.zeros_like(a) for a in p] for p in params]
    v = [[np.zeros_like(a) for a in p] for p in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    head = _loss_head(model, ds)
    current = model
    for step in range(1, epochs + 1):
        losses, _, grads = current.backward(ds.inputs, head, param_grads=True)
        loss = float(np.sum(losses))
        if not np.isfinite(loss):
            raise TrainingDiverged(f"loss became non-finite at epoch {step}")
        for li, (gw, gb) in enumerate(grads):
            for pi, g in enumerate((gw, gb)):
                if weight_decay and pi == 0:
                    g = g + weight_decay * params[li][pi]
                m[li][pi] = b1 * m[li][pi] + (1 - b1) * g
                v[li][pi] = b2 * v[li][pi] + (1 - b2) * g * g
                mhat = m[li][pi] / (1 - b1**step)
                vhat = v[li][pi] / (1 - b2**step)
                params[li][pi] = params[li][pi] - lr * mhat / (np.sqrt(vhat) + eps)
        current = Model(model.signature, tuple(Layer(w, b, a) for (w, b), a in zip(params, acts)))
    return current


def accuracy(model: Model, ds: Dataset) -> float:
    return float(np.mean(model.predict_label(ds.inputs) == ds.labels))


def mse(model: Model, ds: Dataset) -> float:
    r = model.forward(ds.inputs) - ds.targets
    return float(np.mean(r * r))


def train_toy(train_ds: Dataset, hidden=(16,), activation: str = "tanh", task: str = "classification",
              num_outputs: int | None = None, epochs: int = 500, lr: float = 1e-2, seed: int = 0,
              output_bounds=None) -> Model:
    """Initialize a dense model from ``seed`` and train it on ``train_ds``."""
    if num_outputs is None:
        num_outputs = int(train_ds.labels.max()) + 1 if task == "classification" else train_ds.targets.shape[1]
    sizes = [train_ds.dim, *hidden, num_outputs]
    acts = [activation] * len(hidden) + ["identity"]
    init = dense_model(sizes, acts, task=task, rng=make_rng(seed), output_bounds=output_bounds)
    if epochs == 0:
        return init
    return train(init, train_ds, epochs=epochs, lr=lr)
