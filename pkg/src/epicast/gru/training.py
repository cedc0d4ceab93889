from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..data import FeatureScaler, WindowedDataset
from ..errors import ConfigError, DivergedLossError, EmptyDatasetError, ShapeMismatchError
from . import kernels
from .params import PARAM_NAMES, GruParams, init_params


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    hidden_size: int = 32
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    finetune_lr_multiplier: float = 0.5
    finetune_epochs: int | None = None
    clip_norm: float | None = None

    def __post_init__(self):
        checks = [
            (self.learning_rate > 0, "learning_rate must be > 0"),
            (isinstance(self.epochs, int) and self.epochs >= 1, "epochs must be an integer >= 1"),
            (isinstance(self.batch_size, int) and self.batch_size >= 1, "batch_size must be >= 1"),
            (isinstance(self.hidden_size, int) and self.hidden_size >= 1, "hidden_size must be >= 1"),
            (0 < self.adam_beta1 < 1, "adam_beta1 must lie in (0, 1)"),
            (0 < self.adam_beta2 < 1, "adam_beta2 must lie in (0, 1)"),
            (self.adam_epsilon > 0, "adam_epsilon must be > 0"),
            (self.finetune_lr_multiplier > 0, "finetune_lr_multiplier must be > 0"),
            (self.finetune_epochs is None or self.finetune_epochs >= 1, "finetune_epochs must be >= 1"),
            (self.clip_norm is None or self.clip_norm > 0, "clip_norm must be > 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def replace(self, **changes) -> "TrainConfig":
        d = asdict(self)
        d.update(changes)
        return TrainConfig(**d)

    def for_finetune(self) -> "TrainConfig":
        return self.replace(
            learning_rate=self.learning_rate * self.finetune_lr_multiplier,
            epochs=self.finetune_epochs or self.epochs,
        )


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def zeros_like(cls, params: GruParams) -> "AdamState":
        return cls([np.zeros_like(t) for t in params.tensors()],
                   [np.zeros_like(t) for t in params.tensors()])


def adam_step(params: GruParams, grads, state: AdamState, config: TrainConfig,
              step_index: int, learning_rate: float | None = None):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``.

    ``grads`` may be a dict keyed by parameter name or a tuple in
    ``PARAM_NAMES`` order.  Inputs are not mutated.
    """
    if step_index < 1:
        raise ValueError("step_index must be >= 1")
    if isinstance(grads, dict):
        grads = tuple(grads[n] for n in PARAM_NAMES)
    lr = config.learning_rate if learning_rate is None else learning_rate
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_epsilon
    bc1 = 1.0 - b1 ** step_index
    bc2 = 1.0 - b2 ** step_index

    new_t, new_m, new_v = [], [], []
    for theta, g, m, v in zip(params.tensors(), grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_t.append(theta - lr * (m / bc1) / (np.sqrt(v / bc2) + eps))
        new_m.append(m)
        new_v.append(v)
    return GruParams.from_tensors(new_t), AdamState(new_m, new_v)


@dataclass(frozen=True, eq=False)
class GruModel:
    params: GruParams
    scaler: FeatureScaler
    lookback: int
    provenance: str = ""

    def __post_init__(self):
        if self.lookback < 1:
            raise ValueError("lookback must be >= 1")

    def predict_scaled(self, window) -> np.ndarray:
        """One-step prediction from an ``(L, 3)`` window of scaled values."""
        window = np.asarray(window, dtype=np.float64)
        if window.shape != (self.lookback, self.params.input_size):
            raise ShapeMismatchError(
                f"expected window of shape ({self.lookback}, {self.params.input_size}), got {window.shape}"
            )
        return kernels.forward_batch(self.params.tensors(), window[None])[0]

    def predict_batch(self, windows) -> np.ndarray:
        return kernels.forward_batch(self.params.tensors(), windows)

    def save(self, path) -> None:
        save_model(self, path)

    @classmethod
    def load(cls, path) -> "GruModel":
        return load_model(path)


@dataclass(frozen=True)
class TrainHistory:
    epoch_loss: tuple

    def __len__(self) -> int:
        return len(self.epoch_loss)


def _clip(grads, max_norm):
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm:
        scale = max_norm / total
        grads = tuple(g * scale for g in grads)
    return grads


def train(dataset: WindowedDataset, config: TrainConfig, initial: GruParams | None = None,
          scaler: FeatureScaler | None = None, provenance: str = "",
          learning_rate: float | None = None) -> tuple[GruModel, TrainHistory]:
    """Mini-batch Adam on mean squared error over scaled targets.

    The sample order is reshuffled every epoch from ``config.seed``; the
    last, smaller batch is kept.  ``scaler`` is the scaler the dataset was
    built with and is stored on the returned model.
    """
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot train on an empty dataset")
    inputs = np.ascontiguousarray(dataset.inputs)
    targets = np.ascontiguousarray(dataset.targets)
    n_features = inputs.shape[2]
    if initial is None:
        params = init_params(n_features, config.hidden_size, config.seed, output_size=targets.shape[1])
    else:
        params = initial
        if params.input_size != n_features or params.output_size != targets.shape[1]:
            raise ShapeMismatchError("initial parameters do not match the dataset feature count")
    lr = config.learning_rate if learning_rate is None else learning_rate

    # Separate stream from init_params so the shuffle does not depend on it.
    rng = np.random.default_rng([config.seed, 1])
    state = AdamState.zeros_like(params)
    n = len(targets)
    step = 0
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            losses, grads = kernels.loss_and_grad_batch(params.tensors(), inputs[idx], targets[idx])
            batch_loss = float(np.sum(losses))
            if not math.isfinite(batch_loss):
                raise DivergedLossError(
                    f"non-finite loss at epoch {epoch + 1}, step {step + 1} (lr={lr})"
                )
            loss_sum += batch_loss
            if config.clip_norm is not None:
                grads = _clip(grads, config.clip_norm)
            step += 1
            params, state = adam_step(params, grads, state, config, step, learning_rate=lr)
        history.append(loss_sum / n)

    model = GruModel(params, scaler if scaler is not None else _identity_scaler(n_features),
                     dataset.lookback, provenance)
    return model, TrainHistory(tuple(history))


def _identity_scaler(n: int) -> FeatureScaler:
    return FeatureScaler(np.zeros(n), np.ones(n))


def save_model(model: GruModel, path) -> None:
    """Write an ``.npz`` archive; float64 tensors round-trip bit-exactly."""
    meta = {
        "format": "epicast-gru/1",
        "lookback": model.lookback,
        "provenance": model.provenance,
        "input_size": model.params.input_size,
        "hidden_size": model.params.hidden_size,
        "output_size": model.params.output_size,
    }
    arrays = {name: np.asarray(t) for name, t in model.params.as_dict().items()}
    arrays["scaler_min"] = model.scaler.minimum
    arrays["scaler_max"] = model.scaler.maximum
    arrays["meta"] = np.array(json.dumps(meta, sort_keys=True))
    with Path(path).open("wb") as fh:
        np.savez(fh, **arrays)


def load_model(path) -> GruModel:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format") != "epicast-gru/1":
            raise ValueError(f"{path}: unrecognised model format {meta.get('format')!r}")
        params = GruParams(**{name: z[name] for name in PARAM_NAMES})
        scaler = FeatureScaler(z["scaler_min"], z["scaler_max"])
    return GruModel(params, scaler, int(meta["lookback"]), meta["provenance"])
