"""Autoencoder training for learning a low-dimensional representation.

Plain mini-batch SGD with a fixed learning rate on mean squared
reconstruction error.  The encoder half (wide tanh layers down to a linear
bottleneck) is returned as the representation model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DataError, NumericError
from .models import FeedForwardModel, Layer, _activation_grad, _apply_activation


@dataclass(frozen=True)
class TrainConfig:
    """Autoencoder recipe.

    A positive `prune_tolerance` enables greedy input pruning after the
    base run: candidate features are zeroed in the encoder's first layer
    (weakest column first), the network is fine-tuned with the column
    clamped, and the prune is kept only if reconstruction MSE stays within
    `prune_tolerance` of the running baseline.  Redundant or structureless
    inputs prune away; informative ones cannot.
    """

    hidden: tuple[int, ...] = (16,)
    latent_dim: int = 2
    epochs: int = 800
    learning_rate: float = 0.05
    batch_size: int = 40
    prune_tolerance: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.hidden or any(h <= 0 for h in self.hidden):
            raise DataError(f"hidden widths must be positive, got {self.hidden}")
        for name in ("latent_dim", "epochs", "batch_size"):
            if getattr(self, name) <= 0:
                raise DataError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise DataError(f"learning rate must be positive, got {self.learning_rate}")
        if self.prune_tolerance < 0:
            raise DataError(
                f"prune_tolerance must be nonnegative, got {self.prune_tolerance}"
            )


def _init_layers(dims: list[int], activations: list[str], rng) -> list[Layer]:
    layers = []
    for fan_in, fan_out, act in zip(dims, dims[1:], activations):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append(Layer(W, np.zeros(fan_out), act))
    return layers


def train_autoencoder(data: Dataset, cfg: TrainConfig) -> FeedForwardModel:
    """Train d -> hidden -> latent -> hidden -> d and return the encoder.

    Hidden layers are tanh; the bottleneck and the reconstruction output are
    linear.  Training is deterministic given cfg.seed.
    """
    encoder, _ = train_autoencoder_with_decoder(data, cfg)
    return encoder


def _run_sgd(
    layers: list[Layer],
    X: np.ndarray,
    cfg: TrainConfig,
    rng,
    epochs: int,
    keep_inputs: np.ndarray,
) -> None:
    """SGD epochs on reconstruction MSE; dropped input columns stay zero."""
    n, d = X.shape
    batch = min(cfg.batch_size, n)
    masked = not keep_inputs.all()
    if masked:
        layers[0].weights[:, ~keep_inputs] = 0.0
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            XB = X[idx]

            acts = [XB]
            zs = []
            A = XB
            for layer in layers:
                Z = A @ layer.weights.T + layer.bias
                A = _apply_activation(layer.activation, Z)
                zs.append(Z)
                acts.append(A)

            residual = A - XB
            epoch_loss += float(np.sum(residual * residual))
            G = 2.0 * residual / (idx.size * d)
            for li in range(len(layers) - 1, -1, -1):
                layer = layers[li]
                GZ = G * _activation_grad(layer.activation, zs[li], acts[li + 1])
                grad_W = GZ.T @ acts[li]
                grad_b = GZ.sum(axis=0)
                G = GZ @ layer.weights
                layer.weights -= cfg.learning_rate * grad_W
                layer.bias -= cfg.learning_rate * grad_b
            if masked:
                layers[0].weights[:, ~keep_inputs] = 0.0

        if not np.isfinite(epoch_loss):
            raise NumericError(f"autoencoder training diverged at epoch {epoch}")


def _mse(layers: list[Layer], X: np.ndarray) -> float:
    A = X
    for layer in layers:
        A = _apply_activation(layer.activation, A @ layer.weights.T + layer.bias)
    return float(np.mean((A - X) ** 2))


def _snapshot(layers: list[Layer]) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(layer.weights.copy(), layer.bias.copy()) for layer in layers]


def _restore(layers: list[Layer], saved) -> None:
    for layer, (W, b) in zip(layers, saved):
        np.copyto(layer.weights, W)
        np.copyto(layer.bias, b)


def train_autoencoder_with_decoder(
    data: Dataset, cfg: TrainConfig
) -> tuple[FeedForwardModel, FeedForwardModel]:
    """Like train_autoencoder, but also returns the full d -> d reconstruction
    network for diagnostics (e.g. measuring reconstruction error)."""
    X = data.rows
    d = data.d
    rng = np.random.default_rng(cfg.seed)

    enc_dims = [d, *cfg.hidden, cfg.latent_dim]
    dec_dims = [cfg.latent_dim, *reversed(cfg.hidden), d]
    enc_acts = ["tanh"] * len(cfg.hidden) + ["identity"]
    dec_acts = ["tanh"] * len(cfg.hidden) + ["identity"]
    layers = _init_layers(enc_dims, enc_acts, rng) + _init_layers(dec_dims, dec_acts, rng)
    n_encoder_layers = len(enc_dims) - 1

    keep = np.ones(d, dtype=bool)
    _run_sgd(layers, X, cfg, rng, cfg.epochs, keep)

    if cfg.prune_tolerance > 0.0:
        finetune_epochs = max(1, cfg.epochs // 4)
        baseline = _mse(layers, X)
        # weakest-read features first; keep at least one input
        order = np.argsort(np.linalg.norm(layers[0].weights, axis=0), kind="stable")
        for feature in order:
            if keep.sum() <= 1:
                break
            saved = _snapshot(layers)
            keep[feature] = False
            _run_sgd(layers, X, cfg, rng, finetune_epochs, keep)
            pruned_mse = _mse(layers, X)
            if pruned_mse <= baseline + cfg.prune_tolerance:
                baseline = pruned_mse
            else:
                keep[feature] = True
                _restore(layers, saved)

    return FeedForwardModel(layers[:n_encoder_layers]), FeedForwardModel(layers)


def reconstruction_mse(autoencoder: FeedForwardModel, data: Dataset) -> float:
    """Mean squared reconstruction error of a trained d -> d network."""
    recon = autoencoder.forward_batch(data.rows)
    return float(np.mean((recon - data.rows) ** 2))
