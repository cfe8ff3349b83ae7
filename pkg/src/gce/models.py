"""Representation models r: R^d -> R^m and gradients of the translation loss.

Three model kinds are supported: a linear map, a small feed-forward net with
tanh/relu/identity activations, and an opaque external evaluator that is
differentiated by central finite differences.  The smooth part of the
translation loss is ||r(x_bar + delta) - r_bar_target||^2; its gradient with
respect to delta is exact (reverse mode) for the differentiable kinds.
"""

from __future__ import annotations

import json
import shlex
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DataError, NumericError

ACTIVATIONS = ("tanh", "relu", "identity")

DEFAULT_FD_STEP = 1e-4


def _apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "identity":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _activation_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    # derivative of the activation at z, expressed via z or the output a
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0.0).astype(float)
    if name == "identity":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class Layer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weights.ndim != 2:
            raise DataError("layer weights must be a matrix")
        if self.bias.shape != (self.weights.shape[0],):
            raise DataError(
                f"bias shape {self.bias.shape} does not match {self.weights.shape[0]} outputs"
            )
        if self.activation not in ACTIVATIONS:
            raise DataError(f"unknown activation {self.activation!r}")


class FeedForwardModel:
    """Composed affine+activation layers; evaluation is pure and deterministic."""

    kind = "feedforward"

    def __init__(self, layers: list[Layer]):
        if not layers:
            raise DataError("feed-forward model needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.weights.shape[1] != prev.weights.shape[0]:
                raise DataError(
                    f"layer shapes do not chain: {prev.weights.shape} -> {nxt.weights.shape}"
                )
        self.layers = list(layers)
        self.input_dim = layers[0].weights.shape[1]
        self.output_dim = layers[-1].weights.shape[0]

    def forward_batch(self, X: np.ndarray) -> np.ndarray:
        A = _check_batch(X, self.input_dim)
        for layer in self.layers:
            A = _apply_activation(layer.activation, A @ layer.weights.T + layer.bias)
        return A

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_batch(np.asarray(x, dtype=float)[None, :])[0]

    def input_gradient(self, x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """Backpropagate `upstream` (d loss / d output) to the input."""
        a = np.asarray(x, dtype=float)
        zs, acts = [], []
        for layer in self.layers:
            z = layer.weights @ a + layer.bias
            a = _apply_activation(layer.activation, z)
            zs.append(z)
            acts.append(a)
        g = np.asarray(upstream, dtype=float)
        for layer, z, a in zip(reversed(self.layers), reversed(zs), reversed(acts)):
            g = g * _activation_grad(layer.activation, z, a)
            g = layer.weights.T @ g
        return g


class LinearModel(FeedForwardModel):
    """r(x) = A x (+ b).  Stored as a single identity-activation layer."""

    kind = "linear"

    def __init__(self, A: np.ndarray, b: np.ndarray | None = None):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2:
            raise DataError("linear model matrix must be 2-D")
        self.has_offset = b is not None
        bias = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)
        super().__init__([Layer(A, bias, "identity")])

    @property
    def matrix(self) -> np.ndarray:
        return self.layers[0].weights

    @property
    def offset(self) -> np.ndarray | None:
        return self.layers[0].bias if self.has_offset else None


class BlackBoxModel:
    """A representation evaluated through an external callable.

    Gradients use central finite differences with step `fd_step`; the
    evaluator must be deterministic for results to be reproducible.
    """

    kind = "blackbox"

    def __init__(
        self,
        evaluator: Callable[[np.ndarray], np.ndarray],
        input_dim: int,
        output_dim: int,
        fd_step: float = DEFAULT_FD_STEP,
    ):
        if input_dim <= 0 or output_dim <= 0:
            raise DataError("black-box model dimensions must be positive")
        if fd_step <= 0:
            raise DataError(f"finite-difference step must be positive, got {fd_step}")
        self.evaluator = evaluator
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.fd_step = fd_step

    def forward_batch(self, X: np.ndarray) -> np.ndarray:
        X = _check_batch(X, self.input_dim)
        try:
            out = np.asarray(self.evaluator(X), dtype=float)
        except Exception as exc:
            raise NumericError(f"black-box evaluator failed: {exc}") from exc
        if out.shape != (X.shape[0], self.output_dim):
            raise NumericError(
                f"black-box evaluator returned shape {out.shape}, "
                f"expected {(X.shape[0], self.output_dim)}"
            )
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_batch(np.asarray(x, dtype=float)[None, :])[0]


ReprModel = FeedForwardModel | BlackBoxModel


def _check_batch(X: np.ndarray, d: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != d:
        raise DataError(f"expected an (n, {d}) input batch, got shape {X.shape}")
    return X


def _check_vector(x: np.ndarray, d: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (d,):
        raise DataError(f"{name} must have shape ({d},), got {x.shape}")
    return x


def forward(model: ReprModel, x: np.ndarray) -> np.ndarray:
    """Evaluate r(x) for a single point."""
    x = _check_vector(x, model.input_dim, "x")
    return model.forward(x)


def forward_batch(model: ReprModel, X: np.ndarray) -> np.ndarray:
    """Evaluate r row-wise on an (n, d) matrix."""
    return model.forward_batch(X)


def loss_and_gradient(
    model: ReprModel,
    delta: np.ndarray,
    x_bar: np.ndarray,
    r_bar_target: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Smooth translation loss ||r(x_bar + delta) - r_bar_target||^2 and its
    gradient with respect to delta.

    The l1 part of the objective is handled separately by the optimizer's
    proximal step.  Differentiable models use reverse mode; black-box models
    use central differences on the loss.
    """
    d = model.input_dim
    delta = _check_vector(delta, d, "delta")
    x_bar = _check_vector(x_bar, d, "x_bar")
    r_bar_target = _check_vector(r_bar_target, model.output_dim, "r_bar_target")

    if isinstance(model, BlackBoxModel):
        return _fd_loss_and_gradient(model, delta, x_bar, r_bar_target)

    x = x_bar + delta
    out = model.forward(x)
    if not np.isfinite(out).all():
        raise NumericError("forward pass produced non-finite values")
    residual = out - r_bar_target
    loss = float(residual @ residual)
    grad = model.input_gradient(x, 2.0 * residual)
    return loss, grad


def _fd_loss_and_gradient(
    model: BlackBoxModel,
    delta: np.ndarray,
    x_bar: np.ndarray,
    r_bar_target: np.ndarray,
) -> tuple[float, np.ndarray]:
    d = model.input_dim
    h = model.fd_step
    x = x_bar + delta
    # one batched call: the base point plus both perturbations per coordinate
    probes = np.vstack([x[None, :], x + h * np.eye(d), x - h * np.eye(d)])
    outs = model.forward_batch(probes)
    if not np.isfinite(outs).all():
        raise NumericError("black-box forward pass produced non-finite values")
    losses = np.sum((outs - r_bar_target) ** 2, axis=1)
    loss = float(losses[0])
    grad = (losses[1 : d + 1] - losses[d + 1 :]) / (2.0 * h)
    return loss, grad


def make_command_evaluator(command: str) -> Callable[[np.ndarray], np.ndarray]:
    """Wrap a shell command as a batch evaluator.

    Protocol: one input vector per line (space-separated decimals) on stdin,
    one output vector per line on stdout.
    """
    argv = shlex.split(command)
    if not argv:
        raise DataError("black-box command is empty")

    def evaluate(X: np.ndarray) -> np.ndarray:
        lines = "\n".join(" ".join(repr(float(v)) for v in row) for row in X) + "\n"
        try:
            proc = subprocess.run(
                argv, input=lines, capture_output=True, text=True, check=False
            )
        except OSError as exc:
            raise NumericError(f"cannot run black-box command {argv[0]!r}: {exc}") from exc
        if proc.returncode != 0:
            raise NumericError(
                f"black-box command exited with {proc.returncode}: {proc.stderr.strip()}"
            )
        rows = [line.split() for line in proc.stdout.splitlines() if line.strip()]
        if len(rows) != X.shape[0]:
            raise NumericError(
                f"black-box command returned {len(rows)} lines for {X.shape[0]} inputs"
            )
        try:
            return np.array([[float(v) for v in row] for row in rows], dtype=float)
        except ValueError as exc:
            raise NumericError(f"black-box command output is not numeric: {exc}") from exc

    return evaluate


def model_to_dict(model: ReprModel) -> dict:
    if isinstance(model, BlackBoxModel):
        raise DataError("black-box models are configured by flags, not serialized")
    layers = []
    for i, layer in enumerate(model.layers):
        bias: list | None = layer.bias.tolist()
        if isinstance(model, LinearModel) and not model.has_offset:
            bias = None
        layers.append(
            {
                "rows": layer.weights.shape[0],
                "cols": layer.weights.shape[1],
                "weights": layer.weights.reshape(-1).tolist(),
                "bias": bias,
                "activation": layer.activation,
            }
        )
    return {
        "kind": model.kind,
        "dims": [model.input_dim, model.output_dim],
        "layers": layers,
    }


def model_from_dict(doc: dict) -> FeedForwardModel:
    try:
        kind = doc["kind"]
        layer_docs = doc["layers"]
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed model document: missing {exc}") from exc
    layers = []
    for ld in layer_docs:
        rows, cols = int(ld["rows"]), int(ld["cols"])
        weights = np.asarray(ld["weights"], dtype=float)
        if weights.size != rows * cols:
            raise DataError(
                f"layer weight count {weights.size} does not match {rows}x{cols}"
            )
        weights = weights.reshape(rows, cols)
        bias = ld.get("bias")
        bias_arr = np.zeros(rows) if bias is None else np.asarray(bias, dtype=float)
        layers.append(Layer(weights, bias_arr, ld.get("activation", "identity")))
    if kind == "linear":
        if len(layers) != 1:
            raise DataError("linear model must have exactly one layer")
        b = layer_docs[0].get("bias")
        return LinearModel(layers[0].weights, None if b is None else layers[0].bias)
    if kind == "feedforward":
        return FeedForwardModel(layers)
    raise DataError(f"unknown model kind {kind!r}")


def save_model(model: ReprModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), sort_keys=True) + "\n")


def load_model(path: str | Path) -> FeedForwardModel:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"model file {path} is not valid JSON: {exc}") from exc
    return model_from_dict(doc)
