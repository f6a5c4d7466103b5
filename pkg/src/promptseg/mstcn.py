"""Multi-stage temporal convolutional recognizer over frozen frame embeddings.

A prediction-generation stage applies dual dilated convolutions (dilations
2^i and 2^(L-1-i) per layer, concatenated and fused) and R refinement stages
of dilated residual layers consume the softmaxed scores of the stage before.
Training minimizes per-frame cross-entropy plus a truncated mean-squared
difference of consecutive log-probabilities, summed over stages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat, conv1d_dilated, no_grad
from .errors import DataError, DimensionError, DivergenceError, NonFiniteError, ParameterError
from .optim import Adam


@dataclass
class Prediction:
    scores: np.ndarray  # (T, C) final-stage scores
    labels: np.ndarray  # (T,) argmax stream, ties to the lower class index


class MsTcnModel:
    def __init__(
        self,
        in_dim: int,
        n_classes: int,
        channels: int = 32,
        pg_layers: int = 5,
        refine_stages: int = 2,
        refine_layers: int = 5,
        seed: int = 0,
    ):
        if min(in_dim, n_classes, channels, pg_layers, refine_layers) < 1 or refine_stages < 0:
            raise ParameterError("all architecture sizes must be positive (refine_stages >= 0)")
        self.in_dim = in_dim
        self.n_classes = n_classes
        self.channels = channels
        self.pg_layers = pg_layers
        self.refine_stages = refine_stages
        self.refine_layers = refine_layers
        rng = np.random.default_rng([seed, 0x7C7])
        self.params: dict[str, Tensor] = {}

        def linear(name: str, c_out: int, c_in: int) -> None:
            self.params[f"{name}.w"] = Tensor(
                rng.standard_normal((c_out, c_in)) / np.sqrt(c_in), requires_grad=True
            )
            self.params[f"{name}.b"] = Tensor(np.zeros((c_out, 1)), requires_grad=True)

        def conv(name: str, c_out: int, c_in: int) -> None:
            self.params[f"{name}.w"] = Tensor(
                rng.standard_normal((c_out, c_in, 3)) / np.sqrt(3 * c_in), requires_grad=True
            )
            self.params[f"{name}.b"] = Tensor(np.zeros((c_out, 1)), requires_grad=True)

        linear("pg.in", channels, in_dim)
        for i in range(pg_layers):
            conv(f"pg.{i}.up", channels, channels)
            conv(f"pg.{i}.down", channels, channels)
            linear(f"pg.{i}.fuse", channels, 2 * channels)
        linear("pg.out", n_classes, channels)
        for r in range(refine_stages):
            linear(f"r{r}.in", channels, n_classes)
            for i in range(refine_layers):
                conv(f"r{r}.{i}.conv", channels, channels)
                linear(f"r{r}.{i}.mix", channels, channels)
            linear(f"r{r}.out", n_classes, channels)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def _linear(self, name: str, x: Tensor) -> Tensor:
        return self.params[f"{name}.w"] @ x + self.params[f"{name}.b"]

    def _conv(self, name: str, x: Tensor, dilation: int) -> Tensor:
        return conv1d_dilated(x, self.params[f"{name}.w"], dilation) + self.params[f"{name}.b"]

    def forward(self, features: np.ndarray | Tensor) -> list[Tensor]:
        """(T, in_dim) features -> per-stage (T, n_classes) score sequences."""
        values = features.values if isinstance(features, Tensor) else np.asarray(features, float)
        if values.ndim != 2 or values.shape[1] != self.in_dim:
            raise DimensionError(f"expected (T, {self.in_dim}) features, got {values.shape}")
        x = Tensor(values.T)  # stages run channel-major, (C, T)

        f = self._linear("pg.in", x)
        top = self.pg_layers - 1
        for i in range(self.pg_layers):
            branches = concat(
                [
                    self._conv(f"pg.{i}.up", f, 2**i),
                    self._conv(f"pg.{i}.down", f, 2 ** (top - i)),
                ],
                axis=0,
            )
            f = self._linear(f"pg.{i}.fuse", branches).relu() + f
        out = self._linear("pg.out", f)
        outputs = [out]

        for r in range(self.refine_stages):
            g = self._linear(f"r{r}.in", out.softmax(axis=0))
            for i in range(self.refine_layers):
                y = self._conv(f"r{r}.{i}.conv", g, 2**i).relu()
                g = g + self._linear(f"r{r}.{i}.mix", y)
            out = self._linear(f"r{r}.out", g)
            outputs.append(out)
        return [stage.transpose() for stage in outputs]


def recognizer_loss(
    outputs: list[Tensor],
    labels: np.ndarray,
    smoothing: float = 0.15,
    smooth_clip: float = 16.0,
) -> Tensor:
    """Summed per-stage cross-entropy plus the truncated smoothing penalty."""
    t = len(labels)
    total = None
    frame_idx = np.arange(t)
    for stage in outputs:
        log_probs = stage.log_softmax(axis=1)  # (T, C)
        ce = -log_probs[frame_idx, labels].mean()
        term = ce
        if smoothing > 0.0 and t > 1:
            delta = log_probs[1:, :] - Tensor(log_probs.values[:-1, :])
            term = term + smoothing * (delta * delta).clamp_max(smooth_clip).mean()
        total = term if total is None else total + term
    return total


def train_recognizer(
    features: dict[str, np.ndarray],
    labels: dict[str, np.ndarray],
    n_classes: int,
    seed: int,
    epochs: int = 35,
    lr: float = 1e-3,
    channels: int = 32,
    pg_layers: int = 5,
    refine_stages: int = 2,
    refine_layers: int = 5,
    smoothing: float = 0.15,
    smooth_clip: float = 16.0,
) -> MsTcnModel:
    """Whole-video steps (batch of one) over the training set; seeded, hence
    deterministic."""
    if not features:
        raise DataError("training set is empty")
    if set(features) != set(labels):
        raise DataError("features and labels cover different videos")
    for vid, stream in labels.items():
        stream = np.asarray(stream)
        if len(stream) != features[vid].shape[0]:
            raise DimensionError(f"{vid}: {len(stream)} labels for {features[vid].shape[0]} frames")
        if stream.min() < 0 or stream.max() >= n_classes:
            raise DataError(f"{vid}: labels outside [0, {n_classes})")

    in_dim = next(iter(features.values())).shape[1]
    model = MsTcnModel(
        in_dim, n_classes, channels, pg_layers, refine_stages, refine_layers, seed=seed
    )
    optimizer = Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng([seed, 0x7EA1])
    order = sorted(features)
    for epoch in range(1, epochs + 1):
        for vid in (order[i] for i in rng.permutation(len(order))):
            try:
                loss = recognizer_loss(
                    model.forward(features[vid]), np.asarray(labels[vid]), smoothing, smooth_clip
                )
                optimizer.zero_grad()
                loss.backward()
            except NonFiniteError as exc:
                raise DivergenceError(
                    f"non-finite recognizer loss at epoch {epoch} on {vid}: {exc}", epoch=epoch
                ) from exc
            optimizer.step()
    return model


def predict(model: MsTcnModel, features: np.ndarray) -> Prediction:
    with no_grad():
        scores = model.forward(features)[-1].values
    return Prediction(scores=scores, labels=scores.argmax(axis=1))
